#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlad {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// All values are f64. A Tensor is a shared handle to one node: immutable data
// once it participates in a recorded op, plus a grad buffer of the same shape.
// Interior grads are scratch for the current backward pass; leaf grads persist
// and accumulate until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor from_vector(std::span<const double> v, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> data() const;
  // Mutable access is for leaf initialization and optimizer updates between
  // tapes; mutating a tensor already recorded on an active tape is undefined.
  std::vector<double>& mutable_data();

  double value() const;                 // scalar tensors only
  double at(std::size_t i) const;       // flat index
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Identity of the underlying node (used to detect aliasing in tests).
  const void* id() const { return node_.get(); }

  struct Node;
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized with data iff requires_grad
  bool requires_grad = false;
  bool recorded = false;     // true once the node is an op output on some tape
};

// Ordered record of primitive ops. Ops executed while a tape is active and
// involving a grad-requiring input are appended; backward() replays adjoints
// in reverse creation order (a reverse topological order), visiting each
// record exactly once. Destruction or clear() frees the recorded nodes; the
// next forward pass starts from an empty tape. Single-threaded per tape.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void clear();
  std::size_t size() const { return records_.size(); }

  static Tape* active();

  struct Record {
    std::shared_ptr<Tensor::Node> out;
    std::function<void()> backward;
  };
  void record(std::shared_ptr<Tensor::Node> out, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and accumulates adjoints into every
  // grad-requiring leaf below it. Interior grads are cleared first, so
  // repeated calls without zero_grad() accumulate into leaves only.
  void backward(const Tensor& loss);

 private:
  std::vector<Record> records_;
  Tape* prev_ = nullptr;
};

// --- primitives ------------------------------------------------------------
// Elementwise ops require identical shapes; there is no general broadcasting.
// The only broadcast form is add_rowvec (bias over the leading axis).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);              // d/dx at 0 is 0
Tensor pow_const(const Tensor& a, double exponent);
Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k] x [k,n]
Tensor add_rowvec(const Tensor& a, const Tensor& b);      // [m,n] + [n]
Tensor sum(const Tensor& a);               // -> scalar [1]
Tensor mean(const Tensor& a);              // -> scalar [1]
Tensor concat(const std::vector<Tensor>& parts);          // rank-1 pieces
// Clamp to [lo, hi]: identity gradient inside (boundary counts as inside),
// exactly zero outside.
Tensor clip(const Tensor& a, double lo, double hi);
// Row gather: rows[i] selects a row of a rank-2 tensor; grad scatter-adds.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows);
// Per-row element gather: out[i] = a[i, index[i]] for a rank-2 tensor.
Tensor gather_index(const Tensor& a, const std::vector<std::size_t>& index);
// Log-softmax over the last axis; rows are handled independently and are
// max-shifted so any finite inputs stay finite.
Tensor log_softmax(const Tensor& a);

void backward(const Tensor& loss);  // on the active tape

// --- finite-difference oracle ----------------------------------------------

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences around the current contents of `param`, one coordinate
// at a time: eval() must recompute the scalar loss from scratch (no tape
// needed). `analytic` is the already-populated gradient to compare against.
// Relative error per coordinate: |a - fd| / (|a| + |fd| + 1e-12).
FdReport finite_difference_check(Tensor param,
                                 const std::function<double()>& eval,
                                 std::span<const double> analytic,
                                 double h = 1e-5);

}  // namespace rlad
