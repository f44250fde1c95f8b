#include "rlad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rlad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {

using NodePtr = std::shared_ptr<Tensor::Node>;

NodePtr make_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw Error("tensor: rank-0 shapes are not supported");
  if (shape_numel(shape) != data.size())
    throw Error("tensor: shape " + shape_str(shape) + " does not match data length " +
                std::to_string(data.size()));
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->data.size(), 0.0);
  return n;
}

// Records `fn` when a tape is active and some input carried grad; otherwise
// the op ran in plain inference mode and the output is a constant.
Tensor finish_op(NodePtr out, bool any_input_grad, std::function<void()> fn) {
  Tape* tape = Tape::active();
  if (tape && any_input_grad) {
    out->requires_grad = true;
    out->grad.assign(out->data.size(), 0.0);
    out->recorded = true;
    tape->record(out, std::move(fn));
  }
  return Tensor(std::move(out));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), 0.0);
  return Tensor(make_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), value);
  return Tensor(make_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_vector(std::span<const double> v, bool requires_grad) {
  return from_data({v.size()}, std::vector<double>(v.begin(), v.end()), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw Error("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::size() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw Error("tensor: undefined");
  return node_->data;
}

std::vector<double>& Tensor::mutable_data() {
  if (!node_) throw Error("tensor: undefined");
  return node_->data;
}

double Tensor::value() const {
  if (size() != 1) throw Error("tensor: value() requires a scalar, got " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t i) const {
  if (!node_ || i >= node_->data.size()) throw Error("tensor: flat index out of range");
  return node_->data[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw Error("tensor: at(r,c) requires rank 2");
  if (r >= node_->shape[0] || c >= node_->shape[1]) throw Error("tensor: index out of range");
  return node_->data[r * node_->shape[1] + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::grad() const {
  if (!node_ || !node_->requires_grad) throw Error("tensor: grad() on a non-grad tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) throw Error("tensor: undefined");
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// --- tape -------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() {
  g_active_tape = prev_;
  records_.clear();
}

void Tape::clear() { records_.clear(); }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<Tensor::Node> out, std::function<void()> backward) {
  records_.push_back({std::move(out), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw Error("backward: loss must be a defined scalar");
  const Tensor::Node* loss_node = loss.node().get();
  bool on_tape = false;
  for (const auto& r : records_)
    if (r.out.get() == loss_node) on_tape = true;
  if (!on_tape) throw Error("backward: loss is not on the active tape");

  // Interior grads are scratch for this pass; leaf grads persist across
  // passes until zero_grad(), which is what makes repeated calls accumulate.
  for (auto& r : records_) std::fill(r.out->grad.begin(), r.out->grad.end(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) throw Error("backward: no active tape");
  t->backward(loss);
}

// --- elementwise primitives ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  const auto xa = a.data(), xb = b.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] + xb[i];
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      if (an->requires_grad) an->grad[i] += out->grad[i];
      if (bn->requires_grad) bn->grad[i] += out->grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  const auto xa = a.data(), xb = b.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] - xb[i];
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      if (an->requires_grad) an->grad[i] += out->grad[i];
      if (bn->requires_grad) bn->grad[i] -= out->grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  const auto xa = a.data(), xb = b.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] * xb[i];
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      if (an->requires_grad) an->grad[i] += out->grad[i] * bn->data[i];
      if (bn->requires_grad) bn->grad[i] += out->grad[i] * an->data[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] + c;
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
  });
}

Tensor mul_scalar(const Tensor& a, double c) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] * c;
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out, c] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * c;
  });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& a) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(xa[i]);
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * out->data[i];
  });
}

Tensor log(const Tensor& a) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(xa[i]);
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] / an->data[i];
  });
}

Tensor tanh(const Tensor& a) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xa[i]);
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i)
      an->grad[i] += out->grad[i] * (1.0 - out->data[i] * out->data[i]);
  });
}

Tensor relu(const Tensor& a) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] > 0.0 ? xa[i] : 0.0;
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out] {
    for (std::size_t i = 0; i < out->grad.size(); ++i)
      if (an->data[i] > 0.0) an->grad[i] += out->grad[i];
  });
}

Tensor pow_const(const Tensor& a, double exponent) {
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::pow(xa[i], exponent);
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out, exponent] {
    for (std::size_t i = 0; i < out->grad.size(); ++i)
      an->grad[i] += out->grad[i] * exponent * std::pow(an->data[i], exponent - 1.0);
  });
}

Tensor clip(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clip: lo must not exceed hi");
  const auto xa = a.data();
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(std::max(xa[i], lo), hi);
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  // Identity gradient inside [lo, hi] (boundary included), exactly zero outside.
  return finish_op(out, a.requires_grad(), [an, out, lo, hi] {
    for (std::size_t i = 0; i < out->grad.size(); ++i)
      if (an->data[i] >= lo && an->data[i] <= hi) an->grad[i] += out->grad[i];
  });
}

// --- structural / reduction primitives ----------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw Error("matmul: dimension mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> y(m * n, 0.0);
  const auto xa = a.data(), xb = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = xa[i * k + p];
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += av * xb[p * n + j];
    }
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = make_node({m, n}, std::move(y), false);
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, out, m, k, n] {
    if (an->requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += out->grad[i * n + j] * bn->data[p * n + j];
          an->grad[i * k + p] += acc;
        }
    if (bn->requires_grad)
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += an->data[i * k + p] * out->grad[i * n + j];
          bn->grad[p * n + j] += acc;
        }
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.shape()[0])
    throw Error("add_rowvec: shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const auto xa = a.data(), xb = b.data();
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = xa[i * n + j] + xb[j];
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, out, m, n] {
    if (an->requires_grad)
      for (std::size_t i = 0; i < m * n; ++i) an->grad[i] += out->grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) bn->grad[j] += out->grad[i * n + j];
  });
}

Tensor sum(const Tensor& a) {
  const auto xa = a.data();
  double acc = 0.0;
  for (double v : xa) acc += v;
  NodePtr an = a.node();
  NodePtr out = make_node({1}, {acc}, false);
  return finish_op(out, a.requires_grad(), [an, out] {
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += out->grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto xa = a.data();
  double acc = 0.0;
  for (double v : xa) acc += v;
  const double inv = 1.0 / static_cast<double>(xa.size());
  NodePtr an = a.node();
  NodePtr out = make_node({1}, {acc * inv}, false);
  return finish_op(out, a.requires_grad(), [an, out, inv] {
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += out->grad[0] * inv;
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("concat: no parts");
  std::size_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw Error("concat: rank-1 parts required");
    total += p.size();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> y;
  y.reserve(total);
  for (const auto& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  NodePtr out = make_node({total}, std::move(y), false);
  return finish_op(out, any_grad, [nodes, out] {
    std::size_t off = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad)
        for (std::size_t i = 0; i < n->data.size(); ++i) n->grad[i] += out->grad[off + i];
      off += n->data.size();
    }
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
  if (a.rank() != 2) throw Error("gather_rows: rank-2 input required");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  for (std::size_t idx : rows)
    if (idx >= r) throw Error("gather_rows: row index " + std::to_string(idx) + " out of range");
  std::vector<double> y(rows.size() * c);
  const auto xa = a.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xa.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c, y.begin() + static_cast<std::ptrdiff_t>(i * c));
  NodePtr an = a.node();
  NodePtr out = make_node({rows.size(), c}, std::move(y), false);
  // Duplicate row indices scatter-add.
  return finish_op(out, a.requires_grad(), [an, out, rows, c] {
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) an->grad[rows[i] * c + j] += out->grad[i * c + j];
  });
}

Tensor gather_index(const Tensor& a, const std::vector<std::size_t>& index) {
  if (a.rank() != 2) throw Error("gather_index: rank-2 input required");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  if (index.size() != r) throw Error("gather_index: need one column index per row");
  for (std::size_t idx : index)
    if (idx >= c) throw Error("gather_index: column index " + std::to_string(idx) + " out of range");
  std::vector<double> y(r);
  const auto xa = a.data();
  for (std::size_t i = 0; i < r; ++i) y[i] = xa[i * c + index[i]];
  NodePtr an = a.node();
  NodePtr out = make_node({r}, std::move(y), false);
  return finish_op(out, a.requires_grad(), [an, out, index, c] {
    for (std::size_t i = 0; i < index.size(); ++i) an->grad[i * c + index[i]] += out->grad[i];
  });
}

Tensor log_softmax(const Tensor& a) {
  if (a.rank() < 1) throw Error("log_softmax: rank >= 1 required");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.size() / cols;
  const auto xa = a.data();
  for (double v : xa)
    if (!std::isfinite(v)) throw Error("log_softmax: non-finite input");
  std::vector<double> y(xa.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = xa.data() + i * cols;
    double m = x[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = x[j] - lse;
  }
  NodePtr an = a.node();
  NodePtr out = make_node(a.shape(), std::move(y), false);
  // dx_j = g_j - softmax_j * sum_row(g)
  return finish_op(out, a.requires_grad(), [an, out, rows, cols] {
    for (std::size_t i = 0; i < rows; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += out->grad[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        an->grad[i * cols + j] += out->grad[i * cols + j] - std::exp(out->data[i * cols + j]) * gsum;
    }
  });
}

// --- finite-difference oracle ---------------------------------------------------

FdReport finite_difference_check(Tensor param, const std::function<double()>& eval,
                                 std::span<const double> analytic, double h) {
  auto& data = param.mutable_data();
  if (analytic.size() != data.size())
    throw Error("finite_difference_check: gradient length mismatch");
  FdReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double f_plus = eval();
    data[i] = saved - h;
    const double f_minus = eval();
    data[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw Error("finite_difference_check: non-finite loss at coordinate " + std::to_string(i));
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic[i];
    const double rel = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = fd;
    }
  }
  return report;
}

}  // namespace rlad
