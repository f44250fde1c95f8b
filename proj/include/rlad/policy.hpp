#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rlad/rng.hpp"
#include "rlad/tasks.hpp"
#include "rlad/tensor.hpp"
#include "rlad/vocab.hpp"

namespace rlad {

enum class ModelKind { tabular, mlp };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// Parameters of a small autoregressive policy over a fixed context window of
// the last `context_window` tokens (left-padded with PAD).
//
// tabular: one logit row per distinct context, materialized on demand in an
// open-addressed table keyed by a 64-bit context hash. Fresh rows are zero,
// i.e. uniform. mlp: one-hot window -> tanh hidden layer -> logits.
//
// Tensors have shared-handle semantics; use snapshot() for a frozen deep copy.
struct PolicyParams {
  ModelKind kind = ModelKind::tabular;
  Vocab vocab;
  int context_window = 8;

  int hash_buckets = 1 << 16;  // power of two
  Tensor table;                // [hash_buckets, vocab.size]
  std::vector<std::uint64_t> table_keys;  // 0 marks an empty slot

  int hidden_dim = 32;
  Tensor w1, b1, w2, b2;

  static PolicyParams make_tabular(const Vocab& vocab, int context_window = 8,
                                   int hash_buckets = 1 << 16);
  static PolicyParams make_mlp(const Vocab& vocab, int context_window = 8, int hidden_dim = 32,
                               std::uint64_t init_seed = 1);

  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> trainable() const;
  void zero_grads() const;
};

PolicyParams snapshot(const PolicyParams& params);   // deep copy, grads dropped
bool params_equal(const PolicyParams& a, const PolicyParams& b);  // bitwise data equality

// Last-W context of a prefix, left-padded with PAD.
std::vector<int> context_window_of(const PolicyParams& params, std::span<const int> prefix);

// Differentiable per-token log-probs of `response` given `prompt`: entry t is
// log pi(response[t] | prompt + response[..t)). Allocates tabular rows for
// unseen contexts (zero logits), so run it on the live student only; frozen
// policies are scored through the Policy interface below.
Tensor score_response(PolicyParams& params, std::span<const int> prompt,
                      std::span<const int> response);

// Next-token log-probs without insertion or recording; unseen tabular
// contexts score as uniform, bit-identically to a zero row.
std::vector<double> next_logprobs_const(const PolicyParams& params, std::span<const int> prefix);

// Anything that defines a next-token distribution given a task instance.
// Students ignore the instance; oracle teachers need it.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual const Vocab& vocab() const = 0;
  virtual std::vector<double> next_token_logprobs(const tasks::TaskInstance& task,
                                                  std::span<const int> prefix) const = 0;
};

class StudentPolicy final : public Policy {
 public:
  explicit StudentPolicy(PolicyParams params) : params_(std::move(params)) {}
  const Vocab& vocab() const override { return params_.vocab; }
  std::vector<double> next_token_logprobs(const tasks::TaskInstance&,
                                          std::span<const int> prefix) const override {
    return next_logprobs_const(params_, prefix);
  }
  PolicyParams& params() { return params_; }
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

// (1 - eta) * onehot(oracle next token) + eta * uniform. eta in [0, 1); at
// eta = 0 off-oracle tokens have probability zero (log-prob -inf), which
// rollout collection floors before any ratio is formed.
class NoisyOracleTeacher final : public Policy {
 public:
  NoisyOracleTeacher(tasks::Family family, double eta);
  const Vocab& vocab() const override;
  std::vector<double> next_token_logprobs(const tasks::TaskInstance& task,
                                          std::span<const int> prefix) const override;
  double eta() const { return eta_; }

 private:
  tasks::Family family_;
  double eta_;
};

class CheckpointTeacher final : public Policy {
 public:
  explicit CheckpointTeacher(PolicyParams frozen) : params_(std::move(frozen)) {}
  const Vocab& vocab() const override { return params_.vocab; }
  std::vector<double> next_token_logprobs(const tasks::TaskInstance&,
                                          std::span<const int> prefix) const override {
    return next_logprobs_const(params_, prefix);
  }
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

std::vector<double> noisy_mixture_logprobs(int oracle_token, int vocab_size, double eta);

struct SamplerConfig {
  double temperature = 1.0;  // > 0
  double top_p = 1.0;        // in (0, 1]
  int max_tokens = 16;       // >= 1
  bool greedy = false;       // temperature -> 0 limit: argmax decode
  void validate() const;
};

struct Sampled {
  std::vector<int> tokens;        // ends with EOS unless max_tokens was hit
  std::vector<double> logprobs;   // per token, under the untruncated temperature-1 distribution
};

// Temperature scaling then nucleus truncation then renormalization; recorded
// log-probs always come from the unmodified scoring distribution.
Sampled sample_response(const Policy& policy, const tasks::TaskInstance& task,
                        const SamplerConfig& cfg, Rng& rng);

// Per-token log-probs of a stored response under any policy (no gradients).
std::vector<double> score_sequence(const Policy& policy, const tasks::TaskInstance& task,
                                   std::span<const int> prompt, std::span<const int> response);

}  // namespace rlad
