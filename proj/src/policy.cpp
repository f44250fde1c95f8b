#include "rlad/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rlad {

std::string model_kind_name(ModelKind kind) {
  return kind == ModelKind::tabular ? "tabular" : "mlp";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "tabular") return ModelKind::tabular;
  if (name == "mlp") return ModelKind::mlp;
  throw Error("policy: unknown model kind '" + name + "'");
}

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

// 64-bit FNV-1a over the window tokens. Zero is reserved for empty slots;
// collisions over a 64-bit key space are negligible at desk scale, so the
// probed table behaves as an exact context -> row map.
std::uint64_t window_key(std::span<const int> window) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int tok : window) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(tok)) + 1;
    h *= 0x100000001b3ULL;
  }
  return h == 0 ? 1 : h;
}

constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

std::size_t find_row(const PolicyParams& p, std::uint64_t key) {
  const std::size_t mask = static_cast<std::size_t>(p.hash_buckets) - 1;
  std::size_t i = static_cast<std::size_t>(key) & mask;
  for (std::size_t probes = 0; probes <= mask; ++probes) {
    const std::uint64_t slot = p.table_keys[i];
    if (slot == key) return i;
    if (slot == 0) return kNoRow;
    i = (i + 1) & mask;
  }
  return kNoRow;
}

std::size_t find_or_insert_row(PolicyParams& p, std::uint64_t key) {
  const std::size_t mask = static_cast<std::size_t>(p.hash_buckets) - 1;
  std::size_t i = static_cast<std::size_t>(key) & mask;
  for (std::size_t probes = 0; probes <= mask; ++probes) {
    const std::uint64_t slot = p.table_keys[i];
    if (slot == key) return i;
    if (slot == 0) {
      p.table_keys[i] = key;
      return i;
    }
    i = (i + 1) & mask;
  }
  throw Error("policy: tabular context table is full (" + std::to_string(p.hash_buckets) +
              " buckets); raise hash_buckets");
}

// One-hot encoding of fixed-length windows: constant input to the MLP.
Tensor onehot_windows(const PolicyParams& p, const std::vector<std::vector<int>>& windows) {
  const std::size_t v = static_cast<std::size_t>(p.vocab.size);
  const std::size_t w = static_cast<std::size_t>(p.context_window);
  std::vector<double> x(windows.size() * w * v, 0.0);
  for (std::size_t i = 0; i < windows.size(); ++i)
    for (std::size_t j = 0; j < w; ++j)
      x[i * w * v + j * v + static_cast<std::size_t>(windows[i][j])] = 1.0;
  return Tensor::from_data({windows.size(), w * v}, std::move(x));
}

// Shared forward pass: [N, V] log-probs for N context windows. The same code
// serves sampling, frozen scoring and differentiable training, which is what
// keeps recorded and recomputed log-probs bit-identical.
Tensor window_logprobs(PolicyParams& p, const std::vector<std::vector<int>>& windows,
                       bool insert_missing) {
  if (p.kind == ModelKind::tabular) {
    std::vector<std::size_t> rows(windows.size());
    bool any_missing = false;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const std::uint64_t key = window_key(windows[i]);
      std::size_t r = insert_missing ? find_or_insert_row(p, key) : find_row(p, key);
      if (r == kNoRow) any_missing = true;
      rows[i] = r;
    }
    if (!any_missing) return log_softmax(gather_rows(p.table, rows));
    // Read-only scoring of contexts the table has never seen: splice in
    // virtual zero rows (a fresh row is zero logits, i.e. uniform).
    const std::size_t v = static_cast<std::size_t>(p.vocab.size);
    std::vector<double> logits(windows.size() * v, 0.0);
    const auto data = p.table.data();
    for (std::size_t i = 0; i < windows.size(); ++i)
      if (rows[i] != kNoRow)
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(rows[i] * v), v,
                    logits.begin() + static_cast<std::ptrdiff_t>(i * v));
    return log_softmax(Tensor::from_data({windows.size(), v}, std::move(logits)));
  }
  Tensor x = onehot_windows(p, windows);
  Tensor h = rlad::tanh(add_rowvec(matmul(x, p.w1), p.b1));
  Tensor logits = add_rowvec(matmul(h, p.w2), p.b2);
  return log_softmax(logits);
}

}  // namespace

PolicyParams PolicyParams::make_tabular(const Vocab& vocab, int context_window, int hash_buckets) {
  vocab.validate();
  if (context_window < 1) throw Error("policy: context_window must be >= 1");
  if (!is_power_of_two(hash_buckets)) throw Error("policy: hash_buckets must be a power of two");
  PolicyParams p;
  p.kind = ModelKind::tabular;
  p.vocab = vocab;
  p.context_window = context_window;
  p.hash_buckets = hash_buckets;
  p.table = Tensor::zeros({static_cast<std::size_t>(hash_buckets),
                           static_cast<std::size_t>(vocab.size)},
                          /*requires_grad=*/true);
  p.table_keys.assign(static_cast<std::size_t>(hash_buckets), 0);
  return p;
}

PolicyParams PolicyParams::make_mlp(const Vocab& vocab, int context_window, int hidden_dim,
                                    std::uint64_t init_seed) {
  vocab.validate();
  if (context_window < 1) throw Error("policy: context_window must be >= 1");
  if (hidden_dim < 1) throw Error("policy: hidden_dim must be >= 1");
  PolicyParams p;
  p.kind = ModelKind::mlp;
  p.vocab = vocab;
  p.context_window = context_window;
  p.hidden_dim = hidden_dim;
  const std::size_t in = static_cast<std::size_t>(context_window) * static_cast<std::size_t>(vocab.size);
  const std::size_t h = static_cast<std::size_t>(hidden_dim);
  const std::size_t v = static_cast<std::size_t>(vocab.size);
  Rng rng(derive_seed(init_seed, "mlp-init"));
  auto init = [&rng](Shape shape, double scale) {
    std::vector<double> d(shape_numel(shape));
    for (auto& x : d) x = scale * rng.next_gaussian();
    return Tensor::from_data(std::move(shape), std::move(d), /*requires_grad=*/true);
  };
  p.w1 = init({in, h}, 0.1);
  p.b1 = Tensor::zeros({h}, true);
  p.w2 = init({h, v}, 0.1);
  p.b2 = Tensor::zeros({v}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> PolicyParams::named_tensors() const {
  if (kind == ModelKind::tabular) return {{"student.table", table}};
  return {{"student.w1", w1}, {"student.b1", b1}, {"student.w2", w2}, {"student.b2", b2}};
}

std::vector<Tensor> PolicyParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

void PolicyParams::zero_grads() const {
  for (Tensor t : trainable()) t.zero_grad();
}

PolicyParams snapshot(const PolicyParams& params) {
  PolicyParams copy = params;
  auto deep = [](const Tensor& t) {
    if (!t.defined()) return t;
    return Tensor::from_data(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  };
  copy.table = deep(params.table);
  copy.w1 = deep(params.w1);
  copy.b1 = deep(params.b1);
  copy.w2 = deep(params.w2);
  copy.b2 = deep(params.b2);
  return copy;
}

bool params_equal(const PolicyParams& a, const PolicyParams& b) {
  if (a.kind != b.kind || !(a.vocab == b.vocab) || a.context_window != b.context_window)
    return false;
  auto same = [](const Tensor& x, const Tensor& y) {
    if (x.defined() != y.defined()) return false;
    if (!x.defined()) return true;
    if (x.shape() != y.shape()) return false;
    const auto dx = x.data(), dy = y.data();
    return std::equal(dx.begin(), dx.end(), dy.begin());
  };
  if (a.kind == ModelKind::tabular)
    return a.table_keys == b.table_keys && same(a.table, b.table);
  return same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) && same(a.b2, b.b2);
}

std::vector<int> context_window_of(const PolicyParams& params, std::span<const int> prefix) {
  const std::size_t w = static_cast<std::size_t>(params.context_window);
  std::vector<int> window(w, params.vocab.pad);
  const std::size_t n = std::min(prefix.size(), w);
  for (std::size_t i = 0; i < n; ++i) window[w - n + i] = prefix[prefix.size() - n + i];
  return window;
}

Tensor score_response(PolicyParams& params, std::span<const int> prompt,
                      std::span<const int> response) {
  if (response.empty()) throw Error("policy: cannot score an empty response");
  std::vector<std::vector<int>> windows;
  windows.reserve(response.size());
  std::vector<int> prefix(prompt.begin(), prompt.end());
  std::vector<std::size_t> picks(response.size());
  for (std::size_t t = 0; t < response.size(); ++t) {
    const int tok = response[t];
    if (tok < 0 || tok >= params.vocab.size)
      throw Error("policy: response token out of vocabulary");
    windows.push_back(context_window_of(params, prefix));
    picks[t] = static_cast<std::size_t>(tok);
    prefix.push_back(tok);
  }
  return gather_index(window_logprobs(params, windows, /*insert_missing=*/true), picks);
}

std::vector<double> next_logprobs_const(const PolicyParams& params, std::span<const int> prefix) {
  // The table is not grown and nothing is recorded, but the arithmetic is the
  // exact forward pass used for training.
  auto& mutable_params = const_cast<PolicyParams&>(params);
  Tensor lp = window_logprobs(mutable_params, {context_window_of(params, prefix)},
                              /*insert_missing=*/false);
  return std::vector<double>(lp.data().begin(), lp.data().end());
}

NoisyOracleTeacher::NoisyOracleTeacher(tasks::Family family, double eta)
    : family_(family), eta_(eta) {
  if (!(eta >= 0.0 && eta < 1.0)) throw Error("policy: teacher eta must lie in [0, 1)");
}

const Vocab& NoisyOracleTeacher::vocab() const { return tasks::vocab_for(family_); }

std::vector<double> NoisyOracleTeacher::next_token_logprobs(const tasks::TaskInstance& task,
                                                            std::span<const int> prefix) const {
  return noisy_mixture_logprobs(tasks::oracle_next_token(task, prefix), vocab().size, eta_);
}

std::vector<double> noisy_mixture_logprobs(int oracle_token, int vocab_size, double eta) {
  if (oracle_token < 0 || oracle_token >= vocab_size)
    throw Error("policy: oracle token out of vocabulary");
  const double off = std::log(eta / vocab_size);  // -inf at eta = 0
  std::vector<double> lp(static_cast<std::size_t>(vocab_size), off);
  lp[static_cast<std::size_t>(oracle_token)] = std::log1p(-eta + eta / vocab_size);
  return lp;
}

void SamplerConfig::validate() const {
  if (!(temperature > 0.0)) throw Error("sampler: temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("sampler: top_p must lie in (0, 1]");
  if (max_tokens < 1) throw Error("sampler: max_tokens must be >= 1");
}

namespace {

int draw_token(std::span<const double> logprobs, const SamplerConfig& cfg, Rng& rng) {
  const std::size_t v = logprobs.size();
  if (cfg.greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v; ++i)
      if (logprobs[i] > logprobs[best]) best = i;
    return static_cast<int>(best);
  }
  // Temperature rescales logits; renormalizing via log-sum-exp keeps the
  // arithmetic stable for any finite inputs.
  std::vector<double> scaled(v);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v; ++i) {
    scaled[i] = logprobs[i] / cfg.temperature;
    m = std::max(m, scaled[i]);
  }
  double z = 0.0;
  for (std::size_t i = 0; i < v; ++i) z += std::exp(scaled[i] - m);
  std::vector<double> prob(v);
  for (std::size_t i = 0; i < v; ++i) prob[i] = std::exp(scaled[i] - m) / z;

  std::vector<std::size_t> order(v);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.top_p < 1.0) {
    // Deterministic nucleus: sort by probability with index tie-break, keep
    // the smallest prefix reaching top_p, renormalize over it.
    std::sort(order.begin(), order.end(), [&prob](std::size_t a, std::size_t b) {
      return prob[a] != prob[b] ? prob[a] > prob[b] : a < b;
    });
    double cum = 0.0;
    std::size_t keep = v;
    for (std::size_t i = 0; i < v; ++i) {
      cum += prob[order[i]];
      if (cum >= cfg.top_p) {
        keep = i + 1;
        break;
      }
    }
    order.resize(keep);
    double mass = 0.0;
    for (std::size_t i : order) mass += prob[i];
    for (std::size_t i : order) prob[i] /= mass;
  }

  const double u = rng.next_double();
  double cum = 0.0;
  for (std::size_t i : order) {
    cum += prob[i];
    if (u < cum) return static_cast<int>(i);
  }
  // Rounding left the cumulative sum a hair under 1; fall back to the mode.
  std::size_t best = order[0];
  for (std::size_t i : order)
    if (prob[i] > prob[best]) best = i;
  return static_cast<int>(best);
}

}  // namespace

Sampled sample_response(const Policy& policy, const tasks::TaskInstance& task,
                        const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const Vocab& v = policy.vocab();
  Sampled out;
  std::vector<int> prefix = task.prompt;
  for (int step = 0; step < cfg.max_tokens; ++step) {
    const std::vector<double> lp = policy.next_token_logprobs(task, prefix);
    const int tok = draw_token(lp, cfg, rng);
    out.tokens.push_back(tok);
    out.logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
    prefix.push_back(tok);
    if (tok == v.eos) break;
  }
  return out;
}

std::vector<double> score_sequence(const Policy& policy, const tasks::TaskInstance& task,
                                   std::span<const int> prompt, std::span<const int> response) {
  std::vector<double> out;
  out.reserve(response.size());
  std::vector<int> prefix(prompt.begin(), prompt.end());
  for (int tok : response) {
    const std::vector<double> lp = policy.next_token_logprobs(task, prefix);
    if (tok < 0 || static_cast<std::size_t>(tok) >= lp.size())
      throw Error("policy: response token out of vocabulary");
    out.push_back(lp[static_cast<std::size_t>(tok)]);
    prefix.push_back(tok);
  }
  return out;
}

}  // namespace rlad
