#include "rlad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "rlad/objectives.hpp"
#include "rlad/rng.hpp"
#include "rlad/rollout.hpp"
#include "rlad/tensor.hpp"

namespace rlad {
namespace {

namespace fs = std::filesystem;

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool grads_finite(const PolicyParams& params) {
  for (const Tensor& t : params.trainable())
    if (!all_finite(t.grad())) return false;
  return true;
}

// Writes the audit rows of the groups that carry a non-finite value (all rows
// when the culprit cannot be localized), then throws. Best effort: if even
// the plain replay fails, fall back to dumping the raw batch.
[[noreturn]] void abort_non_finite(const std::string& run_dir, const RolloutBatch& batch,
                                   PolicyParams& student, const ObjectiveConfig& ocfg,
                                   std::uint64_t step, const std::string& what) {
  std::string dump_path = run_dir + "/abort_audit.csv";
  try {
    std::vector<TokenAudit> rows = audit_batch(batch, student, ocfg);
    std::vector<char> bad(batch.groups.size(), 0);
    bool any = false;
    for (const TokenAudit& r : rows) {
      const bool ok = std::isfinite(r.advantage) && std::isfinite(r.logp_cur) &&
                      std::isfinite(r.log_ratio) && std::isfinite(r.ratio) &&
                      std::isfinite(r.surrogate);
      if (!ok) {
        bad[r.group] = 1;
        any = true;
      }
    }
    std::vector<TokenAudit> keep;
    for (const TokenAudit& r : rows)
      if (!any || bad[r.group]) keep.push_back(r);
    std::ofstream os(dump_path, std::ios::binary | std::ios::trunc);
    write_audit_csv(os, keep);
  } catch (const std::exception&) {
    dump_path = run_dir + "/abort_batch.jsonl";
    std::ofstream os(dump_path, std::ios::binary | std::ios::trunc);
    dump_batch(os, batch);
  }
  throw Error("training aborted at step " + std::to_string(step) + ": non-finite " + what +
              "; diagnostics in " + dump_path);
}

std::unique_ptr<Policy> make_teacher(const RunConfig& cfg) {
  if (cfg.teacher == "noisy_oracle")
    return std::make_unique<NoisyOracleTeacher>(cfg.family, cfg.teacher_eta);
  Checkpoint ckpt = load_checkpoint(cfg.teacher_checkpoint);
  return std::make_unique<CheckpointTeacher>(extract_policy(ckpt));
}

// One JSON object per outer step; eval keys appear only on eval steps so each
// row type keeps a fixed key set.
std::string metrics_row(std::uint64_t step, const RunConfig& cfg, double train_mean_reward,
                        double loss, const LossStats& stats, const EvalReport* eval) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"step\":" << step << ",\"method\":\"" << method_name(cfg.method)
     << "\",\"alpha\":" << cfg.alpha << ",\"train_mean_reward\":" << train_mean_reward
     << ",\"loss\":" << loss << ",\"clip_fraction\":" << stats.clip_fraction
     << ",\"mean_abs_teacher_logratio\":" << stats.mean_abs_teacher_logratio;
  if (eval) {
    os << ",\"eval_mean_at_k\":" << eval->mean_at_k << ",\"eval_pass_at_k\":" << eval->pass_at_k
       << ",\"eval_tiers\":[";
    for (std::size_t i = 0; i < eval->tiers.size(); ++i) {
      const TierMetrics& t = eval->tiers[i];
      if (i) os << ',';
      os << "{\"tier\":" << t.tier << ",\"mean_at_k\":" << t.mean_at_k
         << ",\"pass_at_k\":" << t.pass_at_k << '}';
    }
    os << ']';
  }
  os << '}';
  return os.str();
}

Checkpoint build_checkpoint(const RunConfig& cfg, const PolicyParams& params,
                            const AdamState& adam, const Rng& master, std::uint64_t step) {
  Checkpoint ckpt;
  ckpt.method = method_name(cfg.method);
  ckpt.step = step;
  ckpt.config_hash = config_hash(cfg);
  ckpt.rng_state = master.state();
  embed_policy(ckpt, params);
  ckpt.meta.emplace_back("adam.t", adam.t);
  const auto named = params.named_tensors();
  if (named.size() != adam.m.size()) throw Error("checkpoint: optimizer state misaligned");
  for (std::size_t i = 0; i < named.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + named[i].first,
                              Tensor::from_data(named[i].second.shape(), adam.m[i]));
    ckpt.tensors.emplace_back("adam.v." + named[i].first,
                              Tensor::from_data(named[i].second.shape(), adam.v[i]));
  }
  return ckpt;
}

}  // namespace

AdamState AdamState::for_params(const PolicyParams& params) {
  AdamState s;
  for (const Tensor& t : params.trainable()) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(PolicyParams& params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  std::vector<Tensor> slots = params.trainable();
  if (slots.size() != state.m.size() || slots.size() != state.v.size())
    throw Error("adam_step: optimizer state misaligned with parameters");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].size() != state.m[i].size()) throw Error("adam_step: state shape mismatch");
    if (!all_finite(slots[i].grad())) throw Error("adam_step: non-finite gradient");
  }
  // Validation is complete: from here on the update always runs to the end.
  const std::uint64_t t = ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    std::span<const double> g = slots[i].grad();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    std::vector<double>& theta = slots[i].mutable_data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      theta[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
}

PolicyParams make_student(const RunConfig& cfg) {
  const Vocab& vocab = tasks::vocab_for(cfg.family);
  if (cfg.model == ModelKind::tabular)
    return PolicyParams::make_tabular(vocab, cfg.context_window, cfg.hash_buckets);
  return PolicyParams::make_mlp(vocab, cfg.context_window, cfg.hidden_dim, cfg.init_seed);
}

std::vector<tasks::TaskInstance> task_pool(const RunConfig& cfg, bool fresh) {
  std::vector<tasks::TaskInstance> pool;
  const std::uint64_t start = fresh ? static_cast<std::uint64_t>(cfg.task_pool_per_tier) : 0;
  for (int tier = cfg.tier_min; tier <= cfg.tier_max; ++tier) {
    auto tier_tasks = tasks::generate(cfg.family, tier, cfg.task_seed,
                                      static_cast<std::size_t>(cfg.task_pool_per_tier), start);
    pool.insert(pool.end(), tier_tasks.begin(), tier_tasks.end());
  }
  return pool;
}

TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  const ObjectiveConfig ocfg = cfg.objective();
  const double lr = cfg.resolved_lr();
  const SamplerConfig train_sampler = cfg.train_sampler();
  const SamplerConfig eval_sampler = cfg.eval_sampler();

  const std::string run_dir = cfg.resolved_out_dir();
  fs::create_directories(run_dir + "/checkpoints");
  {
    std::ofstream os(run_dir + "/config.txt", std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + run_dir + "/config.txt");
    os << echo_config(cfg);
  }
  std::ofstream metrics(run_dir + "/metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw Error("cannot write " + run_dir + "/metrics.jsonl");

  PolicyParams student = make_student(cfg);
  StudentPolicy reference(snapshot(student));  // frozen step-0 snapshot for the whole run
  std::unique_ptr<Policy> teacher = make_teacher(cfg);

  const std::vector<tasks::TaskInstance> pool = task_pool(cfg, false);
  const std::vector<tasks::TaskInstance> eval_set =
      cfg.eval_pool == "fresh" ? task_pool(cfg, true) : pool;

  AdamState adam = AdamState::for_params(student);
  Rng master(derive_seed(cfg.seed, "master"));

  TrainResult result;
  result.run_dir = run_dir;
  result.best_params = snapshot(student);

  AdamState best_adam = adam;
  Rng best_master = master;
  RolloutBatch last_batch;

  bool stop = false;
  for (std::uint64_t step = 1; step <= static_cast<std::uint64_t>(cfg.max_updates) && !stop;
       ++step) {
    master.next_u64();  // one tick per outer step; its state marks run progress
    StudentPolicy old_policy(snapshot(student));

    Rng batch_rng(derive_seed(cfg.seed, "batch", step));
    std::vector<tasks::TaskInstance> prompts;
    prompts.reserve(cfg.prompts_per_batch);
    for (int i = 0; i < cfg.prompts_per_batch; ++i)
      prompts.push_back(pool[batch_rng.next_below(pool.size())]);

    // Scoring guards (e.g. log_softmax rejecting non-finite logits from a
    // corrupt teacher checkpoint) can fire here, before any batch exists to
    // audit; surface them as a step-labeled abort rather than a bare op error.
    RolloutBatch batch;
    try {
      batch = collect(prompts, old_policy, *teacher, reference, cfg.group_size,
                      train_sampler, derive_seed(cfg.seed, "rollout", step));
    } catch (const Error& e) {
      throw Error("training aborted at step " + std::to_string(step) +
                  " during rollout collection: " + e.what());
    }

    double train_mean_reward = 0.0;
    std::size_t responses = 0;
    for (const GroupRollout& g : batch.groups)
      for (const ResponseSample& r : g.responses) {
        train_mean_reward += r.reward;
        ++responses;
      }
    train_mean_reward /= static_cast<double>(responses);

    // Full-batch loss under the pre-update student: this is what the metrics
    // row reports regardless of how the epochs below slice the batch.
    LossResult metrics_loss;
    try {
      metrics_loss = assemble_loss(batch, student, ocfg);
    } catch (const Error&) {
      abort_non_finite(run_dir, batch, student, ocfg, step, "loss assembly");
    }
    if (!std::isfinite(metrics_loss.loss.value()))
      abort_non_finite(run_dir, batch, student, ocfg, step, "loss");

    for (int e = 0; e < cfg.inner_epochs; ++e) {
      std::vector<std::size_t> order(batch.groups.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", step, static_cast<std::uint64_t>(e)));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

      const std::size_t chunk = cfg.minibatch_groups == 0
                                    ? order.size()
                                    : static_cast<std::size_t>(cfg.minibatch_groups);
      for (std::size_t begin = 0; begin < order.size(); begin += chunk) {
        RolloutBatch mb;
        mb.group_size = batch.group_size;
        mb.seed = batch.seed;
        for (std::size_t i = begin; i < std::min(begin + chunk, order.size()); ++i)
          mb.groups.push_back(batch.groups[order[i]]);

        student.zero_grads();
        {
          Tape tape;
          LossResult out;
          try {
            out = assemble_loss(mb, student, ocfg);
            if (!std::isfinite(out.loss.value()))
              abort_non_finite(run_dir, mb, student, ocfg, step, "loss");
            backward(out.loss);
          } catch (const Error& e) {
            if (std::string(e.what()).find("training aborted") != std::string::npos) throw;
            abort_non_finite(run_dir, mb, student, ocfg, step, "loss assembly");
          }
        }
        if (!grads_finite(student))
          abort_non_finite(run_dir, mb, student, ocfg, step, "gradient");
        adam_step(student, adam, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      }
    }

    result.train_reward_history.push_back(train_mean_reward);
    result.steps_run = step;
    last_batch = std::move(batch);

    const bool eval_due = step % static_cast<std::uint64_t>(cfg.eval_interval) == 0 ||
                          step == static_cast<std::uint64_t>(cfg.max_updates);
    EvalReport eval_report;
    const EvalReport* eval_ptr = nullptr;
    if (eval_due) {
      StudentPolicy eval_policy(snapshot(student));
      eval_report =
          evaluate(eval_policy, eval_set, cfg.eval_k, eval_sampler, derive_seed(cfg.seed, "eval", step));
      eval_ptr = &eval_report;
      result.eval_history.emplace_back(step, eval_report.mean_at_k);
      result.last_eval = eval_report;
      if (eval_report.mean_at_k > result.best_eval_mean) {
        result.best_eval_mean = eval_report.mean_at_k;
        result.best_step = step;
        result.best_params = snapshot(student);
        best_adam = adam;
        best_master = master;
      }
      if (cfg.stop_at_eval_mean > 0.0 && eval_report.mean_at_k >= cfg.stop_at_eval_mean)
        stop = true;
    }

    metrics << metrics_row(step, cfg, train_mean_reward, metrics_loss.loss.value(),
                           metrics_loss.stats, eval_ptr)
            << '\n';
  }

  result.final_params = snapshot(student);
  if (result.best_eval_mean < 0.0) {  // no eval ran (max_updates below interval cannot happen;
    result.best_params = snapshot(student);  // kept for layout completeness)
    result.best_step = result.steps_run;
    best_adam = adam;
    best_master = master;
  }

  save_checkpoint(build_checkpoint(cfg, result.final_params, adam, master, result.steps_run),
                  run_dir + "/checkpoints/last.ckpt");
  save_checkpoint(build_checkpoint(cfg, result.best_params, best_adam, best_master,
                                   result.best_step),
                  run_dir + "/checkpoints/best.ckpt");

  if (!cfg.rollout_dump.empty()) {
    std::ofstream os(cfg.rollout_dump, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + cfg.rollout_dump);
    dump_batch(os, last_batch);
  }
  return result;
}

TrainResult train_teacher_checkpoint(RunConfig cfg) {
  cfg.method = Method::grpo;
  return train(cfg);
}

}  // namespace rlad
