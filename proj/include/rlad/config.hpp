#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlad/objectives.hpp"
#include "rlad/policy.hpp"
#include "rlad/tasks.hpp"

namespace rlad {

// One flat key-value config drives every subcommand. Parsing rejects unknown
// keys by name; echo_config() prints every key with its resolved value so a
// run directory is self-describing. The learning rate defaults to "auto"
// (3e-3 tabular, 1e-3 mlp) and is resolved before echoing.
struct RunConfig {
  // objective
  Method method = Method::rlad;
  double alpha = 0.5;
  double eps_low = 0.20;
  double eps_high = 0.28;
  double beta = 0.0;
  double kdrl_kl_weight = 0.1;
  bool teacher_clamp_enabled = true;
  double teacher_logratio_clamp = 1.0;
  bool clamp_trrd_term = true;
  bool clamp_kdrl_term = true;
  KlEstimator kl_estimator = KlEstimator::k3;

  // model
  ModelKind model = ModelKind::tabular;
  int context_window = 8;
  int hash_buckets = 1 << 16;
  int hidden_dim = 32;
  std::uint64_t init_seed = 1;

  // tasks
  tasks::Family family = tasks::Family::arith_chain;
  int tier_min = 2;
  int tier_max = 5;
  std::uint64_t task_seed = 1234;
  int task_pool_per_tier = 16;   // fixed prompt pool drawn per tier
  std::string eval_pool = "train";  // train: eval on the training pool; fresh: disjoint tasks

  // teacher
  std::string teacher = "noisy_oracle";  // noisy_oracle | checkpoint
  double teacher_eta = 0.05;
  std::string teacher_checkpoint;

  // training
  int group_size = 8;
  int prompts_per_batch = 32;
  int inner_epochs = 1;
  int minibatch_groups = 0;  // 0: one optimizer step over the whole batch
  int max_updates = 200;
  int eval_interval = 10;
  double train_temperature = 1.0;
  double train_top_p = 1.0;
  int max_tokens = 16;
  bool lr_is_auto = true;
  double lr = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double stop_at_eval_mean = 0.0;  // 0 disables early stop

  // evaluation
  int eval_k = 8;
  double eval_temperature = 0.6;
  double eval_top_p = 0.95;
  bool eval_greedy = false;

  // output (excluded from the config hash)
  std::string out_dir;
  std::string rollout_dump;

  void validate() const;  // throws Error naming the offending key
  double resolved_lr() const;
  ObjectiveConfig objective() const;
  SamplerConfig train_sampler() const;
  SamplerConfig eval_sampler() const;
  // out_dir if set, else $RLAD_OUTPUT_ROOT (default "runs") / <method>_seed<seed>.
  std::string resolved_out_dir() const;
};

// `key = value` lines; '#' starts a comment; blank lines ignored. Overrides
// are `key=value` tokens applied after the file.
RunConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides = {});
RunConfig parse_config_file(const std::string& path,
                            const std::vector<std::string>& overrides = {});
RunConfig default_config_with(const std::vector<std::string>& overrides);

std::string echo_config(const RunConfig& cfg);
// FNV-1a over the echoed non-path keys; identical hash <=> identical resolved
// run semantics.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace rlad
