#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rlad/checkpoint.hpp"
#include "rlad/config.hpp"
#include "rlad/evaluation.hpp"
#include "rlad/policy.hpp"

namespace rlad {

// Bias-corrected first-order moment estimates, one slot per trainable tensor
// in PolicyParams::trainable() order.
struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const PolicyParams& params);
};

// Applies one update from the gradients currently on the trainable tensors.
// All gradients are validated before any parameter is touched, so a
// non-finite gradient leaves params and state exactly as they were.
void adam_step(PolicyParams& params, AdamState& state, double lr, double beta1, double beta2,
               double eps);

struct TrainResult {
  PolicyParams final_params;
  PolicyParams best_params;
  double best_eval_mean = -1.0;
  std::uint64_t best_step = 0;
  std::uint64_t steps_run = 0;
  std::string run_dir;
  EvalReport last_eval;
  std::vector<double> train_reward_history;                   // one entry per outer step
  std::vector<std::pair<std::uint64_t, double>> eval_history;  // (step, overall mean@k)
};

// The full loop: pi_ref frozen at step 0, pi_old re-snapshotted every outer
// step, rollout collection, E inner epochs of shuffled mini-batch updates,
// metrics.jsonl, best/last checkpoints under <run_dir>/checkpoints. A
// non-finite loss or gradient aborts before any parameter is overwritten and
// leaves the offending groups' audit rows next to the metrics.
TrainResult train(const RunConfig& cfg);

// Same loop forced to the plain clipped-ratio objective; the resulting
// best checkpoint is meant to be passed back in as teacher=checkpoint.
TrainResult train_teacher_checkpoint(RunConfig cfg);

// Builds the student parameters described by the config (fresh, untrained).
PolicyParams make_student(const RunConfig& cfg);

// Per-tier prompt pools, flattened ascending by tier. `fresh` shifts the
// generation window past the training pool so the two sets are disjoint.
std::vector<tasks::TaskInstance> task_pool(const RunConfig& cfg, bool fresh);

}  // namespace rlad
