#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "rlad/policy.hpp"
#include "rlad/tasks.hpp"
#include "rlad/tensor.hpp"

namespace rlad {

// Log-probs below this are floored before any ratio is formed, so a teacher
// that assigns zero probability (eta = 0 off-oracle, or a saturated
// checkpoint) cannot inject infinities into the objectives.
constexpr double kTeacherLogProbFloor = -80.0;

struct ResponseSample {
  std::vector<int> tokens;
  std::vector<double> logp_old;      // recorded by the sampling snapshot
  std::vector<double> logp_teacher;  // floored at kTeacherLogProbFloor
  std::vector<double> logp_ref;
  double reward = 0.0;
  double advantage = 0.0;  // group-normalized, constant across the response
};

struct GroupRollout {
  tasks::TaskInstance task;
  std::vector<ResponseSample> responses;
  double reward_mean = 0.0;
  double reward_std = 0.0;  // population
};

struct RolloutBatch {
  std::vector<GroupRollout> groups;
  int group_size = 0;
  std::uint64_t seed = 0;
};

// (r - mean) / population std; exactly zero everywhere when all rewards are
// equal (the sigma = 0 group).
std::vector<double> group_advantages(std::span<const double> rewards);

// Samples group_size responses per prompt from the frozen snapshot and scores
// each response under teacher and reference. Per-group rng streams are
// derived from (seed, group index), so collection order cannot leak between
// prompts.
RolloutBatch collect(const std::vector<tasks::TaskInstance>& prompts, const Policy& snapshot,
                     const Policy& teacher, const Policy& reference, int group_size,
                     const SamplerConfig& sampler, std::uint64_t seed);

// Differentiable student log-probs for every stored response, shaped like the
// batch. Grows the live student's tabular context table as needed.
std::vector<std::vector<Tensor>> recompute_student_logprobs(const RolloutBatch& batch,
                                                            PolicyParams& student);

// Line-delimited JSON, one record per response; load restores the batch with
// bit-exact floats.
void dump_batch(std::ostream& os, const RolloutBatch& batch);
RolloutBatch load_batch(std::istream& is);

}  // namespace rlad
