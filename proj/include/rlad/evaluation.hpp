#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rlad/policy.hpp"
#include "rlad/tasks.hpp"

namespace rlad {

struct TierMetrics {
  int tier = 0;
  std::size_t prompts = 0;
  double mean_at_k = 0.0;  // average reward over all K decodes
  double pass_at_k = 0.0;  // fraction of prompts with at least one reward-1 decode
};

struct EvalReport {
  int k = 0;
  std::uint64_t seed = 0;
  std::size_t prompts = 0;
  double mean_at_k = 0.0;
  double pass_at_k = 0.0;
  std::vector<TierMetrics> tiers;                 // ascending tier order
  std::vector<std::size_t> successes_per_prompt;  // c_i out of k, task order
};

// K independent decodes per prompt; per-prompt rng streams derived from
// (seed, prompt index) so task order cannot couple the draws.
EvalReport evaluate(const Policy& policy, const std::vector<tasks::TaskInstance>& task_set,
                    int k, const SamplerConfig& sampler, std::uint64_t seed);

// 1 - C(n-c, k)/C(n, k): probability that a random k-subset of n samples with
// c correct ones contains at least one correct sample. Exact binomial-ratio
// arithmetic for small n, overflow-safe product form beyond.
double pass_at_k_unbiased(int n, int c, int k);

std::string eval_report_json(const EvalReport& report);

// One aggregated comparison row set per (label, tier) plus an "overall" tier
// row; seed_std is the population std of mean_at_k across seeds.
struct RunSummary {
  std::string method;  // display label, e.g. "rlad" or "rlad a=0.5"
  std::uint64_t seed = 0;
  EvalReport report;
};
// Header: method, tier, mean_at_k, pass_at_k, seed_std. Runs under one label
// must share K and tier structure.
void write_comparison_csv(std::ostream& os, std::span<const RunSummary> runs);

}  // namespace rlad
