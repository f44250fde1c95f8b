#include "rlad/rollout.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "rlad/rng.hpp"

namespace rlad {

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error("rollout: a group needs at least two rewards");
  // All-equal short-circuit keeps the sigma = 0 case exact: no rounding from
  // the mean subtraction can manufacture a nonzero advantage.
  const bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                                     [&](double r) { return r == rewards.front(); });
  std::vector<double> adv(rewards.size(), 0.0);
  if (all_equal) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  const double sigma = std::sqrt(var);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sigma;
  return adv;
}

RolloutBatch collect(const std::vector<tasks::TaskInstance>& prompts, const Policy& snapshot,
                     const Policy& teacher, const Policy& reference, int group_size,
                     const SamplerConfig& sampler, std::uint64_t seed) {
  if (prompts.empty()) throw Error("rollout: no prompts to collect");
  if (group_size < 2) throw Error("rollout: group_size must be >= 2");
  sampler.validate();
  RolloutBatch batch;
  batch.group_size = group_size;
  batch.seed = seed;
  batch.groups.reserve(prompts.size());
  for (std::size_t g = 0; g < prompts.size(); ++g) {
    const auto& task = prompts[g];
    GroupRollout group;
    group.task = task;
    Rng rng(derive_seed(seed, "rollout", g));
    std::vector<double> rewards(static_cast<std::size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
      Sampled s = sample_response(snapshot, task, sampler, rng);
      ResponseSample r;
      r.tokens = std::move(s.tokens);
      r.logp_old = std::move(s.logprobs);
      r.logp_teacher = score_sequence(teacher, task, task.prompt, r.tokens);
      for (double& lp : r.logp_teacher) lp = std::max(lp, kTeacherLogProbFloor);
      r.logp_ref = score_sequence(reference, task, task.prompt, r.tokens);
      r.reward = tasks::reward(task, r.tokens);
      rewards[static_cast<std::size_t>(i)] = r.reward;
      group.responses.push_back(std::move(r));
    }
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(group_size);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(group_size);
    group.reward_mean = mean;
    group.reward_std = std::sqrt(var);
    const auto adv = group_advantages(rewards);
    for (int i = 0; i < group_size; ++i)
      group.responses[static_cast<std::size_t>(i)].advantage = adv[static_cast<std::size_t>(i)];
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

std::vector<std::vector<Tensor>> recompute_student_logprobs(const RolloutBatch& batch,
                                                            PolicyParams& student) {
  std::vector<std::vector<Tensor>> out;
  out.reserve(batch.groups.size());
  for (const auto& group : batch.groups) {
    std::vector<Tensor> per_response;
    per_response.reserve(group.responses.size());
    for (const auto& r : group.responses)
      per_response.push_back(score_response(student, group.task.prompt, r.tokens));
    out.push_back(std::move(per_response));
  }
  return out;
}

void dump_batch(std::ostream& os, const RolloutBatch& batch) {
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    const auto& group = batch.groups[g];
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      const auto& r = group.responses[i];
      nlohmann::json row{
          {"group", g},
          {"sample", i},
          {"group_size", batch.group_size},
          {"batch_seed", batch.seed},
          {"family", tasks::family_name(group.task.family)},
          {"tier", group.task.tier},
          {"task_seed", group.task.seed},
          {"task_index", group.task.index},
          {"prompt", group.task.prompt},
          {"answer", group.task.answer},
          {"tokens", r.tokens},
          {"reward", r.reward},
          {"advantage", r.advantage},
          {"reward_mean", group.reward_mean},
          {"reward_std", group.reward_std},
          {"logp_old", r.logp_old},
          {"logp_teacher", r.logp_teacher},
          {"logp_ref", r.logp_ref},
      };
      os << row.dump() << "\n";
    }
  }
}

RolloutBatch load_batch(std::istream& is) {
  RolloutBatch batch;
  std::string line;
  std::size_t expected_group = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    const std::size_t g = row.at("group").get<std::size_t>();
    if (g == batch.groups.size()) {
      GroupRollout group;
      group.task.family = tasks::family_from_name(row.at("family").get<std::string>());
      group.task.tier = row.at("tier").get<int>();
      group.task.seed = row.at("task_seed").get<std::uint64_t>();
      group.task.index = row.at("task_index").get<std::uint64_t>();
      group.task.prompt = row.at("prompt").get<std::vector<int>>();
      group.task.answer = row.at("answer").get<std::vector<int>>();
      group.reward_mean = row.at("reward_mean").get<double>();
      group.reward_std = row.at("reward_std").get<double>();
      batch.groups.push_back(std::move(group));
      batch.group_size = row.at("group_size").get<int>();
      batch.seed = row.at("batch_seed").get<std::uint64_t>();
    } else if (g != batch.groups.size() - 1) {
      throw Error("rollout: batch dump rows out of order");
    }
    ResponseSample r;
    r.tokens = row.at("tokens").get<std::vector<int>>();
    r.reward = row.at("reward").get<double>();
    r.advantage = row.at("advantage").get<double>();
    r.logp_old = row.at("logp_old").get<std::vector<double>>();
    r.logp_teacher = row.at("logp_teacher").get<std::vector<double>>();
    r.logp_ref = row.at("logp_ref").get<std::vector<double>>();
    if (r.tokens.empty() || r.logp_old.size() != r.tokens.size() ||
        r.logp_teacher.size() != r.tokens.size() || r.logp_ref.size() != r.tokens.size())
      throw Error("rollout: malformed batch dump row");
    batch.groups.back().responses.push_back(std::move(r));
    expected_group = g;
  }
  (void)expected_group;
  if (batch.groups.empty()) throw Error("rollout: empty batch dump");
  return batch;
}

}  // namespace rlad
