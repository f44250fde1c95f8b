// Acceptance gate: twelve end-to-end checks, one [PASS]/[FAIL] line each,
// nonzero exit when any fails. Every tolerance is pinned right here; seeds
// and hyperparameters of the directional fixtures are frozen so reruns are
// regression tests, not new experiments.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rlad/checkpoint.hpp"
#include "rlad/config.hpp"
#include "rlad/evaluation.hpp"
#include "rlad/gradcheck.hpp"
#include "rlad/objectives.hpp"
#include "rlad/policy.hpp"
#include "rlad/rng.hpp"
#include "rlad/rollout.hpp"
#include "rlad/tasks.hpp"
#include "rlad/tensor.hpp"
#include "rlad/trainer.hpp"

namespace fs = std::filesystem;
using namespace rlad;

namespace {

// --- pinned tolerances ---------------------------------------------------------
constexpr double kGradTolerance = 1e-4;        // 1: finite-difference relative error
constexpr double kGradStep = 1e-5;             // 1: central-difference step
constexpr int kGradFixtures = 120;             // 1: >= 100 randomized fixtures
constexpr double kEndpointRel = 1e-10;         // 2: loss/grad relative agreement
constexpr double kEndpointTrajectory = 1e-8;   // 2: parameter trajectory agreement
constexpr double kDecompositionTol = 1e-12;    // 3: per-token log-ratio identity
constexpr double kDeadZoneFd = 1e-9;           // 4: perturbation response of clipped rows
constexpr double kAdvMomentTol = 1e-10;        // 8: normalized moment agreement
constexpr double kAdvBruteTol = 1e-12;         // 8: element-wise brute-force agreement
constexpr double kTrainBudgetSeconds = 900.0;  // 10: wall-clock budget
constexpr double kGradBudgetSeconds = 120.0;   // 1: wall-clock budget

const std::string kWorkDir = "/tmp/rlad_acceptance";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Random-weight policies give every fixture distinct, kink-free log-probs.
PolicyParams random_mlp(std::uint64_t seed, int hidden = 8) {
  return PolicyParams::make_mlp(tasks::vocab_for(tasks::Family::arith_chain), 8, hidden, seed);
}

RolloutBatch random_batch(std::uint64_t seed, int group_size, int max_tokens, int prompts) {
  StudentPolicy old_policy(random_mlp(derive_seed(seed, "old"), 8));
  CheckpointTeacher teacher(random_mlp(derive_seed(seed, "teacher"), 8));
  StudentPolicy reference(random_mlp(derive_seed(seed, "reference"), 8));
  std::vector<tasks::TaskInstance> pool =
      tasks::generate(tasks::Family::arith_chain, 2 + static_cast<int>(seed % 3), seed, prompts);
  SamplerConfig sampler;
  sampler.max_tokens = max_tokens;
  return collect(pool, old_policy, teacher, reference, group_size, sampler,
                 derive_seed(seed, "collect"));
}

std::vector<std::vector<double>> grads_of(const PolicyParams& params) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, tensor] : const_cast<PolicyParams&>(params).named_tensors()) {
    const std::span<const double> grad = tensor.grad();
    out.emplace_back(grad.begin(), grad.end());
  }
  return out;
}

double loss_value(const RolloutBatch& batch, PolicyParams& student, const ObjectiveConfig& cfg) {
  return assemble_loss(batch, student, cfg).loss.value();
}

// --- criterion 1: finite-difference gradient verification -----------------------
Outcome criterion_gradcheck() {
  GradcheckOptions opt;
  opt.fixtures = kGradFixtures;
  opt.seed = 424242;
  opt.h = kGradStep;
  opt.tolerance = kGradTolerance;
  const auto start = std::chrono::steady_clock::now();
  GradcheckResult result = run_gradcheck(opt);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool pass = result.passed && seconds < kGradBudgetSeconds;
  return {pass, std::to_string(result.fixtures_run) + " fixtures, max rel error " +
                    format_double(result.max_rel_error) + ", " + format_double(seconds) + "s"};
}

// --- criterion 2: alpha=1 endpoint equals the plain clipped objective -----------
Outcome criterion_endpoint() {
  double worst = 0.0;
  for (std::uint64_t f = 0; f < 20; ++f) {
    const int group_size = 2 << (f % 3);
    RolloutBatch batch = random_batch(1000 + f, group_size, 1 + static_cast<int>(f * 5 % 16), 2);
    PolicyParams student = random_mlp(derive_seed(3000 + f, "student"), 8);

    ObjectiveConfig interp;
    interp.method = Method::rlad;
    interp.alpha = 1.0;
    interp.beta = 0.0;
    ObjectiveConfig plain;
    plain.method = Method::grpo;
    plain.beta = 0.0;

    student.zero_grads();
    double loss_interp = 0.0;
    {
      Tape tape;
      LossResult out = assemble_loss(batch, student, interp);
      backward(out.loss);
      loss_interp = out.loss.value();
    }
    std::vector<std::vector<double>> grads_interp = grads_of(student);

    student.zero_grads();
    double loss_plain = 0.0;
    {
      Tape tape;
      LossResult out = assemble_loss(batch, student, plain);
      backward(out.loss);
      loss_plain = out.loss.value();
    }
    std::vector<std::vector<double>> grads_plain = grads_of(student);

    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
    };
    worst = std::max(worst, rel(loss_interp, loss_plain));
    for (std::size_t t = 0; t < grads_interp.size(); ++t)
      for (std::size_t i = 0; i < grads_interp[t].size(); ++i)
        worst = std::max(worst, rel(grads_interp[t][i], grads_plain[t][i]));
  }
  if (worst > kEndpointRel)
    return {false, "fixture loss/grad relative difference " + format_double(worst)};

  // ten-update trajectories under both configurations, same seed
  auto run_with = [](const std::string& dir, const std::vector<std::string>& extra) {
    std::vector<std::string> overrides = {
        "beta=0",     "max_updates=10", "prompts_per_batch=4", "group_size=4",
        "task_pool_per_tier=4", "tier_min=2", "tier_max=3",    "max_tokens=6",
        "eval_k=2",   "eval_interval=10", "lr=0.05",           "hash_buckets=4096",
        "seed=12",    "out_dir=" + dir};
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    return train(default_config_with(overrides));
  };
  TrainResult interp_run = run_with(kWorkDir + "/endpoint_interp", {"method=rlad", "alpha=1"});
  TrainResult plain_run = run_with(kWorkDir + "/endpoint_plain", {"method=grpo"});
  double traj = 0.0;
  for (std::size_t i = 0; i < interp_run.final_params.table.size(); ++i)
    traj = std::max(traj, std::abs(interp_run.final_params.table.at(i) -
                                   plain_run.final_params.table.at(i)));
  const bool pass = traj <= kEndpointTrajectory;
  return {pass, "fixture rel diff " + format_double(worst) + ", trajectory max diff " +
                    format_double(traj) + " after 10 updates"};
}

// --- criterion 3: interpolated log-ratio decomposition --------------------------
Outcome criterion_decomposition() {
  double worst = 0.0;
  std::size_t rows_checked = 0;
  for (std::uint64_t f = 0; f < 6; ++f) {
    RolloutBatch batch = random_batch(5000 + f, 2 << (f % 3), 8, 2);
    PolicyParams student = random_mlp(derive_seed(6000 + f, "student"), 8);
    for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      ObjectiveConfig cfg;
      cfg.method = Method::rlad;
      cfg.alpha = alpha;
      cfg.teacher_logratio_clamp.reset();  // the identity is about the unclamped ratio
      for (const TokenAudit& row : audit_batch(batch, student, cfg)) {
        const double recombined =
            alpha * row.log_ratio_grpo + (1.0 - alpha) * row.log_ratio_teacher;
        worst = std::max(worst, std::abs(row.log_ratio - recombined));
        ++rows_checked;
      }
    }
  }
  return {worst <= kDecompositionTol,
          std::to_string(rows_checked) + " token rows, max deviation " + format_double(worst)};
}

// --- criterion 4: trust-region bound and clipped-token dead zone ----------------
Outcome criterion_trust_region() {
  // (a) every unclipped token obeys the log-space band exactly
  std::size_t unclipped = 0, clipped = 0;
  for (std::uint64_t f = 0; f < 6; ++f) {
    RolloutBatch batch = random_batch(7000 + f, 4, 8, 2);
    PolicyParams student = random_mlp(derive_seed(8000 + f, "student"), 8);
    for (double alpha : {0.25, 0.5, 0.75}) {
      ObjectiveConfig cfg;
      cfg.method = Method::rlad;
      cfg.alpha = alpha;
      if (f % 2 == 0) cfg.teacher_logratio_clamp.reset();
      const double band =
          std::max(-std::log(1.0 - cfg.eps_low), std::log(1.0 + cfg.eps_high));
      for (const TokenAudit& row : audit_batch(batch, student, cfg)) {
        if (row.clipped) {
          ++clipped;
          continue;
        }
        ++unclipped;
        if (std::abs(row.log_ratio) > band)
          return {false, "unclipped token with |log ratio| " + format_double(std::abs(row.log_ratio)) +
                             " outside band " + format_double(band)};
      }
    }
  }
  if (unclipped == 0 || clipped == 0)
    return {false, "degenerate fixtures: need both clipped and unclipped tokens"};

  // (b) a response pinned into the clipped dead zone contributes zero gradient:
  // three responses share a prompt; the rewarded one is pushed past the upper
  // clip, so only the other two (and the shared first position) may move.
  const Vocab& voc = tasks::vocab_for(tasks::Family::arith_chain);
  tasks::TaskInstance task = tasks::generate(tasks::Family::arith_chain, 2, 77, 1)[0];
  const double uniform_logp = -std::log(static_cast<double>(voc.size));
  RolloutBatch batch;
  batch.group_size = 3;
  batch.seed = 1;
  GroupRollout group;
  group.task = task;
  const std::vector<std::vector<int>> responses = {
      {3, 4, voc.eos}, {5, 6, voc.eos}, {6, 7, voc.eos}};
  const std::vector<double> rewards = {1.0, 0.0, 0.0};
  std::vector<double> advantages = group_advantages(rewards);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    ResponseSample sample;
    sample.tokens = responses[i];
    // anchor one nat below the student's uniform scores: every ratio is e^1,
    // outside the clip band on the high side
    sample.logp_old.assign(responses[i].size(), uniform_logp - 1.0);
    sample.logp_teacher.assign(responses[i].size(), uniform_logp - 1.0);
    sample.logp_ref.assign(responses[i].size(), uniform_logp - 1.0);
    sample.reward = rewards[i];
    sample.advantage = advantages[i];
    group.responses.push_back(std::move(sample));
  }
  group.reward_mean = 1.0 / 3.0;
  batch.groups.push_back(std::move(group));

  PolicyParams student = PolicyParams::make_tabular(voc, 8, 2048);
  ObjectiveConfig cfg;
  cfg.method = Method::rlad;
  cfg.alpha = 0.5;
  cfg.beta = 0.0;
  cfg.teacher_logratio_clamp.reset();

  student.zero_grads();
  {
    Tape tape;
    LossResult out = assemble_loss(batch, student, cfg);
    backward(out.loss);
  }
  for (const TokenAudit& row : audit_batch(batch, student, cfg)) {
    if (!row.clipped) return {false, "constructed fixture failed to clip every token"};
    if (row.sample == 0 && row.advantage <= 0.0)
      return {false, "constructed fixture lost its positive-advantage response"};
  }

  // distinct contexts: shared first position + two continuation positions per
  // response; the rewarded response's continuations must sit at exactly zero
  const int vocab_size = voc.size;
  std::vector<std::size_t> inserted;
  for (std::size_t j = 0; j < student.table_keys.size(); ++j)
    if (student.table_keys[j] != 0) inserted.push_back(j);
  if (inserted.size() != 7)
    return {false, "expected 7 distinct contexts, found " + std::to_string(inserted.size())};

  const std::span<const double> table_grad = student.table.grad();
  std::vector<std::size_t> dead_rows;
  std::size_t live_rows = 0;
  for (std::size_t j : inserted) {
    bool any = false;
    for (int v = 0; v < vocab_size; ++v)
      if (table_grad[j * static_cast<std::size_t>(vocab_size) + v] != 0.0) any = true;
    if (any)
      ++live_rows;
    else
      dead_rows.push_back(j);
  }
  if (live_rows != 5 || dead_rows.size() != 2)
    return {false, "expected 5 live and 2 dead context rows, found " + std::to_string(live_rows) +
                       " and " + std::to_string(dead_rows.size())};

  // perturbation: bumping any entry of a dead row must not move the loss
  double worst_fd = 0.0;
  const double h = 1e-3;
  std::vector<double>& data = student.table.mutable_data();
  for (std::size_t j : dead_rows)
    for (int v = 0; v < vocab_size; ++v) {
      const std::size_t idx = j * static_cast<std::size_t>(vocab_size) + v;
      const double saved = data[idx];
      data[idx] = saved + h;
      const double up = loss_value(batch, student, cfg);
      data[idx] = saved - h;
      const double down = loss_value(batch, student, cfg);
      data[idx] = saved;
      worst_fd = std::max(worst_fd, std::abs(up - down) / (2.0 * h));
    }
  const bool pass = worst_fd <= kDeadZoneFd;
  return {pass, std::to_string(unclipped) + " unclipped tokens in band, dead-zone fd " +
                    format_double(worst_fd)};
}

// --- criterion 5: clip saturation threshold monotone in the teacher -------------
Outcome criterion_saturation_monotone() {
  std::vector<double> old_probs, teacher_probs;
  for (int i = 0; i < 25; ++i) old_probs.push_back(1e-4 * std::pow(10.0, 4.0 * i / 24.0));
  for (int i = 0; i < 40; ++i) teacher_probs.push_back(1e-4 * std::pow(10.0, 4.0 * i / 39.0));
  std::size_t pairs = 0;
  for (double alpha : {0.25, 0.5, 0.75}) {
    for (double po : old_probs) {
      double previous = -1.0;
      for (double pt : teacher_probs) {
        const double threshold =
            clip_saturation_threshold(std::log(po), std::log(pt), alpha, 0.28);
        if (threshold <= previous)
          return {false, "threshold not strictly increasing at alpha=" + format_double(alpha) +
                             " pi_old=" + format_double(po) + " pi_T=" + format_double(pt)};
        previous = threshold;
        ++pairs;
      }
    }
  }
  for (double po : old_probs) {
    const double at_first =
        clip_saturation_threshold(std::log(po), std::log(teacher_probs.front()), 1.0, 0.28);
    for (double pt : teacher_probs)
      if (clip_saturation_threshold(std::log(po), std::log(pt), 1.0, 0.28) != at_first)
        return {false, "threshold not constant in the teacher at alpha=1"};
  }
  return {true, std::to_string(pairs) + " (pi_old, pi_T) pairs strictly increasing, constant at alpha=1"};
}

// --- criterion 6: uniform-reward groups produce zero gradient -------------------
Outcome criterion_zero_advantage() {
  const Vocab& voc = tasks::vocab_for(tasks::Family::arith_chain);
  tasks::TaskInstance task = tasks::generate(tasks::Family::arith_chain, 3, 99, 1)[0];
  RolloutBatch batch;
  batch.group_size = 3;
  Rng rng(20240817);
  for (double flat_reward : {0.0, 1.0}) {
    GroupRollout group;
    group.task = task;
    for (int i = 0; i < 3; ++i) {
      ResponseSample sample;
      sample.tokens = {static_cast<int>(rng.next_below(static_cast<std::uint64_t>(voc.size))),
                       static_cast<int>(rng.next_below(static_cast<std::uint64_t>(voc.size))),
                       voc.eos};
      for (std::size_t t = 0; t < sample.tokens.size(); ++t) {
        sample.logp_old.push_back(-0.5 - 0.3 * rng.next_double());
        sample.logp_teacher.push_back(-0.5 - 0.3 * rng.next_double());
        sample.logp_ref.push_back(-0.5 - 0.3 * rng.next_double());
      }
      sample.reward = flat_reward;
      sample.advantage = 0.0;  // sigma = 0 normalization
      group.responses.push_back(std::move(sample));
    }
    group.reward_mean = flat_reward;
    batch.groups.push_back(std::move(group));
  }

  for (Method method : {Method::grpo, Method::kdrl, Method::rlad}) {
    PolicyParams student = random_mlp(777, 8);
    ObjectiveConfig cfg;
    cfg.method = method;
    cfg.beta = 0.0;
    cfg.kdrl_kl_weight = 0.0;  // isolate the surrogate term
    student.zero_grads();
    {
      Tape tape;
      LossResult out = assemble_loss(batch, student, cfg);
      backward(out.loss);
    }
    for (const auto& [name, tensor] : student.named_tensors())
      for (double g : tensor.grad())
        if (g != 0.0)
          return {false, method_name(method) + " gradient " + name + " nonzero: " + format_double(g)};
  }
  return {true, "all parameter gradients exactly zero for grpo, kdrl, rlad"};
}

// --- criterion 7: teacher log-ratio clamp bounds and stability ------------------
Outcome criterion_clamp() {
  // (a) uniform teacher against a student made confident by construction
  const Vocab& voc = tasks::vocab_for(tasks::Family::arith_chain);
  tasks::TaskInstance task = tasks::generate(tasks::Family::arith_chain, 2, 55, 1)[0];
  PolicyParams student = PolicyParams::make_tabular(voc, 8, 2048);
  {
    // every context row puts logit 10 on token 3: pi(3|ctx) ~ 1
    std::vector<double>& data = student.table.mutable_data();
    for (std::size_t row = 0; row < student.table_keys.size(); ++row)
      data[row * static_cast<std::size_t>(voc.size) + 3] = 10.0;
  }
  const double uniform_logp = -std::log(static_cast<double>(voc.size));
  RolloutBatch batch;
  batch.group_size = 2;
  GroupRollout group;
  group.task = task;
  const std::vector<std::vector<int>> responses = {{3, 3, voc.eos}, {3, voc.eos}};
  const std::vector<double> rewards = {1.0, 0.0};
  std::vector<double> advantages = group_advantages(rewards);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    ResponseSample sample;
    sample.tokens = responses[i];
    sample.logp_old.assign(responses[i].size(), -0.01);
    sample.logp_teacher.assign(responses[i].size(), uniform_logp);
    sample.logp_ref.assign(responses[i].size(), -0.01);
    sample.reward = rewards[i];
    sample.advantage = advantages[i];
    group.responses.push_back(std::move(sample));
  }
  batch.groups.push_back(std::move(group));

  ObjectiveConfig cfg;
  cfg.method = Method::kdrl;
  cfg.teacher_logratio_clamp = 1.0;
  double max_unclamped = 0.0;
  for (const TokenAudit& row : audit_batch(batch, student, cfg)) {
    max_unclamped = std::max(max_unclamped, row.log_ratio_teacher);
    if (std::abs(row.log_ratio_teacher_clamped) > 1.0)
      return {false, "clamped log-ratio " + format_double(row.log_ratio_teacher_clamped) +
                         " escapes [-1, 1]"};
  }
  if (max_unclamped <= 1.0)
    return {false, "constructed fixture never drove the unclamped log-ratio above 1 (max " +
                       format_double(max_unclamped) + ")"};

  // (b) 200 distillation updates against the same adversarial uniform teacher:
  // a fresh tabular checkpoint scores every context uniformly
  const std::string uniform_teacher = kWorkDir + "/uniform_teacher.ckpt";
  {
    Checkpoint ckpt;
    ckpt.method = "grpo";
    embed_policy(ckpt, PolicyParams::make_tabular(voc, 8, 64));
    save_checkpoint(ckpt, uniform_teacher);
  }
  RunConfig run_cfg = default_config_with(
      {"method=kdrl", "teacher=checkpoint", "teacher_checkpoint=" + uniform_teacher, "lr=0.01",
       "max_updates=200", "prompts_per_batch=8", "group_size=4", "task_pool_per_tier=8",
       "tier_min=2", "tier_max=3", "max_tokens=6", "eval_k=2", "eval_interval=200", "seed=7",
       "out_dir=" + kWorkDir + "/clamp_stability"});
  TrainResult result = train(run_cfg);
  std::ifstream metrics(result.run_dir + "/metrics.jsonl");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(metrics, line)) {
    const std::size_t at = line.find("\"loss\":");
    if (at == std::string::npos) return {false, "metrics row without a loss field"};
    const double loss = std::strtod(line.c_str() + at + 7, nullptr);
    if (!std::isfinite(loss)) return {false, "non-finite loss in metrics row " + std::to_string(rows)};
    ++rows;
  }
  if (rows != 200) return {false, "expected 200 metric rows, found " + std::to_string(rows)};
  return {true, "unclamped log-ratio reached " + format_double(max_unclamped) +
                    ", clamped bounded by 1, 200 updates finite"};
}

// --- criterion 8: group advantage normalization ----------------------------------
Outcome criterion_advantage_normalization() {
  Rng rng(991);
  double worst_moment = 0.0, worst_brute = 0.0;
  std::size_t normalized = 0, degenerate = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng.next_below(15);
    std::vector<double> rewards(n);
    const bool binary = (trial % 2) == 0;
    for (double& r : rewards)
      r = binary ? static_cast<double>(rng.next_below(2)) : rng.next_double();
    std::vector<double> advantages = group_advantages(rewards);

    long double mean = 0.0L;
    for (double r : rewards) mean += r;
    mean /= static_cast<long double>(n);
    long double var = 0.0L;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<long double>(n);
    const long double sigma = std::sqrt(var);

    if (sigma == 0.0L) {
      ++degenerate;
      for (double a : advantages)
        if (a != 0.0) return {false, "sigma=0 group with nonzero advantage"};
      continue;
    }
    ++normalized;
    long double out_mean = 0.0L, out_var = 0.0L;
    for (double a : advantages) out_mean += a;
    out_mean /= static_cast<long double>(n);
    for (double a : advantages) out_var += (a - out_mean) * (a - out_mean);
    out_var /= static_cast<long double>(n);
    worst_moment = std::max(worst_moment, static_cast<double>(std::abs(out_mean)));
    worst_moment = std::max(worst_moment, std::abs(std::sqrt(static_cast<double>(out_var)) - 1.0));
    for (std::size_t i = 0; i < n; ++i) {
      const double brute = static_cast<double>((rewards[i] - mean) / sigma);
      worst_brute = std::max(worst_brute, std::abs(advantages[i] - brute));
    }
  }
  const bool pass = worst_moment <= kAdvMomentTol && worst_brute <= kAdvBruteTol;
  return {pass, std::to_string(normalized) + " normalized + " + std::to_string(degenerate) +
                    " sigma=0 groups, moment err " + format_double(worst_moment) +
                    ", brute-force err " + format_double(worst_brute)};
}

// --- criterion 9: pass@k estimator equals enumeration ----------------------------
Outcome criterion_pass_at_k() {
  auto enumerate = [](int n, int c, int k) {
    // every k-subset of n samples, counting those containing a correct one
    std::uint64_t total = 0, hit = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (__builtin_popcount(mask) != k) continue;
      ++total;
      if ((mask & ((1u << c) - 1u)) != 0) ++hit;  // correct samples are the first c
    }
    return static_cast<double>(hit) / static_cast<double>(total);
  };
  std::size_t checked = 0;
  for (int n = 1; n <= 8; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k) {
        if (pass_at_k_unbiased(n, c, k) != enumerate(n, c, k))
          return {false, "mismatch at n=" + std::to_string(n) + " c=" + std::to_string(c) +
                             " k=" + std::to_string(k)};
        ++checked;
      }

  // empirical Pass@K coincides with the estimator at k = n
  StudentPolicy policy(random_mlp(313, 8));
  std::vector<tasks::TaskInstance> pool = tasks::generate(tasks::Family::arith_chain, 2, 441, 64);
  SamplerConfig sampler;
  sampler.max_tokens = 6;
  EvalReport report = evaluate(policy, pool, 6, sampler, 8123);
  long double estimator_sum = 0.0L;
  for (std::size_t c : report.successes_per_prompt)
    estimator_sum += pass_at_k_unbiased(report.k, static_cast<int>(c), report.k);
  const double estimator_mean =
      static_cast<double>(estimator_sum / static_cast<long double>(report.successes_per_prompt.size()));
  if (report.pass_at_k != estimator_mean)
    return {false, "empirical Pass@K " + format_double(report.pass_at_k) +
                       " != estimator at k=n " + format_double(estimator_mean)};
  return {true, std::to_string(checked) + " (n,c,k) triples exact, empirical Pass@K == estimator at k=n"};
}

// --- criterion 10: distillation reaches the reward threshold no slower ----------
Outcome criterion_directional() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::uint64_t> seeds = {101, 102, 103, 104};
  const double threshold = 0.9;
  // Aggressive updates (lr 1.0, three inner epochs) are where the anchored
  // ratio earns its keep: the unanchored baseline's negative advantages can
  // collapse correct tokens that appeared inside failed responses, while the
  // teacher term shields them.  Both methods run the full budget; steps to
  // threshold are read off the per-step eval history.
  const int max_updates = 300;

  auto run_method = [&](const std::string& method_overrides, std::uint64_t seed,
                        const std::string& dir) {
    std::vector<std::string> overrides = {
        "teacher=noisy_oracle", "teacher_eta=0.05", "tier_min=2",  "tier_max=5",
        "group_size=8",         "prompts_per_batch=16", "task_pool_per_tier=8",
        "max_tokens=4",         "lr=1.0",           "eval_k=8",    "eval_interval=1",
        "inner_epochs=3",       "max_updates=" + std::to_string(max_updates),
        "seed=" + std::to_string(seed), "out_dir=" + dir};
    std::stringstream ss(method_overrides);
    std::string item;
    while (std::getline(ss, item, ' ')) overrides.push_back(item);
    return train(default_config_with(overrides));
  };
  auto steps_to_threshold = [&](const TrainResult& result) -> std::uint64_t {
    for (const auto& [step, mean] : result.eval_history)
      if (mean >= threshold) return step;
    return static_cast<std::uint64_t>(max_updates) + 1;
  };
  auto hardest_tier_mean = [](const TrainResult& result) {
    return result.last_eval.tiers.back().mean_at_k;
  };

  // Regression fixture: outcomes recorded from this exact config; runs are
  // byte-reproducible and the means are exact multiples of 1/256, so any
  // drift is a real behavior change.
  struct Fixture {
    std::uint64_t seed;
    std::uint64_t steps[2];    // {rlad, grpo} outer steps to the threshold
    double overall[2];         // final overall Mean@8
    double hardest[2];         // final hardest-tier Mean@8
  };
  const Fixture expected[] = {
      {101, {173, 227}, {0.96875, 0.90625}, {1.0, 0.875}},
      {102, {182, 207}, {1.0, 0.96875}, {1.0, 1.0}},
      {103, {222, 234}, {0.96875, 0.9375}, {0.875, 0.875}},
      {104, {188, 249}, {0.96875, 0.9375}, {1.0, 1.0}},
  };

  int faster_or_equal = 0, hardest_at_least = 0, fixture_matches = 0;
  std::ostringstream table;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const std::uint64_t seed = seeds[i];
    TrainResult distill = run_method("method=rlad alpha=0.5", seed,
                                     kWorkDir + "/directional_rlad_" + std::to_string(seed));
    TrainResult baseline = run_method("method=grpo", seed,
                                      kWorkDir + "/directional_grpo_" + std::to_string(seed));
    const std::uint64_t distill_steps = steps_to_threshold(distill);
    const std::uint64_t baseline_steps = steps_to_threshold(baseline);
    const double distill_hard = hardest_tier_mean(distill);
    const double baseline_hard = hardest_tier_mean(baseline);
    if (distill_steps <= baseline_steps) ++faster_or_equal;
    if (distill_hard >= baseline_hard) ++hardest_at_least;
    const Fixture& fix = expected[i];
    if (fix.seed == seed && distill_steps == fix.steps[0] && baseline_steps == fix.steps[1] &&
        distill.last_eval.mean_at_k == fix.overall[0] &&
        baseline.last_eval.mean_at_k == fix.overall[1] && distill_hard == fix.hardest[0] &&
        baseline_hard == fix.hardest[1])
      ++fixture_matches;
    table << " seed " << seed << ": steps " << distill_steps << " vs " << baseline_steps
          << ", tier5 " << format_double(distill_hard) << " vs " << format_double(baseline_hard)
          << ";";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool pass = faster_or_equal >= 3 && hardest_at_least >= 3 && fixture_matches == 4 &&
                    seconds < kTrainBudgetSeconds;
  return {pass, std::to_string(faster_or_equal) + "/4 seeds no slower, " +
                    std::to_string(hardest_at_least) + "/4 hardest-tier at least as good, " +
                    std::to_string(fixture_matches) + "/4 match the recorded fixture, " +
                    format_double(seconds) + "s;" + table.str()};
}

// --- criterion 11: sampler frequencies match policy probabilities ----------------
Outcome criterion_sampler_fidelity() {
  const int draws = 100000;
  tasks::TaskInstance task = tasks::generate(tasks::Family::arith_chain, 2, 21, 1)[0];
  struct Fixture {
    std::string name;
    const Policy& policy;
  };
  StudentPolicy mlp_a(random_mlp(2001, 8));
  StudentPolicy mlp_b(random_mlp(2002, 16));
  NoisyOracleTeacher oracle(tasks::Family::arith_chain, 0.3);
  const std::vector<Fixture> fixtures = {{"mlp-8", mlp_a}, {"mlp-16", mlp_b}, {"noisy-oracle", oracle}};

  double worst_sigma = 0.0;
  for (std::size_t f = 0; f < fixtures.size(); ++f) {
    const Policy& policy = fixtures[f].policy;
    // first sampled token is conditioned on the full prompt
    const std::vector<double> logp = policy.next_token_logprobs(task, task.prompt);
    SamplerConfig sampler;  // temperature 1, top_p 1
    sampler.max_tokens = 1;
    Rng rng(derive_seed(909090, "fidelity", f));
    std::vector<int> counts(logp.size(), 0);
    for (int d = 0; d < draws; ++d) {
      Sampled sampled = sample_response(policy, task, sampler, rng);
      ++counts[static_cast<std::size_t>(sampled.tokens.at(0))];
    }
    for (std::size_t v = 0; v < logp.size(); ++v) {
      const double p = std::exp(logp[v]);
      const double expected = draws * p;
      if (expected < 5.0) {
        if (counts[v] > 10)
          return {false, fixtures[f].name + ": token " + std::to_string(v) + " count " +
                             std::to_string(counts[v]) + " with expectation " + format_double(expected)};
        continue;
      }
      const double sigma = std::sqrt(draws * p * (1.0 - p));
      const double deviation = std::abs(counts[v] - expected) / sigma;
      worst_sigma = std::max(worst_sigma, deviation);
      if (deviation > 3.0)
        return {false, fixtures[f].name + ": token " + std::to_string(v) + " off by " +
                           format_double(deviation) + " sigma"};
    }
  }
  return {true, "3 fixtures x 100k draws, worst deviation " + format_double(worst_sigma) + " sigma"};
}

// --- criterion 12: byte-identical reruns -----------------------------------------
Outcome criterion_reproducibility() {
  auto slurp = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  auto run_into = [&](const std::string& dir) {
    RunConfig cfg = default_config_with(
        {"max_updates=4", "prompts_per_batch=4", "group_size=4", "task_pool_per_tier=4",
         "tier_min=2", "tier_max=3", "max_tokens=6", "eval_k=4", "eval_interval=2",
         "hash_buckets=4096", "seed=19", "out_dir=" + dir});
    train(cfg);
    return dir;
  };
  const std::string a = run_into(kWorkDir + "/repro_a");
  const std::string b = run_into(kWorkDir + "/repro_b");
  const std::string metrics_a = slurp(a + "/metrics.jsonl");
  if (metrics_a.empty()) return {false, "first run produced no metrics"};
  if (metrics_a != slurp(b + "/metrics.jsonl")) return {false, "metrics.jsonl differs"};
  if (slurp(a + "/checkpoints/last.ckpt") != slurp(b + "/checkpoints/last.ckpt"))
    return {false, "last.ckpt differs"};
  if (slurp(a + "/checkpoints/best.ckpt") != slurp(b + "/checkpoints/best.ckpt"))
    return {false, "best.ckpt differs"};
  return {true, "metrics.jsonl, last.ckpt, best.ckpt byte-identical across reruns"};
}

}  // namespace

int main() {
  fs::remove_all(kWorkDir);
  fs::create_directories(kWorkDir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"finite-difference gradient verification", criterion_gradcheck},
      {"alpha=1 endpoint equals the plain clipped objective", criterion_endpoint},
      {"interpolated log-ratio decomposes into its two parts", criterion_decomposition},
      {"trust-region bound holds and clipped tokens are gradient-dead", criterion_trust_region},
      {"clip saturation threshold monotone in the teacher", criterion_saturation_monotone},
      {"uniform-reward groups produce exactly zero gradient", criterion_zero_advantage},
      {"teacher log-ratio clamp bounds the term and keeps training finite", criterion_clamp},
      {"group advantages are exactly normalized", criterion_advantage_normalization},
      {"pass@k estimator equals exhaustive enumeration", criterion_pass_at_k},
      {"distillation reaches the reward threshold no slower than the baseline", criterion_directional},
      {"sampler frequencies match policy probabilities", criterion_sampler_fidelity},
      {"identical config and seed reproduce runs byte for byte", criterion_reproducibility},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1) << ": "
              << criteria[i].first;
    if (!outcome.detail.empty()) std::cout << " — " << outcome.detail;
    std::cout << "\n" << std::flush;
  }
  if (failures != 0) std::cout << failures << " criteria failed\n";
  return failures == 0 ? 0 : 1;
}
