#include "rlad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <vector>

#include "rlad/objectives.hpp"
#include "rlad/policy.hpp"
#include "rlad/rng.hpp"
#include "rlad/rollout.hpp"
#include "rlad/tasks.hpp"
#include "rlad/tensor.hpp"

namespace rlad {

namespace {

constexpr double kKinkMargin = 5e-4;  // must stay well above the FD step

struct Fixture {
  ObjectiveConfig cfg;
  PolicyParams student;
  RolloutBatch batch;
  std::string desc;
};

void randomize(PolicyParams& params, Rng& rng, double scale) {
  for (Tensor t : params.trainable()) {
    for (double& v : t.mutable_data()) v = scale * rng.next_gaussian();
  }
}

// Fixed cycles guarantee coverage of every method, group size, and alpha
// value; the retry index only re-draws the random content.
Fixture build_fixture(int index, std::uint64_t seed, int attempt) {
  Rng rng(derive_seed(seed, "gradcheck", static_cast<std::uint64_t>(index),
                      static_cast<std::uint64_t>(attempt)));

  Fixture fx;
  const Method methods[] = {Method::grpo, Method::kdrl, Method::rlad};
  const double alphas[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  const int group_sizes[] = {2, 4, 8};

  fx.cfg.method = methods[index % 3];
  fx.cfg.alpha = alphas[(index / 3) % 5];
  fx.cfg.kl_estimator = (index % 2 == 0) ? KlEstimator::k3 : KlEstimator::plain_logratio;
  fx.cfg.beta = (rng.next_below(2) == 0) ? 0.0 : 0.04;
  fx.cfg.kdrl_kl_weight = 0.1;
  switch (rng.next_below(4)) {
    case 0: fx.cfg.teacher_logratio_clamp.reset(); break;
    case 1: fx.cfg.teacher_logratio_clamp = 0.8; break;
    case 2: fx.cfg.teacher_logratio_clamp = 1.0; break;
    default: fx.cfg.teacher_logratio_clamp = 1.3; break;
  }
  fx.cfg.clamp_trrd_term = rng.next_below(3) != 0;
  fx.cfg.clamp_kdrl_term = rng.next_below(3) != 0;
  const int group_size = group_sizes[(index / 2) % 3];

  const bool tabular = index % 2 == 0;
  const Vocab vocab = tabular ? tasks::vocab_for(tasks::Family::seq_reverse)
                              : tasks::vocab_for(tasks::Family::arith_chain);
  fx.student = tabular ? PolicyParams::make_tabular(vocab, 3, 256)
                       : PolicyParams::make_mlp(vocab, 3, 5, derive_seed(seed, "gc-mlp", index));
  randomize(fx.student, rng, 0.6);

  fx.batch.group_size = group_size;
  fx.batch.seed = seed;
  const std::size_t n_groups = tabular ? 1 : 1 + rng.next_below(2);
  for (std::size_t g = 0; g < n_groups; ++g) {
    GroupRollout group;
    group.task.family = tabular ? tasks::Family::seq_reverse : tasks::Family::arith_chain;
    group.task.tier = 2;
    group.task.prompt = {vocab.bos, static_cast<int>(rng.next_below(vocab.size)),
                         static_cast<int>(rng.next_below(vocab.size))};
    group.task.answer = {vocab.eos};

    const bool force_equal_rewards = index % 11 == 3 && g == 0;
    std::vector<double> rewards;
    for (int i = 0; i < group_size; ++i) {
      ResponseSample r;
      std::size_t len = 1 + rng.next_below(16);
      if (index % 7 == 0 && i == 0) len = 1;
      if (index % 7 == 0 && i == 1) len = 16;
      for (std::size_t t = 0; t < len; ++t)
        r.tokens.push_back(static_cast<int>(rng.next_below(vocab.size)));
      // Frozen log-probs are placed relative to the student's own scores so
      // the assembled ratios straddle the clip band and the clamp range.
      Tensor lc = score_response(fx.student, group.task.prompt, r.tokens);
      for (std::size_t t = 0; t < len; ++t) {
        const double cur = lc.at(t);
        r.logp_old.push_back(cur + (rng.next_double() - 0.5) * 1.2);
        r.logp_teacher.push_back(cur + (rng.next_double() - 0.5) * 4.0);
        r.logp_ref.push_back(cur + (rng.next_double() - 0.5) * 1.0);
      }
      r.reward = force_equal_rewards ? 1.0 : static_cast<double>(rng.next_below(2));
      rewards.push_back(r.reward);
      group.responses.push_back(std::move(r));
    }
    auto adv = group_advantages(rewards);
    double mean = 0.0;
    for (double v : rewards) mean += v;
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double v : rewards) var += (v - mean) * (v - mean);
    group.reward_mean = mean;
    group.reward_std = std::sqrt(var / static_cast<double>(rewards.size()));
    for (std::size_t i = 0; i < group.responses.size(); ++i)
      group.responses[i].advantage = adv[i];
    fx.batch.groups.push_back(std::move(group));
  }

  std::ostringstream d;
  d << "fixture " << index << " (" << method_name(fx.cfg.method) << " alpha=" << fx.cfg.alpha
    << " G=" << group_size << ' ' << model_kind_name(fx.student.kind)
    << " groups=" << n_groups << ')';
  fx.desc = d.str();
  return fx;
}

// Distance (in log-ratio space) from any token to the nearest clip-band edge
// or clamp edge; central differences are unreliable within the FD step of
// these kinks.
double min_kink_distance(Fixture& fx) {
  auto rows = audit_batch(fx.batch, fx.student, fx.cfg);
  const double lo = std::log(1.0 - fx.cfg.eps_low);
  const double hi = std::log(1.0 + fx.cfg.eps_high);
  double best = 1e300;
  for (const auto& row : rows) {
    best = std::min(best, std::abs(row.log_ratio - lo));
    best = std::min(best, std::abs(row.log_ratio - hi));
    const bool clamp_used =
        fx.cfg.teacher_logratio_clamp &&
        ((fx.cfg.method == Method::rlad && fx.cfg.clamp_trrd_term) ||
         (fx.cfg.method == Method::kdrl && fx.cfg.clamp_kdrl_term));
    if (clamp_used) {
      const double c = *fx.cfg.teacher_logratio_clamp;
      best = std::min(best, std::abs(row.log_ratio_teacher - c));
      best = std::min(best, std::abs(row.log_ratio_teacher + c));
    }
  }
  return best;
}

}  // namespace

GradcheckResult run_gradcheck(const GradcheckOptions& opt) {
  if (opt.fixtures <= 0) throw Error("gradcheck: fixtures must be positive");
  if (!(opt.h > 0.0) || !(opt.tolerance > 0.0)) throw Error("gradcheck: h and tolerance must be positive");

  GradcheckResult result;
  result.passed = true;
  for (int i = 0; i < opt.fixtures; ++i) {
    Fixture fx;
    bool clear = false;
    for (int attempt = 0; attempt < 64 && !clear; ++attempt) {
      fx = build_fixture(i, opt.seed, attempt);
      clear = min_kink_distance(fx) > kKinkMargin;
    }
    if (!clear) throw Error("gradcheck: could not draw a kink-free fixture");

    fx.student.zero_grads();
    {
      Tape tape;
      LossResult lr = assemble_loss(fx.batch, fx.student, fx.cfg);
      tape.backward(lr.loss);
    }

    double fixture_max = 0.0;
    std::string fixture_worst;
    const auto named = fx.student.named_tensors();
    for (const auto& [name, tensor] : named) {
      std::vector<double> analytic(tensor.grad().begin(), tensor.grad().end());
      // The corrupt hook bends one reported gradient; the comparison against
      // finite differences must then fail.
      if (opt.corrupt && name == named.front().first && !analytic.empty())
        analytic[0] = 1.5 * analytic[0] + 1e-3;
      auto eval = [&]() { return assemble_loss(fx.batch, fx.student, fx.cfg).loss.value(); };
      FdReport rep = finite_difference_check(tensor, eval, analytic, opt.h);
      if (rep.max_rel_error > fixture_max) {
        fixture_max = rep.max_rel_error;
        std::ostringstream w;
        w << fx.desc << " tensor " << name << " index " << rep.worst_index << " analytic "
          << rep.analytic_at_worst << " fd " << rep.numeric_at_worst;
        fixture_worst = w.str();
      }
    }

    if (opt.log) {
      (*opt.log) << fx.desc << " max_rel_error=" << fixture_max << '\n';
    }
    if (fixture_max > result.max_rel_error) {
      result.max_rel_error = fixture_max;
      result.worst_fixture = fixture_worst;
    }
    if (fixture_max > opt.tolerance) result.passed = false;
    ++result.fixtures_run;
  }
  return result;
}

}  // namespace rlad
