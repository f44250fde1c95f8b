#include "rlad/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "rlad/policy.hpp"

namespace rlad {

namespace {

Tensor const_vector(std::span<const double> v) { return Tensor::from_vector(v); }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void require_finite(std::span<const double> v, const std::string& who) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(who + ": non-finite input");
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::grpo: return "grpo";
    case Method::kdrl: return "kdrl";
    case Method::rlad: return "rlad";
  }
  throw Error("unknown method enum value");
}

Method method_from_name(const std::string& name) {
  if (name == "grpo") return Method::grpo;
  if (name == "kdrl") return Method::kdrl;
  if (name == "rlad") return Method::rlad;
  throw Error("unknown method '" + name + "' (expected grpo, kdrl, or rlad)");
}

std::string kl_estimator_name(KlEstimator e) {
  switch (e) {
    case KlEstimator::k3: return "k3";
    case KlEstimator::plain_logratio: return "plain_logratio";
  }
  throw Error("unknown kl estimator enum value");
}

KlEstimator kl_estimator_from_name(const std::string& name) {
  if (name == "k3") return KlEstimator::k3;
  if (name == "plain_logratio") return KlEstimator::plain_logratio;
  throw Error("unknown kl_estimator '" + name + "' (expected k3 or plain_logratio)");
}

void ObjectiveConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0,
          "alpha must lie in [0, 1]");
  require(std::isfinite(eps_low) && eps_low > 0.0 && eps_low < 1.0,
          "eps_low must lie in (0, 1)");
  require(std::isfinite(eps_high) && eps_high > 0.0, "eps_high must be positive");
  require(std::isfinite(beta) && beta >= 0.0, "beta must be nonnegative");
  require(std::isfinite(kdrl_kl_weight) && kdrl_kl_weight >= 0.0,
          "kdrl_kl_weight must be nonnegative");
  if (teacher_logratio_clamp) {
    require(std::isfinite(*teacher_logratio_clamp) && *teacher_logratio_clamp > 0.0,
            "teacher_logratio_clamp must be positive when set");
  }
}

Tensor grpo_ratio(const Tensor& logp_cur, std::span<const double> logp_old) {
  require(logp_cur.size() == logp_old.size(), "grpo_ratio: length mismatch");
  require_finite(logp_cur.data(), "grpo_ratio");
  require_finite(logp_old, "grpo_ratio");
  return exp(sub(logp_cur, const_vector(logp_old)));
}

Tensor teacher_ratio(const Tensor& logp_cur, std::span<const double> logp_teacher,
                     std::optional<double> clamp) {
  require(logp_cur.size() == logp_teacher.size(), "teacher_ratio: length mismatch");
  require_finite(logp_cur.data(), "teacher_ratio");
  require_finite(logp_teacher, "teacher_ratio");
  Tensor diff = sub(logp_cur, const_vector(logp_teacher));
  if (clamp) diff = clip(diff, -*clamp, *clamp);
  return exp(diff);
}

Tensor trrd_ratio(const Tensor& log_ratio_grpo, const Tensor& log_ratio_teacher, double alpha) {
  require(log_ratio_grpo.size() == log_ratio_teacher.size(), "trrd_ratio: length mismatch");
  return exp(add(mul_scalar(log_ratio_grpo, alpha), mul_scalar(log_ratio_teacher, 1.0 - alpha)));
}

std::vector<double> mixture_anchor_log(std::span<const double> logp_old,
                                       std::span<const double> logp_teacher, double alpha) {
  require(logp_old.size() == logp_teacher.size(), "mixture_anchor_log: length mismatch");
  std::vector<double> anchor(logp_old.size());
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    // Separate rounded products, then one add: matches the tensor path
    // (mul_scalar, mul_scalar, add) bit for bit.
    const double a = alpha * logp_old[i];
    const double b = (1.0 - alpha) * logp_teacher[i];
    anchor[i] = a + b;
  }
  return anchor;
}

Tensor mixture_anchor(std::span<const double> logp_old, std::span<const double> logp_teacher,
                      double alpha) {
  return Tensor::from_vector(mixture_anchor_log(logp_old, logp_teacher, alpha));
}

Tensor clipped_surrogate(const Tensor& ratio, double advantage, double eps_low, double eps_high) {
  Tensor a = mul_scalar(ratio, advantage);
  Tensor b = mul_scalar(clip(ratio, 1.0 - eps_low, 1.0 + eps_high), advantage);
  // min(a, b) = a - relu(a - b); at a tie the gradient follows the unclipped
  // branch, and for a clipped token the a-adjoints cancel exactly.
  return sub(a, relu(sub(a, b)));
}

Tensor reference_kl(const Tensor& logp_cur, std::span<const double> logp_ref,
                    KlEstimator estimator) {
  require(logp_cur.size() == logp_ref.size(), "reference_kl: length mismatch");
  Tensor ref = const_vector(logp_ref);
  if (estimator == KlEstimator::plain_logratio) return sub(logp_cur, ref);
  Tensor d = sub(ref, logp_cur);
  return add_scalar(sub(exp(d), d), -1.0);
}

Tensor kdrl_kl(const Tensor& logp_cur, std::span<const double> logp_teacher,
               std::optional<double> clamp) {
  require(logp_cur.size() == logp_teacher.size(), "kdrl_kl: length mismatch");
  Tensor diff = sub(logp_cur, const_vector(logp_teacher));
  if (clamp) diff = clip(diff, -*clamp, *clamp);
  return diff;
}

double clip_saturation_threshold(double logp_old, double logp_teacher, double alpha,
                                 double eps_high) {
  const double a = alpha * logp_old;
  const double b = (1.0 - alpha) * logp_teacher;
  return (1.0 + eps_high) * std::exp(a + b);
}

namespace {

struct ResponsePieces {
  Tensor ratio;                    // assembled method ratio, Tensor[T]
  std::vector<double> log_anchor;  // frozen anchor per token
};

// Shared by loss assembly and audit so both see identical arithmetic.
ResponsePieces assemble_ratio(const Tensor& logp_cur, const ResponseSample& r,
                              const ObjectiveConfig& cfg) {
  ResponsePieces out;
  if (cfg.method == Method::rlad && cfg.clamp_trrd_term && cfg.teacher_logratio_clamp) {
    Tensor lg = sub(logp_cur, const_vector(r.logp_old));
    const double c = *cfg.teacher_logratio_clamp;
    Tensor lt = clip(sub(logp_cur, const_vector(r.logp_teacher)), -c, c);
    out.ratio = trrd_ratio(lg, lt, cfg.alpha);
    out.log_anchor = mixture_anchor_log(r.logp_old, r.logp_teacher, cfg.alpha);
  } else if (cfg.method == Method::rlad) {
    out.log_anchor = mixture_anchor_log(r.logp_old, r.logp_teacher, cfg.alpha);
    out.ratio = exp(sub(logp_cur, const_vector(out.log_anchor)));
  } else {
    out.ratio = grpo_ratio(logp_cur, r.logp_old);
    out.log_anchor = r.logp_old;
  }
  return out;
}

void check_batch(const RolloutBatch& batch) {
  require(!batch.groups.empty(), "assemble_loss: batch has no groups");
  for (const auto& g : batch.groups) {
    require(g.responses.size() >= 2, "assemble_loss: each group needs at least two responses");
    for (const auto& r : g.responses) {
      require(!r.tokens.empty(), "assemble_loss: empty response");
      const std::size_t t = r.tokens.size();
      require(r.logp_old.size() == t && r.logp_teacher.size() == t && r.logp_ref.size() == t,
              "assemble_loss: per-token arrays misaligned with tokens");
    }
  }
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return mul_scalar(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

LossResult assemble_loss(const RolloutBatch& batch, PolicyParams& student,
                         const ObjectiveConfig& cfg) {
  cfg.validate();
  check_batch(batch);

  const bool want_ref_kl = cfg.beta > 0.0;
  const bool want_kdrl = cfg.method == Method::kdrl && cfg.kdrl_kl_weight > 0.0;
  auto logps = recompute_student_logprobs(batch, student);

  LossStats stats;
  std::size_t clipped_tokens = 0;
  double abs_teacher_sum = 0.0;

  std::vector<Tensor> group_surr, group_ref, group_kdrl;
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    const auto& group = batch.groups[g];
    std::vector<Tensor> resp_surr, resp_ref, resp_kdrl;
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      const auto& r = group.responses[i];
      const Tensor& lc = logps[g][i];
      ResponsePieces pieces = assemble_ratio(lc, r, cfg);
      resp_surr.push_back(mean(clipped_surrogate(pieces.ratio, r.advantage, cfg.eps_low,
                                                 cfg.eps_high)));
      if (want_ref_kl)
        resp_ref.push_back(mean(reference_kl(lc, r.logp_ref, cfg.kl_estimator)));
      if (want_kdrl)
        resp_kdrl.push_back(mean(kdrl_kl(
            lc, r.logp_teacher,
            cfg.clamp_kdrl_term ? cfg.teacher_logratio_clamp : std::nullopt)));

      const auto rd = pieces.ratio.data();
      const auto cd = lc.data();
      for (std::size_t t = 0; t < rd.size(); ++t) {
        ++stats.tokens;
        if (rd[t] < 1.0 - cfg.eps_low || rd[t] > 1.0 + cfg.eps_high) ++clipped_tokens;
        abs_teacher_sum += std::abs(cd[t] - r.logp_teacher[t]);
      }
    }
    group_surr.push_back(mean_of(resp_surr));
    if (want_ref_kl) group_ref.push_back(mean_of(resp_ref));
    if (want_kdrl) group_kdrl.push_back(mean_of(resp_kdrl));
  }

  Tensor objective = mean_of(group_surr);
  if (want_ref_kl) objective = sub(objective, mul_scalar(mean_of(group_ref), cfg.beta));
  if (want_kdrl) objective = sub(objective, mul_scalar(mean_of(group_kdrl), cfg.kdrl_kl_weight));

  LossResult out;
  out.loss = neg(objective);
  stats.clip_fraction =
      stats.tokens ? static_cast<double>(clipped_tokens) / static_cast<double>(stats.tokens) : 0.0;
  stats.mean_abs_teacher_logratio =
      stats.tokens ? abs_teacher_sum / static_cast<double>(stats.tokens) : 0.0;
  out.stats = stats;
  return out;
}

std::vector<TokenAudit> audit_batch(const RolloutBatch& batch, PolicyParams& student,
                                    const ObjectiveConfig& cfg) {
  cfg.validate();
  check_batch(batch);
  auto logps = recompute_student_logprobs(batch, student);

  const bool clamped = cfg.method == Method::rlad && cfg.clamp_trrd_term &&
                       cfg.teacher_logratio_clamp.has_value();
  const double c = cfg.teacher_logratio_clamp.value_or(0.0);

  std::vector<TokenAudit> rows;
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    const auto& group = batch.groups[g];
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      const auto& r = group.responses[i];
      const auto lc = logps[g][i].data();
      const std::vector<double> anchor =
          cfg.method == Method::rlad
              ? mixture_anchor_log(r.logp_old, r.logp_teacher, cfg.alpha)
              : r.logp_old;
      for (std::size_t t = 0; t < lc.size(); ++t) {
        TokenAudit row;
        row.group = g;
        row.sample = i;
        row.position = t;
        row.advantage = r.advantage;
        row.logp_cur = lc[t];
        row.log_ratio_grpo = lc[t] - r.logp_old[t];
        row.log_ratio_teacher = lc[t] - r.logp_teacher[t];
        row.log_ratio_teacher_clamped =
            cfg.teacher_logratio_clamp
                ? std::min(std::max(row.log_ratio_teacher, -*cfg.teacher_logratio_clamp),
                           *cfg.teacher_logratio_clamp)
                : row.log_ratio_teacher;
        row.log_anchor = anchor[t];
        if (cfg.method == Method::rlad && clamped) {
          const double lt = std::min(std::max(row.log_ratio_teacher, -c), c);
          const double pa = cfg.alpha * row.log_ratio_grpo;
          const double pb = (1.0 - cfg.alpha) * lt;
          row.log_ratio = pa + pb;
        } else if (cfg.method == Method::rlad) {
          row.log_ratio = lc[t] - anchor[t];
        } else {
          row.log_ratio = row.log_ratio_grpo;
        }
        row.ratio = std::exp(row.log_ratio);
        row.clipped = row.ratio < 1.0 - cfg.eps_low || row.ratio > 1.0 + cfg.eps_high;
        const double unclipped = row.ratio * r.advantage;
        const double at_clip =
            std::min(std::max(row.ratio, 1.0 - cfg.eps_low), 1.0 + cfg.eps_high) * r.advantage;
        row.surrogate = std::min(unclipped, at_clip);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_audit_csv(std::ostream& os, std::span<const TokenAudit> rows) {
  os << "group,sample,position,advantage,logp_cur,log_ratio_grpo,log_ratio_teacher,"
        "log_ratio_teacher_clamped,log_anchor,log_ratio,ratio,clipped,surrogate\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : rows) {
    line.str("");
    line << r.group << ',' << r.sample << ',' << r.position << ',' << r.advantage << ','
         << r.logp_cur << ',' << r.log_ratio_grpo << ',' << r.log_ratio_teacher << ','
         << r.log_ratio_teacher_clamped << ',' << r.log_anchor << ',' << r.log_ratio << ','
         << r.ratio << ',' << (r.clipped ? 1 : 0) << ',' << r.surrogate << '\n';
    os << line.str();
  }
}

}  // namespace rlad
