#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlad/rollout.hpp"
#include "rlad/tensor.hpp"

namespace rlad {

enum class Method { grpo, kdrl, rlad };
enum class KlEstimator { k3, plain_logratio };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string kl_estimator_name(KlEstimator e);
KlEstimator kl_estimator_from_name(const std::string& name);

// One configuration drives all three objectives:
//   grpo   clipped surrogate on r = pi/pi_old
//   kdrl   grpo plus kdrl_kl_weight * clamp(log pi - log pi_T) distillation
//   rlad   clipped surrogate on the interpolated ratio
//            r = (pi/pi_old)^alpha * (pi/pi_T)^(1-alpha),
//          i.e. pi relative to the geometric mixture anchor
//            r_mix = pi_old^alpha * pi_T^(1-alpha).
// alpha = 1 recovers grpo exactly; alpha = 0 anchors every step to the
// teacher. An optional symmetric clamp bounds the teacher log-ratio before it
// enters either the rlad ratio or the kdrl distillation term.
struct ObjectiveConfig {
  Method method = Method::rlad;
  double alpha = 0.5;
  double eps_low = 0.20;
  double eps_high = 0.28;
  double beta = 0.0;               // reference-KL weight
  double kdrl_kl_weight = 0.1;     // used by kdrl only
  std::optional<double> teacher_logratio_clamp = 1.0;
  bool clamp_trrd_term = true;
  bool clamp_kdrl_term = true;
  KlEstimator kl_estimator = KlEstimator::k3;

  void validate() const;
};

// --- per-response ratio and penalty pieces (Tensor[T] against frozen spans) ---

Tensor grpo_ratio(const Tensor& logp_cur, std::span<const double> logp_old);
// exp of the (optionally clamped) teacher log-ratio.
Tensor teacher_ratio(const Tensor& logp_cur, std::span<const double> logp_teacher,
                     std::optional<double> clamp);
// Geometric interpolation in log space: exp(alpha*a + (1-alpha)*b).
Tensor trrd_ratio(const Tensor& log_ratio_grpo, const Tensor& log_ratio_teacher, double alpha);
// log r_mix per token: alpha*logp_old + (1-alpha)*logp_teacher.
std::vector<double> mixture_anchor_log(std::span<const double> logp_old,
                                       std::span<const double> logp_teacher, double alpha);
Tensor mixture_anchor(std::span<const double> logp_old, std::span<const double> logp_teacher,
                      double alpha);
// min(ratio*adv, clip(ratio, 1-eps_low, 1+eps_high)*adv), composed from the
// clip and relu primitives so clipped tokens get an exactly zero gradient.
Tensor clipped_surrogate(const Tensor& ratio, double advantage, double eps_low, double eps_high);
// k3: exp(d) - d - 1 with d = logp_ref - logp_cur (nonnegative); or the plain
// log-ratio logp_cur - logp_ref.
Tensor reference_kl(const Tensor& logp_cur, std::span<const double> logp_ref, KlEstimator estimator);
// Sampled reverse-KL integrand against the teacher, optionally clamped.
Tensor kdrl_kl(const Tensor& logp_cur, std::span<const double> logp_teacher,
               std::optional<double> clamp);

// Student probability at which the upper clip saturates:
// (1 + eps_high) * exp(alpha*logp_old + (1-alpha)*logp_teacher).
// Constant in the teacher at alpha = 1, strictly increasing in it below.
double clip_saturation_threshold(double logp_old, double logp_teacher, double alpha,
                                 double eps_high);

// --- batch loss ---------------------------------------------------------------

struct LossStats {
  std::size_t tokens = 0;
  double clip_fraction = 0.0;              // assembled ratio outside the clip band
  double mean_abs_teacher_logratio = 0.0;  // pre-clamp
};

struct LossResult {
  Tensor loss;  // negated objective, scalar
  LossStats stats;
};

// Objective: mean over groups of (1/G) sum_i (1/|y_i|) sum_t surrogate_t,
// minus beta * reference KL and (kdrl) kdrl_kl_weight * teacher KL, both
// aggregated with the same group/response/token weighting; returned negated.
// Terms are reduced in a fixed deterministic order.
LossResult assemble_loss(const RolloutBatch& batch, PolicyParams& student,
                         const ObjectiveConfig& cfg);

// --- per-token audit ----------------------------------------------------------

struct TokenAudit {
  std::size_t group = 0;
  std::size_t sample = 0;
  std::size_t position = 0;
  double advantage = 0.0;
  double logp_cur = 0.0;
  double log_ratio_grpo = 0.0;
  double log_ratio_teacher = 0.0;          // pre-clamp
  double log_ratio_teacher_clamped = 0.0;
  double log_anchor = 0.0;                 // frozen anchor the ratio is taken against
  double log_ratio = 0.0;                  // assembled method ratio
  double ratio = 0.0;
  bool clipped = false;
  double surrogate = 0.0;
};

// Plain-f64 replay of the loss assembly, one row per token; log-ratio fields
// reproduce the tensor path bit for bit.
std::vector<TokenAudit> audit_batch(const RolloutBatch& batch, PolicyParams& student,
                                    const ObjectiveConfig& cfg);
void write_audit_csv(std::ostream& os, std::span<const TokenAudit> rows);

}  // namespace rlad
