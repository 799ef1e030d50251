#pragma once

#include <cstdint>
#include <optional>

#include "json.hpp"

namespace asmf {

// Constants of the almost-sure gradient bounds
//   ||grad_f(X)||^2        <= beta^2  E[||grad_f||^2]
//   ||grad_f - grad_g||^2  <= theta^2 E[||grad_f||^2]
// together with the intrinsic dimension of the target matrix. These feed
// every sample-size rule and diagnostic bound below.
struct FidelityParams {
  double beta = 0.0;
  double theta = 0.0;
  double delta_h = 1.0;
  int dim = 0;
  // E[||grad_f||^2]; only needed for absolute-scale diagnostics.
  std::optional<double> grad_norm_sq_mean;

  void validate() const;
};

// Inputs to the matrix Bernstein bounds: v bounds the variance proxy
// ||E[(sum S_i)^2]||, L the almost-sure summand norm, delta_v the intrinsic
// dimension of the variance-bound matrix (intrinsic variant only).
struct BernsteinInputs {
  double v = 0.0;
  double L = 0.0;
  int dim = 0;
  double delta_v = 1.0;
};

// Smallest admissible m2/m1 for the two-term control-variate estimator:
//   max{ (theta+beta)^2 (1+theta)^2 / (theta^2 (2+theta)^2) ,
//        (theta+beta)^2 / (theta (2 beta+theta)) }.
// theta = 0 is rejected: the ratio diverges, and a perfect low-fidelity
// model has no sampling rule to satisfy.
double min_m2_ratio(double theta, double beta);

// Paired-sample count guaranteeing E||H - Hhat_MF|| <= (eps + eps^2) ||H||
// (assuming m2 satisfies min_m2_ratio):
//   m1 >= eps^-2 delta theta log(2d) max{4 delta theta (2+theta)^2 ; (2/3)(2 beta+theta)}.
// Returns ceil of the right-hand side, floored at 1.
long mf_m1_expectation(double eps, const FidelityParams& p);

// Paired-sample count guaranteeing P{||H - Hhat_MF|| <= eps ||H||} >= 1-eta:
//   m1 >= eps^-2 delta theta log(2d/eta) (4 delta theta (2+theta)^2 + eps (4/3)(2 beta+theta)).
long mf_m1_probability(double eps, double eta, const FidelityParams& p);

// Single-fidelity expectation rule m1 >= C eps^-2 delta log(1+2 delta)(1+beta^2).
// The absolute constant is not quantified by the theory, so the caller must
// supply it; treat results as heuristic.
long sf_m1_expectation(double eps, const FidelityParams& p, double c_abs);

// Single-fidelity tail rule, fully explicit:
//   m1 >= 2 eps^-2 delta log(8 delta/eta) (beta^2 + eps (1+beta^2)/3).
long sf_m1_probability(double eps, double eta, const FidelityParams& p);

// E||S_1+...+S_m|| <= sqrt(2 v log(2d)) + (1/3) L log(2d).
double bernstein_expectation(const BernsteinInputs& b);

// P{||S_1+...+S_m|| >= t} <= 2d exp(-t^2/2 / (v + L t/3)). May exceed 1;
// callers clamp for display. Returns 0 when the denominator vanishes with
// t > 0 (the limit), and 2d at t = 0.
double bernstein_tail(const BernsteinInputs& b, double t);

// Intrinsic-dimension variant, valid only for t >= sqrt(v) + L/3:
//   P{||S_1+...+S_m|| >= t} <= 8 delta_v exp(-t^2/2 / (v + L t/3)).
// Throws std::invalid_argument below the validity threshold.
double intrinsic_bernstein_tail(const BernsteinInputs& b, double t);

// Variance and summand bounds for the two-term estimator difference:
//   v <= (theta^2 (2+theta)^2 / m1 + (theta+beta)^2 (1+theta)^2 / m2) E^2
//   L <= max{ 2 theta (2 beta+theta) / m1 ; 2 (theta+beta)^2 / m2 } E
// with E = E[||grad_f||^2]. These feed bernstein_expectation/tail to produce
// the diagnostic overlays of the parametric studies.
double mf_variance_bound(double theta, double beta, long m1, long m2, double grad_norm_sq_mean);
double mf_summand_bound(double theta, double beta, long m1, long m2, double grad_norm_sq_mean);

// Single-fidelity analogues: v <= beta^2 E ||H|| / m1, L <= (1+beta^2) E / m1.
double sf_variance_bound(double beta, long m1, double grad_norm_sq_mean, double h_norm);
double sf_summand_bound(double beta, long m1, double grad_norm_sq_mean);

enum class PlanMode { Expectation, Probability };

struct SamplePlan {
  bool multifidelity = true;
  PlanMode mode = PlanMode::Probability;
  long m1 = 1;
  long m2 = 0;  // 0 for single-fidelity plans
  double eps = 0.0;
  double eta = 1.0;  // 1 for expectation-mode plans
};

SamplePlan plan_mf_expectation(double eps, const FidelityParams& p);
SamplePlan plan_mf_probability(double eps, double eta, const FidelityParams& p);
SamplePlan plan_sf_expectation(double eps, const FidelityParams& p, double c_abs);
SamplePlan plan_sf_probability(double eps, double eta, const FidelityParams& p);

// Plan report: inputs, chosen sample counts, and the implied (v, L,
// expectation bound, tail) diagnostics. Diagnostics are absolute when
// grad_norm_sq_mean is known, otherwise normalized to E[||grad_f||^2] = 1.
nlohmann::json plan_report(const SamplePlan& plan, const FidelityParams& p,
                           std::optional<double> c_abs);

}  // namespace asmf
