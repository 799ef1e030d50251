#include "asmf/bounds.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace asmf {
namespace {

long ceil_at_least_one(double rhs) {
  if (!(rhs > 0.0)) return 1;
  const double c = std::ceil(rhs);
  if (c >= 9.0e18) throw std::invalid_argument("sample-size bound overflows");
  return std::max(1L, static_cast<long>(c));
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void FidelityParams::validate() const {
  require(std::isfinite(beta) && beta > 0.0, "FidelityParams: beta must be positive");
  require(std::isfinite(theta) && theta >= 0.0, "FidelityParams: theta must be nonnegative");
  require(std::isfinite(delta_h) && delta_h >= 1.0, "FidelityParams: delta_h must be >= 1");
  require(dim >= 1, "FidelityParams: dim must be >= 1");
  if (grad_norm_sq_mean)
    require(std::isfinite(*grad_norm_sq_mean) && *grad_norm_sq_mean >= 0.0,
            "FidelityParams: grad_norm_sq_mean must be nonnegative");
}

double min_m2_ratio(double theta, double beta) {
  require(std::isfinite(beta) && beta > 0.0, "min_m2_ratio: beta must be positive");
  require(std::isfinite(theta) && theta >= 0.0, "min_m2_ratio: theta must be nonnegative");
  if (theta == 0.0)
    throw std::invalid_argument(
        "min_m2_ratio: theta = 0 (ratio diverges; an exact low-fidelity gradient "
        "needs no control-variate sampling rule)");
  const double t1 = (theta + beta) * (theta + beta) * (1.0 + theta) * (1.0 + theta) /
                    (theta * theta * (2.0 + theta) * (2.0 + theta));
  const double t2 = (theta + beta) * (theta + beta) / (theta * (2.0 * beta + theta));
  return std::max(t1, t2);
}

long mf_m1_expectation(double eps, const FidelityParams& p) {
  p.validate();
  require(std::isfinite(eps) && eps > 0.0, "mf_m1_expectation: eps must be positive");
  const double th = p.theta;
  const double inner = std::max(4.0 * p.delta_h * th * (2.0 + th) * (2.0 + th),
                                (2.0 / 3.0) * (2.0 * p.beta + th));
  const double rhs = (1.0 / (eps * eps)) * p.delta_h * th * std::log(2.0 * p.dim) * inner;
  return ceil_at_least_one(rhs);
}

long mf_m1_probability(double eps, double eta, const FidelityParams& p) {
  p.validate();
  require(std::isfinite(eps) && eps > 0.0 && eps <= 1.0,
          "mf_m1_probability: eps must lie in (0, 1]");
  require(std::isfinite(eta) && eta > 0.0 && eta < 1.0,
          "mf_m1_probability: eta must lie in (0, 1)");
  const double th = p.theta;
  const double inner = 4.0 * p.delta_h * th * (2.0 + th) * (2.0 + th) +
                       eps * (4.0 / 3.0) * (2.0 * p.beta + th);
  const double rhs =
      (1.0 / (eps * eps)) * p.delta_h * th * std::log(2.0 * p.dim / eta) * inner;
  return ceil_at_least_one(rhs);
}

long sf_m1_expectation(double eps, const FidelityParams& p, double c_abs) {
  p.validate();
  require(std::isfinite(eps) && eps > 0.0 && eps <= 1.0,
          "sf_m1_expectation: eps must lie in (0, 1]");
  require(std::isfinite(c_abs) && c_abs > 0.0, "sf_m1_expectation: C must be positive");
  const double rhs = c_abs * (1.0 / (eps * eps)) * p.delta_h *
                     std::log1p(2.0 * p.delta_h) * (1.0 + p.beta * p.beta);
  return ceil_at_least_one(rhs);
}

long sf_m1_probability(double eps, double eta, const FidelityParams& p) {
  p.validate();
  require(std::isfinite(eps) && eps > 0.0 && eps <= 1.0,
          "sf_m1_probability: eps must lie in (0, 1]");
  require(std::isfinite(eta) && eta > 0.0 && eta <= 1.0,
          "sf_m1_probability: eta must lie in (0, 1]");
  const double b2 = p.beta * p.beta;
  const double rhs = 2.0 * (1.0 / (eps * eps)) * p.delta_h *
                     std::log(8.0 * p.delta_h / eta) * (b2 + eps * (1.0 + b2) / 3.0);
  return ceil_at_least_one(rhs);
}

double bernstein_expectation(const BernsteinInputs& b) {
  require(b.v >= 0.0 && b.L >= 0.0, "bernstein_expectation: v, L must be nonnegative");
  require(b.dim >= 1, "bernstein_expectation: dim must be >= 1");
  const double logterm = std::log(2.0 * b.dim);
  return std::sqrt(2.0 * b.v * logterm) + b.L * logterm / 3.0;
}

double bernstein_tail(const BernsteinInputs& b, double t) {
  require(b.v >= 0.0 && b.L >= 0.0, "bernstein_tail: v, L must be nonnegative");
  require(b.dim >= 1, "bernstein_tail: dim must be >= 1");
  require(std::isfinite(t) && t >= 0.0, "bernstein_tail: t must be nonnegative");
  if (t == 0.0) return 2.0 * b.dim;
  const double denom = b.v + b.L * t / 3.0;
  if (denom == 0.0) return 0.0;
  return 2.0 * b.dim * std::exp(-0.5 * t * t / denom);
}

double intrinsic_bernstein_tail(const BernsteinInputs& b, double t) {
  require(b.v >= 0.0 && b.L >= 0.0, "intrinsic_bernstein_tail: v, L must be nonnegative");
  require(b.delta_v >= 1.0, "intrinsic_bernstein_tail: delta_v must be >= 1");
  const double threshold = std::sqrt(b.v) + b.L / 3.0;
  if (!(t >= threshold))
    throw std::invalid_argument("intrinsic_bernstein_tail: bound not valid for t = " +
                                std::to_string(t) + " < sqrt(v) + L/3 = " +
                                std::to_string(threshold));
  const double denom = b.v + b.L * t / 3.0;
  if (denom == 0.0) return 0.0;
  return 8.0 * b.delta_v * std::exp(-0.5 * t * t / denom);
}

double mf_variance_bound(double theta, double beta, long m1, long m2,
                         double grad_norm_sq_mean) {
  require(m1 >= 1 && m2 >= 1, "mf_variance_bound: m1, m2 must be >= 1");
  require(theta >= 0.0 && beta >= 0.0 && grad_norm_sq_mean >= 0.0,
          "mf_variance_bound: parameters must be nonnegative");
  const double e2 = grad_norm_sq_mean * grad_norm_sq_mean;
  return (theta * theta * (2.0 + theta) * (2.0 + theta) / static_cast<double>(m1) +
          (theta + beta) * (theta + beta) * (1.0 + theta) * (1.0 + theta) /
              static_cast<double>(m2)) *
         e2;
}

double mf_summand_bound(double theta, double beta, long m1, long m2,
                        double grad_norm_sq_mean) {
  require(m1 >= 1 && m2 >= 1, "mf_summand_bound: m1, m2 must be >= 1");
  require(theta >= 0.0 && beta >= 0.0 && grad_norm_sq_mean >= 0.0,
          "mf_summand_bound: parameters must be nonnegative");
  return std::max(2.0 * theta * (2.0 * beta + theta) / static_cast<double>(m1),
                  2.0 * (theta + beta) * (theta + beta) / static_cast<double>(m2)) *
         grad_norm_sq_mean;
}

double sf_variance_bound(double beta, long m1, double grad_norm_sq_mean, double h_norm) {
  require(m1 >= 1, "sf_variance_bound: m1 must be >= 1");
  require(beta >= 0.0 && grad_norm_sq_mean >= 0.0 && h_norm >= 0.0,
          "sf_variance_bound: parameters must be nonnegative");
  return beta * beta * grad_norm_sq_mean * h_norm / static_cast<double>(m1);
}

double sf_summand_bound(double beta, long m1, double grad_norm_sq_mean) {
  require(m1 >= 1, "sf_summand_bound: m1 must be >= 1");
  require(beta >= 0.0 && grad_norm_sq_mean >= 0.0,
          "sf_summand_bound: parameters must be nonnegative");
  return (1.0 + beta * beta) * grad_norm_sq_mean / static_cast<double>(m1);
}

SamplePlan plan_mf_expectation(double eps, const FidelityParams& p) {
  SamplePlan plan;
  plan.multifidelity = true;
  plan.mode = PlanMode::Expectation;
  plan.m1 = mf_m1_expectation(eps, p);
  plan.m2 = ceil_at_least_one(static_cast<double>(plan.m1) * min_m2_ratio(p.theta, p.beta));
  plan.eps = eps;
  plan.eta = 1.0;
  return plan;
}

SamplePlan plan_mf_probability(double eps, double eta, const FidelityParams& p) {
  SamplePlan plan;
  plan.multifidelity = true;
  plan.mode = PlanMode::Probability;
  plan.m1 = mf_m1_probability(eps, eta, p);
  plan.m2 = ceil_at_least_one(static_cast<double>(plan.m1) * min_m2_ratio(p.theta, p.beta));
  plan.eps = eps;
  plan.eta = eta;
  return plan;
}

SamplePlan plan_sf_expectation(double eps, const FidelityParams& p, double c_abs) {
  SamplePlan plan;
  plan.multifidelity = false;
  plan.mode = PlanMode::Expectation;
  plan.m1 = sf_m1_expectation(eps, p, c_abs);
  plan.m2 = 0;
  plan.eps = eps;
  plan.eta = 1.0;
  return plan;
}

SamplePlan plan_sf_probability(double eps, double eta, const FidelityParams& p) {
  SamplePlan plan;
  plan.multifidelity = false;
  plan.mode = PlanMode::Probability;
  plan.m1 = sf_m1_probability(eps, eta, p);
  plan.m2 = 0;
  plan.eps = eps;
  plan.eta = eta;
  return plan;
}

nlohmann::json plan_report(const SamplePlan& plan, const FidelityParams& p,
                           std::optional<double> c_abs) {
  const double e = p.grad_norm_sq_mean.value_or(1.0);
  const double h_norm = e / p.delta_h;  // trace(H) = E[||grad_f||^2]
  BernsteinInputs bi;
  bi.dim = p.dim;
  bi.delta_v = p.delta_h;
  if (plan.multifidelity) {
    bi.v = mf_variance_bound(p.theta, p.beta, plan.m1, plan.m2, e);
    bi.L = mf_summand_bound(p.theta, p.beta, plan.m1, plan.m2, e);
  } else {
    bi.v = sf_variance_bound(p.beta, plan.m1, e, h_norm);
    bi.L = sf_summand_bound(p.beta, plan.m1, e);
  }

  nlohmann::json j;
  j["inputs"] = {{"eps", plan.eps},
                 {"eta", plan.eta},
                 {"beta", p.beta},
                 {"theta", p.theta},
                 {"delta_h", p.delta_h},
                 {"dim", p.dim}};
  if (p.grad_norm_sq_mean)
    j["inputs"]["grad_norm_sq_mean"] = *p.grad_norm_sq_mean;
  else
    j["inputs"]["grad_norm_sq_mean_assumed"] = 1.0;
  if (c_abs) {
    j["inputs"]["c_abs"] = *c_abs;
    j["inputs"]["c_abs_heuristic"] = true;
  }
  j["estimator"] = plan.multifidelity ? "mf" : "sf";
  j["mode"] = plan.mode == PlanMode::Expectation ? "expectation" : "probability";
  j["m1"] = plan.m1;
  if (plan.multifidelity) {
    j["m2"] = plan.m2;
    j["min_m2_ratio"] = min_m2_ratio(p.theta, p.beta);
  }
  j["diagnostics"] = {{"variance_bound", bi.v},
                      {"summand_bound", bi.L},
                      {"expectation_bound", bernstein_expectation(bi)},
                      {"expectation_bound_relative", bernstein_expectation(bi) / h_norm},
                      {"tail_at_eps", bernstein_tail(bi, plan.eps * h_norm)}};
  return j;
}

}  // namespace asmf
