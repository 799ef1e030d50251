#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "asmf/bounds.hpp"
#include "asmf/sym_matrix.hpp"

namespace asmf {

enum class DensityKind { UniformBox, StandardGaussian };

// Reference input density: the uniform distribution on [-1,1]^d or the
// standard normal on R^d. A closed enumeration so the closed-form results
// for the analytic family stay valid.
struct InputDensity {
  DensityKind kind = DensityKind::UniformBox;
  int dim = 0;
};

// Evaluable model exposing f and its gradient, with a reference input
// density and a relative evaluation cost used for budget accounting.
// Oracles are pure and callable concurrently.
struct GradientOracle {
  int dim = 0;
  InputDensity density;
  double cost_weight = 1.0;
  std::function<double(std::span<const double>)> eval_f;
  std::function<void(std::span<const double>, std::span<double>)> eval_grad;
};

// High/low fidelity pair over a common density; cost_ratio = hi cost / lo cost.
struct ModelPair {
  GradientOracle hi;
  GradientOracle lo;
  double cost_ratio = 1.0;
};

// Parameters of the analytic quadratic family:
//   f(x) = (sqrt(3)/2) sum_i a_i x_i^2
//   g(x) = f(x) - b T ||a|| cos(x_d / T)
// with |a_1| >= |a_2| >= ... >= 0, b >= 0, T > 0.
struct QuadraticModelSpec {
  std::vector<double> a;
  double b = 0.0;
  double T = 1.0;

  void validate() const;
  double a_norm() const;  // ||a||
};

GradientOracle quad_hi_oracle(const QuadraticModelSpec& spec, const InputDensity& density);
GradientOracle quad_lo_oracle(const QuadraticModelSpec& spec, const InputDensity& density);
ModelPair quad_model_pair(const QuadraticModelSpec& spec, const InputDensity& density,
                          double cost_ratio = 1.0);

// Exact gradient second-moment matrix of the quadratic family:
// diag(c a_i^2) with c = 3 E[x^2] under the density (c = 1 uniform box,
// c = 3 standard Gaussian).
SymMatrix exact_H(const QuadraticModelSpec& spec, const InputDensity& density);

// Closed-form fidelity constants of the quadratic family under the uniform
// box density: beta^2 = 3; theta^2 = b^2 sin(1/T)^2 when T >= 2/pi, else
// b^2; delta_h = ||a||^2 / a_1^2. The Gaussian case has no finite beta and
// is rejected.
FidelityParams exact_fidelity_params(const QuadraticModelSpec& spec,
                                     const InputDensity& density);

// a = (1,...,1,0,...,0) with k ones: intrinsic dimension exactly k.
std::vector<double> rank_deficient_a(int d, int k);

// a_i = exp(-C i) with C chosen by bisection so the intrinsic dimension
// sum_i exp(-2Ci)/exp(-2C) matches delta_target to 1e-8.
std::vector<double> full_rank_a(int d, double delta_target);

// Change of variables x -> sigma_sqrt * x: the returned oracle evaluates
// f(sigma_sqrt x) with gradient sigma_sqrt' grad_f(sigma_sqrt x) and carries
// the standard Gaussian reference density. Acts as preconditioning of the
// second-moment matrix.
GradientOracle whiten(const GradientOracle& oracle, const SymMatrix& sigma_sqrt);

// n draws from the density. Draw i depends only on (seed, stream, i), so
// results are independent of n and of any parallel evaluation order.
std::vector<std::vector<double>> sample_inputs(const InputDensity& density, long n,
                                               std::uint64_t seed, std::uint64_t stream);

// Fill one indexed draw (the primitive behind sample_inputs).
void sample_input_into(const InputDensity& density, std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index, std::span<double> out);

// JSON model-spec file:
//   {"kind":"quadratic","a":[...],"b":...,"T":...,"density":"uniform"|"gaussian",
//    "cost_ratio": ...}
struct ModelSpecFile {
  QuadraticModelSpec spec;
  DensityKind density = DensityKind::UniformBox;
  double cost_ratio = 1.0;
};

ModelSpecFile model_spec_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpecFile& m);
ModelSpecFile read_model_spec(const std::filesystem::path& path);

}  // namespace asmf
