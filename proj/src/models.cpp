#include "asmf/models.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "asmf/errors.hpp"
#include "asmf/rng.hpp"

namespace asmf {
namespace {

constexpr double kSqrt3 = 1.7320508075688772;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void QuadraticModelSpec::validate() const {
  require(!a.empty(), "QuadraticModelSpec: a must be non-empty");
  for (std::size_t i = 0; i + 1 < a.size(); ++i)
    require(std::abs(a[i]) >= std::abs(a[i + 1]),
            "QuadraticModelSpec: |a_i| must be non-increasing");
  for (double v : a) require(std::isfinite(v), "QuadraticModelSpec: a must be finite");
  require(std::isfinite(b) && b >= 0.0, "QuadraticModelSpec: b must be nonnegative");
  require(std::isfinite(T) && T > 0.0, "QuadraticModelSpec: T must be positive");
}

double QuadraticModelSpec::a_norm() const {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

GradientOracle quad_hi_oracle(const QuadraticModelSpec& spec, const InputDensity& density) {
  spec.validate();
  require(density.dim == static_cast<int>(spec.a.size()),
          "quad_hi_oracle: density dimension must match a");
  auto a = std::make_shared<const std::vector<double>>(spec.a);
  GradientOracle o;
  o.dim = density.dim;
  o.density = density;
  o.cost_weight = 1.0;
  o.eval_f = [a](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) s += (*a)[i] * x[i] * x[i];
    return 0.5 * kSqrt3 * s;
  };
  o.eval_grad = [a](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < a->size(); ++i) g[i] = kSqrt3 * (*a)[i] * x[i];
  };
  return o;
}

GradientOracle quad_lo_oracle(const QuadraticModelSpec& spec, const InputDensity& density) {
  spec.validate();
  require(density.dim == static_cast<int>(spec.a.size()),
          "quad_lo_oracle: density dimension must match a");
  auto a = std::make_shared<const std::vector<double>>(spec.a);
  const double b = spec.b, T = spec.T, norm_a = spec.a_norm();
  const std::size_t last = spec.a.size() - 1;
  GradientOracle o;
  o.dim = density.dim;
  o.density = density;
  o.cost_weight = 1.0;
  o.eval_f = [a, b, T, norm_a, last](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) s += (*a)[i] * x[i] * x[i];
    return 0.5 * kSqrt3 * s - b * T * norm_a * std::cos(x[last] / T);
  };
  o.eval_grad = [a, b, T, norm_a, last](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < a->size(); ++i) g[i] = kSqrt3 * (*a)[i] * x[i];
    g[last] += b * norm_a * std::sin(x[last] / T);
  };
  return o;
}

ModelPair quad_model_pair(const QuadraticModelSpec& spec, const InputDensity& density,
                          double cost_ratio) {
  require(std::isfinite(cost_ratio) && cost_ratio > 0.0,
          "quad_model_pair: cost_ratio must be positive");
  ModelPair pair;
  pair.hi = quad_hi_oracle(spec, density);
  pair.lo = quad_lo_oracle(spec, density);
  pair.hi.cost_weight = cost_ratio;
  pair.lo.cost_weight = 1.0;
  pair.cost_ratio = cost_ratio;
  return pair;
}

SymMatrix exact_H(const QuadraticModelSpec& spec, const InputDensity& density) {
  spec.validate();
  require(density.dim == static_cast<int>(spec.a.size()),
          "exact_H: density dimension must match a");
  // E[grad grad'] = diag(3 a_i^2 E[x^2]) under either density.
  const double c = density.kind == DensityKind::UniformBox ? 1.0 : 3.0;
  std::vector<double> diag(spec.a.size());
  for (std::size_t i = 0; i < spec.a.size(); ++i) diag[i] = c * spec.a[i] * spec.a[i];
  return SymMatrix::diagonal(diag);
}

FidelityParams exact_fidelity_params(const QuadraticModelSpec& spec,
                                     const InputDensity& density) {
  spec.validate();
  if (density.kind != DensityKind::UniformBox)
    throw std::invalid_argument(
        "exact_fidelity_params: closed forms hold for the uniform box density only "
        "(no finite beta exists under the Gaussian)");
  require(spec.a[0] != 0.0, "exact_fidelity_params: a_1 must be nonzero");
  const double norm_sq = spec.a_norm() * spec.a_norm();
  double theta_sq;
  if (spec.b == 0.0)
    theta_sq = 0.0;
  else if (spec.T >= 2.0 / std::numbers::pi)
    theta_sq = spec.b * spec.b * std::sin(1.0 / spec.T) * std::sin(1.0 / spec.T);
  else
    theta_sq = spec.b * spec.b;
  FidelityParams p;
  p.beta = kSqrt3;
  p.theta = std::sqrt(theta_sq);
  p.delta_h = norm_sq / (spec.a[0] * spec.a[0]);
  p.dim = static_cast<int>(spec.a.size());
  p.grad_norm_sq_mean = norm_sq;  // E[||grad f||^2] = trace(H) = ||a||^2
  return p;
}

std::vector<double> rank_deficient_a(int d, int k) {
  require(d >= 1, "rank_deficient_a: d must be >= 1");
  if (k < 1 || k > d)
    throw std::invalid_argument("rank_deficient_a: k must lie in [1, d]");
  std::vector<double> a(d, 0.0);
  for (int i = 0; i < k; ++i) a[i] = 1.0;
  return a;
}

std::vector<double> full_rank_a(int d, double delta_target) {
  require(d >= 1, "full_rank_a: d must be >= 1");
  if (!(delta_target >= 1.0 && delta_target <= static_cast<double>(d)))
    throw std::invalid_argument("full_rank_a: delta_target must lie in [1, d]");

  // delta(C) = sum_{i=1..d} exp(-2Ci) / exp(-2C) = expm1(-2Cd)/expm1(-2C),
  // strictly decreasing from d (C=0) towards 1.
  auto delta_of = [d](double c) {
    if (c == 0.0) return static_cast<double>(d);
    return std::expm1(-2.0 * c * d) / std::expm1(-2.0 * c);
  };

  double c = 0.0;
  if (delta_target < static_cast<double>(d)) {
    double lo = 0.0, hi = 50.0;
    while (hi - lo > 1e-12) {
      const double mid = 0.5 * (lo + hi);
      if (delta_of(mid) > delta_target)
        lo = mid;
      else
        hi = mid;
    }
    c = 0.5 * (lo + hi);
  }
  std::vector<double> a(d);
  for (int i = 0; i < d; ++i) a[i] = std::exp(-c * (i + 1));
  return a;
}

GradientOracle whiten(const GradientOracle& oracle, const SymMatrix& sigma_sqrt) {
  if (sigma_sqrt.dim() != oracle.dim)
    throw std::invalid_argument("whiten: sigma_sqrt dimension mismatch");
  {
    const std::vector<double> ev = sym_eigenvalues(sigma_sqrt);
    const double norm = std::max(std::abs(ev.front()), std::abs(ev.back()));
    if (ev.back() < -1e-10 * norm)
      throw std::invalid_argument("whiten: sigma_sqrt must be positive semi-definite");
  }
  auto s = std::make_shared<const SymMatrix>(sigma_sqrt);
  auto base_f = oracle.eval_f;
  auto base_grad = oracle.eval_grad;
  const int d = oracle.dim;

  GradientOracle out;
  out.dim = d;
  out.density = InputDensity{DensityKind::StandardGaussian, d};
  out.cost_weight = oracle.cost_weight;
  out.eval_f = [s, base_f, d](std::span<const double> x) {
    std::vector<double> y(d);
    s->apply(x, y);
    return base_f(y);
  };
  out.eval_grad = [s, base_grad, d](std::span<const double> x, std::span<double> g) {
    std::vector<double> y(d), gy(d);
    s->apply(x, y);
    base_grad(y, gy);
    s->apply(gy, g);  // sigma_sqrt is symmetric, so transpose = itself
  };
  return out;
}

void sample_input_into(const InputDensity& density, std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index, std::span<double> out) {
  rng::SampleStream s(seed, stream, index);
  if (density.kind == DensityKind::UniformBox)
    s.fill_uniform_box(out);
  else
    s.fill_gaussian(out);
}

std::vector<std::vector<double>> sample_inputs(const InputDensity& density, long n,
                                               std::uint64_t seed, std::uint64_t stream) {
  require(n >= 0, "sample_inputs: n must be nonnegative");
  require(density.dim >= 1, "sample_inputs: density dimension must be >= 1");
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    out[i].resize(density.dim);
    sample_input_into(density, seed, stream, static_cast<std::uint64_t>(i), out[i]);
  }
  return out;
}

ModelSpecFile model_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataFormatError("model spec: expected a JSON object");
  if (j.value("kind", "") != std::string("quadratic"))
    throw DataFormatError("model spec: unsupported kind '" + j.value("kind", "") + "'");
  ModelSpecFile m;
  try {
    m.spec.a = j.at("a").get<std::vector<double>>();
    m.spec.b = j.value("b", 0.0);
    m.spec.T = j.value("T", 1.0);
    const std::string density = j.at("density").get<std::string>();
    if (density == "uniform")
      m.density = DensityKind::UniformBox;
    else if (density == "gaussian")
      m.density = DensityKind::StandardGaussian;
    else
      throw DataFormatError("model spec: unknown density '" + density + "'");
    m.cost_ratio = j.value("cost_ratio", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("model spec: ") + e.what());
  }
  try {
    m.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(std::string("model spec: ") + e.what());
  }
  if (!(m.cost_ratio > 0.0)) throw DataFormatError("model spec: cost_ratio must be positive");
  return m;
}

nlohmann::json model_spec_to_json(const ModelSpecFile& m) {
  nlohmann::json j;
  j["kind"] = "quadratic";
  j["a"] = m.spec.a;
  j["b"] = m.spec.b;
  j["T"] = m.spec.T;
  j["density"] = m.density == DensityKind::UniformBox ? "uniform" : "gaussian";
  j["cost_ratio"] = m.cost_ratio;
  return j;
}

ModelSpecFile read_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(path.string() + ": " + e.what());
  }
  return model_spec_from_json(j);
}

}  // namespace asmf
