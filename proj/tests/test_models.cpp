#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "asmf/errors.hpp"
#include "asmf/models.hpp"
#include "asmf/sym_matrix.hpp"

using namespace asmf;

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

std::vector<double> grad_at(const GradientOracle& o, const std::vector<double>& x) {
  std::vector<double> g(o.dim);
  o.eval_grad(x, g);
  return g;
}

// Central finite differences of eval_f.
std::vector<double> fd_grad(const GradientOracle& o, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(o.dim);
  for (int i = 0; i < o.dim; ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = o.eval_f(x);
    x[i] = xi - h;
    const double fm = o.eval_f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

void check_fd_consistency(const GradientOracle& o, std::uint64_t seed, int n_points) {
  for (int p = 0; p < n_points; ++p) {
    std::vector<double> x(o.dim);
    // interior points: scale uniform draws away from the box boundary
    sample_input_into(InputDensity{DensityKind::UniformBox, o.dim}, seed, 9, p, x);
    for (double& v : x) v *= 0.9;
    const std::vector<double> g = grad_at(o, x);
    const std::vector<double> fd = fd_grad(o, x);
    double scale = 0.0;
    for (double v : g) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, 1e-9);
    for (int i = 0; i < o.dim; ++i)
      CHECK(std::abs(g[i] - fd[i]) <= 1e-6 * std::max(1.0, scale));
  }
}

}  // namespace

TEST_CASE("quad_hi_oracle closed forms") {
  const InputDensity uni2{DensityKind::UniformBox, 2};
  const GradientOracle o = quad_hi_oracle(QuadraticModelSpec{{1.0, 0.0}, 0.0, 1.0}, uni2);
  const std::vector<double> x = {1.0, 1.0};
  CHECK(o.eval_f(x) == doctest::Approx(kSqrt3 / 2.0).epsilon(1e-15));
  const std::vector<double> g = grad_at(o, x);
  CHECK(g[0] == doctest::Approx(kSqrt3).epsilon(1e-15));
  CHECK(g[1] == 0.0);

  const int d = 7;
  const GradientOracle ones =
      quad_hi_oracle(QuadraticModelSpec{std::vector<double>(d, 1.0), 0.0, 1.0},
                     InputDensity{DensityKind::UniformBox, d});
  for (double v : grad_at(ones, std::vector<double>(d, 0.0))) CHECK(v == 0.0);

  const GradientOracle o21 = quad_hi_oracle(QuadraticModelSpec{{2.0, 1.0}, 0.0, 1.0}, uni2);
  const std::vector<double> g21 = grad_at(o21, {0.5, -1.0});
  CHECK(g21[0] == doctest::Approx(kSqrt3).epsilon(1e-15));
  CHECK(g21[1] == doctest::Approx(-kSqrt3).epsilon(1e-15));
}

TEST_CASE("quad_lo_oracle perturbation lives on the last coordinate") {
  const InputDensity uni3{DensityKind::UniformBox, 3};
  const QuadraticModelSpec spec{{1.0, 0.5, 0.25}, 0.3, 0.4};
  const GradientOracle hi = quad_hi_oracle(spec, uni3);
  const GradientOracle lo = quad_lo_oracle(spec, uni3);

  const std::vector<double> x = {0.2, -0.7, 0.5};
  const std::vector<double> gh = grad_at(hi, x), gl = grad_at(lo, x);
  CHECK(gl[0] == gh[0]);
  CHECK(gl[1] == gh[1]);
  CHECK(gl[2] != gh[2]);

  // b = 0: identical gradients.
  const GradientOracle lo0 = quad_lo_oracle(QuadraticModelSpec{{1.0, 0.5, 0.25}, 0.0, 0.4}, uni3);
  CHECK(grad_at(lo0, x) == grad_at(hi, x));

  // x_d = 0: sin(0) kills the perturbation.
  const std::vector<double> x0 = {0.2, -0.7, 0.0};
  CHECK(grad_at(lo, x0)[2] == grad_at(hi, x0)[2]);

  // ||a|| = 1, x_d/T = pi/2: perturbation equals b.
  const QuadraticModelSpec unit{{1.0, 0.0, 0.0}, std::sqrt(0.05), 0.1};
  const GradientOracle lou = quad_lo_oracle(unit, uni3);
  const GradientOracle hiu = quad_hi_oracle(unit, uni3);
  const std::vector<double> xp = {0.3, 0.1, 0.1 * std::numbers::pi / 2.0};
  const double perturb = grad_at(lou, xp)[2] - grad_at(hiu, xp)[2];
  CHECK(perturb == doctest::Approx(0.22360679774997896).epsilon(1e-12));
}

TEST_CASE("exact_H under both densities") {
  const QuadraticModelSpec s110{{1.0, 1.0, 0.0}, 0.0, 1.0};
  const SymMatrix h_uni = exact_H(s110, InputDensity{DensityKind::UniformBox, 3});
  CHECK(h_uni(0, 0) == 1.0);
  CHECK(h_uni(1, 1) == 1.0);
  CHECK(h_uni(2, 2) == 0.0);
  CHECK(h_uni(0, 1) == 0.0);

  const QuadraticModelSpec s11{{1.0, 1.0}, 0.0, 1.0};
  const SymMatrix h_gau = exact_H(s11, InputDensity{DensityKind::StandardGaussian, 2});
  CHECK(h_gau(0, 0) == 3.0);
  CHECK(h_gau(1, 1) == 3.0);

  const QuadraticModelSpec zero{{0.0, 0.0}, 0.0, 1.0};
  CHECK(exact_H(zero, InputDensity{DensityKind::UniformBox, 2}).max_abs() == 0.0);
}

TEST_CASE("exact_H agrees with Monte Carlo") {
  for (DensityKind kind : {DensityKind::UniformBox, DensityKind::StandardGaussian}) {
    const int d = 3;
    const InputDensity density{kind, d};
    const QuadraticModelSpec spec{{1.0, 0.8, 0.0}, 0.0, 1.0};
    const GradientOracle o = quad_hi_oracle(spec, density);
    const SymMatrix h = exact_H(spec, density);

    const long n = 1000000;
    std::vector<double> x(d), g(d);
    std::vector<double> sum(SymMatrix::packed_size(d), 0.0),
        sum_sq(SymMatrix::packed_size(d), 0.0);
    for (long i = 0; i < n; ++i) {
      sample_input_into(density, 77, 0, i, x);
      o.eval_grad(x, g);
      std::size_t p = 0;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
          const double v = g[a] * g[b];
          sum[p] += v;
          sum_sq[p] += v * v;
          ++p;
        }
    }
    std::size_t p = 0;
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) {
        const double mean = sum[p] / n;
        const double var = (sum_sq[p] / n - mean * mean) / n;
        const double se = std::sqrt(std::max(var, 0.0));
        CHECK(std::abs(mean - h(a, b)) <= 4.0 * se + 1e-12);
        ++p;
      }
  }
}

TEST_CASE("exact_fidelity_params") {
  const InputDensity uni{DensityKind::UniformBox, 3};
  {
    const FidelityParams p =
        exact_fidelity_params(QuadraticModelSpec{{1.0, 0.0, 0.0}, std::sqrt(0.05), 0.1}, uni);
    CHECK(p.beta * p.beta == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(p.theta * p.theta == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(p.delta_h == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*p.grad_norm_sq_mean == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    // T above 2/pi: the sup is attained inside the box.
    const FidelityParams p =
        exact_fidelity_params(QuadraticModelSpec{{1.0, 1.0, 0.0}, 0.1, 2.0}, uni);
    CHECK(p.theta * p.theta == doctest::Approx(0.0022984884706593015).epsilon(1e-12));
    CHECK(p.delta_h == doctest::Approx(2.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(exact_fidelity_params(QuadraticModelSpec{{1.0}, 0.1, 0.5},
                                        InputDensity{DensityKind::StandardGaussian, 1}),
                  std::invalid_argument);
}

TEST_CASE("empirical gradient bounds hold for the uniform quadratic family") {
  const int d = 8;
  const InputDensity uni{DensityKind::UniformBox, d};
  QuadraticModelSpec spec;
  spec.a = {1.0, 0.9, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0};
  spec.b = std::sqrt(0.05);
  spec.T = 0.1;
  const GradientOracle hi = quad_hi_oracle(spec, uni);
  const GradientOracle lo = quad_lo_oracle(spec, uni);
  const FidelityParams p = exact_fidelity_params(spec, uni);
  const double norm_sq = *p.grad_norm_sq_mean;

  std::vector<double> x(d), gh(d), gl(d);
  double max_beta = 0.0, max_theta = 0.0;
  for (long i = 0; i < 10000; ++i) {
    sample_input_into(uni, 123, 0, i, x);
    hi.eval_grad(x, gh);
    lo.eval_grad(x, gl);
    double nh = 0.0, nd = 0.0;
    for (int k = 0; k < d; ++k) {
      nh += gh[k] * gh[k];
      const double diff = gh[k] - gl[k];
      nd += diff * diff;
    }
    max_beta = std::max(max_beta, nh / norm_sq);
    max_theta = std::max(max_theta, nd / norm_sq);
  }
  CHECK(max_beta <= p.beta * p.beta + 1e-12);
  CHECK(max_theta <= p.theta * p.theta + 1e-12);
}

TEST_CASE("rank_deficient_a") {
  CHECK(rank_deficient_a(5, 2) == std::vector<double>{1, 1, 0, 0, 0});
  CHECK(rank_deficient_a(100, 100) == std::vector<double>(100, 1.0));
  const std::vector<double> e1 = rank_deficient_a(100, 1);
  const SymMatrix h = exact_H(QuadraticModelSpec{e1, 0.0, 1.0},
                              InputDensity{DensityKind::UniformBox, 100});
  CHECK(intrinsic_dimension(h) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(rank_deficient_a(5, 0), std::invalid_argument);
  CHECK_THROWS_AS(rank_deficient_a(5, 6), std::invalid_argument);
}

TEST_CASE("full_rank_a hits the requested intrinsic dimension") {
  auto delta_of = [](const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s / (a[0] * a[0]);
  };

  const std::vector<double> a2 = full_rank_a(100, 2.0);
  CHECK(std::abs(delta_of(a2) - 2.0) <= 1e-8);
  // decay rate from the leading coefficient: a_1 = exp(-C)
  CHECK(-std::log(a2[0]) == doctest::Approx(0.34657359027997264).epsilon(1e-6));

  for (double target : {1.0, 1.5, 3.0, 10.0, 99.5}) {
    const std::vector<double> a = full_rank_a(100, target);
    CHECK(std::abs(delta_of(a) - target) <= 1e-8);
    for (std::size_t i = 0; i + 1 < a.size(); ++i) CHECK(a[i] >= a[i + 1]);
  }

  CHECK(full_rank_a(100, 100.0) == std::vector<double>(100, 1.0));
  CHECK_THROWS_AS(full_rank_a(100, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(full_rank_a(100, 101.0), std::invalid_argument);
}

TEST_CASE("whiten") {
  const InputDensity gau2{DensityKind::StandardGaussian, 2};
  const QuadraticModelSpec s11{{1.0, 1.0}, 0.0, 1.0};
  const GradientOracle base = quad_hi_oracle(s11, gau2);

  SUBCASE("identity leaves the oracle unchanged") {
    const GradientOracle w = whiten(base, SymMatrix::identity(2));
    const std::vector<double> x = {0.3, -1.2};
    CHECK(grad_at(w, x) == grad_at(base, x));
    CHECK(w.eval_f(x) == base.eval_f(x));
  }

  SUBCASE("scalar scaling doubles a constant gradient") {
    GradientOracle c;
    c.dim = 2;
    c.density = gau2;
    c.eval_f = [](std::span<const double> x) { return 3.0 * x[0] + 4.0 * x[1]; };
    c.eval_grad = [](std::span<const double>, std::span<double> g) {
      g[0] = 3.0;
      g[1] = 4.0;
    };
    const GradientOracle w = whiten(c, SymMatrix::identity(2).scaled(2.0));
    const std::vector<double> g = grad_at(w, {0.1, 0.2});
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(8.0).epsilon(1e-15));
  }

  SUBCASE("second moment transforms as the congruence product") {
    // sigma_sqrt = diag(2,1): the wrapped gradient is sqrt(3)(4x1, x2), so
    // the whitened second moment is diag(48, 3); checked by Monte Carlo.
    const std::vector<double> s_diag = {2.0, 1.0};
    const GradientOracle w = whiten(base, SymMatrix::diagonal(s_diag));
    CHECK(w.density.kind == DensityKind::StandardGaussian);

    const long n = 200000;
    std::vector<double> x(2), g(2);
    double s00 = 0, s01 = 0, s11s = 0, q00 = 0, q11 = 0;
    for (long i = 0; i < n; ++i) {
      sample_input_into(w.density, 31, 0, i, x);
      w.eval_grad(x, g);
      s00 += g[0] * g[0];
      s01 += g[0] * g[1];
      s11s += g[1] * g[1];
      q00 += g[0] * g[0] * g[0] * g[0];
      q11 += g[1] * g[1] * g[1] * g[1];
    }
    const double m00 = s00 / n, m11 = s11s / n, m01 = s01 / n;
    const double se00 = std::sqrt((q00 / n - m00 * m00) / n);
    const double se11 = std::sqrt((q11 / n - m11 * m11) / n);
    CHECK(std::abs(m00 - 48.0) <= 4.0 * se00);
    CHECK(std::abs(m11 - 3.0) <= 4.0 * se11);
    CHECK(std::abs(m01) <= 0.2);

    check_fd_consistency(w, 8, 5);
  }

  SUBCASE("dimension mismatch rejected") {
    CHECK_THROWS_AS(whiten(base, SymMatrix::identity(3)), std::invalid_argument);
  }
}

TEST_CASE("finite differences match oracle gradients") {
  const InputDensity uni4{DensityKind::UniformBox, 4};
  const QuadraticModelSpec spec{{1.0, 0.7, 0.3, 0.1}, std::sqrt(0.05), 0.1};
  check_fd_consistency(quad_hi_oracle(spec, uni4), 1, 8);
  check_fd_consistency(quad_lo_oracle(spec, uni4), 2, 8);
}

TEST_CASE("sample_inputs determinism and distribution") {
  const InputDensity uni{DensityKind::UniformBox, 5};
  CHECK(sample_inputs(uni, 0, 1, 0).empty());

  const auto s1 = sample_inputs(uni, 50, 42, 3);
  const auto s2 = sample_inputs(uni, 50, 42, 3);
  CHECK(s1 == s2);

  // i-th draw never depends on n.
  const auto s3 = sample_inputs(uni, 10, 42, 3);
  for (int i = 0; i < 10; ++i) CHECK(s1[i] == s3[i]);

  CHECK(sample_inputs(uni, 5, 42, 4) != s3);
  CHECK(sample_inputs(uni, 5, 43, 3) != s3);

  // Support and first moment.
  const long n = 100000;
  std::vector<double> mean(5, 0.0);
  for (const auto& row : sample_inputs(uni, n, 7, 0)) {
    for (int k = 0; k < 5; ++k) {
      CHECK(row[k] >= -1.0);
      CHECK(row[k] <= 1.0);
      mean[k] += row[k];
    }
  }
  const double band = 3.0 * std::sqrt(1.0 / 3.0) / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < 5; ++k) CHECK(std::abs(mean[k] / n) <= band);

  // Gaussian moments.
  const InputDensity gau{DensityKind::StandardGaussian, 2};
  double m1 = 0.0, m2 = 0.0;
  for (const auto& row : sample_inputs(gau, n, 7, 0)) {
    m1 += row[0];
    m2 += row[0] * row[0];
  }
  CHECK(std::abs(m1 / n) <= 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(m2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("model spec JSON round-trip and validation") {
  ModelSpecFile m;
  m.spec.a = {1.0, 0.5, 0.25};
  m.spec.b = 0.1;
  m.spec.T = 0.4;
  m.density = DensityKind::StandardGaussian;
  m.cost_ratio = 7.0;
  const ModelSpecFile back = model_spec_from_json(model_spec_to_json(m));
  CHECK(back.spec.a == m.spec.a);
  CHECK(back.spec.b == m.spec.b);
  CHECK(back.spec.T == m.spec.T);
  CHECK(back.density == m.density);
  CHECK(back.cost_ratio == m.cost_ratio);

  nlohmann::json bad = model_spec_to_json(m);
  bad["a"] = std::vector<double>{0.1, 1.0};  // not ordered by magnitude
  CHECK_THROWS_AS(model_spec_from_json(bad), DataFormatError);
  bad = model_spec_to_json(m);
  bad["density"] = "cauchy";
  CHECK_THROWS_AS(model_spec_from_json(bad), DataFormatError);
}
