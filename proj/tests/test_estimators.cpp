#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <vector>

#include "asmf/errors.hpp"
#include "asmf/estimators.hpp"
#include "asmf/models.hpp"
#include "asmf/rng.hpp"
#include "asmf/sym_matrix.hpp"

using namespace asmf;

namespace {

GradientOracle constant_gradient_oracle(std::vector<double> c, DensityKind kind) {
  GradientOracle o;
  o.dim = static_cast<int>(c.size());
  o.density = InputDensity{kind, o.dim};
  o.eval_f = [c](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * x[i];
    return s;
  };
  o.eval_grad = [c](std::span<const double>, std::span<double> g) {
    std::copy(c.begin(), c.end(), g.begin());
  };
  return o;
}

bool bitwise_equal(const SymMatrix& a, const SymMatrix& b) {
  return a.dim() == b.dim() &&
         std::memcmp(a.packed().data(), b.packed().data(),
                     a.packed().size() * sizeof(double)) == 0;
}

ModelPair test_pair(int d, int k, double b = std::sqrt(0.05), double T = 0.1) {
  QuadraticModelSpec spec{rank_deficient_a(d, k), b, T};
  return quad_model_pair(spec, InputDensity{DensityKind::UniformBox, d}, 7.0);
}

}  // namespace

TEST_CASE("estimate_sf: constant gradient gives the exact outer product") {
  // Power-of-two values and counts keep every operation exact.
  const std::vector<double> c = {1.0, 0.5, 2.0};
  const GradientOracle o = constant_gradient_oracle(c, DensityKind::UniformBox);
  const ASEstimate est = estimate_sf(o, 4, 11);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(est.matrix(i, j) == c[i] * c[j]);
  CHECK(est.kind == EstimatorKind::SF);
  CHECK(est.m1 == 4);
  CHECK(est.m2 == 0);

  const ASEstimate est5 = estimate_sf(o, 5, 11);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(est5.matrix(i, j) == doctest::Approx(c[i] * c[j]).epsilon(1e-15));
}

TEST_CASE("estimate_sf: m1 = 1 is the rank-one outer product of the first draw") {
  const int d = 4;
  const InputDensity uni{DensityKind::UniformBox, d};
  const GradientOracle o = quad_hi_oracle(QuadraticModelSpec{{1.0, 0.8, 0.6, 0.4}, 0.0, 1.0}, uni);
  const ASEstimate est = estimate_sf(o, 1, 5);

  std::vector<double> x(d), g(d);
  sample_input_into(uni, 5, 0, 0, x);
  o.eval_grad(x, g);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) CHECK(est.matrix(i, j) == g[i] * g[j]);
}

TEST_CASE("estimate_sf: large-sample error against the exact matrix") {
  const int d = 100;
  const QuadraticModelSpec spec{rank_deficient_a(d, 2), 0.0, 1.0};
  const InputDensity uni{DensityKind::UniformBox, d};
  const SymMatrix h = exact_H(spec, uni);
  const ASEstimate est = estimate_sf(quad_hi_oracle(spec, uni), 100000, 2024);
  CHECK(operator_norm(h - est.matrix) <= 0.05);
}

TEST_CASE("estimate_sf output is positive semi-definite") {
  const ModelPair pair = test_pair(12, 4);
  const ASEstimate est = estimate_sf(pair.hi, 7, 99);
  const std::vector<double> ev = sym_eigenvalues(est.matrix);
  CHECK(ev.back() >= -1e-10 * std::max(std::abs(ev.front()), std::abs(ev.back())));
}

TEST_CASE("estimate_mf: exact low-fidelity model reduces to the fresh-sample mean") {
  // g identical to f: the paired control-variate sum cancels exactly, and
  // the estimate equals the single-fidelity form over the m2 fresh samples.
  const int d = 6;
  const InputDensity uni{DensityKind::UniformBox, d};
  const QuadraticModelSpec spec{{1.0, 0.9, 0.5, 0.2, 0.1, 0.05}, 0.0, 1.0};
  ModelPair pair;
  pair.hi = quad_hi_oracle(spec, uni);
  pair.lo = quad_hi_oracle(spec, uni);
  const long m1 = 5, m2 = 33;
  const ASEstimate mf = estimate_mf(pair, m1, m2, 17);

  GradientBatch extras;
  extras.dim = d;
  extras.hi_paired = GradientRows(d, m2);
  std::vector<double> x(d);
  for (long j = 0; j < m2; ++j) {
    sample_input_into(uni, 17, 0, m1 + j, x);
    pair.hi.eval_grad(x, extras.hi_paired.row(j));
  }
  const ASEstimate fresh = estimate_from_batch(extras);
  CHECK(bitwise_equal(mf.matrix, fresh.matrix));
}

TEST_CASE("estimate_mf: zero low-fidelity gradient reduces to SF over paired samples") {
  const int d = 5;
  const InputDensity uni{DensityKind::UniformBox, d};
  const GradientOracle hi = quad_hi_oracle(QuadraticModelSpec{{1.0, 0.5, 0.5, 0.25, 0.0}, 0.0, 1.0}, uni);
  ModelPair pair;
  pair.hi = hi;
  pair.lo = constant_gradient_oracle(std::vector<double>(d, 0.0), DensityKind::UniformBox);
  const ASEstimate mf = estimate_mf(pair, 9, 4, 3);
  const ASEstimate sf = estimate_sf(hi, 9, 3);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) CHECK(mf.matrix(i, j) == sf.matrix(i, j));
}

TEST_CASE("estimate_mf: paper cell reproduces the reported error level") {
  const int d = 100;
  const ModelPair pair = test_pair(d, 1);
  const SymMatrix h = exact_H(QuadraticModelSpec{rank_deficient_a(d, 1), std::sqrt(0.05), 0.1},
                              InputDensity{DensityKind::UniformBox, d});
  double mean = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const ASEstimate est = estimate_mf(pair, 10, 630, rng::derive_seed(4242, t));
    mean += relative_error(h, est.matrix);
  }
  mean /= trials;
  CHECK(mean >= 0.04);
  CHECK(mean <= 0.11);
}

TEST_CASE("estimate_mf: pairing, evaluation counts and cost accounting") {
  const int d = 3;
  const InputDensity uni{DensityKind::UniformBox, d};
  std::mutex record_mutex;
  std::vector<std::vector<double>> hi_inputs, lo_inputs;
  std::atomic<long> hi_calls{0}, lo_calls{0};

  ModelPair pair;
  pair.hi.dim = d;
  pair.hi.density = uni;
  pair.hi.cost_weight = 7.0;
  pair.hi.eval_f = [](std::span<const double>) { return 0.0; };
  pair.hi.eval_grad = [&](std::span<const double> x, std::span<double> g) {
    ++hi_calls;
    {
      std::lock_guard<std::mutex> lock(record_mutex);
      hi_inputs.emplace_back(x.begin(), x.end());
    }
    g[0] = x[0];
    g[1] = x[1];
    g[2] = x[2];
  };
  pair.lo.dim = d;
  pair.lo.density = uni;
  pair.lo.cost_weight = 1.0;
  pair.lo.eval_f = [](std::span<const double>) { return 0.0; };
  pair.lo.eval_grad = [&](std::span<const double> x, std::span<double> g) {
    ++lo_calls;
    {
      std::lock_guard<std::mutex> lock(record_mutex);
      lo_inputs.emplace_back(x.begin(), x.end());
    }
    g[0] = 0.5 * x[0];
    g[1] = 0.5 * x[1];
    g[2] = 0.5 * x[2];
  };
  pair.cost_ratio = 7.0;

  const long m1 = 130, m2 = 400;
  const ASEstimate est = estimate_mf(pair, m1, m2, 55);
  CHECK(hi_calls.load() == m1);
  CHECK(lo_calls.load() == m1 + m2);
  CHECK(est.cost == doctest::Approx(m1 * 7.0 + (m1 + m2) * 1.0).epsilon(1e-15));

  // Every hi input also appears among the lo inputs (paired evaluation).
  std::sort(hi_inputs.begin(), hi_inputs.end());
  std::sort(lo_inputs.begin(), lo_inputs.end());
  for (const auto& x : hi_inputs)
    CHECK(std::binary_search(lo_inputs.begin(), lo_inputs.end(), x));
}

TEST_CASE("estimate_mf: deterministic and thread-count invariant") {
  const ModelPair pair = test_pair(20, 3);
  const ASEstimate a = estimate_mf(pair, 37, 333, 123, 1);
  const ASEstimate b = estimate_mf(pair, 37, 333, 123, 4);
  const ASEstimate c = estimate_mf(pair, 37, 333, 123, 2);
  CHECK(bitwise_equal(a.matrix, b.matrix));
  CHECK(bitwise_equal(a.matrix, c.matrix));
  const ASEstimate other = estimate_mf(pair, 37, 333, 124, 1);
  CHECK_FALSE(bitwise_equal(a.matrix, other.matrix));

  const ASEstimate s1 = estimate_sf(pair.hi, 1000, 5, 1);
  const ASEstimate s4 = estimate_sf(pair.hi, 1000, 5, 4);
  CHECK(bitwise_equal(s1.matrix, s4.matrix));
}

TEST_CASE("estimate_mf: unbiasedness over repeated seeds") {
  const int d = 10;
  const QuadraticModelSpec spec{rank_deficient_a(d, 3), std::sqrt(0.05), 0.1};
  const InputDensity uni{DensityKind::UniformBox, d};
  const ModelPair pair = quad_model_pair(spec, uni, 7.0);
  const SymMatrix h = exact_H(spec, uni);

  const int n_seeds = 2000;
  const std::size_t psize = SymMatrix::packed_size(d);
  std::vector<double> sum(psize, 0.0), sum_sq(psize, 0.0);
  for (int t = 0; t < n_seeds; ++t) {
    const ASEstimate est = estimate_mf(pair, 5, 50, rng::derive_seed(888, t));
    const auto packed = est.matrix.packed();
    for (std::size_t p = 0; p < psize; ++p) {
      sum[p] += packed[p];
      sum_sq[p] += packed[p] * packed[p];
    }
  }
  std::size_t p = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double mean = sum[p] / n_seeds;
      const double var = (sum_sq[p] / n_seeds - mean * mean) / n_seeds;
      const double se = std::sqrt(std::max(var, 0.0));
      CHECK(std::abs(mean - h(i, j)) <= 4.0 * se + 1e-12);
      ++p;
    }
  }
}

TEST_CASE("estimate_mf rejects non-finite gradients with index and fidelity") {
  const int d = 2;
  ModelPair pair;
  pair.hi = constant_gradient_oracle({1.0, 1.0}, DensityKind::UniformBox);
  pair.lo.dim = d;
  pair.lo.density = InputDensity{DensityKind::UniformBox, d};
  long call = 0;
  pair.lo.eval_f = [](std::span<const double>) { return 0.0; };
  pair.lo.eval_grad = [&call](std::span<const double>, std::span<double> g) {
    g[0] = 0.0;
    g[1] = (call++ == 3) ? std::nan("") : 0.0;
  };
  try {
    estimate_mf(pair, 8, 4, 9, 1);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lo") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("estimate_from_batch: single row and hand-computed two-sample case") {
  GradientBatch one;
  one.dim = 3;
  one.hi_paired = GradientRows(3, 1);
  const std::vector<double> c = {2.0, -1.0, 0.5};
  std::copy(c.begin(), c.end(), one.hi_paired.row(0).begin());
  const ASEstimate est = estimate_from_batch(one);
  CHECK(est.kind == EstimatorKind::SF);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(est.matrix(i, j) == c[i] * c[j]);

  // Hand-built d=2 case: hi rows (1,2),(0,1); paired lo (1,1),(1,0);
  // extra lo (2,0),(0,2),(1,1). Worked arithmetic gives
  // [[7/6, 5/6], [5/6, 11/3]].
  GradientBatch two;
  two.dim = 2;
  two.hi_paired = GradientRows(2, 2);
  two.lo_paired = GradientRows(2, 2);
  two.lo_extra = GradientRows(2, 3);
  const double hi_rows[2][2] = {{1, 2}, {0, 1}};
  const double lop_rows[2][2] = {{1, 1}, {1, 0}};
  const double loe_rows[3][2] = {{2, 0}, {0, 2}, {1, 1}};
  for (int r = 0; r < 2; ++r)
    std::copy(hi_rows[r], hi_rows[r] + 2, two.hi_paired.row(r).begin());
  for (int r = 0; r < 2; ++r)
    std::copy(lop_rows[r], lop_rows[r] + 2, two.lo_paired.row(r).begin());
  for (int r = 0; r < 3; ++r)
    std::copy(loe_rows[r], loe_rows[r] + 2, two.lo_extra.row(r).begin());
  const ASEstimate mf = estimate_from_batch(two);
  CHECK(mf.kind == EstimatorKind::MF);
  CHECK(mf.matrix(0, 0) == doctest::Approx(7.0 / 6.0).epsilon(1e-15));
  CHECK(mf.matrix(0, 1) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(mf.matrix(1, 1) == doctest::Approx(11.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("estimate_from_batch: dumping a live estimate reproduces it bitwise") {
  const ModelPair pair = test_pair(15, 4);
  const long m1 = 23, m2 = 155;
  const std::uint64_t seed = 4711;
  const ASEstimate live = estimate_mf(pair, m1, m2, seed);
  const GradientBatch batch = collect_batch(pair.hi, &pair.lo, m1, m2, seed);
  const ASEstimate replay = estimate_from_batch(batch);
  CHECK(bitwise_equal(live.matrix, replay.matrix));

  // And the CSV round trip preserves that bitwise identity.
  const auto path = std::filesystem::temp_directory_path() / "asmf_batch_rt.csv";
  write_batch_csv(batch, path);
  const GradientBatch loaded = read_batch_csv(path);
  const ASEstimate replay2 = estimate_from_batch(loaded);
  CHECK(bitwise_equal(live.matrix, replay2.matrix));
  std::filesystem::remove(path);
}

TEST_CASE("batch CSV loader validates structure") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();

  {
    // Broken pairing: hi index 1 has no lo_paired partner.
    const fs::path p = dir / "asmf_badpair.csv";
    std::ofstream out(p);
    out << "role,index,g_1,g_2\nhi,0,1,2\nhi,1,3,4\nlo_paired,0,1,1\nlo_extra,2,1,0\n";
    out.close();
    CHECK_THROWS_WITH_AS(read_batch_csv(p), doctest::Contains("one-to-one"), DataFormatError);
    fs::remove(p);
  }
  {
    const fs::path p = dir / "asmf_nanrow.csv";
    std::ofstream out(p);
    out << "role,index,g_1,g_2\nhi,0,1,nan\n";
    out.close();
    CHECK_THROWS_WITH_AS(read_batch_csv(p), doctest::Contains("line 2"), DataFormatError);
    fs::remove(p);
  }
  {
    const fs::path p = dir / "asmf_shortrow.csv";
    std::ofstream out(p);
    out << "role,index,g_1,g_2\nhi,0,1\n";
    out.close();
    CHECK_THROWS_AS(read_batch_csv(p), DataFormatError);
    fs::remove(p);
  }
  {
    // Row order must not matter: indices define the pairing.
    const fs::path p = dir / "asmf_shuffled.csv";
    std::ofstream out(p);
    out << "role,index,g_1,g_2\n"
        << "lo_extra,5,1,1\n"
        << "hi,1,3,4\n"
        << "lo_paired,1,1,0\n"
        << "hi,0,1,2\n"
        << "lo_paired,0,1,1\n";
    out.close();
    const GradientBatch b = read_batch_csv(p);
    CHECK(b.hi_paired.rows() == 2);
    CHECK(b.hi_paired.row(0)[0] == 1.0);  // index 0 row comes first
    CHECK(b.lo_paired.row(1)[1] == 0.0);
    fs::remove(p);
  }
}

TEST_CASE("estimate_characteristics") {
  SUBCASE("single hi row") {
    GradientBatch one;
    one.dim = 2;
    one.hi_paired = GradientRows(2, 1);
    one.hi_paired.row(0)[0] = 3.0;
    one.hi_paired.row(0)[1] = 4.0;
    const CharacteristicEstimate c = estimate_characteristics(one);
    CHECK(c.grad_norm_sq_mean == doctest::Approx(25.0).epsilon(1e-15));
    CHECK(c.beta_sq == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_FALSE(c.theta_sq.has_value());
    CHECK(c.h_norm == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(c.delta_h == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("identical fidelities give theta = 0") {
    const ModelPair pair = test_pair(6, 2, 0.0);
    const GradientBatch batch = collect_batch(pair.hi, &pair.lo, 12, 30, 3);
    const CharacteristicEstimate c = estimate_characteristics(batch);
    REQUIRE(c.theta_sq.has_value());
    CHECK(*c.theta_sq == 0.0);
  }

  SUBCASE("uniform quadratic beta estimate approaches 3 from below") {
    const int d = 10;
    const QuadraticModelSpec spec{rank_deficient_a(d, 5), 0.0, 1.0};
    const GradientOracle hi = quad_hi_oracle(spec, InputDensity{DensityKind::UniformBox, d});
    const GradientBatch batch = collect_batch(hi, nullptr, 10000, 0, 21);
    const CharacteristicEstimate c = estimate_characteristics(batch);
    CHECK(c.beta_sq >= 2.5);
    CHECK(c.beta_sq <= 3.0);
    CHECK(c.grad_norm_sq_mean == doctest::Approx(5.0).epsilon(0.05));
  }

  SUBCASE("empirical theta stays below the closed form") {
    const ModelPair pair = test_pair(8, 3);
    const GradientBatch batch = collect_batch(pair.hi, &pair.lo, 5000, 100, 9);
    const CharacteristicEstimate c = estimate_characteristics(batch);
    REQUIRE(c.theta_sq.has_value());
    CHECK(*c.theta_sq <= 0.05 * 1.05);
    CHECK(*c.theta_sq >= 0.01);
  }

  SUBCASE("zero gradients rejected") {
    GradientBatch zero;
    zero.dim = 2;
    zero.hi_paired = GradientRows(2, 3);
    CHECK_THROWS_AS(estimate_characteristics(zero), NumericalError);
  }
}

TEST_CASE("invalid sample counts rejected") {
  const ModelPair pair = test_pair(4, 2);
  CHECK_THROWS_AS(estimate_sf(pair.hi, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_mf(pair, 5, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_mf(pair, 0, 5, 1), std::invalid_argument);
}
