#include "asmf/estimators.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "asmf/errors.hpp"
#include "asmf/rng.hpp"
#include "parallel_util.hpp"

namespace asmf {
namespace {

// Input draws for estimation use stream 0 of the estimator seed.
constexpr std::uint64_t kInputStream = 0;

// Accumulation is chunked (64 samples per chunk) and chunk sums are merged
// by a binary-counter pairwise tree over the chunk index, so serial and
// multi-threaded runs produce bitwise-identical matrices.
constexpr long kChunkSamples = 64;

void rank1_add(std::vector<double>& packed, std::span<const double> y, int dim) {
  std::size_t off = 0;
  for (int i = 0; i < dim; ++i) {
    const double yi = y[i];
    const std::size_t row_len = static_cast<std::size_t>(dim - i);
    if (yi != 0.0) {
      double* p = packed.data() + off;
      const double* yj = y.data() + i;
      for (std::size_t k = 0; k < row_len; ++k) p[k] += yi * yj[k];
    }
    off += row_len;
  }
}

void rank1_sub(std::vector<double>& packed, std::span<const double> y, int dim) {
  std::size_t off = 0;
  for (int i = 0; i < dim; ++i) {
    const double yi = y[i];
    const std::size_t row_len = static_cast<std::size_t>(dim - i);
    if (yi != 0.0) {
      double* p = packed.data() + off;
      const double* yj = y.data() + i;
      for (std::size_t k = 0; k < row_len; ++k) p[k] -= yi * yj[k];
    }
    off += row_len;
  }
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

// Binary-counter merge stack: the reduction tree is a pure function of the
// number of chunks, independent of thread count or wave size.
struct MergeStack {
  std::vector<std::pair<int, std::vector<double>>> levels;

  void push(std::vector<double>&& chunk_sum) {
    int level = 0;
    std::vector<double> cur = std::move(chunk_sum);
    while (!levels.empty() && levels.back().first == level) {
      add_into(levels.back().second, cur);
      cur = std::move(levels.back().second);
      levels.pop_back();
      ++level;
    }
    levels.emplace_back(level, std::move(cur));
  }

  std::vector<double> finish(std::size_t packed_size) {
    if (levels.empty()) return std::vector<double>(packed_size, 0.0);
    std::vector<double> acc = std::move(levels.back().second);
    levels.pop_back();
    while (!levels.empty()) {
      add_into(levels.back().second, acc);
      acc = std::move(levels.back().second);
      levels.pop_back();
    }
    return acc;
  }
};

// Sums the per-sample packed summands emitted by add_sample(i, chunk) over
// i in [0, n). Chunks are computed in bounded waves (parallelizable) and
// merged in chunk order.
std::vector<double> chunked_outer_sum(
    long n, int dim, int threads,
    const std::function<void(long, std::vector<double>&)>& add_sample) {
  const std::size_t psize = SymMatrix::packed_size(dim);
  MergeStack stack;
  const long n_chunks = (n + kChunkSamples - 1) / kChunkSamples;
  const long wave = std::max<long>(4, 4L * std::max(threads, 1));
  std::vector<std::vector<double>> partials;
  for (long c0 = 0; c0 < n_chunks; c0 += wave) {
    const long cw = std::min(wave, n_chunks - c0);
    partials.assign(cw, {});
    detail::parallel_for_index(cw, threads, [&](long w) {
      auto& p = partials[w];
      p.assign(psize, 0.0);
      const long c = c0 + w;
      const long end = std::min<long>(n, (c + 1) * kChunkSamples);
      for (long i = c * kChunkSamples; i < end; ++i) add_sample(i, p);
    });
    for (long w = 0; w < cw; ++w) stack.push(std::move(partials[w]));
  }
  return stack.finish(psize);
}

void check_gradient_finite(std::span<const double> g, long sample_index, const char* tag) {
  for (double v : g)
    if (!std::isfinite(v))
      throw NumericalError("non-finite " + std::string(tag) + " gradient at sample index " +
                           std::to_string(sample_index));
}

SymMatrix scaled_sum(std::vector<double> sum, long m, int dim) {
  const double denom = static_cast<double>(m);
  for (double& v : sum) v /= denom;
  return SymMatrix::from_packed(dim, std::move(sum));
}

SymMatrix combine_mf(std::vector<double> sum1, long m1, std::vector<double> sum2, long m2,
                     int dim) {
  const double d1 = static_cast<double>(m1), d2 = static_cast<double>(m2);
  for (std::size_t k = 0; k < sum1.size(); ++k) sum1[k] = sum1[k] / d1 + sum2[k] / d2;
  return SymMatrix::from_packed(dim, std::move(sum1));
}

}  // namespace

const char* to_string(EstimatorKind kind) {
  return kind == EstimatorKind::SF ? "sf" : "mf";
}

void GradientBatch::validate() const {
  if (dim <= 0) throw DataFormatError("gradient batch: dimension must be positive");
  if (hi_paired.rows() == 0) throw DataFormatError("gradient batch: no hi rows");
  if (!lo_paired.empty() && lo_paired.rows() != hi_paired.rows())
    throw DataFormatError("gradient batch: hi and lo_paired row counts differ (" +
                          std::to_string(hi_paired.rows()) + " vs " +
                          std::to_string(lo_paired.rows()) + ")");
  if (lo_paired.empty() && !lo_extra.empty())
    throw DataFormatError("gradient batch: lo_extra rows without lo_paired rows");
  auto check_rows = [&](const GradientRows& rows, const char* role) {
    if (!rows.empty() && rows.dim() != dim)
      throw DataFormatError(std::string("gradient batch: ") + role + " row length mismatch");
    for (std::size_t i = 0; i < rows.rows(); ++i)
      for (double v : rows.row(i))
        if (!std::isfinite(v))
          throw DataFormatError(std::string("gradient batch: non-finite value in ") + role +
                                " row " + std::to_string(i));
  };
  check_rows(hi_paired, "hi");
  check_rows(lo_paired, "lo_paired");
  check_rows(lo_extra, "lo_extra");
}

ASEstimate estimate_sf(const GradientOracle& oracle, long m1, std::uint64_t seed,
                       int threads) {
  if (m1 < 1) throw std::invalid_argument("estimate_sf: m1 must be >= 1");
  if (oracle.dim < 1) throw std::invalid_argument("estimate_sf: oracle dimension");
  const int dim = oracle.dim;

  auto sum = chunked_outer_sum(m1, dim, threads, [&](long i, std::vector<double>& chunk) {
    thread_local std::vector<double> x, g;
    x.resize(dim);
    g.resize(dim);
    sample_input_into(oracle.density, seed, kInputStream, static_cast<std::uint64_t>(i), x);
    oracle.eval_grad(x, g);
    check_gradient_finite(g, i, "hi");
    rank1_add(chunk, g, dim);
  });

  ASEstimate est;
  est.matrix = scaled_sum(std::move(sum), m1, dim);
  est.kind = EstimatorKind::SF;
  est.m1 = m1;
  est.m2 = 0;
  est.seed = seed;
  est.cost = static_cast<double>(m1) * oracle.cost_weight;
  return est;
}

ASEstimate estimate_mf(const ModelPair& pair, long m1, long m2, std::uint64_t seed,
                       int threads) {
  if (m1 < 1 || m2 < 1) throw std::invalid_argument("estimate_mf: m1 and m2 must be >= 1");
  if (pair.hi.dim != pair.lo.dim)
    throw std::invalid_argument("estimate_mf: fidelity dimensions differ");
  if (pair.hi.density.kind != pair.lo.density.kind)
    throw std::invalid_argument("estimate_mf: fidelity densities differ");
  const int dim = pair.hi.dim;

  // Paired sum over the first m1 inputs: f and g see identical vectors.
  auto sum1 = chunked_outer_sum(m1, dim, threads, [&](long i, std::vector<double>& chunk) {
    thread_local std::vector<double> x, gf, gl;
    x.resize(dim);
    gf.resize(dim);
    gl.resize(dim);
    sample_input_into(pair.hi.density, seed, kInputStream, static_cast<std::uint64_t>(i), x);
    pair.hi.eval_grad(x, gf);
    check_gradient_finite(gf, i, "hi");
    pair.lo.eval_grad(x, gl);
    check_gradient_finite(gl, i, "lo");
    rank1_add(chunk, gf, dim);
    rank1_sub(chunk, gl, dim);
  });

  // Control-variate mean over m2 fresh inputs (global sample indices m1..m1+m2-1).
  auto sum2 = chunked_outer_sum(m2, dim, threads, [&](long j, std::vector<double>& chunk) {
    thread_local std::vector<double> x, gl;
    x.resize(dim);
    gl.resize(dim);
    const long i = m1 + j;
    sample_input_into(pair.lo.density, seed, kInputStream, static_cast<std::uint64_t>(i), x);
    pair.lo.eval_grad(x, gl);
    check_gradient_finite(gl, i, "lo");
    rank1_add(chunk, gl, dim);
  });

  ASEstimate est;
  est.matrix = combine_mf(std::move(sum1), m1, std::move(sum2), m2, dim);
  est.kind = EstimatorKind::MF;
  est.m1 = m1;
  est.m2 = m2;
  est.seed = seed;
  est.cost = static_cast<double>(m1) * pair.hi.cost_weight +
             static_cast<double>(m1 + m2) * pair.lo.cost_weight;
  return est;
}

ASEstimate estimate_from_batch(const GradientBatch& batch) {
  batch.validate();
  const int dim = batch.dim;
  const long m1 = static_cast<long>(batch.hi_paired.rows());

  ASEstimate est;
  est.seed = 0;
  est.m1 = m1;
  if (!batch.has_lo()) {
    auto sum = chunked_outer_sum(m1, dim, 1, [&](long i, std::vector<double>& chunk) {
      rank1_add(chunk, batch.hi_paired.row(static_cast<std::size_t>(i)), dim);
    });
    est.matrix = scaled_sum(std::move(sum), m1, dim);
    est.kind = EstimatorKind::SF;
    est.m2 = 0;
    est.cost = static_cast<double>(m1);
    return est;
  }

  const long m2 = static_cast<long>(batch.lo_extra.rows());
  if (m2 < 1)
    throw DataFormatError("gradient batch: control-variate estimate needs lo_extra rows");
  auto sum1 = chunked_outer_sum(m1, dim, 1, [&](long i, std::vector<double>& chunk) {
    rank1_add(chunk, batch.hi_paired.row(static_cast<std::size_t>(i)), dim);
    rank1_sub(chunk, batch.lo_paired.row(static_cast<std::size_t>(i)), dim);
  });
  auto sum2 = chunked_outer_sum(m2, dim, 1, [&](long j, std::vector<double>& chunk) {
    rank1_add(chunk, batch.lo_extra.row(static_cast<std::size_t>(j)), dim);
  });
  est.matrix = combine_mf(std::move(sum1), m1, std::move(sum2), m2, dim);
  est.kind = EstimatorKind::MF;
  est.m2 = m2;
  est.cost = static_cast<double>(m1) + static_cast<double>(m1 + m2);
  return est;
}

GradientBatch collect_batch(const GradientOracle& hi, const GradientOracle* lo, long m1,
                            long m2, std::uint64_t seed) {
  if (m1 < 1) throw std::invalid_argument("collect_batch: m1 must be >= 1");
  if (lo == nullptr && m2 != 0)
    throw std::invalid_argument("collect_batch: m2 must be 0 without a low-fidelity oracle");
  if (lo != nullptr && m2 < 1)
    throw std::invalid_argument("collect_batch: m2 must be >= 1 with a low-fidelity oracle");
  const int dim = hi.dim;
  GradientBatch batch;
  batch.dim = dim;
  batch.hi_paired = GradientRows(dim, static_cast<std::size_t>(m1));
  if (lo) {
    batch.lo_paired = GradientRows(dim, static_cast<std::size_t>(m1));
    batch.lo_extra = GradientRows(dim, static_cast<std::size_t>(m2));
  }
  std::vector<double> x(dim);
  for (long i = 0; i < m1; ++i) {
    sample_input_into(hi.density, seed, kInputStream, static_cast<std::uint64_t>(i), x);
    hi.eval_grad(x, batch.hi_paired.row(static_cast<std::size_t>(i)));
    check_gradient_finite(batch.hi_paired.row(static_cast<std::size_t>(i)), i, "hi");
    if (lo) {
      lo->eval_grad(x, batch.lo_paired.row(static_cast<std::size_t>(i)));
      check_gradient_finite(batch.lo_paired.row(static_cast<std::size_t>(i)), i, "lo");
    }
  }
  for (long j = 0; lo && j < m2; ++j) {
    const long i = m1 + j;
    sample_input_into(lo->density, seed, kInputStream, static_cast<std::uint64_t>(i), x);
    lo->eval_grad(x, batch.lo_extra.row(static_cast<std::size_t>(j)));
    check_gradient_finite(batch.lo_extra.row(static_cast<std::size_t>(j)), i, "lo");
  }
  return batch;
}

CharacteristicEstimate estimate_characteristics(const GradientBatch& batch) {
  batch.validate();
  const long m1 = static_cast<long>(batch.hi_paired.rows());

  auto norm_sq = [](std::span<const double> row) {
    double s = 0.0;
    for (double v : row) s += v * v;
    return s;
  };

  double mean = 0.0;
  double max_hi = 0.0;
  for (long i = 0; i < m1; ++i) {
    const double n2 = norm_sq(batch.hi_paired.row(static_cast<std::size_t>(i)));
    max_hi = std::max(max_hi, n2);
    mean += n2;
  }
  mean /= static_cast<double>(m1);

  CharacteristicEstimate out;
  if (batch.has_lo()) {
    const long m2 = static_cast<long>(batch.lo_extra.rows());
    if (m2 < 1)
      throw DataFormatError("gradient batch: control-variate estimate needs lo_extra rows");
    // Scalar two-term analogue of the matrix estimator.
    double cv = 0.0;
    for (long i = 0; i < m1; ++i)
      cv -= norm_sq(batch.lo_paired.row(static_cast<std::size_t>(i)));
    cv /= static_cast<double>(m1);
    double extra = 0.0;
    for (long j = 0; j < m2; ++j)
      extra += norm_sq(batch.lo_extra.row(static_cast<std::size_t>(j)));
    extra /= static_cast<double>(m2);
    mean += cv + extra;

    double max_diff = 0.0;
    std::vector<double> diff(batch.dim);
    for (long i = 0; i < m1; ++i) {
      const auto hi = batch.hi_paired.row(static_cast<std::size_t>(i));
      const auto lo = batch.lo_paired.row(static_cast<std::size_t>(i));
      double s = 0.0;
      for (int k = 0; k < batch.dim; ++k) {
        const double d = hi[k] - lo[k];
        s += d * d;
      }
      max_diff = std::max(max_diff, s);
    }
    if (!(mean > 0.0))
      throw NumericalError("estimate_characteristics: estimated E[||grad_f||^2] is not "
                           "positive; beta and theta are undefined");
    out.theta_sq = max_diff / mean;
  } else if (!(mean > 0.0)) {
    throw NumericalError("estimate_characteristics: zero gradient-norm mean; beta is "
                         "undefined");
  }

  out.grad_norm_sq_mean = mean;
  out.beta_sq = max_hi / mean;

  const ASEstimate est = estimate_from_batch(batch);
  const std::vector<double> ev = sym_eigenvalues(est.matrix);
  const double norm = std::max(std::abs(ev.front()), std::abs(ev.back()));
  out.h_norm = norm;
  // Estimates may be slightly indefinite; report trace/norm clamped to the
  // admissible range rather than rejecting.
  out.delta_h = norm > 0.0 ? std::max(1.0, est.matrix.trace() / norm) : 1.0;
  return out;
}

}  // namespace asmf
