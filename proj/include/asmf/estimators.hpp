#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "asmf/models.hpp"
#include "asmf/sym_matrix.hpp"

namespace asmf {

enum class EstimatorKind { SF, MF };
const char* to_string(EstimatorKind kind);

// An estimated second-moment matrix plus its provenance. Immutable after
// construction. MF matrices are reported as-is and may be indefinite; no
// eigenvalue clipping is ever applied implicitly (see project_psd for the
// explicit utility).
struct ASEstimate {
  SymMatrix matrix;
  EstimatorKind kind = EstimatorKind::SF;
  long m1 = 0;
  long m2 = 0;  // 0 for SF
  std::uint64_t seed = 0;
  double cost = 0.0;  // m1*hi_cost (+ (m1+m2)*lo_cost for MF), in cost_weight units
};

// Contiguous block of gradient rows.
class GradientRows {
 public:
  GradientRows() = default;
  GradientRows(int dim, std::size_t rows) : dim_(dim), data_(static_cast<std::size_t>(dim) * rows) {}

  int dim() const { return dim_; }
  std::size_t rows() const { return dim_ ? data_.size() / dim_ : 0; }
  bool empty() const { return data_.empty(); }
  std::span<double> row(std::size_t i) {
    return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

// Gradient samples laid out for the two-term estimator: hi_paired and
// lo_paired hold gradients of f and g at the same m1 inputs (row i of each
// shares the input); lo_extra holds gradients of g at m2 fresh inputs.
// An SF batch has only hi_paired rows.
struct GradientBatch {
  int dim = 0;
  GradientRows hi_paired;
  GradientRows lo_paired;
  GradientRows lo_extra;

  bool has_lo() const { return !lo_paired.empty() || !lo_extra.empty(); }
  void validate() const;
};

// Monte Carlo estimate (1/m1) sum grad_f(X_i) grad_f(X_i)'. Deterministic
// for a fixed seed and any thread count; positive semi-definite by
// construction.
ASEstimate estimate_sf(const GradientOracle& oracle, long m1, std::uint64_t seed,
                       int threads = 1);

// Two-term control-variate estimate:
//   (1/m1) sum_{i<=m1} (grad_f grad_f' - grad_g grad_g')(X_i)
// + (1/m2) sum_{m1<i<=m1+m2} grad_g grad_g'(X_i),
// with f and g evaluated at identical inputs in the paired sum. Performs
// exactly m1 hi-gradient and m1+m2 lo-gradient evaluations.
ASEstimate estimate_mf(const ModelPair& pair, long m1, long m2, std::uint64_t seed,
                       int threads = 1);

// Same estimators applied to externally computed gradients. Feeding the rows
// that a live estimate evaluated reproduces its matrix bit for bit.
ASEstimate estimate_from_batch(const GradientBatch& batch);

// Gradient rows that estimate_sf / estimate_mf would evaluate for this seed
// (pass lo = nullptr for an SF batch with m2 = 0).
GradientBatch collect_batch(const GradientOracle& hi, const GradientOracle* lo, long m1,
                            long m2, std::uint64_t seed);

// Sample approximations of the characteristic quantities. The mean of
// ||grad_f||^2 uses the plain average for SF batches and the control-variate
// analogue for MF batches; beta^2 and theta^2 are empirical maxima over the
// paired rows; the matrix-derived fields come from the assembled estimate.
struct CharacteristicEstimate {
  double grad_norm_sq_mean = 0.0;
  double h_norm = 0.0;
  double delta_h = 1.0;
  double beta_sq = 0.0;
  std::optional<double> theta_sq;  // absent for SF batches
};

CharacteristicEstimate estimate_characteristics(const GradientBatch& batch);

// Batch CSV: header `role,index,g_1,...,g_d`; role is hi, lo_paired or
// lo_extra; hi and lo_paired rows with equal index are paired. The loader
// validates that the hi/lo_paired indices form a bijection.
void write_batch_csv(const GradientBatch& batch, const std::filesystem::path& path);
GradientBatch read_batch_csv(const std::filesystem::path& path);

}  // namespace asmf
