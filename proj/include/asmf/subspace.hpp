#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "asmf/models.hpp"
#include "asmf/sym_matrix.hpp"

namespace asmf {

// A column-orthonormal basis of an r-dimensional subspace of R^d.
struct Subspace {
  int dim_ambient = 0;
  int r = 0;
  std::vector<double> basis;  // column major, d x r
  // Set when the defining spectral gap lambda_r - lambda_{r+1} vanishes
  // within 1e-10 * ||A||: any maximizing selection is then equally valid.
  bool degenerate = false;

  std::span<const double> column(int k) const {
    return {basis.data() + static_cast<std::size_t>(k) * dim_ambient,
            static_cast<std::size_t>(dim_ambient)};
  }
};

// Span of the top-r eigenvectors: a maximizer of trace(U' A U) over
// column-orthonormal U.
Subspace active_subspace(const SymMatrix& a, int r);

// Explicit basis (columns must be orthonormal; validated to 1e-10).
Subspace subspace_from_basis(int dim_ambient, int r, std::vector<double> basis_col_major);

// trace(U' A U)
double trace_objective(const Subspace& u, const SymMatrix& a);

// 2 r ||H_ref - Hhat||: how far below the optimal captured trace the
// subspace extracted from Hhat can fall on H_ref.
double near_optimality_gap(const SymMatrix& h_ref, const SymMatrix& h_hat, int r);

// trace(A) - trace(U' A U), clamped at zero from below. Upper-bounds the
// mean-square error of the conditional-expectation ridge approximation.
// Rejects matrices with an eigenvalue below -1e-8 * ||A|| (slightly
// indefinite two-term estimates pass).
double functional_error_bound(const SymMatrix& a, const Subspace& u);

// Fraction of the spectrum captured by the top-r eigenvalues, in [0, 1].
double spectral_energy(const SymMatrix& a, int r);

// Principal angle between equal-rank subspaces: asin ||U U' - V V'||.
double principal_angle(const Subspace& u, const Subspace& v);

// Orthonormal basis of the orthogonal complement (d x (d-r), column major),
// computed by Householder completion of the subspace basis.
std::vector<double> complement_basis(const Subspace& u);

struct RidgeMse {
  double value = 0.0;
  double std_error = 0.0;
  long n_outer = 0;
  long n_inner = 0;
};

// Nested Monte Carlo estimate of E[(f(X) - h(U'X))^2] with h the conditional
// expectation E[f(X) | U'X], for standard Gaussian inputs only (the input
// decomposes as U z + W w with w standard normal in the complement). Each
// outer draw's squared deviation from the inner mean estimates
// (1 + 1/n_inner) times the target, so the outer average is divided by that
// factor; the adjustment is exact because f(X) is exchangeable with the
// inner draws given U'X.
RidgeMse ridge_mse(const GradientOracle& oracle, const Subspace& u, long n_outer,
                   long n_inner, std::uint64_t seed);

struct SubspaceReportRow {
  int r = 0;
  double captured_trace = 0.0;
  std::optional<double> spectral_energy;   // absent when the matrix is strongly indefinite
  std::optional<double> functional_bound;  // likewise
  bool degenerate = false;
  std::optional<double> optimality_gap_bound;          // 2r||H_ref - Hhat||, reference runs only
  std::optional<double> certified_trace_lower_bound;   // sum top-r eig(H_ref) - gap
};

struct SubspaceReport {
  int dim = 0;
  std::vector<double> spectrum;
  double trace = 0.0;
  std::vector<SubspaceReportRow> rows;
  std::optional<double> reference_relative_error;
  std::vector<std::string> notes;
};

// Report over a range of subspace dimensions; h_ref (when given) adds the
// near-optimality certificate columns.
SubspaceReport subspace_report(const SymMatrix& a, const std::vector<int>& r_values,
                               const SymMatrix* h_ref);

nlohmann::json subspace_report_to_json(const SubspaceReport& report);

// Basis CSV: d rows of r comma-separated values.
void write_basis_csv(const Subspace& u, const std::filesystem::path& path);

}  // namespace asmf
