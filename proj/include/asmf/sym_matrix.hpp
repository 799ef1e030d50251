#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace asmf {

// Dense symmetric d x d matrix stored as the packed upper triangle in row
// major order, so entries(i,j) == entries(j,i) holds by construction.
// Instances are immutable after construction and safe to share across
// threads. Every constructor rejects non-finite entries.
class SymMatrix {
 public:
  SymMatrix() = default;

  // Zero matrix of the given dimension.
  explicit SymMatrix(int dim);

  // `upper` holds the packed upper triangle, row major:
  // (0,0)..(0,d-1), (1,1)..(1,d-1), ..., (d-1,d-1).
  static SymMatrix from_packed(int dim, std::vector<double> upper);

  // Reads the upper triangle of a full row-major buffer; the strict lower
  // triangle is ignored (callers that need a symmetry check do it first).
  static SymMatrix from_dense(int dim, std::span<const double> row_major);

  static SymMatrix diagonal(std::span<const double> diag);
  static SymMatrix identity(int dim);

  int dim() const { return dim_; }
  double operator()(int i, int j) const {
    return data_[packed_index(dim_, i <= j ? i : j, i <= j ? j : i)];
  }
  std::span<const double> packed() const { return data_; }

  static std::size_t packed_size(int dim) {
    return static_cast<std::size_t>(dim) * (dim + 1) / 2;
  }
  static std::size_t packed_index(int dim, int i, int j) {
    // requires i <= j
    return static_cast<std::size_t>(i) * dim - static_cast<std::size_t>(i) * (i - 1) / 2 +
           static_cast<std::size_t>(j - i);
  }

  double trace() const;
  double max_abs() const;
  double frobenius_norm() const;

  SymMatrix operator+(const SymMatrix& other) const;
  SymMatrix operator-(const SymMatrix& other) const;
  SymMatrix scaled(double c) const;

  // out = A x
  void apply(std::span<const double> x, std::span<double> out) const;
  // x' A x
  double quad_form(std::span<const double> x) const;

 private:
  int dim_ = 0;
  std::vector<double> data_;

  void require_finite(const char* op) const;
};

struct EigenDecomposition {
  int dim = 0;
  std::vector<double> eigenvalues;   // sorted non-increasing
  std::vector<double> eigenvectors;  // column major d x d; column k pairs with eigenvalues[k]

  double vec(int i, int k) const {
    return eigenvectors[static_cast<std::size_t>(k) * dim + i];
  }
  std::span<const double> column(int k) const {
    return {eigenvectors.data() + static_cast<std::size_t>(k) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Full symmetric eigendecomposition (Householder tridiagonalization followed
// by implicit-shift QL). Deterministic for a fixed input: eigenvalues sorted
// non-increasing with stable tie order, and each eigenvector normalized so
// its first nonzero component is positive. Throws NumericalError if the QL
// iteration budget (100 * dim) is exhausted.
EigenDecomposition eigendecomp(const SymMatrix& a);

// Eigenvalues only (same algorithm without eigenvector accumulation).
std::vector<double> sym_eigenvalues(const SymMatrix& a);

// max_i |lambda_i|
double operator_norm(const SymMatrix& a);

// trace(A) / ||A|| for symmetric positive semi-definite A. Rejects the zero
// matrix and matrices with an eigenvalue below -1e-10 * ||A|| (slightly
// indefinite inputs from rounding are accepted).
double intrinsic_dimension(const SymMatrix& a);

// ||H - Hhat|| / ||H||; requires ||H|| > 0.
double relative_error(const SymMatrix& h, const SymMatrix& h_hat);

// Nearest positive semi-definite matrix in the spectral sense: negative
// eigenvalues clipped to zero. Never applied implicitly by any estimator.
SymMatrix project_psd(const SymMatrix& a);

}  // namespace asmf
