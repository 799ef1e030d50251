// Symmetric eigensolver: Householder reduction to tridiagonal form followed
// by the implicit-shift QL iteration, with deterministic ordering and sign
// conventions on the output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "asmf/errors.hpp"
#include "asmf/sym_matrix.hpp"

namespace asmf {
namespace {

double pythag(double a, double b) {
  const double absa = std::abs(a), absb = std::abs(b);
  if (absa > absb) {
    const double t = absb / absa;
    return absa * std::sqrt(1.0 + t * t);
  }
  if (absb == 0.0) return 0.0;
  const double t = absa / absb;
  return absb * std::sqrt(1.0 + t * t);
}

// Householder reduction of the full row-major matrix `a` (n x n, symmetric)
// to tridiagonal form: d holds the diagonal, e the subdiagonal (e[0] = 0).
// When with_vectors is set, `a` is overwritten by the accumulated orthogonal
// transform whose columns carry the reduction.
void householder_tridiag(std::vector<double>& a, int n, std::vector<double>& d,
                         std::vector<double>& e, bool with_vectors) {
  auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };

  for (int i = n - 1; i >= 1; --i) {
    const int l = i - 1;
    double h = 0.0, scale = 0.0;
    if (l > 0) {
      for (int k = 0; k <= l; ++k) scale += std::abs(A(i, k));
      if (scale == 0.0) {
        e[i] = A(i, l);
      } else {
        for (int k = 0; k <= l; ++k) {
          A(i, k) /= scale;
          h += A(i, k) * A(i, k);
        }
        double f = A(i, l);
        double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        A(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j <= l; ++j) {
          if (with_vectors) A(j, i) = A(i, j) / h;
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += A(j, k) * A(i, k);
          for (int k = j + 1; k <= l; ++k) g += A(k, j) * A(i, k);
          e[j] = g / h;
          f += e[j] * A(i, j);
        }
        const double hh = f / (h + h);
        for (int j = 0; j <= l; ++j) {
          f = A(i, j);
          e[j] = g = e[j] - hh * f;
          for (int k = 0; k <= j; ++k) A(j, k) -= (f * e[k] + g * A(i, k));
        }
      }
    } else {
      e[i] = A(i, l);
    }
    d[i] = h;
  }
  e[0] = 0.0;

  if (with_vectors) {
    d[0] = 0.0;
    for (int i = 0; i < n; ++i) {
      const int l = i - 1;
      if (d[i] != 0.0) {
        for (int j = 0; j <= l; ++j) {
          double g = 0.0;
          for (int k = 0; k <= l; ++k) g += A(i, k) * A(k, j);
          for (int k = 0; k <= l; ++k) A(k, j) -= g * A(k, i);
        }
      }
      d[i] = A(i, i);
      A(i, i) = 1.0;
      for (int j = 0; j <= l; ++j) {
        A(j, i) = 0.0;
        A(i, j) = 0.0;
      }
    }
  } else {
    for (int i = 0; i < n; ++i) d[i] = A(i, i);
  }
}

// Implicit-shift QL on the tridiagonal (d, e). Eigenvectors are rotated in
// place when z is non-null (columns of z are the vectors). The total
// rotation-sweep budget is capped; exhausting it raises NumericalError
// carrying the residual off-diagonal magnitude.
void ql_implicit(std::vector<double>& d, std::vector<double>& e, int n,
                 std::vector<double>* z, long max_total_iter) {
  auto Z = [&](int i, int j) -> double& { return (*z)[static_cast<std::size_t>(i) * n + j]; };

  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  // Absolute deflation floor at machine precision times the tridiagonal
  // scale; the relative test alone stalls when neighboring diagonal entries
  // both vanish (frequent for rank-deficient inputs).
  double anorm = 0.0;
  for (int i = 0; i < n; ++i) anorm = std::max(anorm, std::abs(d[i]) + std::abs(e[i]));
  const double eps = std::numeric_limits<double>::epsilon();
  const double floor_abs = eps * anorm;

  long total_iter = 0;
  for (int l = 0; l < n; ++l) {
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd || std::abs(e[m]) <= floor_abs) break;
      }
      if (m != l) {
        if (++total_iter > max_total_iter) {
          char residual[32];
          std::snprintf(residual, sizeof(residual), "%.6e", std::abs(e[l]));
          throw NumericalError(
              std::string("eigendecomp: QL iteration budget exhausted; residual "
                          "off-diagonal ") + residual);
        }
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = pythag(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? r : -r));
        double s = 1.0, c = 1.0, p = 0.0;
        bool underflow = false;
        for (int i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = pythag(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          if (z) {
            for (int k = 0; k < n; ++k) {
              f = Z(k, i + 1);
              Z(k, i + 1) = s * Z(k, i) + c * f;
              Z(k, i) = c * Z(k, i) - s * f;
            }
          }
        }
        if (underflow) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

void solve(const SymMatrix& a, bool with_vectors, std::vector<double>& values,
           std::vector<double>& vectors_col_major) {
  const int n = a.dim();
  std::vector<double> work(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) work[static_cast<std::size_t>(i) * n + j] = a(i, j);

  std::vector<double> d(n), e(n);
  householder_tridiag(work, n, d, e, with_vectors);
  ql_implicit(d, e, n, with_vectors ? &work : nullptr, 100L * n);

  // Non-increasing order; ties keep the solver's stable ordering.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int p, int q) { return d[p] > d[q]; });

  values.resize(n);
  for (int k = 0; k < n; ++k) values[k] = d[idx[k]];

  if (!with_vectors) return;
  vectors_col_major.resize(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    double* col = vectors_col_major.data() + static_cast<std::size_t>(k) * n;
    for (int i = 0; i < n; ++i) col[i] = work[static_cast<std::size_t>(i) * n + idx[k]];
    // Sign convention: first nonzero component positive, so results are
    // reproducible across runs and platforms.
    double max_abs = 0.0;
    for (int i = 0; i < n; ++i) max_abs = std::max(max_abs, std::abs(col[i]));
    const double tol = 1e-10 * max_abs;
    for (int i = 0; i < n; ++i) {
      if (std::abs(col[i]) > tol) {
        if (col[i] < 0.0)
          for (int q = 0; q < n; ++q) col[q] = -col[q];
        break;
      }
    }
  }
}

}  // namespace

EigenDecomposition eigendecomp(const SymMatrix& a) {
  EigenDecomposition out;
  out.dim = a.dim();
  solve(a, true, out.eigenvalues, out.eigenvectors);
  return out;
}

std::vector<double> sym_eigenvalues(const SymMatrix& a) {
  std::vector<double> values, unused;
  solve(a, false, values, unused);
  return values;
}

double operator_norm(const SymMatrix& a) {
  const std::vector<double> ev = sym_eigenvalues(a);
  // Sorted non-increasing: the extremes are the ends.
  return std::max(std::abs(ev.front()), std::abs(ev.back()));
}

double intrinsic_dimension(const SymMatrix& a) {
  const std::vector<double> ev = sym_eigenvalues(a);
  const double norm = std::max(std::abs(ev.front()), std::abs(ev.back()));
  if (norm == 0.0)
    throw std::invalid_argument("intrinsic_dimension: zero matrix");
  const double min_ev = ev.back();
  if (min_ev < -1e-10 * norm)
    throw NumericalError("intrinsic_dimension: input not positive semi-definite "
                         "(most negative eigenvalue " + std::to_string(min_ev) + ")");
  return std::max(1.0, a.trace() / norm);
}

double relative_error(const SymMatrix& h, const SymMatrix& h_hat) {
  const double norm_h = operator_norm(h);
  if (norm_h == 0.0)
    throw std::invalid_argument("relative_error: reference matrix has zero norm");
  return operator_norm(h - h_hat) / norm_h;
}

SymMatrix project_psd(const SymMatrix& a) {
  const EigenDecomposition ed = eigendecomp(a);
  const int n = a.dim();
  std::vector<double> packed(SymMatrix::packed_size(n), 0.0);
  for (int k = 0; k < n; ++k) {
    const double lam = ed.eigenvalues[k];
    if (lam <= 0.0) continue;
    const double* col = ed.eigenvectors.data() + static_cast<std::size_t>(k) * n;
    std::size_t p = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) packed[p++] += lam * col[i] * col[j];
  }
  return SymMatrix::from_packed(n, std::move(packed));
}

}  // namespace asmf
