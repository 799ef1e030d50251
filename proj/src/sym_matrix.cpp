#include "asmf/sym_matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "asmf/errors.hpp"

namespace asmf {

SymMatrix::SymMatrix(int dim) : dim_(dim) {
  if (dim <= 0) throw std::invalid_argument("SymMatrix: dimension must be positive");
  data_.assign(packed_size(dim), 0.0);
}

SymMatrix SymMatrix::from_packed(int dim, std::vector<double> upper) {
  if (dim <= 0) throw std::invalid_argument("SymMatrix: dimension must be positive");
  if (upper.size() != packed_size(dim))
    throw std::invalid_argument("SymMatrix: packed buffer has wrong size");
  SymMatrix m;
  m.dim_ = dim;
  m.data_ = std::move(upper);
  m.require_finite("from_packed");
  return m;
}

SymMatrix SymMatrix::from_dense(int dim, std::span<const double> row_major) {
  if (dim <= 0) throw std::invalid_argument("SymMatrix: dimension must be positive");
  if (row_major.size() != static_cast<std::size_t>(dim) * dim)
    throw std::invalid_argument("SymMatrix: dense buffer has wrong size");
  std::vector<double> upper(packed_size(dim));
  std::size_t p = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j)
      upper[p++] = row_major[static_cast<std::size_t>(i) * dim + j];
  return from_packed(dim, std::move(upper));
}

SymMatrix SymMatrix::diagonal(std::span<const double> diag) {
  SymMatrix m(static_cast<int>(diag.size()));
  for (int i = 0; i < m.dim_; ++i)
    m.data_[packed_index(m.dim_, i, i)] = diag[i];
  m.require_finite("diagonal");
  return m;
}

SymMatrix SymMatrix::identity(int dim) {
  SymMatrix m(dim);
  for (int i = 0; i < dim; ++i) m.data_[packed_index(dim, i, i)] = 1.0;
  return m;
}

void SymMatrix::require_finite(const char* op) const {
  for (double v : data_)
    if (!std::isfinite(v))
      throw NumericalError(std::string("SymMatrix::") + op + ": non-finite entry");
}

double SymMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < dim_; ++i) t += data_[packed_index(dim_, i, i)];
  return t;
}

double SymMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double SymMatrix::frobenius_norm() const {
  // Off-diagonal packed entries represent two symmetric positions.
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) {
    for (int j = i; j < dim_; ++j) {
      const double v = data_[packed_index(dim_, i, j)];
      s += (i == j ? 1.0 : 2.0) * v * v;
    }
  }
  return std::sqrt(s);
}

SymMatrix SymMatrix::operator+(const SymMatrix& other) const {
  if (dim_ != other.dim_) throw std::invalid_argument("SymMatrix: dimension mismatch");
  std::vector<double> out(data_.size());
  for (std::size_t k = 0; k < data_.size(); ++k) out[k] = data_[k] + other.data_[k];
  return from_packed(dim_, std::move(out));
}

SymMatrix SymMatrix::operator-(const SymMatrix& other) const {
  if (dim_ != other.dim_) throw std::invalid_argument("SymMatrix: dimension mismatch");
  std::vector<double> out(data_.size());
  for (std::size_t k = 0; k < data_.size(); ++k) out[k] = data_[k] - other.data_[k];
  return from_packed(dim_, std::move(out));
}

SymMatrix SymMatrix::scaled(double c) const {
  std::vector<double> out(data_.size());
  for (std::size_t k = 0; k < data_.size(); ++k) out[k] = c * data_[k];
  return from_packed(dim_, std::move(out));
}

void SymMatrix::apply(std::span<const double> x, std::span<double> out) const {
  if (x.size() != static_cast<std::size_t>(dim_) || out.size() != x.size())
    throw std::invalid_argument("SymMatrix::apply: dimension mismatch");
  for (int i = 0; i < dim_; ++i) {
    double s = 0.0;
    for (int j = 0; j < dim_; ++j) s += (*this)(i, j) * x[j];
    out[i] = s;
  }
}

double SymMatrix::quad_form(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dim_))
    throw std::invalid_argument("SymMatrix::quad_form: dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) {
    const double* row = data_.data() + packed_index(dim_, i, i);
    s += row[0] * x[i] * x[i];
    double cross = 0.0;
    for (int j = i + 1; j < dim_; ++j) cross += row[j - i] * x[j];
    s += 2.0 * x[i] * cross;
  }
  return s;
}

}  // namespace asmf
