#include "asmf/subspace.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "asmf/errors.hpp"
#include "asmf/matrix_io.hpp"
#include "asmf/rng.hpp"

namespace asmf {
namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double sym_norm_from_values(const std::vector<double>& ev) {
  return std::max(std::abs(ev.front()), std::abs(ev.back()));
}

// min eigenvalue >= -tol_factor * ||A||, i.e. A is PSD up to rounding noise.
void require_near_psd(const std::vector<double>& ev, double tol_factor, const char* op) {
  const double norm = sym_norm_from_values(ev);
  if (ev.back() < -tol_factor * norm)
    throw std::invalid_argument(std::string(op) +
                                ": matrix is strongly indefinite (min eigenvalue " +
                                std::to_string(ev.back()) + ")");
}

}  // namespace

Subspace active_subspace(const SymMatrix& a, int r) {
  require(r >= 1 && r <= a.dim(), "active_subspace: r must lie in [1, d]");
  const EigenDecomposition ed = eigendecomp(a);
  const int d = a.dim();
  Subspace u;
  u.dim_ambient = d;
  u.r = r;
  u.basis.resize(static_cast<std::size_t>(d) * r);
  for (int k = 0; k < r; ++k)
    std::memcpy(u.basis.data() + static_cast<std::size_t>(k) * d, ed.column(k).data(),
                sizeof(double) * d);
  if (r < d) {
    const double norm = sym_norm_from_values(ed.eigenvalues);
    u.degenerate = (ed.eigenvalues[r - 1] - ed.eigenvalues[r]) <= 1e-10 * norm;
  }
  return u;
}

Subspace subspace_from_basis(int dim_ambient, int r, std::vector<double> basis_col_major) {
  require(dim_ambient >= 1 && r >= 1 && r <= dim_ambient, "subspace: bad dimensions");
  require(basis_col_major.size() == static_cast<std::size_t>(dim_ambient) * r,
          "subspace: basis buffer has wrong size");
  Subspace u;
  u.dim_ambient = dim_ambient;
  u.r = r;
  u.basis = std::move(basis_col_major);
  for (int k = 0; k < r; ++k) {
    for (int l = k; l < r; ++l) {
      double dot = 0.0;
      for (int i = 0; i < dim_ambient; ++i) dot += u.column(k)[i] * u.column(l)[i];
      const double target = (k == l) ? 1.0 : 0.0;
      if (std::abs(dot - target) > 1e-10)
        throw std::invalid_argument("subspace: basis columns are not orthonormal");
    }
  }
  return u;
}

double trace_objective(const Subspace& u, const SymMatrix& a) {
  require(u.dim_ambient == a.dim(), "trace_objective: dimension mismatch");
  double s = 0.0;
  for (int k = 0; k < u.r; ++k) s += a.quad_form(u.column(k));
  return s;
}

double near_optimality_gap(const SymMatrix& h_ref, const SymMatrix& h_hat, int r) {
  require(h_ref.dim() == h_hat.dim(), "near_optimality_gap: dimension mismatch");
  require(r >= 1 && r <= h_ref.dim(), "near_optimality_gap: r must lie in [1, d]");
  return 2.0 * r * operator_norm(h_ref - h_hat);
}

double functional_error_bound(const SymMatrix& a, const Subspace& u) {
  require(u.dim_ambient == a.dim(), "functional_error_bound: dimension mismatch");
  const std::vector<double> ev = sym_eigenvalues(a);
  require_near_psd(ev, 1e-8, "functional_error_bound");
  return std::max(0.0, a.trace() - trace_objective(u, a));
}

double spectral_energy(const SymMatrix& a, int r) {
  require(r >= 1 && r <= a.dim(), "spectral_energy: r must lie in [1, d]");
  const std::vector<double> ev = sym_eigenvalues(a);
  require_near_psd(ev, 1e-8, "spectral_energy");
  const double total = a.trace();
  if (total == 0.0) throw std::invalid_argument("spectral_energy: zero trace");
  double captured = 0.0;
  for (int k = 0; k < r; ++k) captured += ev[k];
  return std::min(1.0, std::max(0.0, captured / total));
}

double principal_angle(const Subspace& u, const Subspace& v) {
  require(u.dim_ambient == v.dim_ambient, "principal_angle: ambient dimension mismatch");
  if (u.r != v.r)
    throw std::invalid_argument("principal_angle: subspace ranks differ (" +
                                std::to_string(u.r) + " vs " + std::to_string(v.r) + ")");
  const int d = u.dim_ambient;
  std::vector<double> packed(SymMatrix::packed_size(d), 0.0);
  std::size_t p = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double diff = 0.0;
      for (int k = 0; k < u.r; ++k) diff += u.column(k)[i] * u.column(k)[j];
      for (int k = 0; k < v.r; ++k) diff -= v.column(k)[i] * v.column(k)[j];
      packed[p++] = diff;
    }
  }
  const double norm = operator_norm(SymMatrix::from_packed(d, std::move(packed)));
  return std::asin(std::min(1.0, std::max(0.0, norm)));
}

std::vector<double> complement_basis(const Subspace& u) {
  const int d = u.dim_ambient, r = u.r;
  if (r == d) return {};
  // Householder QR of the basis; applying the reflectors to the trailing
  // identity columns yields an orthonormal complement.
  std::vector<double> work(u.basis);  // column major d x r
  auto col = [&](int k) { return work.data() + static_cast<std::size_t>(k) * d; };
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(r);
  for (int k = 0; k < r; ++k) {
    double* x = col(k);
    double norm = 0.0;
    for (int i = k; i < d; ++i) norm += x[i] * x[i];
    norm = std::sqrt(norm);
    if (norm == 0.0)
      throw NumericalError("complement_basis: rank-deficient subspace basis");
    std::vector<double> v(d, 0.0);
    const double alpha = x[k] >= 0.0 ? -norm : norm;
    for (int i = k; i < d; ++i) v[i] = x[i];
    v[k] -= alpha;
    double vnorm_sq = 0.0;
    for (int i = k; i < d; ++i) vnorm_sq += v[i] * v[i];
    if (vnorm_sq > 0.0) {
      // Apply reflector to the remaining basis columns.
      for (int c = k; c < r; ++c) {
        double* y = col(c);
        double dot = 0.0;
        for (int i = k; i < d; ++i) dot += v[i] * y[i];
        const double f = 2.0 * dot / vnorm_sq;
        for (int i = k; i < d; ++i) y[i] -= f * v[i];
      }
    }
    reflectors.push_back(std::move(v));
  }
  std::vector<double> out(static_cast<std::size_t>(d) * (d - r), 0.0);
  for (int c = 0; c < d - r; ++c) {
    double* q = out.data() + static_cast<std::size_t>(c) * d;
    q[r + c] = 1.0;  // e_{r+c}
    for (int k = r - 1; k >= 0; --k) {
      const auto& v = reflectors[static_cast<std::size_t>(k)];
      double vnorm_sq = 0.0, dot = 0.0;
      for (int i = k; i < d; ++i) {
        vnorm_sq += v[i] * v[i];
        dot += v[i] * q[i];
      }
      if (vnorm_sq == 0.0) continue;
      const double f = 2.0 * dot / vnorm_sq;
      for (int i = k; i < d; ++i) q[i] -= f * v[i];
    }
  }
  return out;
}

RidgeMse ridge_mse(const GradientOracle& oracle, const Subspace& u, long n_outer,
                   long n_inner, std::uint64_t seed) {
  if (oracle.density.kind != DensityKind::StandardGaussian)
    throw std::invalid_argument(
        "ridge_mse: conditional-expectation sampling requires the standard Gaussian density");
  require(u.dim_ambient == oracle.dim, "ridge_mse: dimension mismatch");
  require(n_outer >= 1 && n_inner >= 1, "ridge_mse: sample counts must be >= 1");

  RidgeMse out;
  out.n_outer = n_outer;
  out.n_inner = n_inner;
  const int d = oracle.dim, r = u.r;
  if (r == d) return out;  // no complement: h == f exactly

  const std::vector<double> w_basis = complement_basis(u);
  const int w_cols = d - r;
  auto w_col = [&](int c) { return w_basis.data() + static_cast<std::size_t>(c) * d; };

  std::vector<double> x(d), z(r), base(d), xi(d), w(w_cols);
  double sum = 0.0, sum_sq = 0.0;
  const double correction = 1.0 + 1.0 / static_cast<double>(n_inner);

  for (long i = 0; i < n_outer; ++i) {
    sample_input_into(oracle.density, seed, 0, static_cast<std::uint64_t>(i), x);
    const double f_val = oracle.eval_f(x);
    // base = U U' x, the part of x fixed by the conditioning
    for (int k = 0; k < r; ++k) {
      double dot = 0.0;
      for (int q = 0; q < d; ++q) dot += u.column(k)[q] * x[q];
      z[k] = dot;
    }
    for (int q = 0; q < d; ++q) {
      double s = 0.0;
      for (int k = 0; k < r; ++k) s += u.column(k)[q] * z[k];
      base[q] = s;
    }
    double inner_mean = 0.0;
    for (long j = 0; j < n_inner; ++j) {
      rng::SampleStream stream(seed, static_cast<std::uint64_t>(i) + 1, static_cast<std::uint64_t>(j));
      stream.fill_gaussian(w);
      for (int q = 0; q < d; ++q) {
        double s = base[q];
        for (int c = 0; c < w_cols; ++c) s += w_col(c)[q] * w[c];
        xi[q] = s;
      }
      inner_mean += oracle.eval_f(xi);
    }
    inner_mean /= static_cast<double>(n_inner);
    const double dev = f_val - inner_mean;
    const double contrib = dev * dev / correction;
    sum += contrib;
    sum_sq += contrib * contrib;
  }
  out.value = sum / static_cast<double>(n_outer);
  if (n_outer > 1) {
    const double var =
        (sum_sq - sum * sum / static_cast<double>(n_outer)) / static_cast<double>(n_outer - 1);
    out.std_error = std::sqrt(std::max(0.0, var) / static_cast<double>(n_outer));
  }
  return out;
}

SubspaceReport subspace_report(const SymMatrix& a, const std::vector<int>& r_values,
                               const SymMatrix* h_ref) {
  require(!r_values.empty(), "subspace_report: no r values");
  SubspaceReport report;
  report.dim = a.dim();
  report.spectrum = sym_eigenvalues(a);
  report.trace = a.trace();

  const double norm = sym_norm_from_values(report.spectrum);
  const bool strongly_indefinite =
      norm > 0.0 && report.spectrum.back() < -1e-8 * norm;
  if (strongly_indefinite)
    report.notes.push_back(
        "matrix is strongly indefinite; spectral energy and functional bound omitted");

  std::vector<double> ref_spectrum;
  double ref_norm_diff = 0.0;
  if (h_ref) {
    require(h_ref->dim() == a.dim(), "subspace_report: reference dimension mismatch");
    ref_spectrum = sym_eigenvalues(*h_ref);
    ref_norm_diff = operator_norm(*h_ref - a);
    const double ref_norm = sym_norm_from_values(ref_spectrum);
    if (ref_norm > 0.0) report.reference_relative_error = ref_norm_diff / ref_norm;
  }

  for (int r : r_values) {
    require(r >= 1 && r <= a.dim(), "subspace_report: r out of range");
    SubspaceReportRow row;
    row.r = r;
    double captured = 0.0;
    for (int k = 0; k < r; ++k) captured += report.spectrum[k];
    row.captured_trace = captured;
    if (r < a.dim())
      row.degenerate =
          (report.spectrum[r - 1] - report.spectrum[r]) <= 1e-10 * norm;
    if (!strongly_indefinite && report.trace != 0.0) {
      row.spectral_energy = std::min(1.0, std::max(0.0, captured / report.trace));
      row.functional_bound = std::max(0.0, report.trace - captured);
    }
    if (h_ref) {
      const double gap = 2.0 * r * ref_norm_diff;
      row.optimality_gap_bound = gap;
      double ref_captured = 0.0;
      for (int k = 0; k < r; ++k) ref_captured += ref_spectrum[k];
      row.certified_trace_lower_bound = ref_captured - gap;
    }
    report.rows.push_back(row);
  }
  return report;
}

nlohmann::json subspace_report_to_json(const SubspaceReport& report) {
  nlohmann::json j;
  j["dim"] = report.dim;
  j["spectrum"] = report.spectrum;
  j["trace"] = report.trace;
  if (report.reference_relative_error)
    j["reference_relative_error"] = *report.reference_relative_error;
  if (!report.notes.empty()) j["notes"] = report.notes;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json r;
    r["r"] = row.r;
    r["captured_trace"] = row.captured_trace;
    r["degenerate"] = row.degenerate;
    if (row.spectral_energy) r["spectral_energy"] = *row.spectral_energy;
    if (row.functional_bound) r["functional_bound"] = *row.functional_bound;
    if (row.optimality_gap_bound) r["optimality_gap_bound"] = *row.optimality_gap_bound;
    if (row.certified_trace_lower_bound)
      r["certified_trace_lower_bound"] = *row.certified_trace_lower_bound;
    j["rows"].push_back(std::move(r));
  }
  return j;
}

void write_basis_csv(const Subspace& u, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot open " + path.string() + " for writing");
  for (int i = 0; i < u.dim_ambient; ++i) {
    for (int k = 0; k < u.r; ++k) {
      if (k) out << ',';
      out << io::format_double(u.column(k)[i]);
    }
    out << "\n";
  }
  if (!out) throw DataFormatError("write failed: " + path.string());
}

}  // namespace asmf
