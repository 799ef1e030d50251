#include "asmf/matrix_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include "asmf/errors.hpp"

namespace asmf::io {
namespace {

constexpr char kMagic[4] = {'A', 'S', 'M', 'X'};
constexpr std::uint32_t kFlagPackedUpper = 1u;

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw DataFormatError("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string_view> split_csv(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  text = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw DataFormatError(context + ": cannot parse number '" + std::string(text) + "'");
  return value;
}

void write_matrix_csv(const SymMatrix& m, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, std::ios::out);
  const int d = m.dim();
  out << d << "\n";
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << "\n";
  }
  if (!out) throw DataFormatError("write failed: " + path.string());
}

SymMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in);
  std::string line;
  if (!std::getline(in, line))
    throw DataFormatError(path.string() + ": missing dimension header");
  int d = 0;
  {
    const std::string_view h = trim(line);
    const auto res = std::from_chars(h.data(), h.data() + h.size(), d);
    if (res.ec != std::errc() || res.ptr != h.data() + h.size() || d <= 0)
      throw DataFormatError(path.string() + ": bad dimension header '" + line + "'");
  }
  std::vector<double> dense(static_cast<std::size_t>(d) * d);
  std::vector<std::string_view> fields;
  for (int i = 0; i < d; ++i) {
    if (!std::getline(in, line))
      throw DataFormatError(path.string() + ": expected " + std::to_string(d) +
                            " rows, got " + std::to_string(i));
    split_csv(line, fields);
    if (fields.size() != static_cast<std::size_t>(d))
      throw DataFormatError(path.string() + ": row " + std::to_string(i + 1) + " has " +
                            std::to_string(fields.size()) + " columns, expected " +
                            std::to_string(d));
    for (int j = 0; j < d; ++j)
      dense[static_cast<std::size_t>(i) * d + j] =
          parse_double(fields[j], path.string() + " row " + std::to_string(i + 1));
  }
  double max_abs = 0.0;
  for (double v : dense) {
    if (!std::isfinite(v)) throw DataFormatError(path.string() + ": non-finite entry");
    max_abs = std::max(max_abs, std::abs(v));
  }
  const double tol = 1e-12 * std::max(1.0, max_abs);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double a = dense[static_cast<std::size_t>(i) * d + j];
      const double b = dense[static_cast<std::size_t>(j) * d + i];
      if (std::abs(a - b) > tol)
        throw DataFormatError(path.string() + ": asymmetric entries at (" + std::to_string(i) +
                              "," + std::to_string(j) + "): " + format_double(a) + " vs " +
                              format_double(b));
      // Equal halves average to themselves exactly, keeping round-trips bit-exact.
      const double avg = 0.5 * (a + b);
      dense[static_cast<std::size_t>(i) * d + j] = avg;
    }
  }
  return SymMatrix::from_dense(d, dense);
}

void write_matrix_asmx(const SymMatrix& m, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  const std::uint32_t dim = static_cast<std::uint32_t>(m.dim());
  const std::uint32_t flags = kFlagPackedUpper;
  const std::uint32_t reserved = 0;
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&flags), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  const auto packed = m.packed();
  out.write(reinterpret_cast<const char*>(packed.data()),
            static_cast<std::streamsize>(packed.size() * sizeof(double)));
  if (!out) throw DataFormatError("write failed: " + path.string());
}

SymMatrix read_matrix_asmx(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  char magic[4];
  std::uint32_t dim = 0, flags = 0, reserved = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  in.read(reinterpret_cast<char*>(&flags), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataFormatError(path.string() + ": not an ASMX file (bad magic)");
  if (dim == 0 || dim > 1000000u)
    throw DataFormatError(path.string() + ": implausible dimension " + std::to_string(dim));
  if (!(flags & kFlagPackedUpper))
    throw DataFormatError(path.string() + ": unsupported ASMX layout flags");
  std::vector<double> packed(SymMatrix::packed_size(static_cast<int>(dim)));
  in.read(reinterpret_cast<char*>(packed.data()),
          static_cast<std::streamsize>(packed.size() * sizeof(double)));
  if (!in) throw DataFormatError(path.string() + ": truncated payload");
  return SymMatrix::from_packed(static_cast<int>(dim), std::move(packed));
}

void write_matrix(const SymMatrix& m, const std::filesystem::path& path) {
  if (path.extension() == ".asmx")
    write_matrix_asmx(m, path);
  else
    write_matrix_csv(m, path);
}

SymMatrix read_matrix(const std::filesystem::path& path) {
  if (path.extension() == ".asmx") return read_matrix_asmx(path);
  return read_matrix_csv(path);
}

}  // namespace asmf::io
