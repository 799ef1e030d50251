// CSV ingestion/dump of gradient batches (header role,index,g_1,...,g_d).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "asmf/errors.hpp"
#include "asmf/estimators.hpp"
#include "asmf/matrix_io.hpp"

namespace asmf {
namespace {

void write_rows(std::ofstream& out, const GradientRows& rows, const char* role,
                long index_base) {
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    out << role << ',' << (index_base + static_cast<long>(i));
    for (double v : rows.row(i)) out << ',' << io::format_double(v);
    out << "\n";
  }
}

struct ParsedRow {
  long index;
  std::vector<double> values;
};

GradientRows pack_rows(std::vector<ParsedRow>& rows, int dim) {
  std::sort(rows.begin(), rows.end(),
            [](const ParsedRow& a, const ParsedRow& b) { return a.index < b.index; });
  GradientRows out(dim, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].values.begin(), rows[i].values.end(), out.row(i).begin());
  return out;
}

}  // namespace

void write_batch_csv(const GradientBatch& batch, const std::filesystem::path& path) {
  batch.validate();
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot open " + path.string() + " for writing");
  out << "role,index";
  for (int k = 1; k <= batch.dim; ++k) out << ",g_" << k;
  out << "\n";
  write_rows(out, batch.hi_paired, "hi", 0);
  write_rows(out, batch.lo_paired, "lo_paired", 0);
  write_rows(out, batch.lo_extra, "lo_extra", static_cast<long>(batch.hi_paired.rows()));
  if (!out) throw DataFormatError("write failed: " + path.string());
}

GradientBatch read_batch_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw DataFormatError(path.string() + ": empty file");

  // Header fixes the dimension.
  int dim = 0;
  {
    std::size_t commas = std::count(line.begin(), line.end(), ',');
    if (line.rfind("role,index", 0) != 0 || commas < 3)
      throw DataFormatError(path.string() + ": expected header role,index,g_1,...,g_d");
    dim = static_cast<int>(commas) - 1;
  }

  std::vector<ParsedRow> hi, lo_paired, lo_extra;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.emplace_back(line.substr(start));
        break;
      }
      fields.emplace_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (!fields.back().empty() && fields.back().back() == '\r') fields.back().pop_back();
    if (fields.size() != static_cast<std::size_t>(dim) + 2)
      throw DataFormatError(path.string() + " line " + std::to_string(line_no) + ": has " +
                            std::to_string(fields.size() - 2) + " gradient columns, expected " +
                            std::to_string(dim));
    ParsedRow row;
    try {
      row.index = std::stol(fields[1]);
    } catch (...) {
      throw DataFormatError(path.string() + " line " + std::to_string(line_no) +
                            ": bad index '" + fields[1] + "'");
    }
    row.values.resize(dim);
    for (int k = 0; k < dim; ++k) {
      row.values[k] = io::parse_double(
          fields[static_cast<std::size_t>(k) + 2],
          path.string() + " line " + std::to_string(line_no));
      if (!std::isfinite(row.values[k]))
        throw DataFormatError(path.string() + " line " + std::to_string(line_no) +
                              ": non-finite gradient value");
    }
    if (fields[0] == "hi")
      hi.push_back(std::move(row));
    else if (fields[0] == "lo_paired")
      lo_paired.push_back(std::move(row));
    else if (fields[0] == "lo_extra")
      lo_extra.push_back(std::move(row));
    else
      throw DataFormatError(path.string() + " line " + std::to_string(line_no) +
                            ": unknown role '" + fields[0] + "'");
  }
  if (hi.empty()) throw DataFormatError(path.string() + ": no hi rows");

  auto require_unique = [&](std::vector<ParsedRow>& rows, const char* role) {
    std::map<long, int> seen;
    for (const auto& r : rows)
      if (++seen[r.index] > 1)
        throw DataFormatError(path.string() + ": duplicate " + role + " index " +
                              std::to_string(r.index));
  };
  require_unique(hi, "hi");
  require_unique(lo_paired, "lo_paired");
  require_unique(lo_extra, "lo_extra");

  // Pairing bijection between hi and lo_paired indices.
  if (!lo_paired.empty()) {
    std::vector<long> hi_idx, lo_idx;
    for (const auto& r : hi) hi_idx.push_back(r.index);
    for (const auto& r : lo_paired) lo_idx.push_back(r.index);
    std::sort(hi_idx.begin(), hi_idx.end());
    std::sort(lo_idx.begin(), lo_idx.end());
    if (hi_idx != lo_idx)
      throw DataFormatError(path.string() +
                            ": hi and lo_paired indices do not pair up one-to-one");
  }

  GradientBatch batch;
  batch.dim = dim;
  batch.hi_paired = pack_rows(hi, dim);
  if (!lo_paired.empty()) batch.lo_paired = pack_rows(lo_paired, dim);
  if (!lo_extra.empty()) batch.lo_extra = pack_rows(lo_extra, dim);
  batch.validate();
  return batch;
}

}  // namespace asmf
