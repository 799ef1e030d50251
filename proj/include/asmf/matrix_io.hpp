#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "asmf/sym_matrix.hpp"

namespace asmf::io {

// Shortest round-trip decimal representation of a double (std::to_chars).
std::string format_double(double x);
double parse_double(std::string_view text, const std::string& context);

// Matrix CSV: one header line holding the dimension d, then d rows of d
// comma-separated values. Writers emit exactly symmetric content; readers
// reject files whose (i,j)/(j,i) entries disagree beyond 1e-12 relative.
void write_matrix_csv(const SymMatrix& m, const std::filesystem::path& path);
SymMatrix read_matrix_csv(const std::filesystem::path& path);

// ASMX: compact binary with a 16-byte header (magic "ASMX", u32 dim,
// u32 flags, u32 reserved) followed by the packed upper triangle, row major,
// as little-endian IEEE-754 doubles. Flag bit 0 marks packed-upper storage.
void write_matrix_asmx(const SymMatrix& m, const std::filesystem::path& path);
SymMatrix read_matrix_asmx(const std::filesystem::path& path);

// Dispatch on extension: ".asmx" binary, anything else CSV.
void write_matrix(const SymMatrix& m, const std::filesystem::path& path);
SymMatrix read_matrix(const std::filesystem::path& path);

}  // namespace asmf::io
