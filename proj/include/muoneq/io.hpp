#pragma once

// MEQ1 binary matrices, a reader for NPY v1.0 float64 arrays, and the CSV/SVG
// report writers. All text output is byte-deterministic.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "muoneq/linalg.hpp"

namespace muoneq {

/// "MEQ1", u32 rows, u32 cols (little endian), then rows*cols little-endian
/// IEEE-754 doubles in row-major order.
std::string meq1_encode(const Matrix& A);
Matrix meq1_decode(std::string_view bytes);
void meq1_write(const std::filesystem::path& path, const Matrix& A);
Matrix meq1_read(const std::filesystem::path& path);

/// Only 2-D '<f8' (or '=f8' / '|f8' on little-endian) C-order arrays are accepted.
Matrix npy_decode(std::string_view bytes);
Matrix npy_read(const std::filesystem::path& path);
/// Minimal writer for the same subset (used to produce fixtures and dumps).
std::string npy_encode(const Matrix& A);

/// Reads MEQ1 or NPY, chosen by the leading magic bytes.
Matrix read_matrix(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Shortest text that parses back to the same double ("%.17g", with
/// nan/inf spelled out).
std::string format_real(double v);

using CsvCell = std::variant<std::string, double, std::int64_t>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<CsvCell>> rows;
};

/// UsageError if the table has no rows or is not rectangular.
std::string emit_csv(const CsvTable& table);

/// One row of an NS sweep: the error of iterate k for a matrix under a mode.
struct SweepRecord {
  std::int64_t matrix_id = 0;
  std::string mode;  // rc | r | c | none
  std::int64_t k = 0;
  double error = 0;
  double kappa_raw = 0;
  double kappa_post = 0;
  double stable_rank = 0;
  double entropy = 0;
};

/// Sorted by matrix_id, then mode RC < R < C < None, then k.
CsvTable sweep_table(std::vector<SweepRecord> records);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool x_log = false;
  bool y_log = false;
};

/// Self-contained SVG line chart. Log axes get ticks at powers of ten
/// labelled "1eK". Non-positive values on a log axis are dropped.
std::string emit_svg(const std::vector<Series>& series, const Axes& axes);

}  // namespace muoneq
