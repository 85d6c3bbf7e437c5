#include "muoneq/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace muoneq {

namespace {

constexpr std::string_view kMeq1Magic = "MEQ1";
constexpr std::string_view kNpyMagic = "\x93NUMPY";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

double get_f64(std::string_view bytes, std::size_t offset) {
  return std::bit_cast<double>(get_le(bytes, offset, 8));
}

}  // namespace

std::string meq1_encode(const Matrix& A) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (A.rows() > static_cast<Index>(kMax) || A.cols() > static_cast<Index>(kMax)) {
    throw UsageError("meq1: dimension overflow (rows and cols must fit in 32 bits)");
  }
  std::string out(kMeq1Magic);
  out.reserve(12 + 8 * static_cast<std::size_t>(A.size()));
  put_u32(out, static_cast<std::uint32_t>(A.rows()));
  put_u32(out, static_cast<std::uint32_t>(A.cols()));
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(A(i, j)));
  }
  return out;
}

Matrix meq1_decode(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != kMeq1Magic) throw ParseError("meq1: bad magic");
  if (bytes.size() < 12) throw ParseError("meq1: truncated header");
  const std::uint64_t rows = get_le(bytes, 4, 4);
  const std::uint64_t cols = get_le(bytes, 8, 4);
  const std::uint64_t count = rows * cols;  // both < 2^32, cannot wrap
  if (count > (std::numeric_limits<std::uint64_t>::max() - 12) / 8 ||
      count > static_cast<std::uint64_t>(std::numeric_limits<Index>::max())) {
    throw ParseError("meq1: dimension overflow");
  }
  const std::uint64_t expected = 12 + 8 * count;
  if (bytes.size() < expected) {
    throw ParseError("meq1: truncated payload (declared " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", have " + std::to_string((bytes.size() - 12) / 8) + " values)");
  }
  if (bytes.size() > expected) throw ParseError("meq1: trailing bytes after payload");
  Matrix A(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t offset = 12;
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j, offset += 8) A(i, j) = get_f64(bytes, offset);
  }
  return A;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write to '" + path.string() + "' failed");
}

void meq1_write(const std::filesystem::path& path, const Matrix& A) { write_file(path, meq1_encode(A)); }

Matrix meq1_read(const std::filesystem::path& path) { return meq1_decode(read_file(path)); }

// --- NPY ---------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Value text following 'key': in the header dict, up to the matching
// delimiter at depth zero.
std::string_view dict_value(std::string_view header, std::string_view key) {
  for (char quote : {'\'', '"'}) {
    const std::string needle = std::string(1, quote) + std::string(key) + std::string(1, quote);
    auto pos = header.find(needle);
    if (pos == std::string_view::npos) continue;
    pos = header.find(':', pos + needle.size());
    if (pos == std::string_view::npos) break;
    std::size_t end = pos + 1;
    int depth = 0;
    char in_string = 0;
    for (; end < header.size(); ++end) {
      const char ch = header[end];
      if (in_string) {
        if (ch == in_string) in_string = 0;
        continue;
      }
      if (ch == '\'' || ch == '"') in_string = ch;
      else if (ch == '(') ++depth;
      else if (ch == ')') --depth;
      else if ((ch == ',' || ch == '}') && depth == 0) break;
    }
    return trim(header.substr(pos + 1, end - pos - 1));
  }
  throw ParseError("npy: malformed header (missing '" + std::string(key) + "')");
}

}  // namespace

Matrix npy_decode(std::string_view bytes) {
  if (bytes.size() < 10 || bytes.substr(0, 6) != kNpyMagic) throw ParseError("npy: bad magic");
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0) {
    throw ParseError("npy: unsupported format version " + std::to_string(major) + "." + std::to_string(minor));
  }
  const std::size_t header_len = get_le(bytes, 8, 2);
  if (bytes.size() < 10 + header_len) throw ParseError("npy: truncated header");
  const std::string_view header = bytes.substr(10, header_len);

  const std::string_view descr = dict_value(header, "descr");
  if (descr != "'<f8'" && descr != "\"<f8\"" && descr != "'=f8'" && descr != "'|f8'") {
    throw ParseError("npy: unsupported format: element type " + std::string(descr) +
                     " (only little-endian float64 is accepted)");
  }
  const std::string_view order = dict_value(header, "fortran_order");
  if (order == "True") throw ParseError("npy: unsupported format: Fortran order");
  if (order != "False") throw ParseError("npy: malformed header (fortran_order)");

  std::string_view shape = dict_value(header, "shape");
  if (shape.size() < 2 || shape.front() != '(' || shape.back() != ')') {
    throw ParseError("npy: malformed header (shape)");
  }
  shape = shape.substr(1, shape.size() - 2);
  std::vector<std::uint64_t> dims;
  while (!trim(shape).empty()) {
    const auto comma = shape.find(',');
    const std::string_view item = trim(shape.substr(0, comma));
    if (!item.empty()) {
      std::uint64_t v = 0;
      for (char ch : item) {
        if (ch < '0' || ch > '9') throw ParseError("npy: malformed header (shape)");
        if (v > (std::numeric_limits<std::uint64_t>::max() - 9) / 10) throw ParseError("npy: dimension overflow");
        v = v * 10 + static_cast<std::uint64_t>(ch - '0');
      }
      dims.push_back(v);
    }
    if (comma == std::string_view::npos) break;
    shape.remove_prefix(comma + 1);
  }
  if (dims.size() != 2) {
    throw ParseError("npy: unsupported rank " + std::to_string(dims.size()) + " (expected a 2-D array)");
  }
  const std::uint64_t rows = dims[0];
  const std::uint64_t cols = dims[1];
  if (cols != 0 && rows > static_cast<std::uint64_t>(std::numeric_limits<Index>::max()) / 8 / cols) {
    throw ParseError("npy: dimension overflow");
  }
  const std::size_t offset = 10 + header_len;
  const std::uint64_t count = rows * cols;
  if (bytes.size() - offset < 8 * count) throw ParseError("npy: truncated payload");
  if (bytes.size() - offset > 8 * count) throw ParseError("npy: trailing bytes after payload");
  Matrix A(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t pos = offset;
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j, pos += 8) A(i, j) = get_f64(bytes, pos);
  }
  return A;
}

Matrix npy_read(const std::filesystem::path& path) { return npy_decode(read_file(path)); }

std::string npy_encode(const Matrix& A) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(A.rows()) +
                       ", " + std::to_string(A.cols()) + "), }";
  // Pad so the payload starts on a 64-byte boundary, newline-terminated.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::string out(kNpyMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(header.size() & 0xff));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xff));
  out += header;
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(A(i, j)));
  }
  return out;
}

Matrix read_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.starts_with(kMeq1Magic)) return meq1_decode(bytes);
  if (bytes.starts_with(kNpyMagic)) return npy_decode(bytes);
  throw ParseError("'" + path.string() + "': bad magic (expected MEQ1 or NPY)");
}

// --- CSV ---------------------------------------------------------------------

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

namespace {

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string cell_text(const CsvCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return csv_escape(*s);
  if (const auto* d = std::get_if<double>(&cell)) return format_real(*d);
  return std::to_string(std::get<std::int64_t>(cell));
}

int mode_rank(std::string_view mode) {
  if (mode == "rc") return 0;
  if (mode == "r") return 1;
  if (mode == "c") return 2;
  if (mode == "none") return 3;
  return 4;
}

}  // namespace

std::string emit_csv(const CsvTable& table) {
  if (table.header.empty() || table.rows.empty()) throw UsageError("emit_csv: empty table");
  std::string out;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j) out.push_back(',');
    out += csv_escape(table.header[j]);
  }
  out.push_back('\n');
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw UsageError("emit_csv: ragged row");
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out.push_back(',');
      out += cell_text(row[j]);
    }
    out.push_back('\n');
  }
  return out;
}

CsvTable sweep_table(std::vector<SweepRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const SweepRecord& x, const SweepRecord& y) {
    if (x.matrix_id != y.matrix_id) return x.matrix_id < y.matrix_id;
    const int mx = mode_rank(x.mode), my = mode_rank(y.mode);
    if (mx != my) return mx < my;
    return x.k < y.k;
  });
  CsvTable table;
  table.header = {"matrix_id", "mode", "k", "error", "kappa_raw", "kappa_post", "stable_rank", "entropy"};
  for (const auto& r : records) {
    table.rows.push_back({r.matrix_id, r.mode, r.k, r.error, r.kappa_raw, r.kappa_post, r.stable_rank, r.entropy});
  }
  return table;
}

// --- SVG ---------------------------------------------------------------------

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 80;
constexpr double kRight = 180;
constexpr double kTop = 40;
constexpr double kBottom = 60;
constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.2f", v);
  return buf.data();
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

struct AxisMap {
  bool log = false;
  double lo = 0;
  double hi = 1;
  std::vector<std::pair<double, std::string>> ticks;  // in transformed units

  double transform(double v) const { return log ? std::log10(v) : v; }
};

AxisMap make_axis(const std::vector<double>& values, bool log) {
  AxisMap ax;
  ax.log = log;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    const double t = ax.transform(v);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
    if (hi <= lo) hi = lo + 1;
    const int span = static_cast<int>(hi - lo);
    const int stride = std::max(1, (span + 7) / 8);
    for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); e += stride) {
      ax.ticks.emplace_back(e, "1e" + std::to_string(e));
    }
  } else {
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step = (norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0) * mag;
    lo = std::floor(lo / step) * step;
    hi = std::ceil(hi / step) * step;
    for (double t = lo; t <= hi + 0.5 * step; t += step) {
      std::array<char, 32> buf{};
      std::snprintf(buf.data(), buf.size(), "%g", std::abs(t) < 1e-12 * step ? 0.0 : t);
      ax.ticks.emplace_back(t, buf.data());
    }
  }
  ax.lo = lo;
  ax.hi = hi;
  return ax;
}

}  // namespace

std::string emit_svg(const std::vector<Series>& series, const Axes& axes) {
  if (series.empty()) throw UsageError("emit_svg: no series");
  std::vector<std::vector<std::pair<double, double>>> kept(series.size());
  std::vector<double> xs, ys;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (series[s].x.size() != series[s].y.size()) throw UsageError("emit_svg: x/y length mismatch");
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      const double x = series[s].x[i], y = series[s].y[i];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if ((axes.x_log && x <= 0) || (axes.y_log && y <= 0)) continue;
      kept[s].emplace_back(x, y);
      xs.push_back(x);
      ys.push_back(y);
    }
  }
  if (xs.empty()) throw UsageError("emit_svg: no plottable points");

  const AxisMap ax = make_axis(xs, axes.x_log);
  const AxisMap ay = make_axis(ys, axes.y_log);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double t) { return kLeft + (t - ax.lo) / (ax.hi - ax.lo) * pw; };
  auto py = [&](double t) { return kTop + ph - (t - ay.lo) / (ay.hi - ay.lo) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(axes.title) << "</text>\n";
  out << "<rect x=\"" << fixed(kLeft) << "\" y=\"" << fixed(kTop) << "\" width=\"" << fixed(pw) << "\" height=\""
      << fixed(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& [t, label] : ax.ticks) {
    const double x = px(t);
    out << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(kTop) << "\" x2=\"" << fixed(x) << "\" y2=\""
        << fixed(kTop + ph) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(kTop + ph + 18) << "\" text-anchor=\"middle\">"
        << label << "</text>\n";
  }
  for (const auto& [t, label] : ay.ticks) {
    const double y = py(t);
    out << "<line x1=\"" << fixed(kLeft) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(kLeft + pw)
        << "\" y2=\"" << fixed(y) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << fixed(kLeft - 8) << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">" << label
        << "</text>\n";
  }
  out << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(kHeight - 16)
      << "\" text-anchor=\"middle\">" << xml_escape(axes.x_label) << "</text>\n";
  out << "<text transform=\"translate(20 " << fixed(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(axes.y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPalette.size()];
    if (!kept[s].empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (std::size_t i = 0; i < kept[s].size(); ++i) {
        if (i) out << ' ';
        out << fixed(px(ax.transform(kept[s][i].first))) << ',' << fixed(py(ay.transform(kept[s][i].second)));
      }
      out << "\"/>\n";
    }
    const double ly = kTop + 14 + 20 * static_cast<double>(s);
    const double lx = kLeft + pw + 16;
    out << "<line x1=\"" << fixed(lx) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(lx + 24) << "\" y2=\""
        << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fixed(lx + 30) << "\" y=\"" << fixed(ly + 4) << "\">" << xml_escape(series[s].name)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace muoneq
