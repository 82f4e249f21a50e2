#pragma once

// File formats: curve CSV, overlay CSV, flat key=value configuration files,
// and atomic file writes.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "grokfit/error.hpp"

namespace grokfit::io {

namespace fs = std::filesystem;

/// Shortest-round-trip-safe decimal form (17 significant digits).
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Compact label for a parameter value in file names, e.g. 1.003.
inline std::string format_label(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Parses the whole string as a finite double.
inline std::optional<double> parse_double(std::string_view s) {
  const std::string str = trim(s);
  if (str.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (end != str.c_str() + str.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  const std::string str = trim(s);
  if (str.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(str.c_str(), &end, 10);
  if (end != str.c_str() + str.size() || errno == ERANGE) return std::nullopt;
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void atomic_write(const fs::path& path, std::string_view content, bool overwrite) {
  if (!overwrite && fs::exists(path))
    throw UsageError("refusing to overwrite " + path.string() + " (pass --overwrite)");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Curve CSV: header `epoch,acc_train,acc_val` (either accuracy column may be absent).

struct CurveTable {
  std::vector<double> epochs;
  std::optional<std::vector<double>> acc_train;
  std::optional<std::vector<double>> acc_val;
};

inline std::string curve_csv(const std::vector<double>& epochs, const std::vector<double>* acc_train,
                             const std::vector<double>* acc_val) {
  std::string out = "epoch";
  if (acc_train) out += ",acc_train";
  if (acc_val) out += ",acc_val";
  out += '\n';
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    out += format_double(epochs[i]);
    if (acc_train) out += ',' + format_double((*acc_train)[i]);
    if (acc_val) out += ',' + format_double((*acc_val)[i]);
    out += '\n';
  }
  return out;
}

namespace detail {

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

inline NumericTable parse_numeric_csv(std::string_view text) {
  NumericTable t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (nl == text.size()) break;
      continue;
    }
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
      t.columns.resize(t.header.size());
    } else {
      if (cells.size() != t.header.size())
        throw ParseError("expected " + std::to_string(t.header.size()) + " fields, found " +
                             std::to_string(cells.size()),
                         line_no);
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto v = parse_double(cells[c]);
        if (!v) throw ParseError("field '" + cells[c] + "' is not a finite number", line_no);
        t.columns[c].push_back(*v);
      }
    }
    if (nl == text.size()) break;
  }
  if (t.header.empty()) throw ParseError("missing header", 1);
  return t;
}

}  // namespace detail

inline CurveTable parse_curve_csv(std::string_view text) {
  auto t = detail::parse_numeric_csv(text);
  if (t.header.empty() || t.header[0] != "epoch") throw ParseError("first column must be 'epoch'", 1);
  CurveTable out;
  out.epochs = std::move(t.columns[0]);
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    if (t.header[c] == "acc_train" && !out.acc_train) {
      out.acc_train = std::move(t.columns[c]);
    } else if (t.header[c] == "acc_val" && !out.acc_val) {
      out.acc_val = std::move(t.columns[c]);
    } else {
      throw ParseError("unexpected column '" + t.header[c] + "'", 1);
    }
  }
  if (!out.acc_train && !out.acc_val) throw ParseError("no accuracy column (acc_train or acc_val)", 1);
  return out;
}

inline CurveTable read_curve_csv(const fs::path& path) { return parse_curve_csv(read_file(path)); }

/// Header `epoch,observed,fitted`.
inline std::string overlay_csv(const std::vector<double>& epochs, const std::vector<double>& observed,
                               const std::vector<double>& fitted) {
  std::string out = "epoch,observed,fitted\n";
  for (std::size_t i = 0; i < epochs.size(); ++i)
    out += format_double(epochs[i]) + ',' + format_double(observed[i]) + ',' + format_double(fitted[i]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Flat key = value configuration. `#` and `;` start comments; [section]
// headers are accepted and ignored. Later assignments win.

class Config {
 public:
  static Config parse(std::string_view text) {
    Config cfg;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
      ++line_no;
      std::string line = raw;
      if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.resize(c);
      line = trim(line);
      if (line.empty() || line.front() == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
      const auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError("empty key", line_no);
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static Config load(const fs::path& path) { return parse(read_file(path)); }

  /// Applies a `key=value` override.
  void set(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw UsageError("override must look like key=value");
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("missing config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const auto v = parse_double(require(key));
    if (!v) throw UsageError("config key '" + key + "' is not a number");
    return *v;
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long long get_int(const std::string& key) const {
    const auto v = parse_int(require(key));
    if (!v) throw UsageError("config key '" + key + "' is not an integer");
    return *v;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  std::size_t get_count(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const auto v = get_int(key);
    if (v < 0) throw UsageError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }

  /// Comma- or whitespace-separated numbers.
  std::vector<double> get_double_list(const std::string& key) const {
    std::string s = require(key);
    for (auto& ch : s)
      if (ch == ' ' || ch == '\t') ch = ',';
    std::vector<double> out;
    for (const auto& cell : split(s, ',')) {
      if (cell.empty()) continue;
      const auto v = parse_double(cell);
      if (!v) throw UsageError("config key '" + key + "' has a non-numeric entry '" + cell + "'");
      out.push_back(*v);
    }
    if (out.empty()) throw UsageError("config key '" + key + "' is empty");
    return out;
  }

  std::vector<long long> get_int_list(const std::string& key) const {
    std::vector<long long> out;
    for (double v : get_double_list(key)) {
      if (v != std::floor(v)) throw UsageError("config key '" + key + "' must hold integers");
      out.push_back(static_cast<long long>(v));
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace grokfit::io
