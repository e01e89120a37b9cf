#pragma once

// Tabular datasets: CSV loading, one-hot expansion, z-scoring and stable
// column identities.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "x2g/common.hpp"

namespace x2g {

enum class ColumnKind { numeric, ordinal, categorical };

inline std::string_view to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::ordinal: return "ordinal";
    case ColumnKind::categorical: return "categorical";
  }
  return "numeric";
}

inline ColumnKind parse_column_kind(std::string_view s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "ordinal") return ColumnKind::ordinal;
  if (s == "categorical") return ColumnKind::categorical;
  throw SchemaError("unknown column kind '" + std::string(s) + "'");
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;

  bool operator==(const ColumnSpec&) const = default;
};

/// Row-major N x D value matrix with named columns and class labels.
///
/// Categorical and ordinal columns keep their raw strings in `raw[j]` until
/// one_hot_encode() replaces them; their slots in `values` hold NaN meanwhile.
struct TabularDataset {
  std::vector<ColumnSpec> columns;
  std::vector<double> values;
  std::vector<std::vector<std::string>> raw;
  std::vector<std::uint32_t> labels;
  std::vector<std::string> class_names;

  std::size_t rows() const { return labels.size(); }
  std::size_t cols() const { return columns.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols(), cols()};
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    out.reserve(columns.size());
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  bool has_pending_categories() const {
    for (const auto& c : columns)
      if (c.kind != ColumnKind::numeric) return true;
    return false;
  }

  bool operator==(const TabularDataset& o) const {
    if (columns != o.columns || raw != o.raw || labels != o.labels ||
        class_names != o.class_names || values.size() != o.values.size())
      return false;
    // bitwise, so pending-category NaN slots compare equal
    return std::memcmp(values.data(), o.values.data(),
                       values.size() * sizeof(double)) == 0;
  }
};

/// Per-column fitted z-score statistics.
struct PreprocessStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;
};

using Schema = std::map<std::string, ColumnKind, std::less<>>;

struct CsvOptions {
  std::string label_col = "label";
  Schema schema;
  /// When set, labels must come from this list and map to its order.
  std::optional<std::vector<std::string>> class_names;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line,
                                               std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted)
    throw FormatError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(cur));
  for (auto& f : out) f = std::string(trim(f));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses `name=kind` lines; blank lines and `#` comments are skipped.
inline Schema parse_schema(std::istream& in) {
  Schema schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("schema line " + std::to_string(line_no) +
                        ": expected name=kind");
    auto name = std::string(detail::trim(t.substr(0, eq)));
    schema[name] = parse_column_kind(detail::trim(t.substr(eq + 1)));
  }
  return schema;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file: " + path);
  return parse_schema(in);
}

inline TabularDataset parse_csv(std::istream& in, const CsvOptions& opt) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw FormatError("missing header row");
  auto header = detail::split_csv_line(line, line_no);

  std::size_t label_pos = header.size();
  {
    std::set<std::string, std::less<>> seen;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j].empty())
        throw FormatError("empty column name at position " + std::to_string(j));
      if (!seen.insert(header[j]).second)
        throw SchemaError("duplicate column name '" + header[j] + "'");
      if (header[j] == opt.label_col) label_pos = j;
    }
  }
  if (label_pos == header.size())
    throw FormatError("label column '" + opt.label_col + "' not found in header");

  TabularDataset ds;
  std::vector<std::size_t> src;  // csv field index per dataset column
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == label_pos) continue;
    ColumnSpec spec{header[j], ColumnKind::numeric};
    if (auto it = opt.schema.find(header[j]); it != opt.schema.end())
      spec.kind = it->second;
    ds.columns.push_back(std::move(spec));
    src.push_back(j);
  }
  for (const auto& [name, kind] : opt.schema) {
    if (name != opt.label_col &&
        std::find(header.begin(), header.end(), name) == header.end())
      warn("schema names column '" + name + "' absent from the CSV header");
  }

  const std::size_t d = ds.columns.size();
  ds.raw.assign(d, {});
  std::vector<std::string> label_strings;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() != header.size())
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    if (fields[label_pos].empty())
      throw LabelError("line " + std::to_string(line_no) + ": empty label");
    label_strings.push_back(fields[label_pos]);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& cell = fields[src[j]];
      if (ds.columns[j].kind == ColumnKind::numeric) {
        auto v = detail::parse_double(cell);
        if (!v)
          throw FormatError("line " + std::to_string(line_no) + ", column '" +
                            ds.columns[j].name + "': " +
                            (cell.empty() ? "missing numeric value"
                                          : "not a number: '" + cell + "'"));
        ds.values.push_back(*v);
      } else {
        ds.values.push_back(std::numeric_limits<double>::quiet_NaN());
        ds.raw[j].push_back(cell);
      }
    }
  }

  if (opt.class_names) {
    ds.class_names = *opt.class_names;
  } else {
    std::set<std::string> distinct(label_strings.begin(), label_strings.end());
    ds.class_names.assign(distinct.begin(), distinct.end());
  }
  std::unordered_map<std::string, std::uint32_t> class_index;
  for (std::uint32_t c = 0; c < ds.class_names.size(); ++c)
    class_index.emplace(ds.class_names[c], c);
  ds.labels.reserve(label_strings.size());
  for (const auto& s : label_strings) {
    auto it = class_index.find(s);
    if (it == class_index.end()) throw LabelError("unknown label value '" + s + "'");
    ds.labels.push_back(it->second);
  }
  if (ds.rows() >= 1 && ds.class_names.size() < 2)
    throw LabelError("need at least 2 classes, found " +
                     std::to_string(ds.class_names.size()));
  if (d == 0) throw FormatError("no feature columns besides the label");
  return ds;
}

inline TabularDataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path);
  return parse_csv(in, opt);
}

/// Writes numeric datasets with round-trip precision; the label column is
/// appended last.
inline void write_csv(const TabularDataset& ds, std::ostream& os,
                      const std::string& label_col = "label") {
  if (ds.has_pending_categories())
    throw SchemaError("write_csv supports numeric datasets only");
  for (const auto& c : ds.columns) os << c.name << ',';
  os << label_col << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, ds.at(i, j));
      os.write(buf, p - buf);
      os << ',';
    }
    os << ds.class_names[ds.labels[i]] << '\n';
  }
}

inline void write_csv(const TabularDataset& ds, const std::string& path,
                      const std::string& label_col = "label") {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write CSV file: " + path);
  write_csv(ds, os, label_col);
}

/// Replaces every categorical/ordinal column of k distinct values (in order
/// of first appearance) with k binary columns named `<col>=<value>`.
inline TabularDataset one_hot_encode(const TabularDataset& ds) {
  if (!ds.has_pending_categories()) return ds;
  const std::size_t n = ds.rows();

  struct Block {
    std::size_t src;
    std::vector<std::string> categories;  // empty for numeric passthrough
  };
  std::vector<Block> blocks;
  TabularDataset out;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    Block b{j, {}};
    if (ds.columns[j].kind == ColumnKind::numeric) {
      out.columns.push_back(ds.columns[j]);
    } else {
      std::set<std::string, std::less<>> seen;
      for (const auto& v : ds.raw[j])
        if (seen.insert(v).second) b.categories.push_back(v);
      for (const auto& v : b.categories)
        out.columns.push_back({ds.columns[j].name + "=" + v, ColumnKind::numeric});
    }
    blocks.push_back(std::move(b));
  }
  out.raw.assign(out.columns.size(), {});
  out.labels = ds.labels;
  out.class_names = ds.class_names;
  out.values.reserve(n * out.columns.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& b : blocks) {
      if (b.categories.empty() && ds.columns[b.src].kind == ColumnKind::numeric) {
        out.values.push_back(ds.at(i, b.src));
      } else {
        const auto& cell = ds.raw[b.src][i];
        for (const auto& v : b.categories) out.values.push_back(cell == v ? 1.0 : 0.0);
      }
    }
  }
  return out;
}

/// Applies previously fitted statistics; columns are matched by name.
inline TabularDataset apply_z_score(const TabularDataset& ds,
                                    const PreprocessStats& stats) {
  if (ds.has_pending_categories())
    throw SchemaError("z-scoring requires one-hot encoded data");
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < stats.names.size(); ++k) pos.emplace(stats.names[k], k);
  std::vector<std::size_t> stat_of(ds.cols());
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    auto it = pos.find(ds.columns[j].name);
    if (it == pos.end())
      throw SchemaError("no fitted statistics for column '" + ds.columns[j].name + "'");
    stat_of[j] = it->second;
  }
  TabularDataset out = ds;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      const std::size_t k = stat_of[j];
      out.at(i, j) = stats.constant[k] ? 0.0
                                       : (ds.at(i, j) - stats.mean[k]) / stats.stddev[k];
    }
  }
  return out;
}

/// Fits mean and population standard deviation over `fit_rows` and
/// transforms every row with them. Constant columns map to zero.
inline std::pair<TabularDataset, PreprocessStats> z_score(
    const TabularDataset& ds, std::span<const std::size_t> fit_rows) {
  if (fit_rows.empty()) throw UsageError("z_score: fit_rows must be nonempty");
  if (ds.has_pending_categories())
    throw SchemaError("z-scoring requires one-hot encoded data");
  PreprocessStats stats;
  const std::size_t d = ds.cols();
  stats.names = ds.column_names();
  stats.mean.assign(d, 0.0);
  stats.stddev.assign(d, 0.0);
  stats.constant.assign(d, false);
  const double inv_n = 1.0 / static_cast<double>(fit_rows.size());
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0;
    for (auto i : fit_rows) sum += ds.at(i, j);
    const double mu = sum * inv_n;
    double ss = 0;
    for (auto i : fit_rows) {
      const double dv = ds.at(i, j) - mu;
      ss += dv * dv;
    }
    stats.mean[j] = mu;
    stats.stddev[j] = std::sqrt(ss * inv_n);
    if (stats.stddev[j] == 0.0) {
      stats.constant[j] = true;
      warn("column '" + ds.columns[j].name + "' is constant on the fit rows; set to 0");
    }
  }
  return {apply_z_score(ds, stats), std::move(stats)};
}

/// Lexicographic rank of each column name. Independent of on-disk order.
inline std::map<std::string, std::uint32_t, std::less<>> column_index_map(
    std::span<const std::string> names) {
  std::vector<std::string> sorted(names.begin(), names.end());
  std::sort(sorted.begin(), sorted.end());
  if (auto dup = std::adjacent_find(sorted.begin(), sorted.end()); dup != sorted.end())
    throw SchemaError("duplicate column name '" + *dup + "'");
  std::map<std::string, std::uint32_t, std::less<>> out;
  for (std::uint32_t k = 0; k < sorted.size(); ++k) out.emplace(sorted[k], k);
  return out;
}

inline std::map<std::string, std::uint32_t, std::less<>> column_index_map(
    const TabularDataset& ds) {
  auto names = ds.column_names();
  return column_index_map(std::span<const std::string>(names));
}

/// Returns a dataset whose column k is input column perm[k].
inline TabularDataset permute_columns(const TabularDataset& ds,
                                      std::span<const std::size_t> perm) {
  if (perm.size() != ds.cols()) throw UsageError("permutation size mismatch");
  TabularDataset out;
  out.labels = ds.labels;
  out.class_names = ds.class_names;
  for (auto p : perm) {
    out.columns.push_back(ds.columns[p]);
    out.raw.push_back(ds.raw[p]);
  }
  out.values.resize(ds.values.size());
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t k = 0; k < perm.size(); ++k) out.at(i, k) = ds.at(i, perm[k]);
  return out;
}

/// Rows `idx` of `ds`, in the given order.
inline TabularDataset select_rows(const TabularDataset& ds,
                                  std::span<const std::size_t> idx) {
  TabularDataset out;
  out.columns = ds.columns;
  out.class_names = ds.class_names;
  out.raw.assign(ds.cols(), {});
  for (auto i : idx) {
    auto r = ds.row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    out.labels.push_back(ds.labels[i]);
    for (std::size_t j = 0; j < ds.cols(); ++j)
      if (!ds.raw[j].empty()) out.raw[j].push_back(ds.raw[j][i]);
  }
  return out;
}

}  // namespace x2g
