#include "wsens_cli/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "wsens/errors.hpp"

namespace wsens::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN"; }

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InvalidArgument(fmt::format("column '{}' not found in input", name));
  return static_cast<std::size_t>(it - header.begin());
}

std::optional<double> parse_double(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  int line = 1;
  int record_line = 1;

  auto end_field = [&] {
    record.push_back(field_was_quoted ? field : trim(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (table.header.empty()) {
        table.header = std::move(record);
      } else {
        if (record.size() != table.header.size()) {
          throw InvalidArgument(fmt::format("line {}: expected {} fields, found {}", record_line,
                                            table.header.size(), record.size()));
        }
        table.rows.push_back(std::move(record));
        table.lines.push_back(record_line);
      }
    }
    record.clear();
    record_line = line;
  };

  char c = 0;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!trim(field).empty()) throw InvalidArgument(fmt::format("line {}: stray quote", line));
        field.clear();
        quoted = true;
        field_was_quoted = true;
        break;
      case ',': end_field(); break;
      case '\r': break;
      case '\n':
        ++line;
        end_record();
        break;
      default: field += c;
    }
  }
  if (quoted) throw InvalidArgument(fmt::format("line {}: unterminated quoted field", record_line));
  if (!field.empty() || !record.empty()) end_record();
  if (table.header.empty()) throw InvalidArgument("input has no header row");
  std::set<std::string> seen;
  for (const auto& h : table.header) {
    if (!seen.insert(h).second) throw InvalidArgument(fmt::format("duplicate column '{}' in header", h));
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument(fmt::format("cannot open '{}'", path));
  return read_csv(in);
}

LoadedData load_dataset(const CsvTable& table, const LoadOptions& options) {
  const std::size_t y_col = table.column(options.outcome);
  const std::size_t d_col = table.column(options.treatment);
  std::vector<std::size_t> x_cols;
  for (const auto& name : options.covariates) x_cols.push_back(table.column(name));
  std::vector<std::size_t> extra_cols;
  for (const auto& name : options.extra_numeric) extra_cols.push_back(table.column(name));
  const std::optional<std::size_t> c_col =
      options.cluster ? std::optional(table.column(*options.cluster)) : std::nullopt;

  auto number = [&](std::size_t r, std::size_t col) {
    const std::string& cell = table.rows[r][col];
    const auto v = parse_double(cell);
    if (!v) {
      throw InvalidArgument(fmt::format("line {}: column '{}' has {} value '{}'", table.lines[r],
                                        table.header[col], is_missing(cell) ? "a missing" : "a non-numeric",
                                        cell));
    }
    return *v;
  };

  // Row filter: optionally drop clusters that contain a single treatment arm.
  std::vector<std::size_t> keep;
  if (options.drop_single_arm_clusters) {
    if (!c_col) throw InvalidArgument("--drop-single-arm-clusters needs a cluster column");
    std::map<std::string, std::pair<bool, bool>> arms;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      auto& a = arms[table.rows[r][*c_col]];
      (number(r, d_col) == 1.0 ? a.second : a.first) = true;
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& a = arms[table.rows[r][*c_col]];
      if (a.first && a.second) keep.push_back(r);
    }
  } else {
    keep.resize(table.rows.size());
    for (std::size_t r = 0; r < keep.size(); ++r) keep[r] = r;
  }
  if (keep.empty()) throw InvalidArgument("no rows left to analyze");
  const auto n = static_cast<Eigen::Index>(keep.size());

  LoadedData out;
  out.dropped_rows = table.rows.size() - keep.size();
  Dataset& data = out.data;
  data.y.resize(n);
  data.d.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = keep[static_cast<std::size_t>(i)];
    out.source_lines.push_back(table.lines[r]);
    data.y[i] = number(r, y_col);
    data.d[i] = number(r, d_col);
    if (data.d[i] != 0.0 && data.d[i] != 1.0) {
      throw InvalidArgument(fmt::format("line {}: treatment '{}' must be 0 or 1", table.lines[r],
                                        options.treatment));
    }
  }

  std::vector<Eigen::VectorXd> columns;
  for (std::size_t k = 0; k < x_cols.size(); ++k) {
    const std::size_t col = x_cols[k];
    bool numeric = true;
    for (auto r : keep) {
      const std::string& cell = table.rows[r][col];
      if (is_missing(cell)) {
        throw InvalidArgument(fmt::format("line {}: column '{}' has a missing value", table.lines[r],
                                          table.header[col]));
      }
      numeric = numeric && parse_double(cell).has_value();
    }
    if (numeric) {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = number(keep[static_cast<std::size_t>(i)], col);
      columns.push_back(std::move(v));
      data.names.push_back(table.header[col]);
      data.sources.push_back(table.header[col]);
      continue;
    }
    std::set<std::string> levels;
    for (auto r : keep) levels.insert(table.rows[r][col]);
    for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = table.rows[keep[static_cast<std::size_t>(i)]][col] == *it ? 1.0 : 0.0;
      columns.push_back(std::move(v));
      data.names.push_back(table.header[col] + "=" + *it);
      data.sources.push_back(table.header[col]);
    }
  }
  data.x.resize(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) data.x.col(static_cast<Eigen::Index>(k)) = columns[k];

  for (auto col : extra_cols) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = number(keep[static_cast<std::size_t>(i)], col);
    out.extra.push_back(std::move(v));
  }

  if (c_col) {
    std::set<std::string> labels;
    for (auto r : keep) {
      const std::string& cell = table.rows[r][*c_col];
      if (is_missing(cell)) {
        throw InvalidArgument(fmt::format("line {}: cluster column '{}' has a missing value",
                                          table.lines[r], table.header[*c_col]));
      }
      labels.insert(cell);
    }
    out.cluster_levels.assign(labels.begin(), labels.end());
    std::vector<int> codes;
    codes.reserve(keep.size());
    for (auto r : keep) {
      const auto it = std::lower_bound(out.cluster_levels.begin(), out.cluster_levels.end(),
                                       table.rows[r][*c_col]);
      codes.push_back(static_cast<int>(it - out.cluster_levels.begin()));
    }
    data.cluster = std::move(codes);
  }
  data.validate();
  return out;
}

}  // namespace wsens::cli
