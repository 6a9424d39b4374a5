#pragma once

#include <Eigen/Dense>

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "wsens/estimators.hpp"

namespace wsens::cli {

// Headered CSV held as strings. Fields may be double-quoted with "" escapes;
// `lines[r]` is the 1-based source line of data row r.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;

  // Throws InvalidArgument naming the column when it is absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

struct LoadOptions {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
  std::optional<std::string> cluster;
  std::vector<std::string> extra_numeric;  // e.g. a weights column
  bool drop_single_arm_clusters = false;
};

struct LoadedData {
  Dataset data;
  std::vector<std::string> cluster_levels;  // label for each cluster code
  std::vector<Eigen::VectorXd> extra;       // parallel to LoadOptions::extra_numeric
  std::vector<int> source_lines;            // CSV line of each kept unit
  std::size_t dropped_rows = 0;
};

// Numeric covariates enter as-is. A covariate with any non-numeric value is
// categorical and expands into indicators "name=level" for every level but
// the lexicographically first. Cluster labels may be any strings. Throws
// InvalidArgument (with line numbers) for missing or malformed values.
LoadedData load_dataset(const CsvTable& table, const LoadOptions& options);

// Parses a full-string double; std::nullopt for anything else.
std::optional<double> parse_double(const std::string& text);

}  // namespace wsens::cli
