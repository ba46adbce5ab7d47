#pragma once

// Summary tables over a directory of run records: one row per model label,
// one column per data regime, cells "mean ± std" of test R^2.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace infosep::report {

namespace fs = std::filesystem;

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  int n = 0;
  int n_diverged = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std; NaN when n < 2
};

struct Table {
  std::vector<std::string> rows;     // model labels
  std::vector<std::string> columns;  // regimes, ordered naturally (N=30 < N=500)
  std::map<std::pair<std::string, std::string>, Cell> cells;
  int records = 0;
  int skipped = 0;
};

/// Reads every *.json run record below `dir`. Malformed files and unknown
/// schema major versions are skipped with a line on `warnings`. Throws
/// ReportError when `dir` is missing or holds no valid record.
Table collect(const fs::path& dir, std::ostream& warnings);

/// "0.500 ± 0.000"; the std reads "n/a" for a single record.
std::string format_cell(const Cell& c);

/// Column maxima (by mean) in bold.
std::string to_markdown(const Table& t);
std::string to_csv(const Table& t);

}  // namespace infosep::report
