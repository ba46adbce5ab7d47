#include "infosep/report.hpp"

#include "infosep/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace infosep::report {

using nlohmann::json;

namespace {

struct Parsed {
  std::string label;
  std::string regime;
  double r2_test = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
};

// Throws std::runtime_error with a reason when the file is not a usable record.
std::optional<Parsed> parse_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open");
  const json j = json::parse(in);
  if (!j.is_object()) throw std::runtime_error("not a JSON object");
  if (j.value("kind", "") != "run_record") return std::nullopt;  // aggregates and other files

  const std::string version = j.at("schema_version").get<std::string>();
  const auto dot = version.find('.');
  int major = -1;
  try {
    major = std::stoi(version.substr(0, dot));
  } catch (const std::exception&) {
    throw std::runtime_error("bad schema_version '" + version + "'");
  }
  if (major != experiment::kSchemaMajor) {
    throw std::runtime_error("unsupported schema major version " + std::to_string(major));
  }

  Parsed p;
  p.label = j.at("label").get<std::string>();
  p.regime = j.at("regime").get<std::string>();
  const json& test = j.at("r2").at("test");
  if (test.is_number()) p.r2_test = test.get<double>();
  else if (!test.is_null()) throw std::runtime_error("r2.test is neither a number nor null");
  p.diverged = j.at("diverged").get<bool>();
  return p;
}

// "N=30" before "N=500", "ratio=0.1" before "ratio=0.7"; other text sorts lexically.
bool regime_less(const std::string& a, const std::string& b) {
  const auto ea = a.find('=');
  const auto eb = b.find('=');
  if (ea != std::string::npos && eb != std::string::npos && a.substr(0, ea) == b.substr(0, eb)) {
    try {
      const double va = std::stod(a.substr(ea + 1));
      const double vb = std::stod(b.substr(eb + 1));
      if (va != vb) return va < vb;
    } catch (const std::exception&) {
    }
  }
  return a < b;
}

std::string fixed3(double v) {
  if (!std::isfinite(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

Table collect(const fs::path& dir, std::ostream& warnings) {
  if (!fs::is_directory(dir)) throw ReportError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  std::map<std::pair<std::string, std::string>, int> diverged;
  Table t;
  for (const auto& f : files) {
    std::optional<Parsed> p;
    try {
      p = parse_record(f);
    } catch (const std::exception& e) {
      warnings << "warning: skipping " << f.string() << ": " << e.what() << '\n';
      ++t.skipped;
      continue;
    }
    if (!p) continue;
    ++t.records;
    const auto key = std::make_pair(p->label, p->regime);
    values[key].push_back(p->r2_test);
    if (p->diverged) ++diverged[key];
  }
  if (t.records == 0) throw ReportError(dir.string() + ": no valid run records");

  std::set<std::string> rows;
  std::set<std::string> cols;
  for (const auto& [key, v] : values) {
    rows.insert(key.first);
    cols.insert(key.second);
    Cell c;
    c.n = static_cast<int>(v.size());
    c.n_diverged = diverged[key];
    std::tie(c.mean, c.std) = experiment::mean_std(v);
    t.cells[key] = c;
  }
  t.rows.assign(rows.begin(), rows.end());
  t.columns.assign(cols.begin(), cols.end());
  std::sort(t.columns.begin(), t.columns.end(), regime_less);
  return t;
}

std::string format_cell(const Cell& c) { return fixed3(c.mean) + " ± " + fixed3(c.std); }

std::string to_markdown(const Table& t) {
  std::map<std::string, double> best;
  for (const auto& col : t.columns) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& row : t.rows) {
      const auto it = t.cells.find({row, col});
      if (it != t.cells.end() && std::isfinite(it->second.mean)) m = std::max(m, it->second.mean);
    }
    best[col] = m;
  }

  std::ostringstream md;
  md << "| Model |";
  for (const auto& col : t.columns) md << ' ' << col << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& row : t.rows) {
    md << "| " << row << " |";
    for (const auto& col : t.columns) {
      const auto it = t.cells.find({row, col});
      if (it == t.cells.end()) {
        md << "  |";
        continue;
      }
      const bool bold = std::isfinite(it->second.mean) && it->second.mean == best[col];
      md << ' ' << (bold ? "**" : "") << format_cell(it->second) << (bold ? "**" : "") << " |";
    }
    md << '\n';
  }
  return md.str();
}

std::string to_csv(const Table& t) {
  std::ostringstream csv;
  csv << "model,regime,n,n_diverged,r2_test_mean,r2_test_std\n";
  char buf[64];
  for (const auto& row : t.rows) {
    for (const auto& col : t.columns) {
      const auto it = t.cells.find({row, col});
      if (it == t.cells.end()) continue;
      const Cell& c = it->second;
      csv << row << ',' << col << ',' << c.n << ',' << c.n_diverged << ',';
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", c.mean, c.std);
      csv << buf << '\n';
    }
  }
  return csv.str();
}

}  // namespace infosep::report
