// infosep: run, sweep, ablate, report and gen-data.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 command line or config error,
// 3 dataset error (unreadable or empty data, no records to report),
// 4 at least one run diverged (records are still written).

#include "infosep/config.hpp"
#include "infosep/experiment.hpp"
#include "infosep/report.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace infosep;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDiverged = 4 };

struct Common {
  std::string config;
  std::string out;
  std::string seeds;
  std::string variant;
  int jobs = 0;
};

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("INFOSEP_OUT"); env && *env) return env;
  return "results";
}

config::ExperimentConfig load(const Common& c) {
  config::RawConfig raw = config::load_ini(c.config);
  if (!c.variant.empty()) config::set_value(raw, "model.variant", c.variant);
  config::ExperimentConfig cfg = config::interpret(raw);
  config::resolve_data_path(cfg, c.config);
  if (!c.seeds.empty()) cfg.seeds = config::parse_seeds(c.seeds);
  if (c.jobs > 0) cfg.jobs = c.jobs;
  return cfg;
}

void print_summary(const experiment::Aggregate& a) {
  std::cout << a.label << "  " << a.regime << "  test R^2 " << report::format_cell({a.n, a.n_diverged, a.mean, a.std})
            << "  (n=" << a.n;
  if (a.n_diverged) std::cout << ", diverged=" << a.n_diverged;
  std::cout << ")\n";
}

void add_common(CLI::App* cmd, Common& c, bool with_variant) {
  cmd->add_option("-c,--config", c.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "Output root (default: $INFOSEP_OUT or ./results)");
  cmd->add_option("--seeds", c.seeds, "Seed list overriding [run] seeds, e.g. 0-9 or 1,4,7");
  cmd->add_option("-j,--jobs", c.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  if (with_variant) cmd->add_option("--variant", c.variant, "Ablation variant A0..A3");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial information separation experiments"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, ablate_opts;
  auto* run_cmd = app.add_subcommand("run", "Train one configuration over its seeds");
  add_common(run_cmd, run_opts, true);
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over the [sweep] axes of a config");
  add_common(sweep_cmd, sweep_opts, true);
  auto* ablate_cmd = app.add_subcommand("ablate", "Run variants A0-A3 under identical seeds");
  add_common(ablate_cmd, ablate_opts, false);

  std::string report_dir, report_out;
  auto* report_cmd = app.add_subcommand("report", "Markdown and CSV tables from run records");
  report_cmd->add_option("records", report_dir, "Directory searched recursively for records")->required();
  report_cmd->add_option("-o,--out", report_out, "Where to write report.md / report.csv (default: records dir)");

  std::string gen_config, gen_out;
  std::optional<long long> gen_n;
  std::optional<unsigned long long> gen_seed;
  auto* gen_cmd = app.add_subcommand("gen-data", "Export the synthetic dataset as CSV");
  gen_cmd->add_option("-c,--config", gen_config, "Config whose [data] section is used")->check(CLI::ExistingFile);
  gen_cmd->add_option("-o,--out", gen_out, "Output CSV path")->required();
  gen_cmd->add_option("-n,--n-samples", gen_n, "Override data.n_samples");
  gen_cmd->add_option("--generator-seed", gen_seed, "Override data.generator_seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (run_cmd->parsed()) {
      const auto cfg = load(run_opts);
      const auto outcome = experiment::run(cfg, output_root(run_opts.out) / cfg.name, cfg.jobs);
      print_summary(outcome.summary);
      return outcome.any_diverged ? kDiverged : kOk;
    }
    if (sweep_cmd->parsed()) {
      const auto cfg = load(sweep_opts);
      const auto outcome = experiment::sweep(cfg, output_root(sweep_opts.out) / cfg.name, cfg.jobs);
      for (const auto& cell : outcome.cells) {
        for (std::size_t a = 0; a < outcome.axes.size(); ++a) {
          std::cout << outcome.axes[a].key << '=' << cell.values[a] << "  ";
        }
        print_summary(cell.outcome.summary);
      }
      return outcome.any_diverged ? kDiverged : kOk;
    }
    if (ablate_cmd->parsed()) {
      const auto cfg = load(ablate_opts);
      const auto outcome = experiment::ablate(cfg, output_root(ablate_opts.out) / cfg.name, cfg.jobs);
      for (const auto& v : outcome.variants) print_summary(v.summary);
      return outcome.any_diverged ? kDiverged : kOk;
    }
    if (report_cmd->parsed()) {
      const auto table = report::collect(report_dir, std::cerr);
      const fs::path out = report_out.empty() ? fs::path(report_dir) : fs::path(report_out);
      const std::string md = report::to_markdown(table);
      experiment::write_atomic(out / "report.md", md);
      experiment::write_atomic(out / "report.csv", report::to_csv(table));
      std::cout << md;
      return kOk;
    }
    if (gen_cmd->parsed()) {
      config::RawConfig raw = gen_config.empty() ? config::RawConfig{} : config::load_ini(gen_config);
      if (gen_n) config::set_value(raw, "data.n_samples", std::to_string(*gen_n));
      if (gen_seed) config::set_value(raw, "data.generator_seed", std::to_string(*gen_seed));
      const auto cfg = config::interpret(raw);
      experiment::generate_csv(cfg.data, gen_out);
      std::cout << "wrote " << cfg.data.synthetic.n_samples << " rows to " << gen_out << '\n';
      return kOk;
    }
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const data::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const report::ReportError& e) {
    std::cerr << "report error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
