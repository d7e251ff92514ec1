// audit-alloc: config-driven experiment runner.
//
// Exit codes: 0 success, 1 invalid config or input, 2 a suite criterion
// failed, 3 any other runtime failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "auditalloc/experiment.hpp"

namespace aa = auditalloc;

namespace {

int run(const std::string& config_path, const std::string& out_arg) {
  const auto cfg = aa::load_config(config_path);
  std::filesystem::path out;
  if (!out_arg.empty()) out = out_arg;
  else if (cfg.output_dir) out = *cfg.output_dir;
  else throw aa::ConfigError("no output directory: pass --out or set output_dir");
  const auto res = aa::run_experiment(cfg);
  aa::write_artifacts(res, cfg, out);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& m : res.models)
    std::cout << m.label << ": revenue " << m.metrics.revenue << ", overlap "
              << (m.metrics.oracle_overlap ? std::to_string(*m.metrics.oracle_overlap) : "NA") << '\n';
  return 0;
}

int suite(const std::string& name, const std::string& out, const std::vector<std::uint64_t>& seeds,
          std::int64_t n_records) {
  aa::SuiteOptions opt;
  if (!seeds.empty()) opt.seeds = seeds;
  opt.n_records = n_records;
  const auto res = aa::run_suite(name, out, opt);
  for (const auto& c : res.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.criterion << ": " << c.detail << '\n';
  return res.passed() ? 0 : 2;
}

int gen(const std::string& config_path, const std::string& out) {
  std::ifstream in(config_path);
  if (!in) throw aa::ConfigError("cannot read config " + config_path);
  aa::PopulationConfig pc;
  try {
    pc = nlohmann::json::parse(in).get<aa::PopulationConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw aa::ConfigError(config_path + ": " + e.what());
  }
  pc.validate();
  aa::save_population(aa::generate_population(pc), std::filesystem::path(out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit-selection simulator"};
  app.require_subcommand(1);

  std::string config, out;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment config and write its artifacts");
  run_cmd->add_option("--config", config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", out, "Output directory (defaults to the config's output_dir)");

  std::string suite_name;
  std::vector<std::uint64_t> seeds;
  std::int64_t n_records = 50'000;
  auto* suite_cmd = app.add_subcommand("suite", "Run a named acceptance batch");
  suite_cmd->add_option("name", suite_name, "Suite name")
      ->required()
      ->check(CLI::IsMember(aa::kSuiteNames));
  suite_cmd->add_option("--out", out, "Output directory")->required();
  suite_cmd->add_option("--seeds", seeds, "Seeds (default 0 1 2 3 4)");
  suite_cmd->add_option("--records", n_records, "Synthetic population size")
      ->check(CLI::PositiveNumber);

  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic population CSV");
  gen_cmd->add_option("--config", config, "Population config (JSON)")->required();
  gen_cmd->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) return run(config, out);
    if (*suite_cmd) return suite(suite_name, out, seeds, n_records);
    return gen(config, out);
  } catch (const aa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const aa::ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
