#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

#include "bsdelab/config.hpp"
#include "bsdelab/suites.hpp"

using namespace bsdelab;

int main(int argc, char** argv) {
  CLI::App app{"Experiment runner for quadratic BSDEs under BMO market prices of risk"};
  std::string config_path, suite, out, report_dir;
  std::uint64_t seed = 0;
  std::size_t paths = 0;
  app.add_option("--config", config_path, "INI experiment config");
  app.add_option("--suite", suite, "figure-kq | table2 | continuum | classify | psi-path");
  app.add_option("--seed", seed, "seed, overrides the config");
  app.add_option("--out", out, "output directory, overrides the config");
  app.add_option("--paths", paths, "number of paths, overrides the config");
  auto* rep = app.add_subcommand("report", "summarise an artifact directory");
  rep->add_option("dir", report_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*rep) return report(report_dir, std::cout);

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (!suite.empty()) {
      const auto& names = suite_names();
      if (std::find(names.begin(), names.end(), suite) == names.end())
        throw ConfigError(0, 0, fmt::format("unknown suite '{}'", suite));
      cfg.suite = suite;
    }
    if (app.count("--seed")) {
      cfg.seed = seed;
      cfg.seeds = {seed};
    }
    if (app.count("--paths")) {
      if (paths < 1000) throw ConfigError(0, 0, "--paths must be at least 1000");
      cfg.n_paths = static_cast<Index>(paths);
    }
    if (!out.empty()) cfg.out = out;
    if (cfg.seeds.empty()) cfg.seeds = {cfg.seed};
    validate(cfg);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    const auto res = run_suite(cfg, cfg.out, std::cerr);
    for (const auto& c : res.checks)
      std::cout << fmt::format("[{}] {}: {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
    return res.passed() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
