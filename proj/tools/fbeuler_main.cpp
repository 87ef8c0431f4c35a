#include <CLI11.hpp>
#include <iostream>

#include "fbeuler/errors.hpp"
#include "fbeuler/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fbeuler: free-boundary compressible flow laboratory"};
  std::string config_path, scenario, out_dir;
  std::uint64_t seed = 0;
  bool have_seed = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--scenario", scenario, "scenario name (overrides config)");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides config)");
  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  try {
    fbeuler::ScenarioConfig cfg;
    if (!config_path.empty()) {
      cfg = fbeuler::parse_config(config_path);
    }
    // flags win over the config file
    if (!scenario.empty()) cfg.scenario = scenario;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (have_seed) cfg.seed = seed;
    if (cfg.scenario.empty()) {
      std::cerr << "error: no scenario given (use --scenario or a config file)\n";
      return 2;
    }
    return fbeuler::run_scenario(cfg);
  } catch (const fbeuler::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
}
