// pan: preprocess | synthesize | train | evaluate | recommend
//
//   pan train --config run.cfg --epochs 20 --dim 64
//
// Settings come from defaults, then the --config file, then --key value flags.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "pan/commands.hpp"
#include "pan/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Session-based next-item recommendation with parallel attention"};
  app.require_subcommand(1);

  struct Sub {
    std::string config_path;
    std::map<std::string, std::string> overrides;
  };
  std::map<std::string, Sub> subs;
  const std::pair<const char*, const char*> commands[] = {
      {"preprocess", "Filter, augment and split click logs into a dataset directory"},
      {"synthesize", "Write a synthetic click corpus with topic drift"},
      {"train", "Train a model and write the best checkpoint plus an epoch log"},
      {"evaluate", "Report Recall@K and MRR@K on the test split"},
      {"recommend", "Print the top-K next items for an inline session"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    auto& state = subs[name];
    sub->add_option("--config", state.config_path, "key = value config file");
    for (const auto& [key, def] : pan::config_defaults()) {
      sub->add_option_function<std::string>(
          "--" + key, [&state, key = key](const std::string& v) { state.overrides[key] = v; },
          "default: " + (def.empty() ? std::string("(none)") : def));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? pan::kExitOk : pan::kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const Sub& chosen = subs[name];
  pan::RunConfig cfg;
  try {
    if (!chosen.config_path.empty()) cfg.load_file(chosen.config_path);
    for (const auto& [k, v] : chosen.overrides) cfg.set(k, v);
  } catch (const pan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pan::kExitUsage;
  }
  return pan::run_command(name, cfg, std::cout, std::cerr);
}
