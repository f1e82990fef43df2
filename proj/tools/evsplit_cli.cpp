// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.
//
// evsplit run      --config FILE [--set key=value ...]
// evsplit validate --config FILE [--set key=value ...]
// evsplit ablate   --config FILE [--seeds N] [--first-seed S] [--baseline] [--set key=value ...]

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evsplit/config.hpp"
#include "evsplit/engine.hpp"
#include "evsplit/error.hpp"

namespace {

evsplit::ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  evsplit::ExperimentConfig c;
  if (!path.empty()) c = evsplit::parse_config_file(path);
  return evsplit::apply_overrides(c, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split federated learning simulator with evidential aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "flat key = value config file");
    sub->add_option("-s,--set", overrides, "override, key=value (repeatable; wins over the file)");
  };

  auto* run = app.add_subcommand("run", "run one experiment and write its outputs");
  add_common(run);
  bool quiet = false;
  run->add_flag("-q,--quiet", quiet, "suppress the per-round log");

  auto* validate = app.add_subcommand("validate", "parse and validate a config, print the resolved values");
  add_common(validate);

  auto* ablate = app.add_subcommand("ablate", "run the ablation matrix over several seeds");
  add_common(ablate);
  int n_seeds = 10;
  std::uint64_t first_seed = 0;
  bool baseline = false;
  bool no_run_files = false;
  ablate->add_option("--seeds", n_seeds, "number of seeds")->check(CLI::PositiveNumber);
  ablate->add_option("--first-seed", first_seed, "first seed");
  ablate->add_flag("--baseline", baseline, "also run the uniform-averaging baseline");
  ablate->add_flag("--no-run-files", no_run_files, "only write the ablation report");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = load(config_path, overrides);
    if (*validate) {
      std::cout << evsplit::serialize_config(config);
      return 0;
    }
    if (*run) {
      auto state = evsplit::engine::init_state(config);
      evsplit::engine::ExperimentResult result{{}, std::move(state)};
      for (int t = 0; t < config.rounds; ++t) {
        result.reports.push_back(evsplit::engine::run_round(result.state));
        const auto& r = result.reports.back();
        if (!quiet) {
          std::cout << "round " << r.round << " loss " << r.task_loss << " acc " << r.test_accuracy << " aux "
                    << r.aux_accuracy << " pairs " << r.pairs.size() << " moved " << r.transferred << "\n";
        }
      }
      evsplit::engine::write_outputs(result);
      std::cout << "final acc " << result.reports.back().test_accuracy << ", outputs in " << config.output_dir << "\n";
      return 0;
    }
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_seeds; ++i) seeds.push_back(first_seed + static_cast<std::uint64_t>(i));
    const auto report = evsplit::engine::run_ablation(config, seeds, baseline, !no_run_files);
    evsplit::engine::write_ablation(config, report);
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
  } catch (const evsplit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const evsplit::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
