#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "memaudit/experiment.hpp"

namespace {

struct Cli {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  int workers = 1;
};

memaudit::ExperimentConfig load_config(const Cli& cli) {
  auto config = memaudit::load_experiment_config(cli.config_path);
  if (!cli.out_dir.empty()) config.out_dir = cli.out_dir;
  if (cli.seed) config.seed = *cli.seed;
  if (cli.backend)
    config.backend = memaudit::grad_backend_from_string(*cli.backend);
  config.validate();
  return config;
}

void print_stage(const memaudit::StageResult& r) {
  std::cout << "[" << r.stage << "] "
            << (r.cache_hit ? "cache hit, skipped" : "done");
  if (!r.metrics.empty() && !r.cache_hit)
    std::cout << " " << r.metrics.dump();
  std::cout << "\n";
}

int run_stage(const Cli& cli, const std::string& stage) {
  try {
    memaudit::Pipeline pipeline(load_config(cli));
    if (stage == "train") print_stage(pipeline.train());
    else if (stage == "fabricate") print_stage(pipeline.fabricate());
    else if (stage == "audit") print_stage(pipeline.audit());
    else if (stage == "detect") print_stage(pipeline.detect());
    else if (stage == "robust") print_stage(pipeline.robust());
    else if (stage == "report") print_stage(pipeline.report());
    else if (stage == "all")
      for (const auto& r : pipeline.run_all()) print_stage(r);
    return 0;
  } catch (const memaudit::MissingArtifactError& e) {
    std::cerr << "[" << stage << "] missing prerequisite: " << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "[" << stage << "] error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"membership audit toolkit: fabrication, detection, "
               "robust statistics"};
  app.require_subcommand(1);

  Cli cli;
  app.add_option("--config", cli.config_path, "experiment config (json)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", cli.out_dir, "output directory override");
  app.add_option("--seed", cli.seed, "master seed override");
  app.add_option("--backend", cli.backend,
                 "gradient backend override: exact or fd")
      ->check(CLI::IsMember({"exact", "fd"}));
  app.add_option("--workers", cli.workers, "worker count (reserved)")
      ->check(CLI::PositiveNumber);

  std::string chosen;
  for (const auto& name :
       {"train", "fabricate", "audit", "detect", "robust", "report", "all"}) {
    auto* sub = app.add_subcommand(name);
    sub->callback([&chosen, name] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);
  return run_stage(cli, chosen);
}
