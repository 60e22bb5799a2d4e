#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/games.hpp"

namespace memaudit {

struct ExperimentConfig {
  SyntheticSpec dataset;
  std::string arch_id = "cnn:8";
  int n_train = 256;
  int n_shadow = 8;
  int n_eval = 64;  // per side
  TrainConfig train;
  FabricationConfig fabrication;
  std::vector<StatisticKind> kinds = {StatisticKind::kLoss};
  std::vector<double> lambda_grid = {5, 10, 15, 20, 25, 30, 35};
  MixtureSpec mixture;
  GradBackend backend = GradBackend::kExact;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json experiment_config_json(const ExperimentConfig& config);
// Stable content hash of the canonical (key-sorted) config serialization.
std::string config_hash(const ExperimentConfig& config);

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageResult {
  std::string stage;
  bool cache_hit = false;
  std::vector<std::filesystem::path> artifacts;
  nlohmann::json metrics;
};

// Runs the pipeline stages against the artifact directory. Each stage writes
// a manifest with the config hash; a rerun with the same hash and intact
// artifacts is skipped.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);

  StageResult train();
  StageResult fabricate();
  StageResult audit();
  StageResult detect();
  StageResult robust();
  StageResult report();
  std::vector<StageResult> run_all();

  const ExperimentConfig& config() const { return config_; }

 private:
  bool stage_cached(const std::string& stage,
                    const std::vector<std::filesystem::path>& artifacts) const;
  void write_stage_manifest(const StageResult& result) const;
  void ensure_loaded();          // dataset + split + target
  void ensure_ensemble_loaded();
  void ensure_cache_loaded();    // fabricated tensors
  GameContext make_context() const;

  ExperimentConfig config_;
  std::string hash_;
  Dataset dataset_;
  MembershipSplit split_;
  ClassifierModel target_;
  ShadowEnsemble ensemble_;
  FabricationCache cache_;
  bool loaded_ = false;
  bool ensemble_loaded_ = false;
  bool cache_loaded_ = false;
};

// Minimal SVG polyline plot of one or more curves on the unit square.
void write_curve_svg(const std::filesystem::path& path,
                     const std::vector<std::pair<std::vector<double>,
                                                 std::vector<double>>>& curves,
                     const std::string& title, bool log_log = false);

}  // namespace memaudit
