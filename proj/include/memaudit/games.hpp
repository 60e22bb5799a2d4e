#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memaudit/defense.hpp"
#include "memaudit/fabrication.hpp"
#include "memaudit/geometry.hpp"
#include "memaudit/mia.hpp"
#include "memaudit/metrics.hpp"
#include "memaudit/model.hpp"
#include "memaudit/splits.hpp"
#include "memaudit/train.hpp"

namespace memaudit {

// Per-sample audit row produced by the game harnesses.
struct ScoreRecord {
  std::string sample_id;
  int member = 0;       // b
  int fabricated = 0;   // only nonmembers are ever fabricated
  int detected = 0;     // detector output, mfd protocol only
  double statistic = 0.0;
  double grad_norm = 0.0;
  double weight = 1.0;  // tanh(lambda*g) in the armia protocol, else 1
  StatisticKind kind = StatisticKind::kLoss;
  std::string variant = "none";
  double mahalanobis = std::numeric_limits<double>::quiet_NaN();
  double lid = std::numeric_limits<double>::quiet_NaN();
};

struct MixtureSpec {
  double fraction_members = 0.5;
  double fraction_fabricated = 0.25;
  double fraction_nonmembers = 0.25;
  double fabrication_probability = 0.5;

  void validate() const;
};

enum class Protocol { kMi, kMfa, kMfd, kArmia };
std::string to_string(Protocol p);

struct GameOutcome {
  Protocol protocol = Protocol::kMi;
  std::vector<ScoreRecord> records;
  // mfd bookkeeping
  double prefilter_tau = 0.0;
  std::size_t pool_size = 0;
};

struct MissingEnsembleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptySelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shared inputs of every game run. The ensemble is required for attack_r,
// lira and rmia. max_eval_per_side = 0 audits the full eval split.
struct GameContext {
  const Dataset* dataset = nullptr;
  const ClassifierModel* target = nullptr;
  const MembershipSplit* split = nullptr;
  const ShadowEnsemble* ensemble = nullptr;
  GradBackend backend = GradBackend::kExact;
  FDConfig fd_config;
  std::uint64_t seed = 0;
  int max_eval_per_side = 0;
  int rmia_population = 64;
  double rmia_gamma = 1.0;
};

// Fabricated inputs are cached per (sample, variant, epsilon, lambda) so the
// same perturbed tensors feed every statistic within a run.
class FabricationCache {
 public:
  const FabricationResult& get(const ClassifierModel& model,
                               const LabeledExample& ex,
                               const FabricationConfig& config);
  const FabricationResult* find(const std::string& sample_id,
                                const FabricationConfig& config) const;
  void put(const std::string& sample_id, const FabricationConfig& config,
           FabricationResult result);
  std::size_t size() const { return cache_.size(); }
  const std::map<std::string, FabricationResult>& entries() const {
    return cache_;
  }

 private:
  std::map<std::string, FabricationResult> cache_;
};

// Precomputes shadow-side calibration (LiRA fallback sigmas, RMIA population)
// and evaluates any statistic kind on a possibly-perturbed example.
class StatisticEvaluator {
 public:
  StatisticEvaluator(const GameContext& ctx, StatisticKind kind);
  double operator()(const LabeledExample& ex) const;
  StatisticKind kind() const { return kind_; }

 private:
  const GameContext& ctx_;
  StatisticKind kind_;
  std::optional<std::pair<double, double>> global_sigmas_;
  std::vector<LabeledExample> population_z_;
};

double gradient_norm_for(const GameContext& ctx, const LabeledExample& ex);

GameOutcome run_mi_game(const GameContext& ctx, StatisticKind kind);
GameOutcome run_mfa_game(const GameContext& ctx, StatisticKind kind,
                         const FabricationConfig& fab,
                         FabricationCache* cache = nullptr);
GameOutcome run_mfd_game(const GameContext& ctx, const FabricationConfig& fab,
                         const DetectorRule& detector,
                         FabricationCache* cache = nullptr);
GameOutcome run_armia_game(const GameContext& ctx, StatisticKind kind,
                           const FabricationConfig& fab,
                           const RobustWeightConfig& weight,
                           const MixtureSpec& mixture,
                           FabricationCache* cache = nullptr);

// Detector scores from an mfd outcome: positives are fabricated members and
// larger scores mean "more fabricated" (negated gradient norm).
std::vector<ScoredSample> detector_scores(const GameOutcome& outcome);

// Membership scores; for armia outcomes the stored weight is applied when
// weighted = true, or recomputed at the given lambda when provided.
std::vector<ScoredSample> membership_scores(const GameOutcome& outcome,
                                            bool weighted = false,
                                            std::optional<double> lambda =
                                                std::nullopt);

// Shadow-side lambda calibration: simulates the armia mixture on a shadow
// model and picks the grid argmax of the objective.
double calibrate_lambda(const GameContext& shadow_ctx, StatisticKind kind,
                        const FabricationConfig& fab,
                        const std::vector<double>& grid,
                        const MixtureSpec& mixture,
                        CalibrationObjective objective =
                            CalibrationObjective::kAuc,
                        FabricationCache* cache = nullptr);

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<ScoreRecord>& records,
                       GradBackend backend = GradBackend::kExact);
std::vector<ScoreRecord> read_records_csv(const std::filesystem::path& path);

}  // namespace memaudit
