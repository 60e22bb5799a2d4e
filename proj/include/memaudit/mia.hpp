#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "memaudit/model.hpp"
#include "memaudit/train.hpp"

namespace memaudit {

enum class StatisticKind { kLoss, kAttackR, kLira, kRmia };

std::string to_string(StatisticKind kind);
StatisticKind statistic_kind_from_string(const std::string& s);

// Predict member when statistic > tau (strict).
struct ThresholdRule {
  double tau = 0.0;
};

inline int decide_membership(double statistic, const ThresholdRule& rule) {
  return statistic > rule.tau ? 1 : 0;
}

// All statistics are oriented larger => more member-like.

// log p_y (equivalently -loss).
double loss_statistic(const ClassifierModel& model, const LabeledExample& ex);

// log(p / (1-p)) with p clamped into [1e-12, 1-1e-12].
double logit_scale(double p);

struct LiRAGaussians {
  double mu_in = 0.0;
  double mu_out = 0.0;
  double sigma_in = 1.0;
  double sigma_out = 1.0;
  bool per_sample = true;  // false when the global-variance fallback applied
};

inline constexpr double kLiraSigmaFloor = 1e-3;
inline constexpr int kLiraMinPerSampleModels = 4;

struct InsufficientModelsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyReferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyPopulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gaussian fit of the logit-scaled confidence across IN and OUT shadow
// models. When either side has fewer than kLiraMinPerSampleModels models the
// caller-provided global sigmas are used instead (per-sample means kept).
LiRAGaussians fit_lira(const ShadowEnsemble& ensemble, const LabeledExample& ex,
                       std::optional<double> global_sigma_in = std::nullopt,
                       std::optional<double> global_sigma_out = std::nullopt);

// log N(phi; mu_in, sigma_in) - log N(phi; mu_out, sigma_out).
double lira_statistic(const LiRAGaussians& g, double phi_target);

// Fraction of OUT reference models whose phi(p_y) falls strictly below the
// target's; a per-sample calibrated percentile.
double attack_r_statistic(const ShadowEnsemble& ensemble,
                          const LabeledExample& ex,
                          const ClassifierModel& target);

// Fraction of population z with LR(x)/LR(z) > gamma, where
// LR(u) = p_target(u) / mean_ref p_ref(u) at the true label.
double rmia_statistic(const ShadowEnsemble& ensemble,
                      const std::vector<LabeledExample>& population_z,
                      const LabeledExample& ex, const ClassifierModel& target,
                      double gamma = 1.0);

// Pooled within-sample standard deviations of phi across the eval examples,
// for the LiRA small-count fallback. Returns {sigma_in, sigma_out}.
std::pair<double, double> lira_global_sigmas(
    const ShadowEnsemble& ensemble, const std::vector<LabeledExample>& eval_set);

}  // namespace memaudit
