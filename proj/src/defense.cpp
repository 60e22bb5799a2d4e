#include "memaudit/defense.hpp"

#include "memaudit/metrics.hpp"

namespace memaudit {

std::string to_string(GradBackend b) {
  return b == GradBackend::kExact ? "exact" : "fd";
}

GradBackend grad_backend_from_string(const std::string& s) {
  if (s == "exact") return GradBackend::kExact;
  if (s == "fd" || s == "finite_difference") return GradBackend::kFiniteDifference;
  throw std::invalid_argument("unknown gradient backend: " + s);
}

double calibrate_lambda_from_scores(
    const std::vector<CalibrationRecord>& records,
    const std::vector<double>& grid, CalibrationObjective objective,
    double fpr_q) {
  if (grid.empty()) throw std::invalid_argument("empty lambda grid");
  if (records.empty()) throw std::invalid_argument("empty calibration set");

  double best_lambda = grid.front();
  double best_value = -1.0;
  for (double lambda : grid) {
    std::vector<ScoredSample> scored;
    scored.reserve(records.size());
    for (const auto& r : records)
      scored.push_back({ar_statistic(r.statistic, r.grad_norm, lambda),
                        r.member});
    RocCurve curve = roc_curve(scored);
    const double value = objective == CalibrationObjective::kAuc
                             ? auc(curve)
                             : tpr_at_fpr(curve, fpr_q);
    if (value > best_value) {  // strict: ties keep the smaller lambda
      best_value = value;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace memaudit
