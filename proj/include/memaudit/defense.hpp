#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace memaudit {

enum class GradBackend { kExact, kFiniteDifference };

std::string to_string(GradBackend b);
GradBackend grad_backend_from_string(const std::string& s);

// Predict fabricated when the gradient norm is <= tau_prime (inclusive).
struct DetectorRule {
  double tau_prime = 0.0;
  GradBackend backend = GradBackend::kExact;
};

inline int mfd_detect(double g, const DetectorRule& rule) {
  if (g < 0.0) throw std::invalid_argument("gradient norm must be >= 0");
  return g <= rule.tau_prime ? 1 : 0;
}

// tanh(lambda * g): monotone in g, bounded in [0,1).
inline double robustness_weight(double g, double lambda) {
  if (g < 0.0) throw std::invalid_argument("gradient norm must be >= 0");
  if (lambda <= 0.0) throw std::invalid_argument("lambda must be > 0");
  return std::tanh(lambda * g);
}

// w(g, lambda) * S; thresholded by the usual membership rule.
inline double ar_statistic(double statistic, double g, double lambda) {
  return robustness_weight(g, lambda) * statistic;
}

struct RobustWeightConfig {
  double lambda = 10.0;
  std::vector<double> grid = {5, 10, 15, 20, 25, 30, 35};
};

enum class CalibrationObjective { kAuc, kTprAtFpr };

// One audited sample as seen by the calibration: base statistic, gradient
// norm and the member bit (fabricated and nonmembers both carry label 0).
struct CalibrationRecord {
  double statistic = 0.0;
  double grad_norm = 0.0;
  int member = 0;
};

// Evaluates the objective for each lambda on the weighted statistic
// tanh(lambda*g)*S and returns the argmax; ties break toward smaller lambda.
double calibrate_lambda_from_scores(const std::vector<CalibrationRecord>& records,
                                    const std::vector<double>& grid,
                                    CalibrationObjective objective =
                                        CalibrationObjective::kAuc,
                                    double fpr_q = 0.1);

}  // namespace memaudit
