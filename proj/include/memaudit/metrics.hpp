#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace memaudit {

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 1 = positive
};

// Empirical ROC. Vertices run from threshold +inf (0,0) to -inf (1,1);
// tied scores move across the threshold together, so AUC matches the
// pair-ordering probability with ties counted 1/2.
struct RocCurve {
  std::vector<double> thresholds;  // aligned with fpr/tpr, +inf first
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::string positive_label_meaning = "positive";
};

struct SingleClassError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RocCurve roc_curve(const std::vector<ScoredSample>& scores);
double auc(const RocCurve& curve);
// Linear interpolation of TPR at FPR=q between bracketing vertices.
double tpr_at_fpr(const RocCurve& curve, double q);
// Operating point where FPR equals FNR (=1-TPR), interpolated along the sweep.
double eer(const RocCurve& curve);

// TNR-TPR trade-off for the fabrication game: x = TNR over fabricated
// members (label 0), y = TPR over true members (label 1), swept over the
// membership threshold.
struct TnrTprCurve {
  std::vector<double> thresholds;
  std::vector<double> tnr;
  std::vector<double> tpr;
};

TnrTprCurve tnr_tpr_curve(const std::vector<ScoredSample>& scores);
// 1 - trapezoidal area under the TNR-TPR curve; larger = stronger fabrication.
double error_area(const TnrTprCurve& curve);

}  // namespace memaudit
