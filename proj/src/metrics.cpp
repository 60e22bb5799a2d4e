#include "memaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace memaudit {

RocCurve roc_curve(const std::vector<ScoredSample>& scores) {
  std::size_t pos = 0, neg = 0;
  for (const auto& s : scores) (s.label ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw SingleClassError("roc_curve needs both labels present");

  std::vector<ScoredSample> sorted(scores);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) {
              return a.score > b.score;
            });

  RocCurve c;
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);

  std::size_t tp = 0, fp = 0, i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == v) {
      (sorted[i].label ? tp : fp)++;
      ++i;
    }
    c.thresholds.push_back(v);  // operating point for any tau just below v
    c.fpr.push_back(static_cast<double>(fp) / neg);
    c.tpr.push_back(static_cast<double>(tp) / pos);
  }
  return c;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i)
    area += (curve.fpr[i] - curve.fpr[i - 1]) *
            0.5 * (curve.tpr[i] + curve.tpr[i - 1]);
  return area;
}

double tpr_at_fpr(const RocCurve& curve, double q) {
  if (q <= 0.0) return curve.tpr.front();
  if (q >= curve.fpr.back()) return curve.tpr.back();
  // Highest vertex with fpr <= q, first vertex with fpr > q.
  std::size_t lo = 0;
  while (lo + 1 < curve.fpr.size() && curve.fpr[lo + 1] <= q) ++lo;
  std::size_t hi = lo;
  while (hi < curve.fpr.size() - 1 && curve.fpr[hi] <= q) ++hi;
  if (curve.fpr[hi] == curve.fpr[lo]) return curve.tpr[hi];
  const double t =
      (q - curve.fpr[lo]) / (curve.fpr[hi] - curve.fpr[lo]);
  return curve.tpr[lo] + t * (curve.tpr[hi] - curve.tpr[lo]);
}

double eer(const RocCurve& curve) {
  // d = FPR - FNR is nondecreasing from -1 to +1 along the sweep.
  auto d = [&](std::size_t i) { return curve.fpr[i] + curve.tpr[i] - 1.0; };
  for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
    if (d(i) == 0.0) return curve.fpr[i];
    if (d(i) > 0.0) {
      if (i == 0) return curve.fpr[0];
      const double d0 = d(i - 1), d1 = d(i);
      const double s = -d0 / (d1 - d0);
      return curve.fpr[i - 1] + s * (curve.fpr[i] - curve.fpr[i - 1]);
    }
  }
  return curve.fpr.back();
}

TnrTprCurve tnr_tpr_curve(const std::vector<ScoredSample>& scores) {
  RocCurve roc = roc_curve(scores);
  TnrTprCurve c;
  c.thresholds = roc.thresholds;
  c.tpr = roc.tpr;
  c.tnr.reserve(roc.fpr.size());
  for (double f : roc.fpr) c.tnr.push_back(1.0 - f);
  return c;
}

double error_area(const TnrTprCurve& curve) {
  // Vertices run from (tnr=1, tpr=0) to (tnr=0, tpr=1); integrate over tnr.
  double area = 0.0;
  for (std::size_t i = 1; i < curve.tnr.size(); ++i)
    area += (curve.tnr[i - 1] - curve.tnr[i]) *
            0.5 * (curve.tpr[i] + curve.tpr[i - 1]);
  return 1.0 - area;
}

}  // namespace memaudit
