#pragma once

// Shared helpers for the test suite: small trained fixtures and independent
// metric oracles used to cross-check the library implementations.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "memaudit/dataset.hpp"
#include "memaudit/metrics.hpp"
#include "memaudit/mia.hpp"
#include "memaudit/splits.hpp"
#include "memaudit/train.hpp"

namespace testsup {

// Probability that a random positive outranks a random negative, ties 1/2,
// by exhaustive pair counting. Independent oracle for trapezoidal AUC.
inline double pair_count_auc(const std::vector<memaudit::ScoredSample>& s) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (const auto& p : s) {
    if (!p.label) continue;
    for (const auto& n : s) {
      if (n.label) continue;
      ++pairs;
      if (p.score > n.score)
        num += 1.0;
      else if (p.score == n.score)
        num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

// Brute-force TPR at FPR=q: evaluate (fpr, tpr) at every distinct threshold
// and interpolate manually between the bracketing operating points.
inline double brute_tpr_at_fpr(const std::vector<memaudit::ScoredSample>& s,
                               double q) {
  std::vector<double> cuts;
  for (const auto& x : s) cuts.push_back(x.score);
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::size_t pos = 0, neg = 0;
  for (const auto& x : s) (x.label ? pos : neg)++;
  auto rates = [&](double tau) {
    std::size_t tp = 0, fp = 0;
    for (const auto& x : s)
      if (x.score >= tau) (x.label ? tp : fp)++;
    return std::pair<double, double>{static_cast<double>(fp) / neg,
                                     static_cast<double>(tp) / pos};
  };
  double lo_f = 0.0, lo_t = 0.0;
  for (double tau : cuts) {
    auto [f, t] = rates(tau);
    if (f > q) {
      if (f == lo_f) return t;
      return lo_t + (q - lo_f) / (f - lo_f) * (t - lo_t);
    }
    lo_f = f;
    lo_t = t;
  }
  return 1.0;
}

inline std::vector<memaudit::ScoredSample> random_scores(std::mt19937_64& rng,
                                                         int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution lab(0.5);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::vector<memaudit::ScoredSample> s;
  bool seen[2] = {false, false};
  for (int i = 0; i < n; ++i) {
    // Mix continuous and heavily tied scores to exercise tie grouping.
    const double v = (i % 3 == 0) ? coarse(rng) / 10.0 : u(rng);
    const int l = lab(rng) ? 1 : 0;
    seen[l] = true;
    s.push_back({v, l});
  }
  if (!seen[0]) s.push_back({u(rng), 0});
  if (!seen[1]) s.push_back({u(rng), 1});
  return s;
}

// A small trained classifier with shadow models, shared across test cases.
struct TinyWorld {
  memaudit::Dataset dataset;
  memaudit::MembershipSplit split;
  memaudit::ClassifierModel target;
  memaudit::ShadowEnsemble ensemble;
};

inline const TinyWorld& tiny_world() {
  static const TinyWorld world = [] {
    TinyWorld w;
    memaudit::SyntheticSpec spec;
    spec.n_classes = 3;
    spec.channels = 1;
    spec.height = 6;
    spec.width = 6;
    spec.n_examples = 300;
    spec.noise_std = 0.25;
    spec.seed = 11;
    w.dataset = memaudit::make_synthetic_dataset(spec);
    w.split = memaudit::make_membership_splits(w.dataset, 48, 6, 21, 24);
    memaudit::TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.batch_size = 16;
    tc.epochs = 60;
    tc.weight_decay = 1e-5;
    tc.augment = false;
    tc.seed = 31;
    w.target = memaudit::train_classifier(w.dataset, w.split.train_members,
                                          "mlp:24", tc);
    tc.seed = 41;
    w.ensemble = memaudit::train_shadow_ensemble(w.dataset, w.split, "mlp:24",
                                                 tc, 6);
    return w;
  }();
  return world;
}

}  // namespace testsup
