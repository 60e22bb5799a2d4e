#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "memaudit/defense.hpp"
#include "support.hpp"

using namespace memaudit;

TEST_CASE("detector threshold is inclusive") {
  DetectorRule rule{0.5, GradBackend::kExact};
  CHECK(mfd_detect(0.4, rule) == 1);
  CHECK(mfd_detect(0.5, rule) == 1);  // boundary counts as fabricated
  CHECK(mfd_detect(0.51, rule) == 0);
  CHECK_THROWS(mfd_detect(-0.1, rule));
}

TEST_CASE("robustness weight is a bounded monotone ramp") {
  CHECK(robustness_weight(0.0, 10.0) == doctest::Approx(0.0));
  double prev = 0.0;
  for (double g = 0.05; g < 0.9; g += 0.05) {
    const double w = robustness_weight(g, 10.0);
    CHECK(w > prev);
    CHECK(w <= 1.0);  // tanh saturates to 1.0 in double precision
    prev = w;
  }
  CHECK(robustness_weight(0.1, 10.0) == doctest::Approx(std::tanh(1.0)));
  CHECK_THROWS(robustness_weight(-1.0, 10.0));
  CHECK_THROWS(robustness_weight(0.1, 0.0));
  CHECK(ar_statistic(-2.0, 0.1, 10.0) ==
        doctest::Approx(std::tanh(1.0) * -2.0));
}

TEST_CASE("backend names round trip") {
  CHECK(grad_backend_from_string("exact") == GradBackend::kExact);
  CHECK(grad_backend_from_string("fd") == GradBackend::kFiniteDifference);
  CHECK(grad_backend_from_string("finite_difference") ==
        GradBackend::kFiniteDifference);
  CHECK_THROWS(grad_backend_from_string("oracle"));
  CHECK(to_string(GradBackend::kExact) == "exact");
}

TEST_CASE("lambda calibration picks the argmax of the weighted auc") {
  // Synthetic population with the fabrication signature: members carry
  // moderate statistics and gradients, fabricated carry top statistics but
  // collapsed gradients, nonmembers carry low statistics.
  auto rng = std::mt19937_64(3);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<CalibrationRecord> records;
  for (int i = 0; i < 60; ++i)
    records.push_back({2.0 + noise(rng), 0.20 + std::abs(noise(rng)), 1});
  for (int i = 0; i < 30; ++i)
    records.push_back({4.0 + noise(rng), 0.005 + std::abs(noise(rng)) * 0.01,
                       0});
  for (int i = 0; i < 30; ++i)
    records.push_back({-2.0 + noise(rng), 0.6 + std::abs(noise(rng)), 0});

  const std::vector<double> grid = {5, 10, 15, 20, 25, 30, 35};
  const double chosen = calibrate_lambda_from_scores(
      records, grid, CalibrationObjective::kAuc);

  // Independent argmax via the pair-counting oracle.
  double best_lambda = grid.front(), best_auc = -1.0;
  for (double lam : grid) {
    std::vector<ScoredSample> s;
    for (const auto& r : records)
      s.push_back({std::tanh(lam * r.grad_norm) * r.statistic, r.member});
    const double a = testsup::pair_count_auc(s);
    if (a > best_auc) {
      best_auc = a;
      best_lambda = lam;
    }
  }
  CHECK(chosen == best_lambda);
  // Sanity: weighting at the chosen lambda beats the unweighted baseline.
  std::vector<ScoredSample> raw, weighted;
  for (const auto& r : records) {
    raw.push_back({r.statistic, r.member});
    weighted.push_back(
        {std::tanh(chosen * r.grad_norm) * r.statistic, r.member});
  }
  CHECK(testsup::pair_count_auc(weighted) > testsup::pair_count_auc(raw));
}

TEST_CASE("calibration tie-break keeps the smaller lambda") {
  // Records with constant gradient norms: every lambda gives the same
  // ranking, so the first grid entry must win.
  std::vector<CalibrationRecord> records;
  for (int i = 0; i < 10; ++i) records.push_back({double(i), 0.5, i >= 5});
  CHECK(calibrate_lambda_from_scores(records, {5, 10, 15}) == 5.0);
  CHECK_THROWS(calibrate_lambda_from_scores(records, {}));
  CHECK_THROWS(calibrate_lambda_from_scores({}, {5.0}));
}

TEST_CASE("tpr objective calibrates too") {
  auto rng = std::mt19937_64(9);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<CalibrationRecord> records;
  for (int i = 0; i < 40; ++i)
    records.push_back({1.0 + noise(rng), 0.3 + std::abs(noise(rng)), 1});
  for (int i = 0; i < 40; ++i)
    records.push_back({2.0 + noise(rng), 0.01, 0});
  const double lam = calibrate_lambda_from_scores(
      records, {5, 15, 35}, CalibrationObjective::kTprAtFpr, 0.1);
  CHECK((lam == 5.0 || lam == 15.0 || lam == 35.0));
}
