#include "memaudit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "memaudit/rng.hpp"

namespace memaudit {

double grad_norm(const ClassifierModel& model, const LabeledExample& ex) {
  return model.input_gradient(ex).l2_norm();
}

void FDConfig::validate() const {
  if (n_directions < 1) throw std::invalid_argument("n_directions < 1");
  if (radius <= 0.0) throw std::invalid_argument("radius <= 0");
}

FDEstimate fd_gradient(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& x, const FDConfig& config) {
  config.validate();
  const std::size_t d = x.size();
  FDEstimate est;
  est.gradient.assign(d, 0.0);

  auto rng = make_rng(derive_seed(config.seed, "fd/directions"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> u(d), xp(d), xm(d);
  for (int i = 0; i < config.n_directions; ++i) {
    double nrm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      u[j] = gauss(rng);
      nrm += u[j] * u[j];
    }
    nrm = std::sqrt(nrm);
    if (nrm < 1e-300) continue;
    for (std::size_t j = 0; j < d; ++j) {
      u[j] /= nrm;
      xp[j] = x[j] + config.radius * u[j];
      xm[j] = x[j] - config.radius * u[j];
    }
    const double slope = (loss(xp) - loss(xm)) / (2.0 * config.radius);
    for (std::size_t j = 0; j < d; ++j) est.gradient[j] += slope * u[j];
  }
  for (double& v : est.gradient) v /= static_cast<double>(config.n_directions);
  est.norm = l2_norm(est.gradient);
  return est;
}

FDEstimate fd_grad_estimate(const ClassifierModel& model,
                            const LabeledExample& ex, const FDConfig& config) {
  auto loss = [&](const std::vector<double>& flat) {
    Tensor t(ex.x.channels, ex.x.height, ex.x.width);
    t.data = flat;
    return -std::log(std::max(model.probabilities(t)[ex.y],
                              ClassifierModel::kProbFloor));
  };
  return fd_gradient(loss, ex.x.data, config);
}

FeatureStats fit_feature_stats(const ClassifierModel& model,
                               const Dataset& dataset,
                               const std::vector<std::string>& member_ids,
                               const std::string& layer_id, bool regularize) {
  if (static_cast<int>(member_ids.size()) < 2 * dataset.n_classes)
    throw std::invalid_argument("need at least 2 samples per class to fit");

  FeatureStats stats;
  stats.layer_id = layer_id;

  std::vector<std::vector<Eigen::VectorXd>> per_class(dataset.n_classes);
  for (const auto& id : member_ids) {
    const auto& ex = dataset.by_id(id);
    auto f = model.features(ex.x);
    per_class[ex.y].push_back(
        Eigen::Map<const Eigen::VectorXd>(f.data(), f.size()));
    stats.knn_reference.push_back(per_class[ex.y].back());
  }

  const auto dim = stats.knn_reference.front().size();
  stats.class_means.assign(dataset.n_classes, Eigen::VectorXd::Zero(dim));
  for (int c = 0; c < dataset.n_classes; ++c) {
    if (per_class[c].empty()) continue;
    for (const auto& f : per_class[c]) stats.class_means[c] += f;
    stats.class_means[c] /= static_cast<double>(per_class[c].size());
  }

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  std::size_t n = 0;
  for (int c = 0; c < dataset.n_classes; ++c)
    for (const auto& f : per_class[c]) {
      Eigen::VectorXd d = f - stats.class_means[c];
      cov += d * d.transpose();
      ++n;
    }
  cov /= static_cast<double>(std::max<std::size_t>(n - dataset.n_classes, 1));
  cov = 0.5 * (cov + cov.transpose().eval());

  if (regularize) {
    const double lambda_reg = 1e-3 * cov.trace() / static_cast<double>(dim);
    cov += lambda_reg * Eigen::MatrixXd::Identity(dim, dim);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("shared covariance is not positive definite");
  stats.shared_covariance = cov;
  stats.precision = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  return stats;
}

double mahalanobis_score(const FeatureStats& stats, const ClassifierModel& model,
                         const LabeledExample& ex) {
  auto f = model.features(ex.x);
  Eigen::Map<const Eigen::VectorXd> phi(f.data(), f.size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& mu : stats.class_means) {
    Eigen::VectorXd d = phi - mu;
    best = std::min(best, d.dot(stats.precision * d));
  }
  return best;
}

double lid_from_distances(std::vector<double> distances, int k) {
  if (static_cast<int>(distances.size()) < k)
    throw std::invalid_argument("lid needs more reference points than k");
  std::partial_sort(distances.begin(), distances.begin() + k, distances.end());
  const double rk = std::max(distances[k - 1], 1e-12);
  double s = 0.0;
  for (int i = 0; i < k; ++i)
    s += std::log(std::max(distances[i], 1e-12) / rk);
  if (s >= 0.0) return 1e12;  // degenerate geometry, all radii equal
  return -static_cast<double>(k) / s;
}

double lid_score(const FeatureStats& stats, const ClassifierModel& model,
                 const LabeledExample& ex, int k) {
  if (static_cast<int>(stats.knn_reference.size()) <= k)
    throw std::invalid_argument("reference set too small for k-NN LID");
  auto f = model.features(ex.x);
  Eigen::Map<const Eigen::VectorXd> phi(f.data(), f.size());
  std::vector<double> dists;
  dists.reserve(stats.knn_reference.size());
  for (const auto& r : stats.knn_reference)
    dists.push_back((phi - r).norm());
  return lid_from_distances(std::move(dists), k);
}

namespace {

Eigen::VectorXd sign_of(const Eigen::VectorXd& g) {
  Eigen::VectorXd s(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

}  // namespace

double taylor_step_bound(const TaylorProbe& probe) {
  const Eigen::VectorXd s = sign_of(probe.g);
  const Eigen::VectorXd hs = probe.H * s;
  const double denom = hs.squaredNorm();  // s^T H^2 s for symmetric H
  if (denom <= 1e-12)
    throw ZeroCurvatureError("sign(g)^T H^2 sign(g) vanishes");
  return 2.0 * probe.g.dot(hs) / denom;
}

GradientDecrease verify_gradient_decrease(const TaylorProbe& probe,
                                          double alpha) {
  GradientDecrease r;
  r.norm_before = probe.g.norm();
  const Eigen::VectorXd step = -alpha * sign_of(probe.g);
  r.norm_after_quadratic = (probe.H * step + probe.g).norm();
  return r;
}

TaylorProbe make_taylor_probe(const ClassifierModel& model,
                              const LabeledExample& ex, double h) {
  const auto d = static_cast<Eigen::Index>(ex.x.size());
  if (d > 4096)
    throw std::invalid_argument("explicit Hessian limited to <=4096 inputs");
  TaylorProbe probe;
  Tensor g0 = model.input_gradient(ex);
  probe.g = Eigen::Map<const Eigen::VectorXd>(g0.data.data(), d);
  probe.H.resize(d, d);
  Tensor xp = ex.x, xm = ex.x;
  for (Eigen::Index j = 0; j < d; ++j) {
    xp.data[j] += h;
    xm.data[j] -= h;
    LabeledExample ep{"", xp, ex.y}, em{"", xm, ex.y};
    Tensor gp = model.input_gradient(ep);
    Tensor gm = model.input_gradient(em);
    for (Eigen::Index i = 0; i < d; ++i)
      probe.H(i, j) = (gp.data[i] - gm.data[i]) / (2.0 * h);
    xp.data[j] = ex.x.data[j];
    xm.data[j] = ex.x.data[j];
  }
  probe.H = 0.5 * (probe.H + probe.H.transpose().eval());
  return probe;
}

}  // namespace memaudit
