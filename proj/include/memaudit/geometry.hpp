#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memaudit/model.hpp"

namespace memaudit {

// l2 norm of the exact input gradient of the cross-entropy loss.
double grad_norm(const ClassifierModel& model, const LabeledExample& ex);

struct FDConfig {
  int n_directions = 100;
  double radius = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FDEstimate {
  std::vector<double> gradient;
  double norm = 0.0;
};

// Symmetric finite-difference gradient estimate over unit-normalized
// Gaussian directions; needs only confidence queries.
FDEstimate fd_gradient(const std::function<double(const std::vector<double>&)>& loss,
                       const std::vector<double>& x, const FDConfig& config);

// Black-box estimate of grad_x(-log p_y) for a model.
FDEstimate fd_grad_estimate(const ClassifierModel& model,
                            const LabeledExample& ex, const FDConfig& config);

// Class-conditional feature statistics for the Mahalanobis and LID baselines.
struct FeatureStats {
  std::string layer_id;
  std::vector<Eigen::VectorXd> class_means;
  Eigen::MatrixXd shared_covariance;  // regularized
  Eigen::MatrixXd precision;          // inverse of shared_covariance
  std::vector<Eigen::VectorXd> knn_reference;
};

struct SingularCovarianceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// regularization: lambda_reg = 1e-3 * trace(Sigma)/dim added to the diagonal
// (disable with regularize=false to surface rank deficiency).
FeatureStats fit_feature_stats(const ClassifierModel& model,
                               const Dataset& dataset,
                               const std::vector<std::string>& member_ids,
                               const std::string& layer_id = "penultimate",
                               bool regularize = true);

// min over classes of squared Mahalanobis distance of the penultimate
// features; larger => more anomalous.
double mahalanobis_score(const FeatureStats& stats, const ClassifierModel& model,
                         const LabeledExample& ex);

// Maximum-likelihood local intrinsic dimensionality over the k nearest
// reference features (distances floored at 1e-12).
double lid_score(const FeatureStats& stats, const ClassifierModel& model,
                 const LabeledExample& ex, int k = 20);
double lid_from_distances(std::vector<double> distances, int k);

// Second-order probe of the loss around a point: gradient g and (symmetrized)
// Hessian H of the loss with respect to the input.
struct TaylorProbe {
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
};

struct ZeroCurvatureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// alpha* = 2 g^T H sign(g) / (sign(g)^T H^2 sign(g)), sign(0)=0.
double taylor_step_bound(const TaylorProbe& probe);

struct GradientDecrease {
  double norm_before = 0.0;
  double norm_after_quadratic = 0.0;
};

// Quadratic-model gradient norm after one signed step of size alpha.
GradientDecrease verify_gradient_decrease(const TaylorProbe& probe,
                                          double alpha);

// Explicit input Hessian by central differences of the exact gradient.
// Intended for tiny models (input dimension <= 4096).
TaylorProbe make_taylor_probe(const ClassifierModel& model,
                              const LabeledExample& ex, double h = 1e-4);

}  // namespace memaudit
