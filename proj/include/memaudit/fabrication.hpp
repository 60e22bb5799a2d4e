#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memaudit/model.hpp"

namespace memaudit {

enum class FabricationVariant { kMfa, kIFgsm, kIBim, kIPgd, kICw, kIApgd };

std::string to_string(FabricationVariant v);
FabricationVariant fabrication_variant_from_string(const std::string& s);

struct FabricationConfig {
  double epsilon = 4.0 / 255.0;  // l-inf radius, pixel units
  int steps = 100;
  double alpha0 = (4.0 / 255.0) / 4.0;  // initial step size
  double beta = 0.75;                   // momentum factor
  FabricationVariant variant = FabricationVariant::kMfa;
  double adaptive_lambda = 0.0;  // 0 disables the gradient penalty
  std::uint64_t seed = 0;        // consumed by the i_pgd random start

  void validate() const;
  static FabricationConfig with_epsilon(double eps) {
    FabricationConfig c;
    c.epsilon = eps;
    c.alpha0 = eps / 4.0;
    return c;
  }
};

struct FabricationResult {
  Tensor x_bar;
  Tensor delta;
  std::vector<double> loss_trajectory;      // cross-entropy at each iterate
  std::vector<double> gradnorm_trajectory;  // ||grad_x loss||_2 at each iterate
  int iterations_run = 0;
};

// alpha0 * (1 + cos(pi k / N)) / 2
double cosine_step_size(int k, int n_total, double alpha0);

// Coordinate-wise clamp into [center - eps, center + eps], then into [0,1].
Tensor project_linf(const Tensor& candidate, const Tensor& center,
                    double epsilon);

// Momentum + cosine-annealed signed confidence ascent with best-loss iterate
// selection.
FabricationResult mfa_fabricate(const ClassifierModel& model,
                                const LabeledExample& ex,
                                const FabricationConfig& config);

// Inverted classic attacks (confidence ascent instead of descent).
FabricationResult fabricate_baseline(const ClassifierModel& model,
                                     const LabeledExample& ex,
                                     const FabricationConfig& config);

// Detection-aware variant: ascends p_y - lambda * ||grad_x loss||, the
// penalty differentiated by a symmetric finite-difference directional
// derivative along the current gradient.
FabricationResult adaptive_mfa(const ClassifierModel& model,
                               const LabeledExample& ex,
                               const FabricationConfig& config);

// Dispatch on config.variant / adaptive_lambda.
FabricationResult fabricate(const ClassifierModel& model,
                            const LabeledExample& ex,
                            const FabricationConfig& config);

}  // namespace memaudit
