#include "memaudit/fabrication.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "memaudit/rng.hpp"

namespace memaudit {

std::string to_string(FabricationVariant v) {
  switch (v) {
    case FabricationVariant::kMfa: return "mfa";
    case FabricationVariant::kIFgsm: return "i_fgsm";
    case FabricationVariant::kIBim: return "i_bim";
    case FabricationVariant::kIPgd: return "i_pgd";
    case FabricationVariant::kICw: return "i_cw";
    case FabricationVariant::kIApgd: return "i_apgd";
  }
  return "?";
}

FabricationVariant fabrication_variant_from_string(const std::string& s) {
  if (s == "mfa") return FabricationVariant::kMfa;
  if (s == "i_fgsm") return FabricationVariant::kIFgsm;
  if (s == "i_bim") return FabricationVariant::kIBim;
  if (s == "i_pgd") return FabricationVariant::kIPgd;
  if (s == "i_cw") return FabricationVariant::kICw;
  if (s == "i_apgd") return FabricationVariant::kIApgd;
  throw std::invalid_argument("unknown fabrication variant: " + s);
}

void FabricationConfig::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("epsilon < 0");
  if (steps < 1) throw std::invalid_argument("steps < 1");
  if (alpha0 <= 0.0) throw std::invalid_argument("alpha0 <= 0");
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta outside [0,1)");
  if (adaptive_lambda < 0.0) throw std::invalid_argument("adaptive_lambda < 0");
}

double cosine_step_size(int k, int n_total, double alpha0) {
  return alpha0 * 0.5 * (1.0 + std::cos(std::numbers::pi * k / n_total));
}

Tensor project_linf(const Tensor& candidate, const Tensor& center,
                    double epsilon) {
  Tensor out = candidate;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double lo = std::max(0.0, center.data[i] - epsilon);
    const double hi = std::min(1.0, center.data[i] + epsilon);
    out.data[i] = std::clamp(out.data[i], lo, hi);
  }
  return out;
}

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct Eval {
  double loss;
  Tensor grad;
};

Eval loss_and_grad(const ClassifierModel& model, const Tensor& x, int y) {
  LabeledExample probe{"", x, y};
  Eval e;
  e.grad = model.input_gradient(probe);
  e.loss = model.sample_loss(probe);
  return e;
}

// Gradient of the CW margin z_y - max_{i != y} z_i with respect to the input.
Tensor margin_gradient(const ClassifierModel& model, const Tensor& x, int y) {
  auto acts = model.net().run_cached(x.data);
  const auto& z = acts.back();
  int runner = -1;
  for (int i = 0; i < static_cast<int>(z.size()); ++i)
    if (i != y && (runner < 0 || z[i] > z[runner])) runner = i;
  std::vector<double> dz(z.size(), 0.0);
  dz[y] = 1.0;
  dz[runner] = -1.0;
  auto din = model.net().backprop(acts, std::move(dz), nullptr);
  Tensor g(x.channels, x.height, x.width);
  g.data = std::move(din);
  return g;
}

// Gradient of p_y with respect to the input (softmax Jacobian row y).
Tensor confidence_gradient(const ClassifierModel& model, const Tensor& x,
                           int y) {
  auto acts = model.net().run_cached(x.data);
  auto p = softmax(acts.back());
  std::vector<double> dz(p.size());
  for (std::size_t j = 0; j < p.size(); ++j)
    dz[j] = p[y] * ((static_cast<int>(j) == y ? 1.0 : 0.0) - p[j]);
  auto din = model.net().backprop(acts, std::move(dz), nullptr);
  Tensor g(x.channels, x.height, x.width);
  g.data = std::move(din);
  return g;
}

FabricationResult make_result(const Tensor& x_bar, const Tensor& x0) {
  FabricationResult r;
  r.x_bar = x_bar;
  r.delta = x_bar;
  for (std::size_t i = 0; i < x0.data.size(); ++i)
    r.delta.data[i] -= x0.data[i];
  return r;
}

// Shared loop for the iterative signed-descent variants. step_size(k) gives
// the per-iteration step; use_momentum selects the m-update, otherwise the
// raw gradient sign is used. direction_grad supplies the quantity whose loss
// we descend (CE loss or negated CW margin).
template <typename StepFn, typename GradFn>
FabricationResult signed_descent(const ClassifierModel& model,
                                 const LabeledExample& ex,
                                 const FabricationConfig& cfg, Tensor start,
                                 StepFn step_size, GradFn direction_grad,
                                 bool use_momentum) {
  const Tensor& x0 = ex.x;
  Tensor x = project_linf(start, x0, cfg.epsilon);
  Tensor best = x0;
  double best_loss = model.sample_loss(ex);
  Tensor m(x.channels, x.height, x.width);

  std::vector<double> losses, gradnorms;
  losses.push_back(best_loss);

  {
    LabeledExample at{"", x, ex.y};
    double l0 = model.sample_loss(at);
    if (l0 < best_loss) {
      best_loss = l0;
      best = x;
    }
  }

  for (int k = 0; k < cfg.steps; ++k) {
    Eval e = loss_and_grad(model, x, ex.y);
    gradnorms.push_back(e.grad.l2_norm());
    Tensor dir = direction_grad(x, e);
    if (use_momentum) {
      for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = cfg.beta * m.data[i] + (1.0 - cfg.beta) * dir.data[i];
    } else {
      m = dir;
    }
    const double alpha = step_size(k, best_loss);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] -= alpha * sgn(m.data[i]);
    x = project_linf(x, x0, cfg.epsilon);

    LabeledExample at{"", x, ex.y};
    const double l = model.sample_loss(at);
    losses.push_back(l);
    if (l < best_loss) {
      best_loss = l;
      best = x;
    }
  }

  FabricationResult r = make_result(best, x0);
  r.loss_trajectory = std::move(losses);
  r.gradnorm_trajectory = std::move(gradnorms);
  r.iterations_run = cfg.steps;
  return r;
}

}  // namespace

FabricationResult mfa_fabricate(const ClassifierModel& model,
                                const LabeledExample& ex,
                                const FabricationConfig& config) {
  config.validate();
  return signed_descent(
      model, ex, config, ex.x,
      [&](int k, double) { return cosine_step_size(k, config.steps, config.alpha0); },
      [](const Tensor&, const Eval& e) { return e.grad; },
      /*use_momentum=*/true);
}

FabricationResult fabricate_baseline(const ClassifierModel& model,
                                     const LabeledExample& ex,
                                     const FabricationConfig& config) {
  config.validate();
  auto ce_grad = [](const Tensor&, const Eval& e) { return e.grad; };

  switch (config.variant) {
    case FabricationVariant::kIFgsm: {
      FabricationConfig cfg = config;
      cfg.steps = 1;
      return signed_descent(
          model, ex, cfg, ex.x, [&](int, double) { return config.epsilon; },
          ce_grad, false);
    }
    case FabricationVariant::kIBim:
      return signed_descent(
          model, ex, config, ex.x, [&](int, double) { return config.alpha0; },
          ce_grad, false);
    case FabricationVariant::kIPgd: {
      Tensor start = ex.x;
      auto rng = make_rng(derive_seed(config.seed, "fabricate/pgd_start"));
      std::uniform_real_distribution<double> u(-config.epsilon, config.epsilon);
      for (double& v : start.data) v += u(rng);
      return signed_descent(
          model, ex, config, start, [&](int, double) { return config.alpha0; },
          ce_grad, false);
    }
    case FabricationVariant::kICw:
      // Descend the negated margin: maximize z_y - max_{i!=y} z_i.
      return signed_descent(
          model, ex, config, ex.x, [&](int, double) { return config.alpha0; },
          [&](const Tensor& x, const Eval&) {
            Tensor g = margin_gradient(model, x, ex.y);
            for (double& v : g.data) v = -v;
            return g;
          },
          false);
    case FabricationVariant::kIApgd: {
      // Halving heuristic: step halves whenever the best loss fails to
      // improve across a checkpoint window of ceil(0.22 * N) steps.
      const int window = static_cast<int>(std::ceil(0.22 * config.steps));
      struct Halver {
        double alpha;
        int window;
        int next_check;
        double best_at_check = std::numeric_limits<double>::infinity();
        double operator()(int k, double best_loss) {
          if (k >= next_check) {
            if (best_loss >= best_at_check) alpha *= 0.5;
            best_at_check = best_loss;
            next_check += window;
          }
          return alpha;
        }
      };
      auto halver = std::make_shared<Halver>(
          Halver{config.alpha0, window, window});
      return signed_descent(
          model, ex, config, ex.x,
          [halver](int k, double best) { return (*halver)(k, best); }, ce_grad,
          /*use_momentum=*/true);
    }
    case FabricationVariant::kMfa:
      throw std::invalid_argument(
          "fabricate_baseline called with the mfa variant");
  }
  throw std::invalid_argument("unknown fabrication variant");
}

FabricationResult adaptive_mfa(const ClassifierModel& model,
                               const LabeledExample& ex,
                               const FabricationConfig& config) {
  config.validate();
  if (config.adaptive_lambda <= 0.0)
    throw std::invalid_argument("adaptive_mfa needs adaptive_lambda > 0");

  const double lam = config.adaptive_lambda;
  const double h = 1e-3;  // finite-difference radius for the penalty term
  const Tensor& x0 = ex.x;
  Tensor x = x0;
  Tensor m(x.channels, x.height, x.width);

  auto objective = [&](const Tensor& at) {
    LabeledExample probe{"", at, ex.y};
    const double py = model.probabilities(at)[ex.y];
    const double g = model.input_gradient(probe).l2_norm();
    return py - lam * g;
  };

  Tensor best = x;
  double best_obj = objective(x);
  FabricationResult r;
  {
    LabeledExample probe{"", x, ex.y};
    r.loss_trajectory.push_back(model.sample_loss(probe));
  }

  for (int k = 0; k < config.steps; ++k) {
    LabeledExample probe{"", x, ex.y};
    Tensor g = model.input_gradient(probe);
    const double gnorm = g.l2_norm();
    r.gradnorm_trajectory.push_back(gnorm);

    Tensor ascent = confidence_gradient(model, x, ex.y);
    if (gnorm > 1e-12) {
      // grad ||g|| = H g / ||g||, approximated by a symmetric difference of
      // the gradient along the unit direction g / ||g||.
      Tensor xp = x, xm = x;
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double u = g.data[i] / gnorm;
        xp.data[i] += h * u;
        xm.data[i] -= h * u;
      }
      LabeledExample pp{"", xp, ex.y}, pm{"", xm, ex.y};
      Tensor gp = model.input_gradient(pp);
      Tensor gm = model.input_gradient(pm);
      for (std::size_t i = 0; i < ascent.data.size(); ++i)
        ascent.data[i] -= lam * (gp.data[i] - gm.data[i]) / (2.0 * h);
    }

    // Keep the descent form of the main loop: momentum on -grad(objective).
    const double alpha = cosine_step_size(k, config.steps, config.alpha0);
    for (std::size_t i = 0; i < m.data.size(); ++i)
      m.data[i] = config.beta * m.data[i] - (1.0 - config.beta) * ascent.data[i];
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] -= alpha * sgn(m.data[i]);
    x = project_linf(x, x0, config.epsilon);

    LabeledExample at{"", x, ex.y};
    r.loss_trajectory.push_back(model.sample_loss(at));
    const double obj = objective(x);
    if (obj > best_obj) {
      best_obj = obj;
      best = x;
    }
  }

  FabricationResult out = make_result(best, x0);
  out.loss_trajectory = std::move(r.loss_trajectory);
  out.gradnorm_trajectory = std::move(r.gradnorm_trajectory);
  out.iterations_run = config.steps;
  return out;
}

FabricationResult fabricate(const ClassifierModel& model,
                            const LabeledExample& ex,
                            const FabricationConfig& config) {
  if (config.adaptive_lambda > 0.0) return adaptive_mfa(model, ex, config);
  if (config.variant == FabricationVariant::kMfa)
    return mfa_fabricate(model, ex, config);
  return fabricate_baseline(model, ex, config);
}

}  // namespace memaudit
