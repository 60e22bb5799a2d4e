#include "memaudit/mia.hpp"

#include <algorithm>
#include <cmath>

namespace memaudit {

std::string to_string(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::kLoss: return "loss";
    case StatisticKind::kAttackR: return "attack_r";
    case StatisticKind::kLira: return "lira";
    case StatisticKind::kRmia: return "rmia";
  }
  return "?";
}

StatisticKind statistic_kind_from_string(const std::string& s) {
  if (s == "loss") return StatisticKind::kLoss;
  if (s == "attack_r") return StatisticKind::kAttackR;
  if (s == "lira") return StatisticKind::kLira;
  if (s == "rmia") return StatisticKind::kRmia;
  throw std::invalid_argument("unknown statistic kind: " + s);
}

double loss_statistic(const ClassifierModel& model, const LabeledExample& ex) {
  return -model.sample_loss(ex);
}

double logit_scale(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

namespace {

double phi_on(const ClassifierModel& m, const LabeledExample& ex) {
  return logit_scale(m.probabilities(ex.x)[ex.y]);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.n = v.size();
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  for (double x : v) r.std += (x - r.mean) * (x - r.mean);
  r.std = v.size() > 1 ? std::sqrt(r.std / static_cast<double>(v.size() - 1))
                       : 0.0;
  return r;
}

double log_normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
}

}  // namespace

LiRAGaussians fit_lira(const ShadowEnsemble& ensemble, const LabeledExample& ex,
                       std::optional<double> global_sigma_in,
                       std::optional<double> global_sigma_out) {
  std::vector<double> in_vals, out_vals;
  for (std::size_t i = 0; i < ensemble.models.size(); ++i) {
    const double phi = phi_on(ensemble.models[i], ex);
    if (ensemble.contains(i, ex.id))
      in_vals.push_back(phi);
    else
      out_vals.push_back(phi);
  }
  if (in_vals.size() < 2 || out_vals.size() < 2)
    throw InsufficientModelsError("sample " + ex.id + " has " +
                                  std::to_string(in_vals.size()) + " IN / " +
                                  std::to_string(out_vals.size()) +
                                  " OUT models; need >= 2 each");

  const MeanStd in = mean_std(in_vals);
  const MeanStd out = mean_std(out_vals);
  LiRAGaussians g;
  g.mu_in = in.mean;
  g.mu_out = out.mean;
  g.sigma_in = in.std;
  g.sigma_out = out.std;
  if (static_cast<int>(in_vals.size()) < kLiraMinPerSampleModels &&
      global_sigma_in) {
    g.sigma_in = *global_sigma_in;
    g.per_sample = false;
  }
  if (static_cast<int>(out_vals.size()) < kLiraMinPerSampleModels &&
      global_sigma_out) {
    g.sigma_out = *global_sigma_out;
    g.per_sample = false;
  }
  g.sigma_in = std::max(g.sigma_in, kLiraSigmaFloor);
  g.sigma_out = std::max(g.sigma_out, kLiraSigmaFloor);
  return g;
}

double lira_statistic(const LiRAGaussians& g, double phi_target) {
  return log_normal_pdf(phi_target, g.mu_in, g.sigma_in) -
         log_normal_pdf(phi_target, g.mu_out, g.sigma_out);
}

double attack_r_statistic(const ShadowEnsemble& ensemble,
                          const LabeledExample& ex,
                          const ClassifierModel& target) {
  const auto out_idx = ensemble.out_model_indices(ex.id);
  if (out_idx.empty())
    throw EmptyReferenceError("no OUT reference models for sample " + ex.id);
  const double phi_t = phi_on(target, ex);
  std::size_t below = 0;
  for (std::size_t i : out_idx)
    if (phi_on(ensemble.models[i], ex) < phi_t) ++below;
  return static_cast<double>(below) / static_cast<double>(out_idx.size());
}

namespace {

double likelihood_ratio(const ShadowEnsemble& ensemble,
                        const LabeledExample& u, const ClassifierModel& target) {
  const double p_t =
      std::max(target.probabilities(u.x)[u.y], ClassifierModel::kProbFloor);
  double ref = 0.0;
  for (const auto& m : ensemble.models) ref += m.probabilities(u.x)[u.y];
  ref = std::max(ref / static_cast<double>(ensemble.models.size()),
                 ClassifierModel::kProbFloor);
  return p_t / ref;
}

}  // namespace

double rmia_statistic(const ShadowEnsemble& ensemble,
                      const std::vector<LabeledExample>& population_z,
                      const LabeledExample& ex, const ClassifierModel& target,
                      double gamma) {
  if (population_z.empty())
    throw EmptyPopulationError("rmia needs a nonempty z population");
  if (ensemble.models.empty())
    throw EmptyReferenceError("rmia needs a nonempty reference ensemble");
  const double lr_x = likelihood_ratio(ensemble, ex, target);
  std::size_t over = 0;
  for (const auto& z : population_z)
    if (lr_x / likelihood_ratio(ensemble, z, target) > gamma) ++over;
  return static_cast<double>(over) / static_cast<double>(population_z.size());
}

std::pair<double, double> lira_global_sigmas(
    const ShadowEnsemble& ensemble,
    const std::vector<LabeledExample>& eval_set) {
  // Pooled within-sample variance across the eval pool, per side.
  double ss_in = 0.0, ss_out = 0.0;
  std::size_t df_in = 0, df_out = 0;
  for (const auto& ex : eval_set) {
    std::vector<double> in_vals, out_vals;
    for (std::size_t i = 0; i < ensemble.models.size(); ++i) {
      const double phi = phi_on(ensemble.models[i], ex);
      (ensemble.contains(i, ex.id) ? in_vals : out_vals).push_back(phi);
    }
    auto pool = [](const std::vector<double>& vals, double& ss,
                   std::size_t& df) {
      if (vals.size() < 2) return;
      const MeanStd s = mean_std(vals);
      ss += s.std * s.std * static_cast<double>(vals.size() - 1);
      df += vals.size() - 1;
    };
    pool(in_vals, ss_in, df_in);
    pool(out_vals, ss_out, df_out);
  }
  const double sig_in =
      df_in ? std::sqrt(ss_in / static_cast<double>(df_in)) : kLiraSigmaFloor;
  const double sig_out =
      df_out ? std::sqrt(ss_out / static_cast<double>(df_out)) : kLiraSigmaFloor;
  return {std::max(sig_in, kLiraSigmaFloor), std::max(sig_out, kLiraSigmaFloor)};
}

}  // namespace memaudit
