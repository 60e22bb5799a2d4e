#include "memaudit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "memaudit/rng.hpp"

namespace memaudit {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate <= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum outside [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay < 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size < 1");
  if (epochs < 0) throw std::invalid_argument("epochs < 0");
  if (l1_coefficient < 0.0) throw std::invalid_argument("l1_coefficient < 0");
}

ClassifierModel train_classifier(const Dataset& dataset,
                                 const std::vector<std::string>& train_ids,
                                 const std::string& arch_id,
                                 const TrainConfig& config) {
  config.validate();
  if (train_ids.empty()) throw std::invalid_argument("empty training set");
  const auto& first = dataset.by_id(train_ids.front());

  ClassifierModel model = ClassifierModel::build(
      arch_id, first.x.channels, first.x.height, first.x.width,
      dataset.n_classes, derive_seed(config.seed, "train/init"));

  auto blocks = model.net().parameter_blocks();
  std::vector<std::vector<double>> velocity;
  for (auto* b : blocks) velocity.emplace_back(b->size(), 0.0);

  std::vector<std::size_t> order(train_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.learning_rate;
    if (config.lr_schedule == LrSchedule::kCosine)
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / config.epochs));

    auto erng = make_rng(derive_seed(config.seed, "train/epoch", epoch));
    std::shuffle(order.begin(), order.end(), erng);

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      auto grads = model.net().zero_grads();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledExample& ex = dataset.by_id(train_ids[order[i]]);
        if (config.augment) {
          LabeledExample aug{ex.id, augment(ex.x, erng), ex.y};
          batch_loss += model.accumulate_param_gradients(aug, grads);
        } else {
          batch_loss += model.accumulate_param_gradients(ex, grads);
        }
      }
      const double inv_b = 1.0 / static_cast<double>(end - start);
      if (!std::isfinite(batch_loss))
        throw DivergenceError("training loss is non-finite at epoch " +
                              std::to_string(epoch));

      std::size_t gi = 0;
      for (std::size_t li = 0; li < model.net().layers().size(); ++li) {
        if (grads[li].empty()) continue;
        std::vector<double>& theta = *blocks[gi];
        std::vector<double>& v = velocity[gi];
        const std::vector<double>& g = grads[li];
        for (std::size_t k = 0; k < theta.size(); ++k) {
          double gk = g[k] * inv_b + config.weight_decay * theta[k];
          if (config.l1_coefficient > 0.0)
            gk += config.l1_coefficient *
                  (theta[k] > 0.0 ? 1.0 : (theta[k] < 0.0 ? -1.0 : 0.0));
          v[k] = config.momentum * v[k] + gk;
          theta[k] -= lr * v[k];
        }
        ++gi;
      }
    }
  }
  return model;
}

double mean_loss(const ClassifierModel& model, const Dataset& dataset,
                 const std::vector<std::string>& ids) {
  double s = 0.0;
  for (const auto& id : ids) s += model.sample_loss(dataset.by_id(id));
  return s / static_cast<double>(ids.size());
}

double accuracy(const ClassifierModel& model, const Dataset& dataset,
                const std::vector<std::string>& ids) {
  int ok = 0;
  for (const auto& id : ids) {
    const auto& ex = dataset.by_id(id);
    auto p = model.probabilities(ex.x);
    int pred = static_cast<int>(
        std::max_element(p.begin(), p.end()) - p.begin());
    if (pred == ex.y) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(ids.size());
}

void ShadowEnsemble::rebuild_in_sets() {
  in_sets.clear();
  for (const auto& s : manifest)
    in_sets.emplace_back(s.in_ids.begin(), s.in_ids.end());
}

std::vector<std::size_t> ShadowEnsemble::in_model_indices(
    const std::string& id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < models.size(); ++i)
    if (contains(i, id)) out.push_back(i);
  return out;
}

std::vector<std::size_t> ShadowEnsemble::out_model_indices(
    const std::string& id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < models.size(); ++i)
    if (!contains(i, id)) out.push_back(i);
  return out;
}

ShadowEnsemble train_shadow_ensemble(const Dataset& dataset,
                                     const MembershipSplit& split,
                                     const std::string& arch_id,
                                     const TrainConfig& config, int count) {
  if (count < 1) throw std::invalid_argument("shadow count < 1");
  if (count > static_cast<int>(split.shadow_splits.size()))
    throw std::invalid_argument(
        "shadow count exceeds the split manifest (" +
        std::to_string(split.shadow_splits.size()) + " available)");

  ShadowEnsemble ens;
  for (int k = 0; k < count; ++k) {
    TrainConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "shadow/train", k);
    ens.models.push_back(
        train_classifier(dataset, split.shadow_splits[k].in_ids, arch_id, cfg));
    ens.manifest.push_back(split.shadow_splits[k]);
  }
  ens.rebuild_in_sets();
  return ens;
}

}  // namespace memaudit
