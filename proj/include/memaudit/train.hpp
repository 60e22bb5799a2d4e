#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "memaudit/dataset.hpp"
#include "memaudit/model.hpp"
#include "memaudit/splits.hpp"

namespace memaudit {

enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 128;
  int epochs = 100;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  double l1_coefficient = 0.0;  // 0 disables the l1 defense term
  bool augment = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minibatch SGD with momentum, weight decay and optional cosine annealing.
// Reproducible given the seed: the loss trajectory is deterministic because
// accumulation order is fixed (single logical thread per model).
ClassifierModel train_classifier(const Dataset& dataset,
                                 const std::vector<std::string>& train_ids,
                                 const std::string& arch_id,
                                 const TrainConfig& config);

double mean_loss(const ClassifierModel& model, const Dataset& dataset,
                 const std::vector<std::string>& ids);
double accuracy(const ClassifierModel& model, const Dataset& dataset,
                const std::vector<std::string>& ids);

// IN/OUT reference models behind LiRA, Attack R and RMIA. Models are
// immutable once trained; concurrent read-only inference is safe.
struct ShadowEnsemble {
  std::vector<ClassifierModel> models;
  std::vector<ShadowSplit> manifest;                    // per-model
  std::vector<std::unordered_set<std::string>> in_sets;  // derived from manifest

  bool contains(std::size_t model_idx, const std::string& id) const {
    return in_sets[model_idx].count(id) > 0;
  }
  std::vector<std::size_t> in_model_indices(const std::string& id) const;
  std::vector<std::size_t> out_model_indices(const std::string& id) const;
  void rebuild_in_sets();
};

ShadowEnsemble train_shadow_ensemble(const Dataset& dataset,
                                     const MembershipSplit& split,
                                     const std::string& arch_id,
                                     const TrainConfig& config, int count);

}  // namespace memaudit
