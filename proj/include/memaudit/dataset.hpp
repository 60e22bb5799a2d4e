#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "memaudit/tensor.hpp"

namespace memaudit {

// An image in [0,1] with its class label; the unit of every attack, detection
// and audit in this toolkit.
struct LabeledExample {
  std::string id;
  Tensor x;
  int y = 0;
};

struct Dataset {
  int n_classes = 0;
  std::vector<LabeledExample> examples;
  std::unordered_map<std::string, std::size_t> index;

  void rebuild_index();
  const LabeledExample& by_id(const std::string& id) const;
  void validate() const;  // pixel range and label range
};

struct SyntheticSpec {
  int n_classes = 4;
  int channels = 3;
  int height = 12;
  int width = 12;
  int n_examples = 4000;
  // Per-example pixel noise. Large enough that individual examples carry
  // memorizable detail on top of the class template.
  double noise_std = 0.25;
  // Spatial low-pass strength of the class templates (box-blur passes).
  int template_smoothing = 2;
  std::uint64_t seed = 0;
};

// Class-template images plus per-example noise, clamped to [0,1].
Dataset make_synthetic_dataset(const SyntheticSpec& spec);

// Packed tensor archive (binary) for the CLI dataset layout.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Training-time augmentation: random horizontal flip plus random crop with
// 1-pixel zero padding. Never applied at attack or audit time.
Tensor augment(const Tensor& x, std::mt19937_64& rng);

}  // namespace memaudit
