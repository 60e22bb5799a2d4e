#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "memaudit/dataset.hpp"
#include "memaudit/tensor.hpp"

namespace memaudit {

// A layer owns its flat parameter vector. forward/backward are const and
// stateless so trained models can serve inference from multiple threads.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::vector<double> forward(const std::vector<double>& in) const = 0;
  // gout = dL/d(out); returns dL/d(in). When pgrad is non-null, parameter
  // gradients are accumulated into it (same layout as params()).
  virtual std::vector<double> backward(const std::vector<double>& in,
                                       const std::vector<double>& gout,
                                       std::vector<double>* pgrad) const = 0;
  virtual std::size_t in_size() const = 0;
  virtual std::size_t out_size() const = 0;
  virtual std::vector<double>* mutable_params() { return nullptr; }
  virtual const std::vector<double>* params() const { return nullptr; }
  virtual void init(std::uint64_t /*seed*/) {}
};

class Network {
 public:
  void add(std::unique_ptr<Layer> layer);
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  std::vector<std::unique_ptr<Layer>>& layers_mut() { return layers_; }

  std::vector<double> run(const std::vector<double>& in) const;
  // Activations: acts[0] = input, acts[i] = output of layer i-1.
  std::vector<std::vector<double>> run_cached(const std::vector<double>& in) const;
  // Backprop dL/d(output) to dL/d(input); accumulates parameter gradients
  // into pgrads (one flat buffer per layer) when non-null.
  std::vector<double> backprop(const std::vector<std::vector<double>>& acts,
                               std::vector<double> gout,
                               std::vector<std::vector<double>>* pgrads) const;

  std::size_t param_count() const;
  std::vector<std::vector<double>*> parameter_blocks();
  std::vector<std::vector<double>> zero_grads() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Differentiable classifier: logits, probabilities, per-sample cross-entropy
// loss and exact input gradients. Deterministic in evaluation mode; the
// architectures used here have no stochastic layers.
class ClassifierModel {
 public:
  ClassifierModel() = default;

  // arch_id grammar: "mlp:<h1>[,<h2>...]" or "cnn:<c1>[,<c2>...]"
  // (3x3 convolutions, unit padding, ReLU, linear head).
  static ClassifierModel build(const std::string& arch_id, int channels,
                               int height, int width, int n_classes,
                               std::uint64_t seed);

  std::vector<double> logits(const Tensor& x) const;
  std::vector<double> probabilities(const Tensor& x) const;
  // Penultimate activations (input of the final linear layer).
  std::vector<double> features(const Tensor& x) const;

  double sample_loss(const LabeledExample& ex) const;  // -log p_y, clamped
  Tensor input_gradient(const LabeledExample& ex) const;

  // Training hook: accumulates parameter gradients of the per-sample loss,
  // returns the loss value.
  double accumulate_param_gradients(const LabeledExample& ex,
                                    std::vector<std::vector<double>>& pgrads) const;

  int n_classes() const { return n_classes_; }
  const std::string& arch_id() const { return arch_id_; }
  int in_channels() const { return channels_; }
  int in_height() const { return height_; }
  int in_width() const { return width_; }

  Network& net() { return net_; }
  const Network& net() const { return net_; }

  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

  void check_input(const Tensor& x) const;

  static constexpr double kProbFloor = 1e-12;

 private:
  std::string arch_id_;
  int channels_ = 0, height_ = 0, width_ = 0, n_classes_ = 0;
  Network net_;
};

std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace memaudit
