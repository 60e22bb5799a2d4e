#include "memaudit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "memaudit/rng.hpp"

namespace memaudit {

namespace {

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, bool relu_follows)
      : in_(in), out_(out), relu_follows_(relu_follows),
        w_(in * out + out, 0.0) {}

  std::vector<double> forward(const std::vector<double>& x) const override {
    std::vector<double> y(out_);
    const double* b = w_.data() + in_ * out_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double* row = w_.data() + o * in_;
      double s = b[o];
      for (std::size_t i = 0; i < in_; ++i) s += row[i] * x[i];
      y[o] = s;
    }
    return y;
  }

  std::vector<double> backward(const std::vector<double>& x,
                               const std::vector<double>& gout,
                               std::vector<double>* pgrad) const override {
    std::vector<double> gin(in_, 0.0);
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = gout[o];
      const double* row = w_.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) gin[i] += row[i] * g;
    }
    if (pgrad) {
      double* gw = pgrad->data();
      double* gb = pgrad->data() + in_ * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        const double g = gout[o];
        double* row = gw + o * in_;
        for (std::size_t i = 0; i < in_; ++i) row[i] += g * x[i];
        gb[o] += g;
      }
    }
    return gin;
  }

  std::size_t in_size() const override { return in_; }
  std::size_t out_size() const override { return out_; }
  std::vector<double>* mutable_params() override { return &w_; }
  const std::vector<double>* params() const override { return &w_; }

  void init(std::uint64_t seed) override {
    auto rng = make_rng(seed);
    const double gain = relu_follows_ ? 2.0 : 1.0;
    std::normal_distribution<double> d(0.0, std::sqrt(gain / in_));
    for (std::size_t i = 0; i < in_ * out_; ++i) w_[i] = d(rng);
    std::fill(w_.begin() + in_ * out_, w_.end(), 0.0);
  }

 private:
  std::size_t in_, out_;
  bool relu_follows_;
  std::vector<double> w_;  // row-major [out][in] weights, then biases
};

// 3x3 convolution, stride 1, unit zero padding; spatial size preserved.
class ConvLayer final : public Layer {
 public:
  ConvLayer(int cin, int cout, int h, int w)
      : cin_(cin), cout_(cout), h_(h), w_(w),
        w_params_(static_cast<std::size_t>(cout) * cin * 9 + cout, 0.0) {}

  std::vector<double> forward(const std::vector<double>& x) const override {
    std::vector<double> y(static_cast<std::size_t>(cout_) * h_ * w_);
    const double* bias = w_params_.data() + static_cast<std::size_t>(cout_) * cin_ * 9;
    for (int co = 0; co < cout_; ++co)
      for (int yy = 0; yy < h_; ++yy)
        for (int xx = 0; xx < w_; ++xx) {
          double s = bias[co];
          for (int ci = 0; ci < cin_; ++ci) {
            const double* k = kernel(co, ci);
            const double* plane = x.data() + static_cast<std::size_t>(ci) * h_ * w_;
            for (int ky = -1; ky <= 1; ++ky) {
              int sy = yy + ky;
              if (sy < 0 || sy >= h_) continue;
              for (int kx = -1; kx <= 1; ++kx) {
                int sx = xx + kx;
                if (sx < 0 || sx >= w_) continue;
                s += k[(ky + 1) * 3 + (kx + 1)] * plane[sy * w_ + sx];
              }
            }
          }
          y[(static_cast<std::size_t>(co) * h_ + yy) * w_ + xx] = s;
        }
    return y;
  }

  std::vector<double> backward(const std::vector<double>& x,
                               const std::vector<double>& gout,
                               std::vector<double>* pgrad) const override {
    std::vector<double> gin(static_cast<std::size_t>(cin_) * h_ * w_, 0.0);
    double* gk_base = pgrad ? pgrad->data() : nullptr;
    double* gb = pgrad ? pgrad->data() + static_cast<std::size_t>(cout_) * cin_ * 9
                       : nullptr;
    for (int co = 0; co < cout_; ++co)
      for (int yy = 0; yy < h_; ++yy)
        for (int xx = 0; xx < w_; ++xx) {
          const double g =
              gout[(static_cast<std::size_t>(co) * h_ + yy) * w_ + xx];
          if (g == 0.0) continue;
          if (gb) gb[co] += g;
          for (int ci = 0; ci < cin_; ++ci) {
            const double* k = kernel(co, ci);
            double* gk = gk_base
                             ? gk_base + (static_cast<std::size_t>(co) * cin_ + ci) * 9
                             : nullptr;
            const double* plane = x.data() + static_cast<std::size_t>(ci) * h_ * w_;
            double* gplane = gin.data() + static_cast<std::size_t>(ci) * h_ * w_;
            for (int ky = -1; ky <= 1; ++ky) {
              int sy = yy + ky;
              if (sy < 0 || sy >= h_) continue;
              for (int kx = -1; kx <= 1; ++kx) {
                int sx = xx + kx;
                if (sx < 0 || sx >= w_) continue;
                int ki = (ky + 1) * 3 + (kx + 1);
                gplane[sy * w_ + sx] += k[ki] * g;
                if (gk) gk[ki] += plane[sy * w_ + sx] * g;
              }
            }
          }
        }
    return gin;
  }

  std::size_t in_size() const override {
    return static_cast<std::size_t>(cin_) * h_ * w_;
  }
  std::size_t out_size() const override {
    return static_cast<std::size_t>(cout_) * h_ * w_;
  }
  std::vector<double>* mutable_params() override { return &w_params_; }
  const std::vector<double>* params() const override { return &w_params_; }

  void init(std::uint64_t seed) override {
    auto rng = make_rng(seed);
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (cin_ * 9)));
    const std::size_t nw = static_cast<std::size_t>(cout_) * cin_ * 9;
    for (std::size_t i = 0; i < nw; ++i) w_params_[i] = d(rng);
    std::fill(w_params_.begin() + nw, w_params_.end(), 0.0);
  }

 private:
  const double* kernel(int co, int ci) const {
    return w_params_.data() + (static_cast<std::size_t>(co) * cin_ + ci) * 9;
  }
  int cin_, cout_, h_, w_;
  std::vector<double> w_params_;  // [cout][cin][3][3] kernels, then biases
};

class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(std::size_t n) : n_(n) {}
  std::vector<double> forward(const std::vector<double>& x) const override {
    std::vector<double> y(x);
    for (double& v : y) v = std::max(v, 0.0);
    return y;
  }
  std::vector<double> backward(const std::vector<double>& x,
                               const std::vector<double>& gout,
                               std::vector<double>*) const override {
    std::vector<double> gin(gout);
    for (std::size_t i = 0; i < n_; ++i)
      if (x[i] <= 0.0) gin[i] = 0.0;
    return gin;
  }
  std::size_t in_size() const override { return n_; }
  std::size_t out_size() const override { return n_; }

 private:
  std::size_t n_;
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

void Network::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
}

std::vector<double> Network::run(const std::vector<double>& in) const {
  std::vector<double> cur = in;
  for (const auto& l : layers_) cur = l->forward(cur);
  return cur;
}

std::vector<std::vector<double>> Network::run_cached(
    const std::vector<double>& in) const {
  std::vector<std::vector<double>> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(in);
  for (const auto& l : layers_) acts.push_back(l->forward(acts.back()));
  return acts;
}

std::vector<double> Network::backprop(
    const std::vector<std::vector<double>>& acts, std::vector<double> gout,
    std::vector<std::vector<double>>* pgrads) const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::vector<double>* pg = nullptr;
    if (pgrads) pg = &(*pgrads)[i];
    gout = layers_[i]->backward(acts[i], gout, pg);
  }
  return gout;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    if (const auto* p = l->params()) n += p->size();
  return n;
}

std::vector<std::vector<double>*> Network::parameter_blocks() {
  std::vector<std::vector<double>*> out;
  for (auto& l : layers_)
    if (auto* p = l->mutable_params()) out.push_back(p);
  return out;
}

std::vector<std::vector<double>> Network::zero_grads() const {
  std::vector<std::vector<double>> g(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (const auto* p = layers_[i]->params()) g[i].assign(p->size(), 0.0);
  return g;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

ClassifierModel ClassifierModel::build(const std::string& arch_id, int channels,
                                       int height, int width, int n_classes,
                                       std::uint64_t seed) {
  ClassifierModel m;
  m.arch_id_ = arch_id;
  m.channels_ = channels;
  m.height_ = height;
  m.width_ = width;
  m.n_classes_ = n_classes;

  auto colon = arch_id.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("bad arch_id: " + arch_id);
  const std::string family = arch_id.substr(0, colon);
  const std::vector<int> sizes = parse_int_list(arch_id.substr(colon + 1));
  if (sizes.empty()) throw std::invalid_argument("bad arch_id: " + arch_id);

  std::size_t cur = static_cast<std::size_t>(channels) * height * width;
  if (family == "mlp") {
    for (int h : sizes) {
      m.net_.add(std::make_unique<DenseLayer>(cur, h, /*relu_follows=*/true));
      m.net_.add(std::make_unique<ReluLayer>(h));
      cur = h;
    }
  } else if (family == "cnn") {
    int cin = channels;
    for (int c : sizes) {
      m.net_.add(std::make_unique<ConvLayer>(cin, c, height, width));
      m.net_.add(std::make_unique<ReluLayer>(
          static_cast<std::size_t>(c) * height * width));
      cin = c;
    }
    cur = static_cast<std::size_t>(cin) * height * width;
  } else {
    throw std::invalid_argument("unknown arch family: " + family);
  }
  m.net_.add(std::make_unique<DenseLayer>(cur, n_classes, false));

  std::uint64_t idx = 0;
  for (auto& l : m.net_.layers_mut()) l->init(derive_seed(seed, "model/init", idx++));
  return m;
}

void ClassifierModel::check_input(const Tensor& x) const {
  if (x.channels != channels_ || x.height != height_ || x.width != width_)
    throw std::invalid_argument("input shape mismatch for model " + arch_id_);
}

std::vector<double> ClassifierModel::logits(const Tensor& x) const {
  check_input(x);
  return net_.run(x.data);
}

std::vector<double> ClassifierModel::probabilities(const Tensor& x) const {
  return softmax(logits(x));
}

std::vector<double> ClassifierModel::features(const Tensor& x) const {
  check_input(x);
  auto acts = net_.run_cached(x.data);
  return acts[acts.size() - 2];
}

double ClassifierModel::sample_loss(const LabeledExample& ex) const {
  auto p = probabilities(ex.x);
  return -std::log(std::max(p[ex.y], kProbFloor));
}

Tensor ClassifierModel::input_gradient(const LabeledExample& ex) const {
  check_input(ex.x);
  auto acts = net_.run_cached(ex.x.data);
  auto p = softmax(acts.back());
  std::vector<double> dlogits(p);
  dlogits[ex.y] -= 1.0;  // d(-log p_y)/dz
  auto din = net_.backprop(acts, std::move(dlogits), nullptr);
  Tensor g(channels_, height_, width_);
  g.data = std::move(din);
  return g;
}

double ClassifierModel::accumulate_param_gradients(
    const LabeledExample& ex, std::vector<std::vector<double>>& pgrads) const {
  check_input(ex.x);
  auto acts = net_.run_cached(ex.x.data);
  auto p = softmax(acts.back());
  std::vector<double> dlogits(p);
  dlogits[ex.y] -= 1.0;
  net_.backprop(acts, std::move(dlogits), &pgrads);
  return -std::log(std::max(p[ex.y], kProbFloor));
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  const char magic[8] = {'M', 'A', 'C', 'K', '0', '0', '0', '1'};
  f.write(magic, 8);
  auto w32 = [&](std::int32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
  w32(static_cast<std::int32_t>(arch_id_.size()));
  f.write(arch_id_.data(), static_cast<std::streamsize>(arch_id_.size()));
  w32(channels_);
  w32(height_);
  w32(width_);
  w32(n_classes_);
  for (const auto& l : net_.layers())
    if (const auto* p = l->params())
      f.write(reinterpret_cast<const char*>(p->data()),
              static_cast<std::streamsize>(p->size() * sizeof(double)));
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (std::string(magic, 4) != "MACK")
    throw std::runtime_error("bad checkpoint " + path.string());
  auto r32 = [&] {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  int len = r32();
  std::string arch(len, '\0');
  f.read(arch.data(), len);
  int c = r32(), h = r32(), w = r32(), n = r32();
  ClassifierModel m = build(arch, c, h, w, n, /*seed=*/0);
  for (auto& l : m.net_.layers_mut())
    if (auto* p = l->mutable_params())
      f.read(reinterpret_cast<char*>(p->data()),
             static_cast<std::streamsize>(p->size() * sizeof(double)));
  if (!f) throw std::runtime_error("truncated checkpoint " + path.string());
  return m;
}

}  // namespace memaudit
