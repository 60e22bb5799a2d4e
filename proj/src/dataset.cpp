#include "memaudit/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "memaudit/rng.hpp"

namespace memaudit {

void Dataset::rebuild_index() {
  index.clear();
  for (std::size_t i = 0; i < examples.size(); ++i) index[examples[i].id] = i;
}

const LabeledExample& Dataset::by_id(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end())
    throw std::out_of_range("dataset: unknown example id " + id);
  return examples[it->second];
}

void Dataset::validate() const {
  for (const auto& ex : examples) {
    if (ex.y < 0 || ex.y >= n_classes)
      throw std::invalid_argument("dataset: label out of range for " + ex.id);
    for (double v : ex.x.data)
      if (v < 0.0 || v > 1.0)
        throw std::invalid_argument("dataset: pixel out of [0,1] in " + ex.id);
  }
}

namespace {

void box_blur(Tensor& t) {
  Tensor out = t;
  for (int c = 0; c < t.channels; ++c)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) {
        double s = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= t.height || xx < 0 || xx >= t.width) continue;
            s += t.at(c, yy, xx);
            ++n;
          }
        out.at(c, y, x) = s / n;
      }
  t = std::move(out);
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  Dataset ds;
  ds.n_classes = spec.n_classes;

  std::vector<Tensor> templates;
  templates.reserve(spec.n_classes);
  auto trng = make_rng(derive_seed(spec.seed, "synthetic/templates"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    Tensor t(spec.channels, spec.height, spec.width);
    for (double& v : t.data) v = unif(trng);
    for (int pass = 0; pass < spec.template_smoothing; ++pass) box_blur(t);
    templates.push_back(std::move(t));
  }

  std::normal_distribution<double> noise(0.0, spec.noise_std);
  ds.examples.reserve(spec.n_examples);
  for (int i = 0; i < spec.n_examples; ++i) {
    int cls = i % spec.n_classes;
    auto rng = make_rng(derive_seed(spec.seed, "synthetic/example", i));
    LabeledExample ex;
    ex.id = "ex" + std::to_string(i);
    ex.y = cls;
    ex.x = templates[cls];
    for (double& v : ex.x.data) v = std::clamp(v + noise(rng), 0.0, 1.0);
    ds.examples.push_back(std::move(ex));
  }
  ds.rebuild_index();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  const char magic[8] = {'M', 'A', 'D', 'S', '0', '0', '0', '1'};
  f.write(magic, 8);
  auto w32 = [&](std::int32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
  w32(ds.n_classes);
  w32(static_cast<std::int32_t>(ds.examples.size()));
  for (const auto& ex : ds.examples) {
    w32(static_cast<std::int32_t>(ex.id.size()));
    f.write(ex.id.data(), static_cast<std::streamsize>(ex.id.size()));
    w32(ex.y);
    w32(ex.x.channels);
    w32(ex.x.height);
    w32(ex.x.width);
    f.write(reinterpret_cast<const char*>(ex.x.data.data()),
            static_cast<std::streamsize>(ex.x.data.size() * sizeof(double)));
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (std::string(magic, 4) != "MADS")
    throw std::runtime_error("bad dataset archive " + path.string());
  auto r32 = [&] {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  Dataset ds;
  ds.n_classes = r32();
  int n = r32();
  ds.examples.resize(n);
  for (auto& ex : ds.examples) {
    int len = r32();
    ex.id.resize(len);
    f.read(ex.id.data(), len);
    ex.y = r32();
    int c = r32(), h = r32(), w = r32();
    ex.x = Tensor(c, h, w);
    f.read(reinterpret_cast<char*>(ex.x.data.data()),
           static_cast<std::streamsize>(ex.x.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("truncated dataset archive " + path.string());
  ds.rebuild_index();
  return ds;
}

Tensor augment(const Tensor& x, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> shift(-1, 1);
  bool flip = coin(rng) == 1;
  int dy = shift(rng), dx = shift(rng);
  Tensor out(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx) {
        int sx = flip ? x.width - 1 - xx : xx;
        int sy = y + dy, sxx = sx + dx;
        double v = 0.0;  // zero padding outside
        if (sy >= 0 && sy < x.height && sxx >= 0 && sxx < x.width)
          v = x.at(c, sy, sxx);
        out.at(c, y, xx) = v;
      }
  return out;
}

}  // namespace memaudit
