#include "memaudit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "memaudit/rng.hpp"

namespace memaudit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == ':' || c == ',' || c == '/') c = '_';
  return out;
}

std::string format_lambda(double v) {
  std::ostringstream os;
  os << v;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing artifact: " + path.string());
  return json::parse(in);
}

double file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing artifact: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return static_cast<double>(h >> 11);  // json-safe integer range
}

}  // namespace

void ExperimentConfig::validate() const {
  if (arch_id.empty()) throw std::invalid_argument("empty arch_id");
  if (n_train < 1) throw std::invalid_argument("n_train < 1");
  if (n_shadow < 0) throw std::invalid_argument("n_shadow < 0");
  if (n_eval < 1) throw std::invalid_argument("n_eval < 1");
  if (kinds.empty()) throw std::invalid_argument("no statistic kinds");
  train.validate();
  fabrication.validate();
  mixture.validate();
  for (auto kind : kinds)
    if (kind != StatisticKind::kLoss && n_shadow < 2)
      throw std::invalid_argument("kind " + to_string(kind) +
                                  " needs at least 2 shadow models");
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json j = read_json(path);
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset.n_classes = d.value("n_classes", c.dataset.n_classes);
    c.dataset.channels = d.value("channels", c.dataset.channels);
    c.dataset.height = d.value("height", c.dataset.height);
    c.dataset.width = d.value("width", c.dataset.width);
    c.dataset.n_examples = d.value("n_examples", c.dataset.n_examples);
    c.dataset.noise_std = d.value("noise_std", c.dataset.noise_std);
    c.dataset.template_smoothing =
        d.value("template_smoothing", c.dataset.template_smoothing);
    c.dataset.seed = d.value("seed", c.dataset.seed);
  }
  c.arch_id = j.value("arch_id", c.arch_id);
  c.n_train = j.value("n_train", c.n_train);
  c.n_shadow = j.value("n_shadow", c.n_shadow);
  c.n_eval = j.value("n_eval", c.n_eval);
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.momentum = t.value("momentum", c.train.momentum);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.lr_schedule = t.value("cosine", true) ? LrSchedule::kCosine
                                                  : LrSchedule::kConstant;
    c.train.l1_coefficient = t.value("l1_coefficient", c.train.l1_coefficient);
    c.train.augment = t.value("augment", c.train.augment);
  }
  if (j.contains("fabrication")) {
    const auto& f = j["fabrication"];
    c.fabrication.epsilon = f.value("epsilon", c.fabrication.epsilon);
    c.fabrication.steps = f.value("steps", c.fabrication.steps);
    c.fabrication.alpha0 = f.value("alpha0", c.fabrication.epsilon / 4.0);
    c.fabrication.beta = f.value("beta", c.fabrication.beta);
    c.fabrication.variant = fabrication_variant_from_string(
        f.value("variant", std::string("mfa")));
    c.fabrication.adaptive_lambda =
        f.value("adaptive_lambda", c.fabrication.adaptive_lambda);
  }
  if (j.contains("kinds")) {
    c.kinds.clear();
    for (const auto& k : j["kinds"])
      c.kinds.push_back(statistic_kind_from_string(k.get<std::string>()));
  }
  if (j.contains("lambda_grid"))
    c.lambda_grid = j["lambda_grid"].get<std::vector<double>>();
  if (j.contains("mixture")) {
    const auto& m = j["mixture"];
    c.mixture.fraction_members =
        m.value("fraction_members", c.mixture.fraction_members);
    c.mixture.fraction_fabricated =
        m.value("fraction_fabricated", c.mixture.fraction_fabricated);
    c.mixture.fraction_nonmembers =
        m.value("fraction_nonmembers", c.mixture.fraction_nonmembers);
    c.mixture.fabrication_probability = m.value(
        "fabrication_probability", c.mixture.fabrication_probability);
  }
  c.backend =
      grad_backend_from_string(j.value("backend", std::string("exact")));
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir.string());
  c.validate();
  return c;
}

json experiment_config_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"n_classes", c.dataset.n_classes},
                  {"channels", c.dataset.channels},
                  {"height", c.dataset.height},
                  {"width", c.dataset.width},
                  {"n_examples", c.dataset.n_examples},
                  {"noise_std", c.dataset.noise_std},
                  {"template_smoothing", c.dataset.template_smoothing},
                  {"seed", c.dataset.seed}};
  j["arch_id"] = c.arch_id;
  j["n_train"] = c.n_train;
  j["n_shadow"] = c.n_shadow;
  j["n_eval"] = c.n_eval;
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"cosine", c.train.lr_schedule == LrSchedule::kCosine},
                {"l1_coefficient", c.train.l1_coefficient},
                {"augment", c.train.augment}};
  j["fabrication"] = {{"epsilon", c.fabrication.epsilon},
                      {"steps", c.fabrication.steps},
                      {"alpha0", c.fabrication.alpha0},
                      {"beta", c.fabrication.beta},
                      {"variant", to_string(c.fabrication.variant)},
                      {"adaptive_lambda", c.fabrication.adaptive_lambda}};
  json kinds = json::array();
  for (auto kind : c.kinds) kinds.push_back(to_string(kind));
  j["kinds"] = kinds;
  j["lambda_grid"] = c.lambda_grid;
  j["mixture"] = {
      {"fraction_members", c.mixture.fraction_members},
      {"fraction_fabricated", c.mixture.fraction_fabricated},
      {"fraction_nonmembers", c.mixture.fraction_nonmembers},
      {"fabrication_probability", c.mixture.fabrication_probability}};
  j["backend"] = to_string(c.backend);
  j["seed"] = c.seed;
  return j;  // out_dir excluded: moving a run must not change its hash
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canon = experiment_config_json(config).dump();
  std::uint64_t h = hash_tag(canon);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Pipeline::Pipeline(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  hash_ = config_hash(config_);
  fs::create_directories(config_.out_dir / "checkpoints");
  fs::create_directories(config_.out_dir / "scores");
  fs::create_directories(config_.out_dir / "report");
}

bool Pipeline::stage_cached(const std::string& stage,
                            const std::vector<fs::path>& artifacts) const {
  const fs::path manifest = config_.out_dir / (stage + ".manifest.json");
  if (!fs::exists(manifest)) return false;
  json j;
  try {
    j = read_json(manifest);
  } catch (const std::exception&) {
    return false;
  }
  if (j.value("config_hash", std::string()) != hash_) return false;
  for (const auto& p : artifacts)
    if (!fs::exists(p)) return false;
  return true;
}

void Pipeline::write_stage_manifest(const StageResult& result) const {
  json j;
  j["stage"] = result.stage;
  j["config_hash"] = hash_;
  j["seed"] = config_.seed;
  j["cache_hit"] = result.cache_hit;
  json arts = json::array();
  for (const auto& p : result.artifacts) arts.push_back(p.string());
  j["artifacts"] = arts;
  j["metrics"] = result.metrics;
  write_json(config_.out_dir / (result.stage + ".manifest.json"), j);
}

GameContext Pipeline::make_context() const {
  GameContext ctx;
  ctx.dataset = &dataset_;
  ctx.target = &target_;
  ctx.split = &split_;
  ctx.ensemble = ensemble_.models.empty() ? nullptr : &ensemble_;
  ctx.backend = config_.backend;
  ctx.seed = config_.seed;
  return ctx;
}

void Pipeline::ensure_loaded() {
  if (loaded_) return;
  const fs::path ds = config_.out_dir / "dataset.bin";
  const fs::path sp = config_.out_dir / "split.json";
  const fs::path ck = config_.out_dir / "checkpoints" /
                      (sanitize(config_.arch_id) + "-" +
                       std::to_string(config_.seed) + ".ckpt");
  for (const auto& p : {ds, sp, ck})
    if (!fs::exists(p))
      throw MissingArtifactError("missing artifact: " + p.string() +
                                 " (run the train stage first)");
  dataset_ = load_dataset(ds);
  split_ = load_split(sp);
  target_ = ClassifierModel::load(ck);
  loaded_ = true;
}

void Pipeline::ensure_ensemble_loaded() {
  if (ensemble_loaded_) return;
  ensure_loaded();
  ensemble_.models.clear();
  ensemble_.manifest.clear();
  for (int k = 0; k < config_.n_shadow; ++k) {
    const fs::path p = config_.out_dir / "checkpoints" /
                       (sanitize(config_.arch_id) + "-" +
                        std::to_string(config_.seed) + "-shadow" +
                        std::to_string(k) + ".ckpt");
    if (!fs::exists(p))
      throw MissingArtifactError("missing artifact: " + p.string() +
                                 " (run the train stage first)");
    ensemble_.models.push_back(ClassifierModel::load(p));
    ensemble_.manifest.push_back(split_.shadow_splits.at(k));
  }
  ensemble_.rebuild_in_sets();
  ensemble_loaded_ = true;
}

void Pipeline::ensure_cache_loaded() {
  if (cache_loaded_) return;
  ensure_loaded();
  const fs::path fb = config_.out_dir / "fabricated.bin";
  if (!fs::exists(fb))
    throw MissingArtifactError("missing artifact: " + fb.string() +
                               " (run the fabricate stage first)");
  Dataset forged = load_dataset(fb);
  for (const auto& ex : forged.examples) {
    const auto& natural = dataset_.by_id(ex.id);
    FabricationResult r;
    r.x_bar = ex.x;
    r.delta = ex.x;
    for (std::size_t i = 0; i < r.delta.data.size(); ++i)
      r.delta.data[i] -= natural.x.data[i];
    r.iterations_run = config_.fabrication.steps;
    cache_.put(ex.id, config_.fabrication, std::move(r));
  }
  cache_loaded_ = true;
}

StageResult Pipeline::train() {
  StageResult res;
  res.stage = "train";
  const fs::path ds = config_.out_dir / "dataset.bin";
  const fs::path sp = config_.out_dir / "split.json";
  const std::string stem =
      sanitize(config_.arch_id) + "-" + std::to_string(config_.seed);
  const fs::path ck = config_.out_dir / "checkpoints" / (stem + ".ckpt");
  res.artifacts = {ds, sp, ck, fs::path(ck.string() + ".json")};
  for (int k = 0; k < config_.n_shadow; ++k)
    res.artifacts.push_back(config_.out_dir / "checkpoints" /
                            (stem + "-shadow" + std::to_string(k) + ".ckpt"));
  if (stage_cached(res.stage, res.artifacts)) {
    res.cache_hit = true;
    write_stage_manifest(res);
    return res;
  }

  SyntheticSpec spec = config_.dataset;
  spec.seed = derive_seed(config_.seed, "dataset", spec.seed);
  dataset_ = make_synthetic_dataset(spec);
  save_dataset(dataset_, ds);

  split_ = make_membership_splits(dataset_, config_.n_train, config_.n_shadow,
                                  derive_seed(config_.seed, "split"),
                                  config_.n_eval);
  save_split(split_, sp);

  TrainConfig tc = config_.train;
  tc.seed = derive_seed(config_.seed, "train/target");
  target_ = train_classifier(dataset_, split_.train_members, config_.arch_id,
                             tc);
  target_.save(ck);
  res.metrics["target_train_accuracy"] =
      accuracy(target_, dataset_, split_.train_members);
  res.metrics["target_eval_accuracy"] =
      accuracy(target_, dataset_, split_.eval_nonmembers);
  res.metrics["target_checksum"] = file_checksum(ck);
  write_json(fs::path(ck.string() + ".json"),
             {{"arch_id", config_.arch_id},
              {"seed", tc.seed},
              {"n_train", split_.train_members.size()},
              {"config_hash", hash_}});

  TrainConfig sc = config_.train;
  sc.seed = derive_seed(config_.seed, "train/shadow");
  ensemble_ = train_shadow_ensemble(dataset_, split_, config_.arch_id, sc,
                                    config_.n_shadow);
  for (int k = 0; k < config_.n_shadow; ++k)
    ensemble_.models[k].save(config_.out_dir / "checkpoints" /
                             (stem + "-shadow" + std::to_string(k) + ".ckpt"));
  loaded_ = true;
  ensemble_loaded_ = true;
  write_stage_manifest(res);
  return res;
}

StageResult Pipeline::fabricate() {
  StageResult res;
  res.stage = "fabricate";
  const fs::path fb = config_.out_dir / "fabricated.bin";
  res.artifacts = {fb};
  if (stage_cached(res.stage, res.artifacts)) {
    res.cache_hit = true;
    write_stage_manifest(res);
    return res;
  }
  ensure_loaded();

  Dataset forged;
  forged.n_classes = dataset_.n_classes;
  double max_linf = 0.0;
  std::size_t identical = 0;
  for (const auto& id : split_.eval_nonmembers) {
    const auto& ex = dataset_.by_id(id);
    FabricationConfig c = config_.fabrication;
    c.seed = derive_seed(config_.seed, "fabricate/" + id);
    const auto& r = cache_.get(target_, ex, c);
    forged.examples.push_back({id, r.x_bar, ex.y});
    max_linf = std::max(max_linf, ex.x.linf_distance(r.x_bar));
    identical += ex.x.data == r.x_bar.data ? 1 : 0;
  }
  forged.rebuild_index();
  save_dataset(forged, fb);
  cache_loaded_ = true;

  res.metrics["n_fabricated"] = forged.examples.size();
  res.metrics["max_linf"] = max_linf;
  res.metrics["identity_perturbation"] = config_.fabrication.epsilon == 0.0;
  res.metrics["bit_identical"] = identical;
  write_stage_manifest(res);
  return res;
}

StageResult Pipeline::audit() {
  StageResult res;
  res.stage = "audit";
  for (auto kind : config_.kinds) {
    res.artifacts.push_back(config_.out_dir / "scores" /
                            ("audit_mi_" + to_string(kind) + ".csv"));
    res.artifacts.push_back(config_.out_dir / "scores" /
                            ("audit_mfa_" + to_string(kind) + ".csv"));
  }
  if (stage_cached(res.stage, res.artifacts)) {
    res.cache_hit = true;
    write_stage_manifest(res);
    return res;
  }
  ensure_loaded();
  ensure_cache_loaded();
  bool needs_ensemble = false;
  for (auto kind : config_.kinds)
    needs_ensemble |= kind != StatisticKind::kLoss;
  if (needs_ensemble) ensure_ensemble_loaded();

  GameContext ctx = make_context();
  for (auto kind : config_.kinds) {
    GameOutcome mi = run_mi_game(ctx, kind);
    GameOutcome mfa = run_mfa_game(ctx, kind, config_.fabrication, &cache_);
    write_records_csv(config_.out_dir / "scores" /
                          ("audit_mi_" + to_string(kind) + ".csv"),
                      mi.records, config_.backend);
    write_records_csv(config_.out_dir / "scores" /
                          ("audit_mfa_" + to_string(kind) + ".csv"),
                      mfa.records, config_.backend);
    RocCurve mi_roc = roc_curve(membership_scores(mi));
    json k;
    k["mi_auc"] = auc(mi_roc);
    k["mi_eer"] = eer(mi_roc);
    k["mi_error_area"] = error_area(tnr_tpr_curve(membership_scores(mi)));
    RocCurve mfa_roc = roc_curve(membership_scores(mfa));
    k["mfa_eer"] = eer(mfa_roc);
    k["mfa_error_area"] = error_area(tnr_tpr_curve(membership_scores(mfa)));
    res.metrics[to_string(kind)] = k;
  }
  write_stage_manifest(res);
  return res;
}

StageResult Pipeline::detect() {
  StageResult res;
  res.stage = "detect";
  const fs::path out = config_.out_dir / "scores" / "detect.csv";
  res.artifacts = {out};
  if (stage_cached(res.stage, res.artifacts)) {
    res.cache_hit = true;
    write_stage_manifest(res);
    return res;
  }
  ensure_loaded();
  ensure_cache_loaded();

  GameContext ctx = make_context();
  DetectorRule rule{0.0, config_.backend};
  GameOutcome mfd = run_mfd_game(ctx, config_.fabrication, rule, &cache_);

  // Operating point for the binary detected column: median gradient norm of
  // the selected pool. The ROC below sweeps all thresholds regardless.
  std::vector<double> norms;
  for (const auto& r : mfd.records) norms.push_back(r.grad_norm);
  std::nth_element(norms.begin(), norms.begin() + norms.size() / 2,
                   norms.end());
  rule.tau_prime = norms[norms.size() / 2];
  for (auto& r : mfd.records) r.detected = mfd_detect(r.grad_norm, rule);

  // Feature-space baselines over the same records.
  std::vector<std::string> ref_ids = split_.train_members;
  if (ref_ids.size() > 128) ref_ids.resize(128);
  FeatureStats stats = fit_feature_stats(target_, dataset_, ref_ids);
  const int k = std::min<int>(20, static_cast<int>(ref_ids.size()) - 1);
  for (auto& r : mfd.records) {
    LabeledExample ex = dataset_.by_id(r.sample_id);
    if (r.fabricated) {
      const auto* f = cache_.find(r.sample_id, config_.fabrication);
      if (f) ex.x = f->x_bar;
    }
    r.mahalanobis = mahalanobis_score(stats, target_, ex);
    r.lid = lid_score(stats, target_, ex, k);
  }
  write_records_csv(out, mfd.records, config_.backend);

  res.metrics["prefilter_tau"] = mfd.prefilter_tau;
  res.metrics["pool_size"] = mfd.pool_size;
  res.metrics["selected"] = mfd.records.size();
  res.metrics["tau_prime"] = rule.tau_prime;
  res.metrics["detector_auc"] = auc(roc_curve(detector_scores(mfd)));
  res.metrics["backend"] = to_string(config_.backend);
  write_stage_manifest(res);
  return res;
}

StageResult Pipeline::robust() {
  StageResult res;
  res.stage = "robust";
  for (auto kind : config_.kinds)
    for (double lambda : config_.lambda_grid)
      res.artifacts.push_back(
          config_.out_dir / "scores" /
          ("robust_" + to_string(kind) + "_lambda" + format_lambda(lambda) +
           ".csv"));
  if (stage_cached(res.stage, res.artifacts)) {
    res.cache_hit = true;
    write_stage_manifest(res);
    return res;
  }
  ensure_loaded();
  ensure_cache_loaded();
  bool needs_ensemble = false;
  for (auto kind : config_.kinds)
    needs_ensemble |= kind != StatisticKind::kLoss;
  if (needs_ensemble) ensure_ensemble_loaded();

  GameContext ctx = make_context();
  for (auto kind : config_.kinds) {
    RobustWeightConfig w;
    w.grid = config_.lambda_grid;
    w.lambda = config_.lambda_grid.empty() ? 1.0 : config_.lambda_grid.front();
    GameOutcome base =
        run_armia_game(ctx, kind, config_.fabrication, w, config_.mixture,
                       &cache_);
    json k;
    k["unweighted_auc"] = auc(roc_curve(membership_scores(base)));
    json per_lambda = json::object();
    std::vector<CalibrationRecord> cal;
    for (const auto& r : base.records)
      cal.push_back({r.statistic, r.grad_norm, r.member});
    for (double lambda : config_.lambda_grid) {
      auto records = base.records;
      for (auto& r : records)
        r.weight = robustness_weight(r.grad_norm, lambda);
      write_records_csv(config_.out_dir / "scores" /
                            ("robust_" + to_string(kind) + "_lambda" +
                             format_lambda(lambda) + ".csv"),
                        records, config_.backend);
      per_lambda[format_lambda(lambda)] =
          auc(roc_curve(membership_scores(base, false, lambda)));
    }
    k["weighted_auc"] = per_lambda;
    if (!config_.lambda_grid.empty())
      k["chosen_lambda"] =
          calibrate_lambda_from_scores(cal, config_.lambda_grid);
    res.metrics[to_string(kind)] = k;
  }
  write_stage_manifest(res);
  return res;
}

StageResult Pipeline::report() {
  StageResult res;
  res.stage = "report";
  const fs::path rep = config_.out_dir / "report";
  const fs::path mfa_table = rep / "fabrication_table.csv";
  const fs::path robust_table = rep / "robust_table.csv";
  res.artifacts = {mfa_table, robust_table, rep / "report.json"};
  if (stage_cached(res.stage, res.artifacts)) {
    res.cache_hit = true;
    write_stage_manifest(res);
    return res;
  }

  std::ofstream mt(mfa_table);
  mt << "kind,variant,mi_auc,mi_eer,mi_error_area,mfa_eer,mfa_error_area\n";
  mt.precision(6);
  json summary;
  for (auto kind : config_.kinds) {
    const fs::path mi_csv =
        config_.out_dir / "scores" / ("audit_mi_" + to_string(kind) + ".csv");
    const fs::path mfa_csv =
        config_.out_dir / "scores" / ("audit_mfa_" + to_string(kind) + ".csv");
    if (!fs::exists(mi_csv))
      throw MissingArtifactError("missing artifact: " + mi_csv.string() +
                                 " (run the audit stage first)");
    auto mi = read_records_csv(mi_csv);
    auto mfa = read_records_csv(mfa_csv);
    auto score_of = [](const std::vector<ScoreRecord>& rs) {
      std::vector<ScoredSample> s;
      for (const auto& r : rs) s.push_back({r.statistic, r.member});
      return s;
    };
    RocCurve mi_roc = roc_curve(score_of(mi));
    RocCurve mfa_roc = roc_curve(score_of(mfa));
    std::string variant = "none";
    for (const auto& r : mfa)
      if (r.fabricated) variant = r.variant;
    mt << to_string(kind) << ',' << variant << ',' << auc(mi_roc) << ','
       << eer(mi_roc) << ',' << error_area(tnr_tpr_curve(score_of(mi))) << ','
       << eer(mfa_roc) << ',' << error_area(tnr_tpr_curve(score_of(mfa)))
       << '\n';

    write_curve_svg(rep / ("roc_" + to_string(kind) + ".svg"),
                    {{mi_roc.fpr, mi_roc.tpr}},
                    "membership ROC (" + to_string(kind) + ")");
    TnrTprCurve tt = tnr_tpr_curve(score_of(mfa));
    write_curve_svg(rep / ("tnr_tpr_" + to_string(kind) + ".svg"),
                    {{tt.tnr, tt.tpr}},
                    "TNR-TPR under fabrication (" + to_string(kind) + ")",
                    true);
    summary["audit"][to_string(kind)] = {
        {"mi_auc", auc(mi_roc)},
        {"mfa_error_area", error_area(tt)}};
  }

  std::ofstream rt(robust_table);
  rt << "kind,lambda,auc,eer,tpr_at_1,tpr_at_5,tpr_at_10,tpr_at_20\n";
  rt.precision(6);
  for (auto kind : config_.kinds) {
    // lambda=0 row: the unweighted baseline from the same records.
    std::vector<double> lambdas = {0.0};
    lambdas.insert(lambdas.end(), config_.lambda_grid.begin(),
                   config_.lambda_grid.end());
    for (double lambda : lambdas) {
      const double source =
          lambda == 0.0
              ? (config_.lambda_grid.empty() ? 0.0
                                             : config_.lambda_grid.front())
              : lambda;
      const fs::path csv = config_.out_dir / "scores" /
                           ("robust_" + to_string(kind) + "_lambda" +
                            format_lambda(source) + ".csv");
      if (!fs::exists(csv)) continue;
      auto records = read_records_csv(csv);
      std::vector<ScoredSample> s;
      for (const auto& r : records)
        s.push_back({lambda == 0.0 ? r.statistic
                                   : ar_statistic(r.statistic, r.grad_norm,
                                                  lambda),
                     r.member});
      RocCurve c = roc_curve(s);
      rt << to_string(kind) << ',' << lambda << ',' << auc(c) << ',' << eer(c)
         << ',' << tpr_at_fpr(c, 0.01) << ',' << tpr_at_fpr(c, 0.05) << ','
         << tpr_at_fpr(c, 0.10) << ',' << tpr_at_fpr(c, 0.20) << '\n';
    }
  }

  const fs::path detect_csv = config_.out_dir / "scores" / "detect.csv";
  if (fs::exists(detect_csv)) {
    auto records = read_records_csv(detect_csv);
    std::vector<ScoredSample> s;
    for (const auto& r : records) s.push_back({-r.grad_norm, r.fabricated});
    summary["detector_auc"] = auc(roc_curve(s));
  }
  summary["config_hash"] = hash_;
  write_json(rep / "report.json", summary);
  write_stage_manifest(res);
  return res;
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> results;
  results.push_back(train());
  results.push_back(fabricate());
  results.push_back(audit());
  results.push_back(detect());
  results.push_back(robust());
  results.push_back(report());
  return results;
}

void write_curve_svg(
    const fs::path& path,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        curves,
    const std::string& title, bool log_log) {
  constexpr double kSize = 480.0, kMargin = 40.0;
  constexpr double kLogFloor = 1e-4;  // renders zeros on the log axes
  auto map = [&](double v) {
    if (log_log) v = (std::log10(std::max(v, kLogFloor)) + 4.0) / 4.0;
    return kMargin + v * (kSize - 2.0 * kMargin);
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kSize
      << "' height='" << kSize << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kSize / 2 << "' y='20' text-anchor='middle'>" << title
      << (log_log ? " (log-log)" : "") << "</text>\n";
  out << "<line x1='" << kMargin << "' y1='" << kSize - kMargin << "' x2='"
      << kSize - kMargin << "' y2='" << kSize - kMargin
      << "' stroke='black'/>\n";
  out << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin
      << "' y2='" << kSize - kMargin << "' stroke='black'/>\n";
  const char* colors[] = {"steelblue", "firebrick", "seagreen", "darkorange"};
  std::size_t ci = 0;
  for (const auto& [xs, ys] : curves) {
    out << "<polyline fill='none' stroke='" << colors[ci++ % 4]
        << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < xs.size(); ++i)
      out << map(xs[i]) << ',' << kSize - map(ys[i]) << ' ';
    out << "'/>\n";
  }
  out << "</svg>\n";
}

}  // namespace memaudit
