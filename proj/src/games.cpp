#include "memaudit/games.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "memaudit/rng.hpp"

namespace memaudit {

namespace {

std::vector<std::string> capped(const std::vector<std::string>& ids, int cap) {
  if (cap <= 0 || static_cast<int>(ids.size()) <= cap) return ids;
  return {ids.begin(), ids.begin() + cap};
}

void require(const GameContext& ctx) {
  if (!ctx.dataset || !ctx.target || !ctx.split)
    throw std::invalid_argument("game context missing dataset/target/split");
}

std::string cache_key(const std::string& id, const FabricationConfig& c) {
  std::ostringstream os;
  os << id << '|' << to_string(c.variant) << '|' << c.epsilon << '|'
     << c.steps << '|' << c.adaptive_lambda;
  return os.str();
}

}  // namespace

void MixtureSpec::validate() const {
  if (fraction_members < 0 || fraction_fabricated < 0 || fraction_nonmembers < 0)
    throw std::invalid_argument("mixture fractions must be nonnegative");
  const double s = fraction_members + fraction_fabricated + fraction_nonmembers;
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("mixture fractions must sum to 1");
  if (fabrication_probability < 0 || fabrication_probability > 1)
    throw std::invalid_argument("fabrication probability outside [0,1]");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kMi: return "mi";
    case Protocol::kMfa: return "mfa";
    case Protocol::kMfd: return "mfd";
    case Protocol::kArmia: return "armia";
  }
  throw std::invalid_argument("bad protocol");
}

const FabricationResult& FabricationCache::get(const ClassifierModel& model,
                                               const LabeledExample& ex,
                                               const FabricationConfig& config) {
  const std::string key = cache_key(ex.id, config);
  auto it = cache_.find(key);
  if (it == cache_.end())
    it = cache_.emplace(key, fabricate(model, ex, config)).first;
  return it->second;
}

const FabricationResult* FabricationCache::find(
    const std::string& sample_id, const FabricationConfig& config) const {
  auto it = cache_.find(cache_key(sample_id, config));
  return it == cache_.end() ? nullptr : &it->second;
}

void FabricationCache::put(const std::string& sample_id,
                           const FabricationConfig& config,
                           FabricationResult result) {
  cache_[cache_key(sample_id, config)] = std::move(result);
}

StatisticEvaluator::StatisticEvaluator(const GameContext& ctx,
                                       StatisticKind kind)
    : ctx_(ctx), kind_(kind) {
  require(ctx);
  if (kind == StatisticKind::kLoss) return;
  if (!ctx.ensemble || ctx.ensemble->models.empty())
    throw MissingEnsembleError("statistic " + to_string(kind) +
                               " needs a shadow ensemble");
  if (kind == StatisticKind::kLira) {
    std::vector<LabeledExample> eval_set;
    for (const auto& id : ctx.split->eval_members)
      eval_set.push_back(ctx.dataset->by_id(id));
    for (const auto& id : ctx.split->eval_nonmembers)
      eval_set.push_back(ctx.dataset->by_id(id));
    global_sigmas_ = lira_global_sigmas(*ctx.ensemble, eval_set);
  }
  if (kind == StatisticKind::kRmia) {
    // Population drawn from the tail of the nonmember pool, past the audited
    // nonmembers.
    const auto& pool = ctx.split->nonmember_pool;
    std::size_t start = ctx.split->eval_nonmembers.size();
    for (std::size_t i = start; i < pool.size(); ++i) {
      if (static_cast<int>(population_z_.size()) >= ctx.rmia_population) break;
      population_z_.push_back(ctx.dataset->by_id(pool[i]));
    }
    if (population_z_.empty())
      throw EmptyPopulationError("nonmember pool too small for a population");
  }
}

double StatisticEvaluator::operator()(const LabeledExample& ex) const {
  switch (kind_) {
    case StatisticKind::kLoss:
      return loss_statistic(*ctx_.target, ex);
    case StatisticKind::kAttackR:
      return attack_r_statistic(*ctx_.ensemble, ex, *ctx_.target);
    case StatisticKind::kLira: {
      auto g = fit_lira(*ctx_.ensemble, ex, global_sigmas_->first,
                        global_sigmas_->second);
      const double phi = logit_scale(ctx_.target->probabilities(ex.x)[ex.y]);
      return lira_statistic(g, phi);
    }
    case StatisticKind::kRmia:
      return rmia_statistic(*ctx_.ensemble, population_z_, ex, *ctx_.target,
                            ctx_.rmia_gamma);
  }
  throw std::invalid_argument("bad statistic kind");
}

double gradient_norm_for(const GameContext& ctx, const LabeledExample& ex) {
  if (ctx.backend == GradBackend::kExact) return grad_norm(*ctx.target, ex);
  FDConfig fd = ctx.fd_config;
  fd.seed = derive_seed(ctx.seed, "fd/" + ex.id);
  return fd_grad_estimate(*ctx.target, ex, fd).norm;
}

namespace {

ScoreRecord make_record(const GameContext& ctx, const StatisticEvaluator& eval,
                        const LabeledExample& ex, int member, int fabricated,
                        const std::string& variant) {
  ScoreRecord r;
  r.sample_id = ex.id;
  r.member = member;
  r.fabricated = fabricated;
  r.statistic = eval(ex);
  r.grad_norm = gradient_norm_for(ctx, ex);
  r.kind = eval.kind();
  r.variant = variant;
  return r;
}

void sort_records(std::vector<ScoreRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const ScoreRecord& a, const ScoreRecord& b) {
              if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
              return a.fabricated < b.fabricated;
            });
}

}  // namespace

GameOutcome run_mi_game(const GameContext& ctx, StatisticKind kind) {
  require(ctx);
  StatisticEvaluator eval(ctx, kind);
  GameOutcome out;
  out.protocol = Protocol::kMi;
  for (const auto& id : capped(ctx.split->eval_members, ctx.max_eval_per_side))
    out.records.push_back(
        make_record(ctx, eval, ctx.dataset->by_id(id), 1, 0, "none"));
  for (const auto& id :
       capped(ctx.split->eval_nonmembers, ctx.max_eval_per_side))
    out.records.push_back(
        make_record(ctx, eval, ctx.dataset->by_id(id), 0, 0, "none"));
  sort_records(out.records);
  return out;
}

GameOutcome run_mfa_game(const GameContext& ctx, StatisticKind kind,
                         const FabricationConfig& fab,
                         FabricationCache* cache) {
  require(ctx);
  fab.validate();
  StatisticEvaluator eval(ctx, kind);
  FabricationCache local;
  FabricationCache& fc = cache ? *cache : local;
  const std::string variant = to_string(fab.variant);

  GameOutcome out;
  out.protocol = Protocol::kMfa;
  for (const auto& id : capped(ctx.split->eval_members, ctx.max_eval_per_side))
    out.records.push_back(
        make_record(ctx, eval, ctx.dataset->by_id(id), 1, 0, "none"));
  for (const auto& id :
       capped(ctx.split->eval_nonmembers, ctx.max_eval_per_side)) {
    const auto& ex = ctx.dataset->by_id(id);
    FabricationConfig c = fab;
    c.seed = derive_seed(ctx.seed, "fabricate/" + id);
    const auto& res = fc.get(*ctx.target, ex, c);
    LabeledExample forged{ex.id, res.x_bar, ex.y};
    out.records.push_back(make_record(ctx, eval, forged, 0, 1, variant));
  }
  sort_records(out.records);
  return out;
}

GameOutcome run_mfd_game(const GameContext& ctx, const FabricationConfig& fab,
                         const DetectorRule& detector,
                         FabricationCache* cache) {
  require(ctx);
  fab.validate();
  GameContext loss_ctx = ctx;
  loss_ctx.backend = detector.backend;
  GameOutcome pool = run_mfa_game(loss_ctx, StatisticKind::kLoss, fab, cache);

  // Pre-filter: the auditor flags samples whose membership statistic clears a
  // threshold set for 10% false positives over the fabricated pool.
  std::vector<double> fab_scores;
  for (const auto& r : pool.records)
    if (r.fabricated) fab_scores.push_back(r.statistic);
  if (fab_scores.empty())
    throw EmptySelectionError("no fabricated samples in the detection pool");
  std::sort(fab_scores.begin(), fab_scores.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(
      std::floor(0.10 * static_cast<double>(fab_scores.size())));
  const double tau = k < fab_scores.size()
                         ? fab_scores[k]
                         : -std::numeric_limits<double>::infinity();

  GameOutcome out;
  out.protocol = Protocol::kMfd;
  out.prefilter_tau = tau;
  out.pool_size = pool.records.size();
  for (auto& r : pool.records) {
    if (!(r.statistic > tau)) continue;
    r.detected = mfd_detect(r.grad_norm, detector);
    out.records.push_back(r);
  }
  if (out.records.empty())
    throw EmptySelectionError("membership pre-filter selected nothing");
  bool any_fab = false, any_member = false;
  for (const auto& r : out.records) {
    any_fab |= r.fabricated != 0;
    any_member |= r.member != 0;
  }
  if (!any_fab || !any_member)
    throw EmptySelectionError("pre-filter selection is single-class");
  return out;
}

GameOutcome run_armia_game(const GameContext& ctx, StatisticKind kind,
                           const FabricationConfig& fab,
                           const RobustWeightConfig& weight,
                           const MixtureSpec& mixture,
                           FabricationCache* cache) {
  require(ctx);
  fab.validate();
  mixture.validate();
  StatisticEvaluator eval(ctx, kind);
  FabricationCache local;
  FabricationCache& fc = cache ? *cache : local;

  auto members = capped(ctx.split->eval_members, ctx.max_eval_per_side);
  auto nonmembers = capped(ctx.split->eval_nonmembers, ctx.max_eval_per_side);
  if (members.empty() || nonmembers.empty())
    throw EmptySelectionError("armia mixture needs both eval sides");

  // Deterministic counts matching the mixture fractions; the fabrication coin
  // is realized as a seeded shuffle of the nonmember side.
  const auto n_members = static_cast<double>(members.size());
  const auto total = static_cast<std::size_t>(
      std::llround(n_members / mixture.fraction_members));
  std::size_t n_fab = static_cast<std::size_t>(
      std::llround(static_cast<double>(total) * mixture.fraction_fabricated));
  n_fab = std::min(n_fab, nonmembers.size());
  std::size_t n_nat = std::min(total - members.size() - n_fab,
                               nonmembers.size() - n_fab);

  auto rng = make_rng(derive_seed(ctx.seed, "armia/coin"));
  std::shuffle(nonmembers.begin(), nonmembers.end(), rng);

  GameOutcome out;
  out.protocol = Protocol::kArmia;
  for (const auto& id : members) {
    auto r = make_record(ctx, eval, ctx.dataset->by_id(id), 1, 0, "none");
    r.weight = robustness_weight(r.grad_norm, weight.lambda);
    out.records.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < n_fab + n_nat; ++i) {
    const auto& ex = ctx.dataset->by_id(nonmembers[i]);
    ScoreRecord r;
    if (i < n_fab) {
      FabricationConfig c = fab;
      c.seed = derive_seed(ctx.seed, "fabricate/" + ex.id);
      const auto& res = fc.get(*ctx.target, ex, c);
      LabeledExample forged{ex.id, res.x_bar, ex.y};
      r = make_record(ctx, eval, forged, 0, 1, to_string(fab.variant));
    } else {
      r = make_record(ctx, eval, ex, 0, 0, "none");
    }
    r.weight = robustness_weight(r.grad_norm, weight.lambda);
    out.records.push_back(std::move(r));
  }
  sort_records(out.records);
  return out;
}

std::vector<ScoredSample> detector_scores(const GameOutcome& outcome) {
  std::vector<ScoredSample> s;
  s.reserve(outcome.records.size());
  for (const auto& r : outcome.records)
    s.push_back({-r.grad_norm, r.fabricated});
  return s;
}

std::vector<ScoredSample> membership_scores(const GameOutcome& outcome,
                                            bool weighted,
                                            std::optional<double> lambda) {
  std::vector<ScoredSample> s;
  s.reserve(outcome.records.size());
  for (const auto& r : outcome.records) {
    double score = r.statistic;
    if (lambda)
      score = ar_statistic(r.statistic, r.grad_norm, *lambda);
    else if (weighted)
      score = r.weight * r.statistic;
    s.push_back({score, r.member});
  }
  return s;
}

double calibrate_lambda(const GameContext& shadow_ctx, StatisticKind kind,
                        const FabricationConfig& fab,
                        const std::vector<double>& grid,
                        const MixtureSpec& mixture,
                        CalibrationObjective objective,
                        FabricationCache* cache) {
  RobustWeightConfig w;
  w.lambda = grid.empty() ? 1.0 : grid.front();
  GameOutcome sim =
      run_armia_game(shadow_ctx, kind, fab, w, mixture, cache);
  std::vector<CalibrationRecord> records;
  records.reserve(sim.records.size());
  for (const auto& r : sim.records)
    records.push_back({r.statistic, r.grad_norm, r.member});
  return calibrate_lambda_from_scores(records, grid, objective);
}

void write_records_csv(const std::filesystem::path& path,
                       const std::vector<ScoreRecord>& records,
                       GradBackend backend) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  const bool extras =
      std::any_of(records.begin(), records.end(), [](const ScoreRecord& r) {
        return std::isfinite(r.mahalanobis) || std::isfinite(r.lid);
      });
  const std::string grad_col = backend == GradBackend::kFiniteDifference
                                   ? "grad_norm_fd"
                                   : "grad_norm";
  out << "sample_id,kind,variant,member,fabricated,detected,statistic,"
      << grad_col << ",weight";
  if (extras) out << ",mahalanobis,lid";
  out << '\n';
  out.precision(17);
  for (const auto& r : records) {
    out << r.sample_id << ',' << to_string(r.kind) << ',' << r.variant << ','
        << r.member << ',' << r.fabricated << ',' << r.detected << ','
        << r.statistic << ',' << r.grad_norm << ',' << r.weight;
    if (extras) out << ',' << r.mahalanobis << ',' << r.lid;
    out << '\n';
  }
}

std::vector<ScoreRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty score file " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) header.push_back(col);
  }
  auto col_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1
                              : static_cast<int>(it - header.begin());
  };
  const int c_grad = col_of("grad_norm") >= 0 ? col_of("grad_norm")
                                              : col_of("grad_norm_fd");
  const int c_maha = col_of("mahalanobis");
  const int c_lid = col_of("lid");

  std::vector<ScoreRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 9)
      throw std::runtime_error("malformed record at row " +
                               std::to_string(row) + " of " + path.string());
    ScoreRecord r;
    r.sample_id = f[0];
    r.kind = statistic_kind_from_string(f[1]);
    r.variant = f[2];
    r.member = std::stoi(f[3]);
    r.fabricated = std::stoi(f[4]);
    r.detected = std::stoi(f[5]);
    r.statistic = std::stod(f[6]);
    r.grad_norm = std::stod(f[c_grad]);
    r.weight = std::stod(f[8]);
    if (c_maha >= 0 && c_maha < static_cast<int>(f.size()))
      r.mahalanobis = std::stod(f[c_maha]);
    if (c_lid >= 0 && c_lid < static_cast<int>(f.size()))
      r.lid = std::stod(f[c_lid]);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace memaudit
