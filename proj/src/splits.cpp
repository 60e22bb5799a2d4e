#include "memaudit/splits.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memaudit/rng.hpp"

namespace memaudit {

namespace {

void require_disjoint(const std::vector<std::string>& a,
                      const std::vector<std::string>& b, const char* what) {
  std::unordered_set<std::string> sa(a.begin(), a.end());
  for (const auto& id : b)
    if (sa.count(id))
      throw std::logic_error(std::string("split invariant violated: ") + what +
                             " (" + id + ")");
}

void require_subset(const std::vector<std::string>& sub,
                    const std::vector<std::string>& super, const char* what) {
  std::unordered_set<std::string> ss(super.begin(), super.end());
  for (const auto& id : sub)
    if (!ss.count(id))
      throw std::logic_error(std::string("split invariant violated: ") + what +
                             " (" + id + ")");
}

}  // namespace

void MembershipSplit::validate() const {
  require_disjoint(train_members, nonmember_pool,
                   "train_members vs nonmember_pool");
  require_subset(eval_members, train_members, "eval_members not in train");
  require_subset(eval_nonmembers, nonmember_pool,
                 "eval_nonmembers not in pool");
  // Shadow filler (non-eval-pool training ids) must not touch the eval sets.
  std::unordered_set<std::string> eval_pool(eval_members.begin(),
                                            eval_members.end());
  eval_pool.insert(eval_nonmembers.begin(), eval_nonmembers.end());
  std::unordered_set<std::string> train_set(train_members.begin(),
                                            train_members.end());
  for (const auto& s : shadow_splits) {
    for (const auto& id : s.in_ids) {
      if (eval_pool.count(id)) continue;  // Bernoulli(1/2) eval inclusion
      if (train_set.count(id))
        throw std::logic_error(
            "split invariant violated: shadow filler overlaps target train (" +
            id + ")");
    }
    for (const auto& id : s.out_ids)
      if (!eval_pool.count(id))
        throw std::logic_error(
            "split invariant violated: shadow out id not in eval pool (" + id +
            ")");
  }
}

MembershipSplit make_membership_splits(const Dataset& dataset, int n_train,
                                       int n_shadow, std::uint64_t seed,
                                       int n_eval) {
  const int total = static_cast<int>(dataset.examples.size());
  if (n_train < 1 || total < 2 * n_train)
    throw InsufficientDataError(
        "dataset too small for disjoint member/nonmember split: " +
        std::to_string(total) + " examples, n_train=" + std::to_string(n_train));
  if (n_shadow < 0) throw std::invalid_argument("n_shadow must be >= 0");

  std::vector<std::string> ids;
  ids.reserve(total);
  for (const auto& ex : dataset.examples) ids.push_back(ex.id);
  auto rng = make_rng(derive_seed(seed, "split/shuffle"));
  std::shuffle(ids.begin(), ids.end(), rng);

  MembershipSplit split;
  split.train_members.assign(ids.begin(), ids.begin() + n_train);
  split.nonmember_pool.assign(ids.begin() + n_train, ids.end());

  int n_eval_side = n_eval > 0 ? n_eval
                               : std::min<int>(n_train,
                                               static_cast<int>(
                                                   split.nonmember_pool.size()));
  n_eval_side = std::min<int>(
      {n_eval_side, n_train, static_cast<int>(split.nonmember_pool.size())});
  split.eval_members.assign(split.train_members.begin(),
                            split.train_members.begin() + n_eval_side);
  split.eval_nonmembers.assign(split.nonmember_pool.begin(),
                               split.nonmember_pool.begin() + n_eval_side);

  // Fresh filler for shadow training, outside the eval pool and outside the
  // target's training set.
  std::vector<std::string> filler(split.nonmember_pool.begin() + n_eval_side,
                                  split.nonmember_pool.end());

  std::vector<std::string> eval_pool(split.eval_members);
  eval_pool.insert(eval_pool.end(), split.eval_nonmembers.begin(),
                   split.eval_nonmembers.end());

  for (int k = 0; k < n_shadow; ++k) {
    auto srng = make_rng(derive_seed(seed, "split/shadow", k));
    std::bernoulli_distribution coin(0.5);
    ShadowSplit s;
    for (const auto& id : eval_pool) {
      if (coin(srng))
        s.in_ids.push_back(id);
      else
        s.out_ids.push_back(id);
    }
    // Top up with filler so shadow models see roughly n_train samples.
    std::vector<std::string> pool = filler;
    std::shuffle(pool.begin(), pool.end(), srng);
    const int want = n_train - static_cast<int>(s.in_ids.size());
    for (int i = 0; i < want && i < static_cast<int>(pool.size()); ++i)
      s.in_ids.push_back(pool[i]);
    split.shadow_splits.push_back(std::move(s));
  }

  // Per-sample reference statistics need both IN and OUT models. Rebalance
  // the rare coin streaks so every eval id keeps at least two of each side
  // (when enough shadow models exist to support that).
  if (n_shadow >= 4) {
    auto frng = make_rng(derive_seed(seed, "split/rebalance"));
    for (const auto& id : eval_pool) {
      auto side_of = [&](ShadowSplit& s, bool in) {
        auto& v = in ? s.in_ids : s.out_ids;
        return std::find(v.begin(), v.end(), id);
      };
      auto count_in = [&] {
        int c = 0;
        for (auto& s : split.shadow_splits)
          c += side_of(s, true) != s.in_ids.end();
        return c;
      };
      std::uniform_int_distribution<int> pick(0, n_shadow - 1);
      for (int guard = 0; guard < 16 * n_shadow; ++guard) {
        const int in = count_in();
        const bool need_in = in < 2;
        const bool need_out = n_shadow - in < 2;
        if (!need_in && !need_out) break;
        auto& s = split.shadow_splits[pick(frng)];
        auto from = side_of(s, need_out);
        if (from == (need_out ? s.in_ids.end() : s.out_ids.end())) continue;
        (need_out ? s.in_ids : s.out_ids).erase(from);
        (need_out ? s.out_ids : s.in_ids).push_back(id);
      }
    }
  }

  split.validate();
  return split;
}

void save_split(const MembershipSplit& split,
                const std::filesystem::path& path) {
  nlohmann::json j;
  j["train_members"] = split.train_members;
  j["nonmember_pool"] = split.nonmember_pool;
  j["eval_members"] = split.eval_members;
  j["eval_nonmembers"] = split.eval_nonmembers;
  j["shadow_splits"] = nlohmann::json::array();
  for (const auto& s : split.shadow_splits)
    j["shadow_splits"].push_back({{"in", s.in_ids}, {"out", s.out_ids}});
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << j.dump(2) << "\n";
}

MembershipSplit load_split(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  f >> j;
  MembershipSplit split;
  split.train_members = j.at("train_members").get<std::vector<std::string>>();
  split.nonmember_pool = j.at("nonmember_pool").get<std::vector<std::string>>();
  split.eval_members = j.at("eval_members").get<std::vector<std::string>>();
  split.eval_nonmembers =
      j.at("eval_nonmembers").get<std::vector<std::string>>();
  for (const auto& s : j.at("shadow_splits")) {
    ShadowSplit ss;
    ss.in_ids = s.at("in").get<std::vector<std::string>>();
    ss.out_ids = s.at("out").get<std::vector<std::string>>();
    split.shadow_splits.push_back(std::move(ss));
  }
  return split;
}

}  // namespace memaudit
