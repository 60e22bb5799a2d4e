#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "memaudit/dataset.hpp"

namespace memaudit {

struct ShadowSplit {
  std::vector<std::string> in_ids;
  std::vector<std::string> out_ids;  // eval-pool ids excluded from this model
};

// Membership bookkeeping for one target model: who trained it, who is held
// out, which samples are audited, and the per-shadow-model IN/OUT manifest.
//
// Shadow IN sets contain each eval-pool id with probability 1/2 plus fresh
// filler ids; the filler never touches the eval pool.
struct MembershipSplit {
  std::vector<std::string> train_members;
  std::vector<std::string> nonmember_pool;
  std::vector<std::string> eval_members;
  std::vector<std::string> eval_nonmembers;
  std::vector<ShadowSplit> shadow_splits;

  void validate() const;  // throws on any disjointness violation
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// n_eval = 0 picks the largest balanced eval set the split supports.
MembershipSplit make_membership_splits(const Dataset& dataset, int n_train,
                                       int n_shadow, std::uint64_t seed,
                                       int n_eval = 0);

void save_split(const MembershipSplit& split, const std::filesystem::path& path);
MembershipSplit load_split(const std::filesystem::path& path);

}  // namespace memaudit
