#pragma once

#include <cstdint>
#include <vector>

#include "memlen/pomdp.hpp"

namespace memlen {

constexpr std::int64_t kDefaultNodeBudget = 5'000'000;

struct HistoryNode {
  int parent = -1;       // index into the previous level
  std::int16_t action = -1;  // edge from the parent
  std::int16_t obs = -1;     // observation emitted on entering this node
  double weight = 0.0;   // Pr(o_{1:t} | a_{1:t-1})
};

/// All histories with positive probability under the all-actions regime,
/// level t holds histories of length t (1-based step index t = level + 1).
/// Distinct (o, a) sequences map to distinct nodes, so the tree deduplicates
/// by construction.
class HistoryTree {
 public:
  HistoryTree(const TabularPOMDP& model, int up_to_t,
              std::int64_t node_budget = kDefaultNodeBudget);

  const TabularPOMDP& model() const { return *model_; }
  int depth() const { return static_cast<int>(levels_.size()); }
  int num_levels() const { return depth(); }
  const std::vector<HistoryNode>& level(int t) const { return levels_[t]; }
  std::int64_t total_nodes() const { return total_nodes_; }

  /// Child of (level, node) along (action, obs); -1 when unreachable or the
  /// next level was not materialized.
  int child(int level, int node, int action, int obs) const {
    if (level + 1 >= depth()) return -1;
    return children_[level][(static_cast<size_t>(node) * model_->num_actions + action) *
                               model_->num_observations +
                           obs];
  }

  const Belief belief(int level, int node) const {
    return beliefs_[level].row(node).transpose();
  }
  double weight(int level, int node) const { return levels_[level][node].weight; }

  /// E[r_t | h, a] with t = level + 1.
  double expected_reward(int level, int node, int action) const {
    return exp_reward_[level][static_cast<size_t>(node) * model_->num_actions + action];
  }

  /// Pr(o_{t+1} = o | h, a); defined for every level including the last
  /// (the step-T emission exists even though step-T+1 nodes do not).
  double next_obs_prob(int level, int node, int action, int obs) const {
    return obs_dist_[level][(static_cast<size_t>(node) * model_->num_actions + action) *
                                model_->num_observations +
                            obs];
  }

  History history_of(int level, int node) const;
  Suffix suffix_of(int level, int node, int n) const;

  /// Node index of a history; throws UnreachableError when absent.
  std::pair<int, int> find(const History& h) const;

 private:
  const TabularPOMDP* model_;
  std::vector<std::vector<HistoryNode>> levels_;
  std::vector<Mat> beliefs_;                    // per level: nodes x S
  std::vector<std::vector<int>> children_;      // per level < depth-1
  std::vector<std::vector<double>> exp_reward_; // per level: nodes*A
  std::vector<std::vector<double>> obs_dist_;   // per level: nodes*A*O
  std::int64_t total_nodes_ = 0;
};

/// Spec-level convenience wrappers.
Vec next_obs_dist(const HistoryTree& tree, const History& h, int action);
double expected_reward(const HistoryTree& tree, const History& h, int action);

}  // namespace memlen
