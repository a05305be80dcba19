#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "memlen/history_tree.hpp"
#include "memlen/pomdp.hpp"

namespace memlen {

/// Context-based policy: action distribution as a function of the recent
/// l_ctx observations and actions.
class ContextPolicy {
 public:
  enum class Kind { kMarkov, kSuffixTable, kFullHistory };

  virtual ~ContextPolicy() = default;
  virtual Kind kind() const = 0;
  virtual int context_len() const = 0;
  /// Action distribution at a history node of the tree.
  virtual Vec action_dist(const HistoryTree& tree, int level, int node) const = 0;
};

/// Policy given by a rule over length-<=k suffixes. Markovian policies are
/// the k = 1 case; k = 0 is a constant (history-free) rule.
class SuffixRulePolicy : public ContextPolicy {
 public:
  using Rule = std::function<Vec(const Suffix&)>;
  SuffixRulePolicy(int k, Rule rule, Kind kind = Kind::kSuffixTable)
      : k_(k), rule_(std::move(rule)), kind_(kind) {}

  Kind kind() const override { return kind_; }
  int context_len() const override { return k_; }
  Vec action_dist(const HistoryTree& tree, int level, int node) const override;
  Vec action_dist(const Suffix& s) const;

 private:
  int k_;
  Rule rule_;
  Kind kind_;
};

/// Deterministic full-history policy represented as one chosen action per
/// tree node. Unassigned nodes (-1) fall back to a completion table, filled
/// by `complete_greedy` in values.cpp with the first greedy action under Q*;
/// Def.-2b-style maxima never range over those nodes.
class TreePolicy : public ContextPolicy {
 public:
  explicit TreePolicy(const HistoryTree& tree);

  Kind kind() const override { return Kind::kFullHistory; }
  int context_len() const override { return tree_->depth(); }
  Vec action_dist(const HistoryTree& tree, int level, int node) const override;

  int action(int level, int node) const {
    int a = choice_[level][node];
    return a >= 0 ? a : fallback_[level][node];
  }
  bool assigned(int level, int node) const { return choice_[level][node] >= 0; }
  void assign(int level, int node, int a) { choice_[level][node] = static_cast<std::int8_t>(a); }
  void clear(int level, int node) { choice_[level][node] = -1; }
  void set_fallback(std::vector<std::vector<std::int8_t>> fb) { fallback_ = std::move(fb); }

 private:
  const HistoryTree* tree_;
  std::vector<std::vector<std::int8_t>> choice_;
  std::vector<std::vector<std::int8_t>> fallback_;
};

/// Uniform-random policy (context length 0).
std::shared_ptr<SuffixRulePolicy> uniform_policy(int num_actions);

/// Deterministic, fully supported random policy: the action distribution is
/// a pure function of (seed, suffix) via hashing, with all probabilities
/// positive. Used as property-test fodder.
std::shared_ptr<SuffixRulePolicy> hashed_random_policy(int num_actions, int k,
                                                       std::uint64_t seed);

}  // namespace memlen
