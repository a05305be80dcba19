#include "memlen/policy.hpp"

#include <cmath>

namespace memlen {

Vec SuffixRulePolicy::action_dist(const HistoryTree& tree, int level, int node) const {
  return action_dist(tree.suffix_of(level, node, k_));
}

Vec SuffixRulePolicy::action_dist(const Suffix& s) const {
  Vec d = rule_(s);
  if (std::abs(d.sum() - 1.0) > 1e-12 || d.minCoeff() < 0.0)
    throw ValidationError("policy rule returned an invalid action distribution");
  return d;
}

TreePolicy::TreePolicy(const HistoryTree& tree) : tree_(&tree) {
  choice_.resize(tree.depth());
  fallback_.resize(tree.depth());
  for (int t = 0; t < tree.depth(); ++t) {
    choice_[t].assign(tree.level(t).size(), -1);
    fallback_[t].assign(tree.level(t).size(), 0);
  }
}

Vec TreePolicy::action_dist(const HistoryTree& tree, int level, int node) const {
  Vec d = Vec::Zero(tree.model().num_actions);
  d[action(level, node)] = 1.0;
  return d;
}

std::shared_ptr<SuffixRulePolicy> uniform_policy(int num_actions) {
  return std::make_shared<SuffixRulePolicy>(
      0,
      [num_actions](const Suffix&) {
        return Vec::Constant(num_actions, 1.0 / num_actions);
      },
      ContextPolicy::Kind::kSuffixTable);
}

namespace {
std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}
}  // namespace

std::shared_ptr<SuffixRulePolicy> hashed_random_policy(int num_actions, int k,
                                                       std::uint64_t seed) {
  auto rule = [num_actions, seed](const Suffix& s) {
    std::uint64_t h = mix(seed, 0xabcdef12u + static_cast<std::uint64_t>(s.n));
    for (int o : s.observations) h = mix(h, 0x1000 + o);
    for (int a : s.actions) h = mix(h, 0x2000 + a);
    Vec d(num_actions);
    double sum = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      h = mix(h, a + 1);
      // Strictly positive weights so the policy has full support.
      d[a] = 0.05 + static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53);
      sum += d[a];
    }
    return Vec(d / sum);
  };
  return std::make_shared<SuffixRulePolicy>(k, rule, ContextPolicy::Kind::kSuffixTable);
}

}  // namespace memlen
