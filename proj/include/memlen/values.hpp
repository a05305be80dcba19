#pragma once

#include <memory>
#include <vector>

#include "memlen/history_tree.hpp"
#include "memlen/policy.hpp"

namespace memlen {

/// Exact Q^pi / V^pi by backward induction over the full all-actions tree,
/// plus the history occupancy distribution d_pi.
struct PolicyEvaluation {
  std::vector<std::vector<double>> q;          // [level][node*A + a]
  std::vector<std::vector<double>> v;          // [level][node]
  std::vector<std::vector<double>> occupancy;  // d_pi, [level][node]
  std::vector<std::vector<std::uint8_t>> support;

  double q_at(int level, int node, int a, int A) const {
    return q[level][static_cast<size_t>(node) * A + a];
  }
};

PolicyEvaluation evaluate_policy(const HistoryTree& tree, const ContextPolicy& pi);

struct OptimalValues {
  std::vector<std::vector<double>> q;  // [level][node*A + a]
  std::vector<std::vector<double>> v;  // [level][node]
  // Greedy action set per node within the tie tolerance, as a bitmask.
  std::vector<std::vector<std::uint32_t>> greedy;
  double tie_tol = 1e-9;
};

OptimalValues optimal_values(const HistoryTree& tree, double tie_tol = 1e-9);

struct OptimalPolicySet {
  std::vector<std::shared_ptr<TreePolicy>> policies;
  bool truncated = false;
};

/// Depth-first enumeration of every deterministic optimal policy, branching
/// over greedy-action ties at histories reachable under the policy being
/// built. Off-support nodes get the first greedy action as completion.
OptimalPolicySet enumerate_optimal_policies(const HistoryTree& tree,
                                            const OptimalValues& opt,
                                            int max_count = 10'000);

/// m-step expected discounted reward sums following pi, for every node:
/// f[m][level][node] = E[sum_{i=0}^{m-1} gamma^i r | h, pi], m = 0..max_n.
class NStepValues {
 public:
  NStepValues(const HistoryTree& tree, const ContextPolicy& pi, int max_n);

  /// G^pi_n(h, a), 1 <= n <= T - t + 1.
  double g(int level, int node, int action, int n) const;

 private:
  const HistoryTree* tree_;
  std::vector<std::vector<Vec>> pi_;  // cached action dists
  std::vector<std::vector<std::vector<double>>> f_;
};

/// Q^pi_n: occupancy-weighted mean of Q^pi over the supp(d_pi) histories at
/// the same step sharing the node's length-n suffix.
double suffix_value(const HistoryTree& tree, const PolicyEvaluation& eval,
                    int level, int node, int n, int action);

}  // namespace memlen
