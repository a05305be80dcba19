#pragma once

#include <optional>
#include <string>
#include <vector>

#include "memlen/values.hpp"

namespace memlen {

struct DiagConfig {
  double tol = 1e-9;        // equality / tie tolerance
  int max_policies = 10'000;
  std::int64_t node_budget = kDefaultNodeBudget;
};

struct LengthWitness {
  int k = 0;  // the failing suffix length (length - 1)
  History h1, h2;
  int action = 0;
  int obs = -1;       // set for transition-distribution witnesses
  double v1 = 0.0, v2 = 0.0;
};

struct LengthResult {
  int length = 0;
  std::optional<LengthWitness> witness;  // certifies failure at length - 1
};

/// Def. 1a over the contexts visited by pi (supp of d_pi).
LengthResult policy_memory_length(const HistoryTree& tree, const ContextPolicy& pi,
                                  const PolicyEvaluation& eval, double tol = 1e-9);
/// Def. 1b over supp(d_pi), all actions.
LengthResult value_memory_length(const HistoryTree& tree,
                                 const PolicyEvaluation& eval, double tol = 1e-9);
/// Def. 1c over every all-actions reachable history.
LengthResult reward_memory_length(const HistoryTree& tree, double tol = 1e-9);
/// Def. 1d over every all-actions reachable history.
LengthResult transition_memory_length(const HistoryTree& tree, double tol = 1e-9);

/// Credit assignment length of one history (Eq. 2); 1 when every action is
/// greedy. `nstep` must be built for the same policy as `eval`.
int ca_length_history(const HistoryTree& tree, const PolicyEvaluation& eval,
                      const NStepValues& nstep, int level, int node, double tol = 1e-9);

struct CaPolicyResult {
  int length = 1;
  int witness_level = 0, witness_node = 0;  // attaining history
};
CaPolicyResult ca_length_policy(const HistoryTree& tree, const ContextPolicy& pi,
                                const PolicyEvaluation& eval, double tol = 1e-9);

struct Theorem1Report {
  int l_mem = 0, l_value = 0, m_reward = 0, m_transit = 0;
  int m_task = 0;
  bool holds = false;
  bool truncated = false;
};

struct LengthReport {
  std::string name;
  int horizon = 0;
  int l_mem = 0;       // of the minimum-memory optimal policy
  int l_value = 0;     // of that same policy
  int m_reward = 0;
  int m_transit = 0;
  int m_task = 0;      // max(m_reward, m_transit)
  int c_task = 0;      // min over optimal policies of c(pi)
  std::vector<int> c_per_policy;
  int num_optimal_policies = 0;
  bool policy_enum_truncated = false;
  std::optional<LengthWitness> w_l_mem, w_l_value, w_m_reward, w_m_transit;
  Theorem1Report theorem1;
};

/// Minimum-memory optimal policy: index into `set.policies` plus its length.
std::pair<int, LengthResult> min_memory_optimal(const HistoryTree& tree,
                                                const OptimalPolicySet& set,
                                                double tol = 1e-9);

Theorem1Report verify_theorem1(const TabularPOMDP& m, const DiagConfig& cfg = {});

LengthReport analyze(const TabularPOMDP& m, const DiagConfig& cfg = {});

}  // namespace memlen
