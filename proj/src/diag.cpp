#include "memlen/diag.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_map>

namespace memlen {

namespace {

struct KeyHash {
  size_t operator()(const std::tuple<int, int, int>& k) const {
    auto [a, b, c] = k;
    size_t h = static_cast<size_t>(a) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<size_t>(b + 1) * 0xff51afd7ed558ccdULL + (h >> 29);
    h ^= static_cast<size_t>(c + 2) * 0xc4ceb9fe1a85ec53ULL + (h >> 31);
    return h;
  }
};

// Iterative suffix-group refinement. After refine_to(k), nodes at each level
// share a group id iff they share their length-k suffix. Groups only split
// as k grows, which makes every grouping-defined length predicate monotone
// in k by construction.
class SuffixGroups {
 public:
  explicit SuffixGroups(const HistoryTree& tree) : tree_(&tree), k_(0) {
    gid_.resize(tree.depth());
    anc_.resize(tree.depth());
    for (int t = 0; t < tree.depth(); ++t) {
      gid_[t].assign(tree.level(t).size(), 0);
      anc_[t].resize(tree.level(t).size());
      for (size_t i = 0; i < tree.level(t).size(); ++i)
        anc_[t][i] = static_cast<int>(i);
    }
  }

  int k() const { return k_; }
  int group(int level, int node) const { return gid_[level][node]; }

  void refine() {
    ++k_;
    for (int t = 0; t < tree_->depth(); ++t) {
      std::unordered_map<std::tuple<int, int, int>, int, KeyHash> remap;
      std::vector<int> next(gid_[t].size());
      for (size_t i = 0; i < gid_[t].size(); ++i) {
        int obs, act;
        if (k_ == 1) {
          obs = tree_->level(t)[i].obs;
          act = -1;
        } else {
          int a = anc_[t][i];
          int anc_level = t - (k_ - 2);
          if (a < 0 || anc_level == 0) {
            // Suffix already covers the whole history: singleton group.
            anc_[t][i] = -1;
            next[i] = -1 - static_cast<int>(i);
            continue;
          }
          const HistoryNode& node = tree_->level(anc_level)[a];
          act = node.action;
          obs = tree_->level(anc_level - 1)[node.parent].obs;
          anc_[t][i] = node.parent;
        }
        auto key = std::make_tuple(gid_[t][i], obs, act);
        auto [it, inserted] = remap.try_emplace(key, static_cast<int>(remap.size()));
        next[i] = it->second;
      }
      gid_[t] = std::move(next);
    }
  }

 private:
  const HistoryTree* tree_;
  int k_;
  std::vector<std::vector<int>> gid_;
  std::vector<std::vector<int>> anc_;  // ancestor at level t - (k-1)
};

// Generic minimal-k search: `values(level, node)` yields the vector that must
// be constant within each suffix group; `in_domain` restricts the quantifier.
template <typename Domain, typename Values>
LengthResult minimal_suffix_length(const HistoryTree& tree, Domain in_domain,
                                   Values values, double tol) {
  SuffixGroups groups(tree);
  LengthResult res;
  for (int k = 0; k <= tree.depth(); ++k) {
    if (k > 0) groups.refine();
    bool ok = true;
    std::optional<LengthWitness> wit;
    for (int t = 0; t < tree.depth() && ok; ++t) {
      std::unordered_map<int, int> rep;  // group -> representative node
      for (size_t i = 0; i < tree.level(t).size() && ok; ++i) {
        if (!in_domain(t, static_cast<int>(i))) continue;
        int g = groups.group(t, static_cast<int>(i));
        auto [it, inserted] = rep.try_emplace(g, static_cast<int>(i));
        if (inserted) continue;
        std::vector<double> a = values(t, it->second);
        std::vector<double> b = values(t, static_cast<int>(i));
        for (size_t j = 0; j < a.size(); ++j) {
          if (std::abs(a[j] - b[j]) > tol) {
            ok = false;
            LengthWitness w;
            w.k = k;
            w.h1 = tree.history_of(t, it->second);
            w.h2 = tree.history_of(t, static_cast<int>(i));
            w.action = static_cast<int>(j);
            w.v1 = a[j];
            w.v2 = b[j];
            wit = w;
            break;
          }
        }
      }
    }
    if (ok) {
      res.length = k;
      return res;
    }
    res.witness = wit;  // last failing level certifies length - 1
  }
  throw ValidationError("suffix-length search failed to terminate");
}

}  // namespace

LengthResult policy_memory_length(const HistoryTree& tree, const ContextPolicy& pi,
                                  const PolicyEvaluation& eval, double tol) {
  const int A = tree.model().num_actions;
  return minimal_suffix_length(
      tree, [&](int t, int i) { return eval.support[t][i] != 0; },
      [&](int t, int i) {
        Vec d = pi.action_dist(tree, t, i);
        return std::vector<double>(d.data(), d.data() + A);
      },
      tol);
}

LengthResult value_memory_length(const HistoryTree& tree,
                                 const PolicyEvaluation& eval, double tol) {
  const int A = tree.model().num_actions;
  return minimal_suffix_length(
      tree, [&](int t, int i) { return eval.support[t][i] != 0; },
      [&](int t, int i) {
        std::vector<double> v(A);
        for (int a = 0; a < A; ++a) v[a] = eval.q_at(t, i, a, A);
        return v;
      },
      tol);
}

LengthResult reward_memory_length(const HistoryTree& tree, double tol) {
  const int A = tree.model().num_actions;
  return minimal_suffix_length(
      tree, [](int, int) { return true; },
      [&](int t, int i) {
        std::vector<double> v(A);
        for (int a = 0; a < A; ++a) v[a] = tree.expected_reward(t, i, a);
        return v;
      },
      tol);
}

LengthResult transition_memory_length(const HistoryTree& tree, double tol) {
  const int A = tree.model().num_actions;
  const int O = tree.model().num_observations;
  return minimal_suffix_length(
      tree, [](int, int) { return true; },
      [&](int t, int i) {
        std::vector<double> v(static_cast<size_t>(A) * O);
        for (int a = 0; a < A; ++a)
          for (int o = 0; o < O; ++o)
            v[static_cast<size_t>(a) * O + o] = tree.next_obs_prob(t, i, a, o);
        return v;
      },
      tol);
}

int ca_length_history(const HistoryTree& tree, const PolicyEvaluation& eval,
                      const NStepValues& nstep, int level, int node, double tol) {
  const int A = tree.model().num_actions;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < A; ++a) best = std::max(best, eval.q_at(level, node, a, A));
  std::vector<int> greedy, rest;
  for (int a = 0; a < A; ++a)
    (eval.q_at(level, node, a, A) >= best - tol ? greedy : rest).push_back(a);
  if (rest.empty()) return 1;  // all actions greedy: every n is feasible
  const int max_n = tree.depth() - level;
  for (int n = 1; n <= max_n; ++n) {
    for (int astar : greedy) {
      double g = nstep.g(level, node, astar, n);
      bool dominates = true;
      for (int a : rest)
        if (!(g > nstep.g(level, node, a, n) + tol)) {
          dominates = false;
          break;
        }
      if (dominates) return n;
    }
  }
  throw ValidationError("credit assignment length undefined: greedy action never dominates");
}

CaPolicyResult ca_length_policy(const HistoryTree& tree, const ContextPolicy& pi,
                                const PolicyEvaluation& eval, double tol) {
  NStepValues nstep(tree, pi, tree.depth());
  CaPolicyResult out;
  for (int t = 0; t < tree.depth(); ++t)
    for (size_t i = 0; i < tree.level(t).size(); ++i) {
      if (!eval.support[t][i]) continue;
      int c = ca_length_history(tree, eval, nstep, t, static_cast<int>(i), tol);
      if (c > out.length) {
        out.length = c;
        out.witness_level = t;
        out.witness_node = static_cast<int>(i);
      }
    }
  return out;
}

std::pair<int, LengthResult> min_memory_optimal(const HistoryTree& tree,
                                                const OptimalPolicySet& set,
                                                double tol) {
  int best_idx = -1;
  LengthResult best;
  best.length = std::numeric_limits<int>::max();
  for (size_t i = 0; i < set.policies.size(); ++i) {
    PolicyEvaluation ev = evaluate_policy(tree, *set.policies[i]);
    LengthResult r = policy_memory_length(tree, *set.policies[i], ev, tol);
    if (r.length < best.length) {
      best = r;
      best_idx = static_cast<int>(i);
    }
  }
  return {best_idx, best};
}

Theorem1Report verify_theorem1(const TabularPOMDP& m, const DiagConfig& cfg) {
  HistoryTree tree(m, m.horizon, cfg.node_budget);
  OptimalValues opt = optimal_values(tree, cfg.tol);
  OptimalPolicySet set = enumerate_optimal_policies(tree, opt, cfg.max_policies);
  auto [idx, l_mem] = min_memory_optimal(tree, set, cfg.tol);
  PolicyEvaluation ev = evaluate_policy(tree, *set.policies[idx]);
  LengthResult l_value = value_memory_length(tree, ev, cfg.tol);
  LengthResult m_r = reward_memory_length(tree, cfg.tol);
  LengthResult m_t = transition_memory_length(tree, cfg.tol);

  Theorem1Report rep;
  rep.l_mem = l_mem.length;
  rep.l_value = l_value.length;
  rep.m_reward = m_r.length;
  rep.m_transit = m_t.length;
  rep.m_task = std::max(m_r.length, m_t.length);
  rep.truncated = set.truncated;
  rep.holds = rep.l_mem <= rep.l_value && rep.l_value <= rep.m_task;
  return rep;
}

namespace {

void verify_witness(const HistoryTree& tree, const std::optional<LengthWitness>& w,
                    int length,
                    const std::function<std::vector<double>(int, int)>& values,
                    double tol) {
  if (length == 0) return;  // no witness needed: predicate holds everywhere
  if (!w) throw ValidationError("missing minimality witness");
  auto [l1, n1] = tree.find(w->h1);
  auto [l2, n2] = tree.find(w->h2);
  if (l1 != l2) throw ValidationError("witness histories at different steps");
  if (w->k != length - 1) throw ValidationError("witness certifies the wrong level");
  Suffix s1 = tree.suffix_of(l1, n1, w->k);
  Suffix s2 = tree.suffix_of(l2, n2, w->k);
  if (s1.observations != s2.observations || s1.actions != s2.actions)
    throw ValidationError("witness histories do not share the length-(L-1) suffix");
  std::vector<double> v1 = values(l1, n1);
  std::vector<double> v2 = values(l2, n2);
  if (std::abs(v1[w->action] - v2[w->action]) <= tol)
    throw ValidationError("witness does not violate the defining equality");
}

}  // namespace

LengthReport analyze(const TabularPOMDP& m, const DiagConfig& cfg) {
  HistoryTree tree(m, m.horizon, cfg.node_budget);
  const int A = m.num_actions;

  LengthReport rep;
  rep.name = m.name;
  rep.horizon = m.horizon;

  LengthResult m_r = reward_memory_length(tree, cfg.tol);
  LengthResult m_t = transition_memory_length(tree, cfg.tol);
  rep.m_reward = m_r.length;
  rep.m_transit = m_t.length;
  rep.m_task = std::max(m_r.length, m_t.length);
  rep.w_m_reward = m_r.witness;
  rep.w_m_transit = m_t.witness;

  OptimalValues opt = optimal_values(tree, cfg.tol);
  OptimalPolicySet set = enumerate_optimal_policies(tree, opt, cfg.max_policies);
  rep.num_optimal_policies = static_cast<int>(set.policies.size());
  rep.policy_enum_truncated = set.truncated;

  int best_idx = -1;
  LengthResult best_lmem;
  best_lmem.length = std::numeric_limits<int>::max();
  rep.c_task = std::numeric_limits<int>::max();
  std::optional<PolicyEvaluation> best_eval;
  for (size_t i = 0; i < set.policies.size(); ++i) {
    PolicyEvaluation ev = evaluate_policy(tree, *set.policies[i]);
    LengthResult lm = policy_memory_length(tree, *set.policies[i], ev, cfg.tol);
    CaPolicyResult ca = ca_length_policy(tree, *set.policies[i], ev, cfg.tol);
    rep.c_per_policy.push_back(ca.length);
    rep.c_task = std::min(rep.c_task, ca.length);
    if (lm.length < best_lmem.length) {
      best_lmem = lm;
      best_idx = static_cast<int>(i);
      best_eval = std::move(ev);
    }
  }
  rep.l_mem = best_lmem.length;
  rep.w_l_mem = best_lmem.witness;

  LengthResult lv = value_memory_length(tree, *best_eval, cfg.tol);
  rep.l_value = lv.length;
  rep.w_l_value = lv.witness;

  rep.theorem1.l_mem = rep.l_mem;
  rep.theorem1.l_value = rep.l_value;
  rep.theorem1.m_reward = rep.m_reward;
  rep.theorem1.m_transit = rep.m_transit;
  rep.theorem1.m_task = rep.m_task;
  rep.theorem1.truncated = set.truncated;
  rep.theorem1.holds = rep.l_mem <= rep.l_value && rep.l_value <= rep.m_task;

  // Re-verify every minimality witness before returning.
  verify_witness(tree, rep.w_m_reward, rep.m_reward,
                 [&](int t, int i) {
                   std::vector<double> v(A);
                   for (int a = 0; a < A; ++a) v[a] = tree.expected_reward(t, i, a);
                   return v;
                 },
                 cfg.tol);
  verify_witness(tree, rep.w_m_transit, rep.m_transit,
                 [&](int t, int i) {
                   const int O = m.num_observations;
                   std::vector<double> v(static_cast<size_t>(A) * O);
                   for (int a = 0; a < A; ++a)
                     for (int o = 0; o < O; ++o)
                       v[static_cast<size_t>(a) * O + o] = tree.next_obs_prob(t, i, a, o);
                   return v;
                 },
                 cfg.tol);
  const ContextPolicy& pi = *set.policies[best_idx];
  verify_witness(tree, rep.w_l_mem, rep.l_mem,
                 [&](int t, int i) {
                   Vec d = pi.action_dist(tree, t, i);
                   return std::vector<double>(d.data(), d.data() + A);
                 },
                 cfg.tol);
  verify_witness(tree, rep.w_l_value, rep.l_value,
                 [&](int t, int i) {
                   std::vector<double> v(A);
                   for (int a = 0; a < A; ++a) v[a] = best_eval->q_at(t, i, a, A);
                   return v;
                 },
                 cfg.tol);
  return rep;
}

}  // namespace memlen
