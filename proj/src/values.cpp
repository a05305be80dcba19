#include "memlen/values.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace memlen {

namespace {
constexpr double kOccupancyZero = 1e-15;
}

PolicyEvaluation evaluate_policy(const HistoryTree& tree, const ContextPolicy& pi) {
  const int A = tree.model().num_actions;
  const int O = tree.model().num_observations;
  const double gamma = tree.model().discount;
  const int depth = tree.depth();

  PolicyEvaluation ev;
  ev.q.resize(depth);
  ev.v.resize(depth);
  ev.occupancy.resize(depth);
  ev.support.resize(depth);

  // Cache action distributions (also used twice: once for values, once for
  // occupancies).
  std::vector<std::vector<Vec>> dists(depth);
  for (int t = 0; t < depth; ++t) {
    const size_t n = tree.level(t).size();
    dists[t].resize(n);
    for (size_t i = 0; i < n; ++i)
      dists[t][i] = pi.action_dist(tree, t, static_cast<int>(i));
  }

  for (int t = depth - 1; t >= 0; --t) {
    const size_t n = tree.level(t).size();
    ev.q[t].assign(n * A, 0.0);
    ev.v[t].assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (int a = 0; a < A; ++a) {
        double q = tree.expected_reward(t, static_cast<int>(i), a);
        if (t + 1 < depth) {
          double cont = 0.0;
          for (int o = 0; o < O; ++o) {
            int c = tree.child(t, static_cast<int>(i), a, o);
            if (c < 0) continue;
            cont += tree.next_obs_prob(t, static_cast<int>(i), a, o) * ev.v[t + 1][c];
          }
          q += gamma * cont;
        }
        ev.q[t][i * A + a] = q;
      }
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += dists[t][i][a] * ev.q[t][i * A + a];
      ev.v[t][i] = v;
    }
  }

  // Occupancy: top-down product of observation weights and policy
  // probabilities.
  for (int t = 0; t < depth; ++t) {
    ev.occupancy[t].assign(tree.level(t).size(), 0.0);
    ev.support[t].assign(tree.level(t).size(), 0);
  }
  for (size_t i = 0; i < tree.level(0).size(); ++i)
    ev.occupancy[0][i] = tree.level(0)[i].weight;
  for (int t = 0; t + 1 < depth; ++t) {
    for (size_t i = 0; i < tree.level(t).size(); ++i) {
      double d = ev.occupancy[t][i];
      if (d <= kOccupancyZero) continue;
      for (int a = 0; a < A; ++a) {
        double pa = dists[t][i][a];
        if (pa <= 0.0) continue;
        for (int o = 0; o < O; ++o) {
          int c = tree.child(t, static_cast<int>(i), a, o);
          if (c < 0) continue;
          ev.occupancy[t + 1][c] +=
              d * pa * tree.next_obs_prob(t, static_cast<int>(i), a, o);
        }
      }
    }
  }
  for (int t = 0; t < depth; ++t)
    for (size_t i = 0; i < tree.level(t).size(); ++i)
      ev.support[t][i] = ev.occupancy[t][i] > kOccupancyZero ? 1 : 0;
  return ev;
}

OptimalValues optimal_values(const HistoryTree& tree, double tie_tol) {
  const int A = tree.model().num_actions;
  const int O = tree.model().num_observations;
  const double gamma = tree.model().discount;
  const int depth = tree.depth();

  OptimalValues opt;
  opt.tie_tol = tie_tol;
  opt.q.resize(depth);
  opt.v.resize(depth);
  opt.greedy.resize(depth);
  for (int t = depth - 1; t >= 0; --t) {
    const size_t n = tree.level(t).size();
    opt.q[t].assign(n * A, 0.0);
    opt.v[t].assign(n, 0.0);
    opt.greedy[t].assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double q = tree.expected_reward(t, static_cast<int>(i), a);
        if (t + 1 < depth) {
          double cont = 0.0;
          for (int o = 0; o < O; ++o) {
            int c = tree.child(t, static_cast<int>(i), a, o);
            if (c < 0) continue;
            cont += tree.next_obs_prob(t, static_cast<int>(i), a, o) * opt.v[t + 1][c];
          }
          q += gamma * cont;
        }
        opt.q[t][i * A + a] = q;
        best = std::max(best, q);
      }
      opt.v[t][i] = best;
      std::uint32_t mask = 0;
      for (int a = 0; a < A; ++a)
        if (opt.q[t][i * A + a] >= best - tie_tol) mask |= 1u << a;
      opt.greedy[t][i] = mask;
    }
  }
  return opt;
}

namespace {

std::vector<std::vector<std::int8_t>> first_greedy_fallback(
    const HistoryTree& tree, const OptimalValues& opt) {
  std::vector<std::vector<std::int8_t>> fb(tree.depth());
  for (int t = 0; t < tree.depth(); ++t) {
    fb[t].resize(tree.level(t).size());
    for (size_t i = 0; i < tree.level(t).size(); ++i) {
      std::uint32_t mask = opt.greedy[t][i];
      fb[t][i] = static_cast<std::int8_t>(std::countr_zero(mask));
    }
  }
  return fb;
}

struct EnumState {
  const HistoryTree* tree;
  const OptimalValues* opt;
  int max_count;
  OptimalPolicySet* out;
  TreePolicy* work;

  // Greedy actions with identical expected reward, next-observation
  // distribution, and successor beliefs are interchangeable: branching on
  // them would only manufacture behaviorally identical policies (e.g. two
  // actions that both bounce off the same wall).
  bool equivalent_actions(int t, int i, int a, int b) const {
    const double tol = opt->tie_tol;
    if (std::abs(tree->expected_reward(t, i, a) - tree->expected_reward(t, i, b)) > tol)
      return false;
    const int O = tree->model().num_observations;
    for (int o = 0; o < O; ++o) {
      double pa = tree->next_obs_prob(t, i, a, o);
      double pb = tree->next_obs_prob(t, i, b, o);
      if (std::abs(pa - pb) > tol) return false;
      if (t + 1 >= tree->depth() || pa <= tol) continue;
      int ca = tree->child(t, i, a, o);
      int cb = tree->child(t, i, b, o);
      if (ca == cb) continue;
      if (ca < 0 || cb < 0) return false;
      if ((tree->belief(t + 1, ca) - tree->belief(t + 1, cb)).cwiseAbs().maxCoeff() > tol)
        return false;
    }
    return true;
  }

  // Reachable-but-undecided nodes, as (level, node), processed LIFO.
  bool recurse(std::vector<std::pair<int, int>> frontier) {
    while (!frontier.empty() && work->assigned(frontier.back().first, frontier.back().second))
      frontier.pop_back();
    if (frontier.empty()) {
      if (static_cast<int>(out->policies.size()) >= max_count) {
        out->truncated = true;
        return false;
      }
      out->policies.push_back(std::make_shared<TreePolicy>(*work));
      return true;
    }
    auto [t, i] = frontier.back();
    frontier.pop_back();
    const int A = tree->model().num_actions;
    const int O = tree->model().num_observations;
    std::uint32_t mask = opt->greedy[t][i];
    for (int a = 0; a < A; ++a) {
      if (!(mask & (1u << a))) continue;
      bool duplicate = false;
      for (int b = 0; b < a && !duplicate; ++b)
        if ((mask & (1u << b)) && equivalent_actions(t, i, a, b)) duplicate = true;
      if (duplicate) continue;
      work->assign(t, i, a);
      auto next = frontier;
      if (t + 1 < tree->depth())
        for (int o = 0; o < O; ++o) {
          int c = tree->child(t, i, a, o);
          if (c >= 0) next.emplace_back(t + 1, c);
        }
      if (!recurse(std::move(next))) {
        work->clear(t, i);
        return false;
      }
      work->clear(t, i);
    }
    return true;
  }
};

}  // namespace

OptimalPolicySet enumerate_optimal_policies(const HistoryTree& tree,
                                            const OptimalValues& opt,
                                            int max_count) {
  OptimalPolicySet out;
  TreePolicy work(tree);
  auto fb = first_greedy_fallback(tree, opt);
  work.set_fallback(fb);
  EnumState st{&tree, &opt, max_count, &out, &work};
  std::vector<std::pair<int, int>> frontier;
  for (size_t i = 0; i < tree.level(0).size(); ++i)
    frontier.emplace_back(0, static_cast<int>(i));
  st.recurse(std::move(frontier));
  // Off-support completion: extend each policy's own on-support rule keyed by
  // the current observation when that rule is unambiguous (for MDPs this
  // yields the Markov extension); otherwise keep the first greedy action.
  const int O = tree.model().num_observations;
  for (auto& p : out.policies) {
    std::vector<int> rule(O, -1);  // -2 = conflicting on-support actions
    for (int t = 0; t < tree.depth(); ++t)
      for (size_t i = 0; i < tree.level(t).size(); ++i) {
        if (!p->assigned(t, static_cast<int>(i))) continue;
        int o = tree.level(t)[i].obs;
        int a = p->action(t, static_cast<int>(i));
        if (rule[o] == -1) rule[o] = a;
        else if (rule[o] != a) rule[o] = -2;
      }
    auto pfb = fb;
    for (int t = 0; t < tree.depth(); ++t)
      for (size_t i = 0; i < tree.level(t).size(); ++i) {
        int r = rule[tree.level(t)[i].obs];
        if (r >= 0) pfb[t][i] = static_cast<std::int8_t>(r);
      }
    p->set_fallback(std::move(pfb));
  }
  return out;
}

NStepValues::NStepValues(const HistoryTree& tree, const ContextPolicy& pi, int max_n)
    : tree_(&tree) {
  const int A = tree.model().num_actions;
  const int O = tree.model().num_observations;
  const double gamma = tree.model().discount;
  const int depth = tree.depth();
  max_n = std::min(max_n, depth);

  pi_.resize(depth);
  for (int t = 0; t < depth; ++t) {
    pi_[t].resize(tree.level(t).size());
    for (size_t i = 0; i < tree.level(t).size(); ++i)
      pi_[t][i] = pi.action_dist(tree, t, static_cast<int>(i));
  }

  f_.resize(max_n + 1);
  for (int m = 0; m <= max_n; ++m) {
    f_[m].resize(depth);
    for (int t = 0; t < depth; ++t) f_[m][t].assign(tree.level(t).size(), 0.0);
  }
  for (int m = 1; m <= max_n; ++m) {
    for (int t = depth - 1; t >= 0; --t) {
      for (size_t i = 0; i < tree.level(t).size(); ++i) {
        double v = 0.0;
        for (int a = 0; a < A; ++a) {
          double pa = pi_[t][i][a];
          if (pa <= 0.0) continue;
          double g = tree.expected_reward(t, static_cast<int>(i), a);
          if (m > 1 && t + 1 < depth) {
            double cont = 0.0;
            for (int o = 0; o < O; ++o) {
              int c = tree.child(t, static_cast<int>(i), a, o);
              if (c < 0) continue;
              cont += tree.next_obs_prob(t, static_cast<int>(i), a, o) * f_[m - 1][t + 1][c];
            }
            g += gamma * cont;
          }
          v += pa * g;
        }
        f_[m][t][i] = v;
      }
    }
  }
}

double NStepValues::g(int level, int node, int action, int n) const {
  const int depth = tree_->depth();
  if (n < 1 || n > depth - level)
    throw ValidationError("n-step horizon out of range: n=" + std::to_string(n));
  double g = tree_->expected_reward(level, node, action);
  if (n > 1 && level + 1 < depth) {
    const int O = tree_->model().num_observations;
    double cont = 0.0;
    for (int o = 0; o < O; ++o) {
      int c = tree_->child(level, node, action, o);
      if (c < 0) continue;
      cont += tree_->next_obs_prob(level, node, action, o) * f_[n - 1][level + 1][c];
    }
    g += tree_->model().discount * cont;
  }
  return g;
}

double suffix_value(const HistoryTree& tree, const PolicyEvaluation& eval,
                    int level, int node, int n, int action) {
  if (!eval.support[level][node])
    throw UnreachableError("suffix taken from a history outside supp(d_pi)");
  const int A = tree.model().num_actions;
  Suffix ref = tree.suffix_of(level, node, n);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < tree.level(level).size(); ++i) {
    if (!eval.support[level][i]) continue;
    Suffix s = tree.suffix_of(level, static_cast<int>(i), n);
    if (s.observations == ref.observations && s.actions == ref.actions) {
      num += eval.occupancy[level][i] * eval.q_at(level, static_cast<int>(i), action, A);
      den += eval.occupancy[level][i];
    }
  }
  return num / den;
}

}  // namespace memlen
