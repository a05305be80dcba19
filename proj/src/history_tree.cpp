#include "memlen/history_tree.hpp"

#include <algorithm>
#include <cmath>

namespace memlen {

namespace {
// Probabilities below this are treated as exact zeros when growing the tree,
// so "positive probability" is robust against rounding in row-stochastic
// inputs.
constexpr double kZeroProb = 1e-15;
}  // namespace

HistoryTree::HistoryTree(const TabularPOMDP& model, int up_to_t,
                         std::int64_t node_budget)
    : model_(&model) {
  model.validate();
  if (up_to_t < 1 || up_to_t > model.horizon)
    throw ValidationError("enumeration depth must lie in [1, horizon]");
  const int S = model.num_states, A = model.num_actions, O = model.num_observations;

  std::vector<Mat> trans_t(A);
  for (int a = 0; a < A; ++a) trans_t[a] = model.transition[a].transpose();

  // Level 0: one node per initial observation with positive probability.
  levels_.emplace_back();
  beliefs_.emplace_back();
  std::vector<Vec> root_beliefs;
  for (int o = 0; o < O; ++o) {
    Vec b = model.initial_dist.cwiseProduct(model.emission.col(o));
    double w = b.sum();
    if (w <= kZeroProb) continue;
    HistoryNode n;
    n.obs = static_cast<std::int16_t>(o);
    n.weight = w;
    levels_[0].push_back(n);
    root_beliefs.push_back(b / w);
  }
  beliefs_[0] = Mat(root_beliefs.size(), S);
  for (size_t i = 0; i < root_beliefs.size(); ++i)
    beliefs_[0].row(i) = root_beliefs[i].transpose();
  total_nodes_ = static_cast<std::int64_t>(levels_[0].size());

  for (int level = 0; level + 1 < up_to_t; ++level) {
    const auto& cur = levels_[level];
    const Mat& curb = beliefs_[level];
    children_.emplace_back(cur.size() * A * O, -1);
    std::vector<HistoryNode> next;
    std::vector<Vec> next_beliefs;
    for (size_t i = 0; i < cur.size(); ++i) {
      for (int a = 0; a < A; ++a) {
        Vec pred = trans_t[a] * curb.row(i).transpose();
        for (int o = 0; o < O; ++o) {
          Vec post = pred.cwiseProduct(model.emission.col(o));
          double p = post.sum();
          if (p <= kZeroProb) continue;
          HistoryNode n;
          n.parent = static_cast<int>(i);
          n.action = static_cast<std::int16_t>(a);
          n.obs = static_cast<std::int16_t>(o);
          n.weight = cur[i].weight * p;
          children_[level][(i * A + a) * O + o] = static_cast<int>(next.size());
          next.push_back(n);
          next_beliefs.push_back(post / p);
        }
      }
    }
    total_nodes_ += static_cast<std::int64_t>(next.size());
    if (total_nodes_ > node_budget)
      throw BudgetError("instance-too-large: history enumeration exceeded the node budget of " +
                        std::to_string(node_budget) + " nodes at step " +
                        std::to_string(level + 2));
    Mat nb(next_beliefs.size(), S);
    for (size_t i = 0; i < next_beliefs.size(); ++i)
      nb.row(i) = next_beliefs[i].transpose();
    levels_.push_back(std::move(next));
    beliefs_.push_back(std::move(nb));
  }

  // Cached per-(node, action) expected rewards and next-observation
  // distributions.
  exp_reward_.resize(depth());
  obs_dist_.resize(depth());
  for (int level = 0; level < depth(); ++level) {
    const int t = level + 1;
    const auto& cur = levels_[level];
    exp_reward_[level].assign(cur.size() * A, 0.0);
    obs_dist_[level].assign(cur.size() * A * O, 0.0);
    for (size_t i = 0; i < cur.size(); ++i) {
      Vec b = beliefs_[level].row(i).transpose();
      for (int a = 0; a < A; ++a) {
        double er = 0.0;
        for (int s = 0; s < S; ++s) {
          if (b[s] <= 0.0) continue;
          const auto& row = model.transition[a];
          for (int s2 = 0; s2 < S; ++s2) {
            double p = row(s, s2);
            if (p <= 0.0) continue;
            er += b[s] * p * model.reward(t, s, a, s2);
          }
        }
        exp_reward_[level][i * A + a] = er;
        Vec pred = trans_t[a] * b;
        for (int o = 0; o < O; ++o)
          obs_dist_[level][(i * A + a) * O + o] = pred.dot(model.emission.col(o));
      }
    }
  }
}

History HistoryTree::history_of(int level, int node) const {
  History h;
  std::vector<std::pair<int, int>> chain;  // (obs, action into this node)
  int lv = level, nd = node;
  while (lv >= 0) {
    const HistoryNode& n = levels_[lv][nd];
    chain.emplace_back(n.obs, n.action);
    nd = n.parent;
    --lv;
  }
  std::reverse(chain.begin(), chain.end());
  for (size_t i = 0; i < chain.size(); ++i) {
    if (i > 0) h.actions.push_back(chain[i].second);
    h.observations.push_back(chain[i].first);
  }
  return h;
}

Suffix HistoryTree::suffix_of(int level, int node, int n) const {
  History h = history_of(level, node);
  Suffix s;
  s.n = std::min(n, h.t());
  for (int i = h.t() - s.n; i < h.t(); ++i) s.observations.push_back(h.observations[i]);
  for (int i = h.t() - s.n + 1; i < h.t(); ++i)
    if (i >= 1) s.actions.push_back(h.actions[i - 1]);
  return s;
}

std::pair<int, int> HistoryTree::find(const History& h) const {
  h.check();
  if (h.t() > depth())
    throw UnreachableError("history longer than the enumerated depth");
  int node = -1;
  for (size_t i = 0; i < levels_[0].size(); ++i)
    if (levels_[0][i].obs == h.observations[0]) node = static_cast<int>(i);
  if (node < 0) throw UnreachableError("history root observation unreachable");
  for (int t = 1; t < h.t(); ++t) {
    node = child(t - 1, node, h.actions[t - 1], h.observations[t]);
    if (node < 0) throw UnreachableError("history unreachable at step " + std::to_string(t + 1));
  }
  return {h.t() - 1, node};
}

Vec next_obs_dist(const HistoryTree& tree, const History& h, int action) {
  auto [level, node] = tree.find(h);
  const int O = tree.model().num_observations;
  Vec d(O);
  for (int o = 0; o < O; ++o) d[o] = tree.next_obs_prob(level, node, action, o);
  return d;
}

double expected_reward(const HistoryTree& tree, const History& h, int action) {
  auto [level, node] = tree.find(h);
  return tree.expected_reward(level, node, action);
}

}  // namespace memlen
