#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "memlen/envs.hpp"
#include "memlen/history_tree.hpp"
#include "memlen/pomdp.hpp"

using namespace memlen;

namespace {

TabularPOMDP two_state() {
  TabularPOMDP m;
  m.name = "two-state";
  m.num_states = 2;
  m.num_actions = 2;
  m.num_observations = 2;
  m.horizon = 3;
  m.allocate();
  m.initial_dist << 0.5, 0.5;
  m.transition[0] << 0.9, 0.1, 0.2, 0.8;
  m.transition[1] << 0.5, 0.5, 0.5, 0.5;
  m.emission << 0.7, 0.3, 0.4, 0.6;
  m.reward_ref(1, 0, 0, 1) = 1.0;
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("validate rejects non-stochastic rows") {
  TabularPOMDP m = two_state();
  m.transition[0](0, 0) = 0.5;  // row now sums to 0.6
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = two_state();
  m.initial_dist << 0.7, 0.7;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = two_state();
  m.emission(1, 0) = -0.1;
  CHECK_THROWS_AS(m.validate(), ValidationError);
}

TEST_CASE("history invariant") {
  History h;
  h.observations = {0, 1};
  h.actions = {1};
  CHECK_NOTHROW(h.check());
  h.actions.push_back(0);
  CHECK_THROWS_AS(h.check(), ValidationError);
}

TEST_CASE("belief update matches hand Bayes computation") {
  TabularPOMDP m = two_state();
  Belief b0 = initial_belief(m, 0);
  // P(s|o=0) ∝ init(s) e(s,0): (0.35, 0.2) -> (7/11, 4/11)
  CHECK(b0[0] == doctest::Approx(0.35 / 0.55));
  CHECK(b0[1] == doctest::Approx(0.20 / 0.55));

  Belief b1 = belief_update(m, b0, 0, 1);
  // predict: p(s') = b0 P_0; then condition on o=1
  double p0 = b0[0] * 0.9 + b0[1] * 0.2, p1 = b0[0] * 0.1 + b0[1] * 0.8;
  double z = p0 * 0.3 + p1 * 0.6;
  CHECK(b1[0] == doctest::Approx(p0 * 0.3 / z));
  CHECK(b1[1] == doctest::Approx(p1 * 0.6 / z));
  CHECK(b1.sum() == doctest::Approx(1.0));
}

TEST_CASE("belief update rejects zero-probability evidence") {
  TabularPOMDP m = two_state();
  m.emission << 1, 0, 1, 0;  // observation 1 impossible
  m.validate();
  Belief b = initial_belief(m, 0);
  CHECK_THROWS_AS(belief_update(m, b, 0, 1), UnreachableError);
}

TEST_CASE("history tree weights are a distribution per action sequence") {
  TabularPOMDP m = two_state();
  HistoryTree tree(m, m.horizon);
  CHECK(tree.depth() == m.horizon);
  // Sum of node weights at level 0 is 1.
  double w = 0;
  for (size_t i = 0; i < tree.level(0).size(); ++i) w += tree.weight(0, int(i));
  CHECK(w == doctest::Approx(1.0));
  // next_obs_prob rows are distributions at every level, including the last.
  for (int t = 0; t < tree.depth(); ++t)
    for (size_t i = 0; i < tree.level(t).size(); ++i)
      for (int a = 0; a < m.num_actions; ++a) {
        double s = 0;
        for (int o = 0; o < m.num_observations; ++o)
          s += tree.next_obs_prob(t, int(i), a, o);
        CHECK(s == doctest::Approx(1.0));
      }
}

TEST_CASE("history tree node budget") {
  TabularPOMDP m = two_state();
  CHECK_THROWS_AS(HistoryTree(m, m.horizon, 3), BudgetError);
}
