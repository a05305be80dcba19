#include "memlen/pomdp.hpp"

#include <cmath>

namespace memlen {

namespace {
constexpr double kRowTol = 1e-12;
}

void TabularPOMDP::allocate() {
  initial_dist = Vec::Zero(num_states);
  transition.assign(num_actions, Mat::Zero(num_states, num_states));
  emission = Mat::Zero(num_states, num_observations);
  reward_base.assign(static_cast<size_t>(num_states) * num_actions * num_states, 0.0);
  time_dependent = false;
  reward_time.clear();
}

void TabularPOMDP::make_time_dependent() {
  if (time_dependent) return;
  reward_time.assign(horizon, reward_base);
  time_dependent = true;
}

void TabularPOMDP::validate() const {
  auto fail = [this](const std::string& what) {
    throw ValidationError("pomdp '" + name + "': " + what);
  };
  if (num_states <= 0 || num_actions <= 0 || num_observations <= 0)
    fail("sizes must be positive");
  if (horizon <= 0) fail("horizon must be a positive finite integer");
  if (discount < 0.0 || discount > 1.0) fail("discount must lie in [0,1]");
  auto check_row = [&](const Vec& row, const std::string& what) {
    double sum = 0.0;
    for (int i = 0; i < row.size(); ++i) {
      if (row[i] < -kRowTol || row[i] > 1.0 + kRowTol)
        fail(what + ": probability outside [0,1]");
      sum += row[i];
    }
    if (std::abs(sum - 1.0) > 1e-12) fail(what + ": row does not sum to 1");
  };
  if (initial_dist.size() != num_states) fail("initial_dist has wrong size");
  check_row(initial_dist, "initial_dist");
  if (static_cast<int>(transition.size()) != num_actions)
    fail("transition table has wrong action count");
  for (int a = 0; a < num_actions; ++a) {
    if (transition[a].rows() != num_states || transition[a].cols() != num_states)
      fail("transition table has wrong shape");
    for (int s = 0; s < num_states; ++s)
      check_row(transition[a].row(s), "transition row");
  }
  if (emission.rows() != num_states || emission.cols() != num_observations)
    fail("emission table has wrong shape");
  for (int s = 0; s < num_states; ++s)
    check_row(emission.row(s), "emission row");
  size_t n = static_cast<size_t>(num_states) * num_actions * num_states;
  if (time_dependent) {
    if (static_cast<int>(reward_time.size()) != horizon)
      fail("time-dependent reward table has wrong horizon");
    for (const auto& tab : reward_time) {
      if (tab.size() != n) fail("reward table has wrong size");
      for (double r : tab)
        if (!std::isfinite(r)) fail("reward entry not finite");
    }
  } else {
    if (reward_base.size() != n) fail("reward table has wrong size");
    for (double r : reward_base)
      if (!std::isfinite(r)) fail("reward entry not finite");
  }
}

Belief initial_belief(const TabularPOMDP& m, int obs) {
  Vec b = m.initial_dist.cwiseProduct(m.emission.col(obs));
  double z = b.sum();
  if (z <= 0.0)
    throw UnreachableError("initial observation " + std::to_string(obs) +
                           " has zero probability");
  return b / z;
}

Belief belief_update(const TabularPOMDP& m, const Belief& b, int action, int obs) {
  Vec pred = m.transition[action].transpose() * b;  // over next states
  Vec post = pred.cwiseProduct(m.emission.col(obs));
  double z = post.sum();
  if (z <= 0.0)
    throw UnreachableError("unreachable-branch: (a=" + std::to_string(action) +
                           ", o=" + std::to_string(obs) +
                           ") has zero predictive probability");
  return post / z;
}

}  // namespace memlen
