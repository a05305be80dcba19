#pragma once

#include <cstdint>
#include <string>

#include "memlen/pomdp.hpp"

namespace memlen {

// T-Maze observation ids, shared by both variants.
struct TMazeObs {
  static constexpr int kNull = 0;
  static constexpr int kOracleA = 1;   // passive: goal G1; active: oracle signal 0
  static constexpr int kOracleB = 2;   // passive: goal G2; active: oracle signal 1
  static constexpr int kJunction = 3;
  static constexpr int kGoal1 = 4;
  static constexpr int kGoal2 = 5;
  static constexpr int kStartA = 6;    // active only: start cue 0
  static constexpr int kStartB = 7;    // active only: start cue 1
};

enum class TMazeAction : int { kLeft = 0, kRight = 1, kUp = 2, kDown = 3 };

TabularPOMDP build_passive_tmaze(int T);
TabularPOMDP build_active_tmaze(int T);
TabularPOMDP build_boat_mdp(int T = 4);

enum class DelayKind { kReward, kExecution, kObservation };

/// Delay transform with the convention that n <= 1 is the identity: the
/// delayed quantity at step t is the one generated at step t - n + 1.
TabularPOMDP apply_delay(const TabularPOMDP& base, DelayKind kind, int n);

/// Zero all intermediate rewards and pay their running sum with the final
/// reward; the sum is tracked in the hidden state and never observed.
TabularPOMDP episodic_sum(const TabularPOMDP& base, int state_budget = 100'000);

struct RandomPOMDPConfig {
  std::uint64_t seed = 0;
  int num_states = 3;
  int num_observations = 3;
  int num_actions = 2;
  int horizon = 4;
  double reward_sparsity = 0.5;  // probability an (s,a,s') reward is zero
  bool markov = false;           // identity emission, rewards r(s,a) only
};

TabularPOMDP random_pomdp(const RandomPOMDPConfig& cfg);

}  // namespace memlen
