#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace memlen {

// Error taxonomy shared across the library. Validation failures map to CLI
// exit code 1, resource-budget failures to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnreachableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Finite-horizon tabular POMDP with a latent generative state space.
/// The observation is emitted upon entering a state (including the initial
/// one), and the reward attaches to the transition: r(t, s, a, s').
struct TabularPOMDP {
  std::string name;
  int num_states = 0;
  int num_actions = 0;
  int num_observations = 0;
  int horizon = 0;
  double discount = 1.0;

  Vec initial_dist;                  // over latent states
  std::vector<Mat> transition;       // per action a: S x S, row = current state
  Mat emission;                      // S x O

  // Rewards. `reward_base` is the time-invariant part, indexed
  // [s * A * S + a * S + s2]. `reward_time` optionally overrides whole steps:
  // if time_dependent, reward(t,...) reads reward_time[t-1] instead.
  bool time_dependent = false;
  std::vector<double> reward_base;
  std::vector<std::vector<double>> reward_time;  // horizon entries when used

  double reward(int t, int s, int a, int s2) const {
    const std::vector<double>& tab =
        time_dependent ? reward_time[static_cast<size_t>(t - 1)] : reward_base;
    return tab[static_cast<size_t>(s) * num_actions * num_states +
               static_cast<size_t>(a) * num_states + s2];
  }
  double& reward_ref(int t, int s, int a, int s2) {
    std::vector<double>& tab =
        time_dependent ? reward_time[static_cast<size_t>(t - 1)] : reward_base;
    return tab[static_cast<size_t>(s) * num_actions * num_states +
               static_cast<size_t>(a) * num_states + s2];
  }

  void allocate();            // sizes tables to zeros from the dimensions
  void make_time_dependent(); // expands reward_base into per-step tables
  void validate() const;      // throws ValidationError on violation
};

/// Alternating observation-action sequence; always one more observation
/// than actions. The step index is observations.size().
struct History {
  std::vector<int> observations;
  std::vector<int> actions;

  int t() const { return static_cast<int>(observations.size()); }
  void check() const {
    if (observations.size() != actions.size() + 1)
      throw ValidationError("history must have one more observation than actions");
  }
};

/// The last n observations (and n-1 interleaved actions) of some history.
struct Suffix {
  int n = 0;
  std::vector<int> observations;  // size n
  std::vector<int> actions;       // size max(n-1, 0)
};

using Belief = Vec;

/// Exact Bayes posterior over latent states after (a, o).
/// Throws UnreachableError when the pair has zero predictive probability.
Belief belief_update(const TabularPOMDP& m, const Belief& b, int action, int obs);

/// Belief after the initial observation.
Belief initial_belief(const TabularPOMDP& m, int obs);

}  // namespace memlen
