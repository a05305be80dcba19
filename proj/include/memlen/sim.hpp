#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "memlen/pomdp.hpp"

namespace memlen {

struct StepResult {
  std::vector<int> obs;
  double reward = 0;
  bool done = false;
};

/// Episodic simulator contract shared by tabular POMDPs and gridworlds.
/// Observations are short symbol vectors: `obs_slots()` entries, each in
/// [0, obs_symbols()). Calling step() after done throws.
class Simulator {
 public:
  virtual ~Simulator() = default;
  virtual std::vector<int> reset(std::uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual int num_actions() const = 0;
  virtual int obs_slots() const = 0;
  virtual int obs_symbols() const = 0;
  virtual int horizon() const = 0;
  /// Task-defined success flag for the current (finished) episode.
  virtual bool success() const { return false; }
};

/// Samples latent transitions/emissions with a per-episode seeded generator;
/// rewards are emitted as their exact expected values.
std::unique_ptr<Simulator> as_simulator(const TabularPOMDP& model);

struct GridTaskConfig {
  enum class Task { kVisualMatch, kKeyToDoor };
  Task task = Task::kVisualMatch;
  int width = 11, height = 7;
  int phase1_len = 5, phase2_len = 10, phase3_len = 5;
  int num_colors = 3;
  int apple_count = 5;
  double apple_reward = 1.0;
  double final_bonus = 10.0;
  // view radius fixed at 2 (5x5 egocentric window)

  void validate() const;
};

std::unique_ptr<Simulator> build_visual_match(const GridTaskConfig& cfg);
std::unique_ptr<Simulator> build_key_to_door(const GridTaskConfig& cfg);

/// Gridworld-specific episode statistics, exposed for exact return
/// decomposition checks.
class GridSimulator : public Simulator {
 public:
  virtual int apples_collected() const = 0;
};

}  // namespace memlen
