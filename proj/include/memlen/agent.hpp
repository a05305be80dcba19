#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "memlen/nn.hpp"
#include "memlen/sim.hpp"

namespace memlen {

using nn::EncoderConfig;

/// One complete (or in-progress) episode. During action selection the prefix
/// holds t observations and t-1 actions.
struct Episode {
  std::vector<std::vector<int>> obs;
  std::vector<int> actions;
  std::vector<double> rewards;
  bool success = false;

  int length() const { return static_cast<int>(actions.size()); }
  double total_return() const {
    double s = 0;
    for (double r : rewards) s += r;
    return s;
  }
};

struct DDQNConfig {
  double discount = 0.99;
  double target_tau = 0.005;
  double lr = 3e-4;
  int batch_size = 64;
  std::int64_t replay_capacity = 1'000'000;  // transitions-equivalent
  double update_frequency = 0.25;            // updates per environment step
  int num_episodes = 4000;
  int head1 = 256, head2 = 256;
  int warmup_episodes = 64;  // first updates once a full batch exists
  int eval_every = 25;       // greedy-eval cadence in episodes

  void validate() const;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;          // 1/T
  double schedule_steps = 1;  // episodes; 0.1 * num_episodes

  double at(double episode) const {
    if (episode <= 0) return start;
    if (episode >= schedule_steps) return end;
    return start + (end - start) * episode / schedule_steps;
  }
};

/// Whole-episode ring buffer; evicts oldest episodes once the stored
/// transition count exceeds capacity.
class EpisodeBuffer {
 public:
  explicit EpisodeBuffer(std::int64_t capacity_transitions)
      : capacity_(capacity_transitions) {}

  void add(Episode e) {
    transitions_ += e.length();
    episodes_.push_back(std::move(e));
    while (!episodes_.empty() && transitions_ > capacity_ &&
           episodes_.size() > 1) {
      transitions_ -= episodes_.front().length();
      episodes_.pop_front();
    }
  }
  std::size_t size() const { return episodes_.size(); }
  std::int64_t transitions() const { return transitions_; }
  const Episode& at(std::size_t i) const { return episodes_[i]; }
  const Episode& sample(std::mt19937_64& rng) const {
    return episodes_[rng() % episodes_.size()];
  }

 private:
  std::deque<Episode> episodes_;
  std::int64_t transitions_ = 0;
  std::int64_t capacity_;
};

/// A memory-based Q-learner: maps history prefixes to Q-values and learns
/// from batches of complete episodes with Double-DQN targets.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual int num_actions() const = 0;
  virtual const EncoderConfig& encoder() const = 0;
  /// Q(h_{1:t}, ·) for the latest step of the prefix.
  virtual std::vector<double> q_values(const Episode& prefix) const = 0;
  /// One Double-DQN update on a batch of episodes; returns the loss.
  virtual double update(const std::vector<const Episode*>& batch) = 0;
  virtual void serialize(std::string* out) const = 0;
  virtual void deserialize(const std::string& in) = 0;

  int greedy_action(const Episode& prefix) const;
  int select_action(const Episode& prefix, double eps, std::mt19937_64& rng) const;
};

std::unique_ptr<Agent> make_agent(const EncoderConfig& enc, const DDQNConfig& cfg,
                                  int obs_slots, int obs_symbols, int num_actions,
                                  int horizon, std::uint64_t seed);

struct RunRecord {
  int episode = 0;
  std::int64_t env_steps = 0;
  double ret = 0;
  bool success = false;
  double epsilon = 0;
  double mean_loss = 0;
  double wall_ms = 0;
  std::uint64_t seed = 0;
  std::optional<double> greedy_return;  // present on eval episodes
};

struct TrainOptions {
  std::uint64_t seed = 0;
  int eval_episodes = 64;
  double early_stop_return = std::numeric_limits<double>::infinity();
  /// Optional exact greedy evaluator (e.g. exact_greedy_return for tabular
  /// POMDP tasks); sampling evaluation is used when absent.
  std::function<double(const Agent&)> exact_eval;
  std::function<void(const RunRecord&)> on_record;
};

struct TrainResult {
  std::vector<RunRecord> log;
  double final_greedy_return = 0;
  double final_success_rate = 0;
  std::int64_t env_steps = 0;
  int episodes_run = 0;
};

TrainResult train(Simulator& env, Agent& agent, const DDQNConfig& cfg,
                  const TrainOptions& opts);

struct EvalResult {
  double mean_return = 0;
  double success_rate = 0;
};

EvalResult evaluate_agent(const Agent& agent, Simulator& env, int episodes,
                          std::uint64_t seed);

/// Exact expected greedy return on a tabular POMDP: expands every
/// positive-probability trajectory under the deterministic greedy policy.
double exact_greedy_return(const Agent& agent, const TabularPOMDP& model,
                           std::int64_t node_budget = 1'000'000);

}  // namespace memlen
