#pragma once

#include <string>

#include "memlen/agent.hpp"
#include "memlen/diag.hpp"
#include "memlen/nn.hpp"

namespace memlen {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// POMDP spec document (JSON): fields name, num_states, num_actions,
/// num_observations, horizon, discount, initial_dist, transition [s][a][s'],
/// emission [s][o], rewards as records {t: int|"any", s, a, s2, value}
/// defaulting to 0.
TabularPOMDP pomdp_from_text(const std::string& text);
std::string pomdp_to_text(const TabularPOMDP& m);
TabularPOMDP load_pomdp(const std::string& path);

std::string length_report_to_json(const LengthReport& r);
std::string run_record_to_json(const RunRecord& r);
std::string grad_report_to_json(const nn::GradCheckReport& r);

/// Cached result of one training run; the learning-desk suite and the
/// acceptance tests key these files by `cell_name`.
struct TrainSummary {
  std::string env;      // passive-tmaze | active-tmaze | visual-match | ...
  std::string encoder;  // transformer | lstm | tabular
  int T = 0;
  int context = 0;  // tabular context; 0 = full horizon
  std::uint64_t seed = 0;
  int episodes_budget = 0;
  int episodes_run = 0;
  std::int64_t env_steps = 0;
  double final_greedy_return = 0;
  double success_rate = 0;
  double wall_ms = 0;

  std::string cell_name() const;
};

std::string train_summary_to_json(const TrainSummary& s);
TrainSummary train_summary_from_json(const std::string& text);

}  // namespace memlen
