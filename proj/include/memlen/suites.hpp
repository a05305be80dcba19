#pragma once

#include <functional>
#include <string>
#include <vector>

#include "memlen/agent.hpp"
#include "memlen/formats.hpp"

namespace memlen {

struct SuiteResult {
  bool passed = true;
  std::vector<std::string> failures;
  std::string summary_csv;
};

/// Table-1 rows at desk scale: passive/active T-Maze T in {6,8,10} plus the
/// boat MDP. Writes per-task reports under out_dir when non-empty.
SuiteResult suite_lengths_desk(const std::string& out_dir = "");

/// Theorem 1 on seeded random POMDPs plus the Lemma-1 bound on random
/// non-optimal policies.
SuiteResult suite_theorem1(const std::string& out_dir = "", int instances = 200,
                           int policies_per_instance = 50);

/// One training run of the learning-desk matrix.
struct LearningCell {
  std::string env;      // passive-tmaze | active-tmaze
  std::string encoder;  // transformer | lstm | tabular
  int T = 20;
  int context = 0;  // tabular only; 0 = T
  std::uint64_t seed = 0;
  int episodes = 4000;
};

std::vector<LearningCell> learning_desk_cells();

/// Runs (or loads from results_dir cache) one cell; caches the summary as
/// <results_dir>/<cell_name>.json and appends the run log next to it.
TrainSummary run_learning_cell(const LearningCell& cell, const std::string& results_dir,
                               bool use_cache = true,
                               const std::function<void(const RunRecord&)>& on_record = nullptr);

/// Criteria 6-7: the learning separation and credit-assignment ordering
/// checks over the full cell matrix.
SuiteResult suite_learning_desk(const std::string& results_dir,
                                const std::string& out_dir = "");

/// Default results cache: $MEMLEN_RESULTS or "results".
std::string default_results_dir();

}  // namespace memlen
