#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "doctest.h"
#include "memlen/agent.hpp"
#include "memlen/diag.hpp"
#include "memlen/envs.hpp"
#include "memlen/history_tree.hpp"
#include "memlen/sim.hpp"
#include "memlen/suites.hpp"
#include "memlen/values.hpp"

using namespace memlen;

namespace {

void report(int n, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  [%s]\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion ", n, ": ", detail);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double root_value(const HistoryTree& tree, const std::vector<std::vector<double>>& v) {
  double out = 0;
  for (size_t n = 0; n < tree.level(0).size(); ++n)
    out += tree.weight(0, int(n)) * v[0][n];
  return out;
}

std::vector<TrainSummary> run_cells(const std::string& env_filter) {
  std::vector<TrainSummary> rows;
  const std::string dir = default_results_dir();
  for (const LearningCell& cell : learning_desk_cells())
    if (cell.env == env_filter) rows.push_back(run_learning_cell(cell, dir));
  return rows;
}

int count_ge(const std::vector<double>& v, double thr) {
  return int(std::count_if(v.begin(), v.end(), [&](double x) { return x >= thr; }));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
}

}  // namespace

TEST_CASE("criterion1: T-maze length table at desk scale") {
  bool ok = true;
  std::ostringstream detail;
  for (int T : {6, 8, 10}) {
    for (bool active : {false, true}) {
      auto t0 = std::chrono::steady_clock::now();
      LengthReport r = analyze(active ? build_active_tmaze(T) : build_passive_tmaze(T));
      double secs = seconds_since(t0);
      int want_c = active ? T : 1;
      bool row = r.l_mem == T && r.m_task == T && r.c_task == want_c;
      ok = ok && row && secs < 120.0;
      detail << (active ? "active" : "passive") << T << "=(" << r.l_mem << ","
             << r.m_task << "," << r.c_task << ")@" << int(secs) << "s ";
    }
  }
  report(1, ok, detail.str());
}

TEST_CASE("criterion2: boat MDP counterexample") {
  LengthReport r = analyze(build_boat_mdp());
  std::vector<int> cs = r.c_per_policy;
  std::sort(cs.begin(), cs.end());
  bool ok = r.num_optimal_policies == 2 && cs == std::vector<int>{2, 3} && r.c_task == 2;
  std::ostringstream detail;
  detail << r.num_optimal_policies << " optimal policies, c={";
  for (int c : r.c_per_policy) detail << c << ",";
  detail << "}, c^M=" << r.c_task;
  report(2, ok, detail.str());
}

TEST_CASE("criterion3: theorem 1 property suite") {
  auto t0 = std::chrono::steady_clock::now();
  SuiteResult res = suite_theorem1("", 200, 50);
  double secs = seconds_since(t0);
  bool ok = res.passed && secs < 600.0;
  std::ostringstream detail;
  detail << "200 instances x 50 policies, " << res.failures.size() << " violations, "
         << int(secs) << "s";
  report(3, ok, detail.str());
}

TEST_CASE("criterion4: transform length table") {
  RandomPOMDPConfig base_cfg;
  base_cfg.seed = 11;
  base_cfg.markov = true;
  base_cfg.horizon = 5;
  TabularPOMDP base = random_pomdp(base_cfg);
  bool ok = true;
  std::ostringstream detail;
  for (int n : {1, 2, 3}) {
    TabularPOMDP dr = apply_delay(base, DelayKind::kReward, n);
    HistoryTree tr(dr, dr.horizon);
    int mr = reward_memory_length(tr).length;
    TabularPOMDP de = apply_delay(base, DelayKind::kExecution, n);
    HistoryTree te(de, de.horizon);
    int mt = transition_memory_length(te).length;
    ok = ok && mr == n && mt == n;
    detail << "n" << n << ":(m_r=" << mr << ",m_t=" << mt << ") ";
  }
  TabularPOMDP es = episodic_sum(base);
  LengthReport r = analyze(es);
  bool es_ok = r.m_reward == base.horizon && r.l_mem <= 1 && r.c_task == base.horizon;
  ok = ok && es_ok;
  detail << "episodic_sum:(m_r=" << r.m_reward << ",l_mem=" << r.l_mem
         << ",c^M=" << r.c_task << ")";
  report(4, ok, detail.str());
}

TEST_CASE("criterion5: gradient and causality checks") {
  nn::GradCheckReport rep = nn::grad_check(0);
  double worst = 0;
  bool linear_ok = true;
  for (const auto& l : rep.layers) {
    worst = std::max(worst, l.max_rel_err);
    if (l.name.rfind("linear/", 0) == 0 && l.max_rel_err >= 1e-6) linear_ok = false;
  }
  bool ok = rep.passed() && linear_ok && rep.causality_err < 1e-12;
  std::ostringstream detail;
  detail << "max rel err " << worst << ", causality err " << rep.causality_err;
  report(5, ok, detail.str());
}

TEST_CASE("criterion6: learning separation on passive T-maze T=20") {
  std::vector<TrainSummary> rows = run_cells("passive-tmaze");
  std::vector<double> tf, ls, k1, kT;
  for (const auto& s : rows) {
    if (s.encoder == "transformer") tf.push_back(s.final_greedy_return);
    if (s.encoder == "lstm") ls.push_back(s.final_greedy_return);
    if (s.encoder == "tabular" && s.context == 1) k1.push_back(s.final_greedy_return);
    if (s.encoder == "tabular" && s.context == 20) kT.push_back(s.final_greedy_return);
  }
  bool a = count_ge(tf, 0.9) >= 8;
  bool b = count_ge(ls, 0.9) >= 7;
  bool c = !k1.empty() && std::all_of(k1.begin(), k1.end(),
                                      [](double r) { return std::abs(r - 0.5) <= 0.05; });
  bool d = !kT.empty() &&
           std::all_of(kT.begin(), kT.end(), [](double r) { return r >= 1.0 - 1e-3; });
  std::ostringstream detail;
  detail << "transformer " << count_ge(tf, 0.9) << "/10 (need 8), lstm "
         << count_ge(ls, 0.9) << "/10 (need 7), k=1 in [0.45,0.55] "
         << (c ? "yes" : "NO") << ", k=T >=1-1e-3 " << (d ? "yes" : "NO");
  report(6, a && b && c && d, detail.str());
}

TEST_CASE("criterion7: credit-assignment ordering on active T-maze") {
  std::vector<TrainSummary> rows = run_cells("active-tmaze");
  std::vector<double> a20, a60;
  for (const auto& s : rows)
    (s.T == 20 ? a20 : a60).push_back(s.final_greedy_return);
  bool reach = count_ge(a20, 0.9) >= 6;
  bool order = median(a60) < median(a20);
  std::ostringstream detail;
  detail << "T=20 " << count_ge(a20, 0.9) << "/10 seeds >=0.9 (need 6), median T=60 "
         << median(a60) << " vs T=20 " << median(a20);
  report(7, reach && order, detail.str());
}

TEST_CASE("criterion8: epsilon schedule limits") {
  const int T = 20;
  EpsilonSchedule s{1.0, 1.0 / T, double(T)};
  bool terminal = s.at(T) == 1.0 / T && s.at(10 * T) == 1.0 / T;
  double all_greedy = std::pow(1.0 - 1.0 / T, T);
  bool value = std::abs(all_greedy - 0.3585) < 5e-4;
  bool limit = std::abs(all_greedy - 1.0 / std::exp(1.0)) < 0.01;
  std::ostringstream detail;
  detail << "terminal eps 1/T, 0.95^20 = " << all_greedy << " (1/e = "
         << 1.0 / std::exp(1.0) << ")";
  report(8, terminal && value && limit, detail.str());
}

TEST_CASE("criterion9: gridworld phase-3 chance level and return decomposition") {
  GridTaskConfig cfg;
  auto sim_base = build_visual_match(cfg);
  auto* sim = dynamic_cast<GridSimulator*>(sim_base.get());
  REQUIRE(sim != nullptr);
  std::mt19937_64 rng(123);
  const int kEpisodes = 10000;
  int successes = 0;
  bool decomposed = true;
  for (int e = 0; e < kEpisodes; ++e) {
    sim->reset(std::uint64_t(e) * 2654435761u + 17);
    StepResult sr{{}, 0.0, false};
    double ret = 0;
    while (!sr.done) {
      sr = sim->step(int(rng() % 4));
      ret += sr.reward;
    }
    successes += sim->success() ? 1 : 0;
    double expect = sim->apples_collected() * cfg.apple_reward +
                    (sim->success() ? cfg.final_bonus : 0.0);
    if (std::abs(ret - expect) > 1e-12) decomposed = false;
  }
  double rate = double(successes) / kEpisodes;
  bool ok = std::abs(rate - 1.0 / 3.0) <= 0.02 && decomposed;
  std::ostringstream detail;
  detail << "success rate " << rate << " (want 1/3 +/- 0.02), decomposition "
         << (decomposed ? "exact" : "BROKEN");
  report(9, ok, detail.str());
}

TEST_CASE("criterion10: Monte-Carlo rollouts agree with exact evaluation") {
  bool ok = true;
  std::ostringstream detail;
  for (int pair = 0; pair < 20; ++pair) {
    RandomPOMDPConfig cfg;
    cfg.seed = std::uint64_t(300 + pair);
    cfg.num_states = 2 + pair % 3;
    cfg.num_observations = 2 + pair % 2;
    cfg.horizon = 2 + pair % 4;
    TabularPOMDP m = random_pomdp(cfg);
    auto pi = hashed_random_policy(m.num_actions, m.horizon, std::uint64_t(77 + pair));

    HistoryTree tree(m, m.horizon);
    PolicyEvaluation ev = evaluate_policy(tree, *pi);
    double exact = root_value(tree, ev.v);

    auto sim = as_simulator(m);
    std::mt19937_64 rng(std::uint64_t(9000 + pair));
    const int kEpisodes = 20000;
    double sum = 0, sumsq = 0;
    for (int e = 0; e < kEpisodes; ++e) {
      std::vector<int> obs = sim->reset(rng()), acts;
      std::vector<int> seen = obs;  // flattened single-slot observations
      double ret = 0;
      bool done = false;
      while (!done) {
        Suffix suf;
        suf.n = int(seen.size());
        suf.observations = seen;
        suf.actions = acts;
        Vec dist = pi->action_dist(suf);
        double u = nn::rng_uniform01(rng), acc = 0;
        int a = m.num_actions - 1;
        for (int i = 0; i < m.num_actions; ++i) {
          acc += dist[i];
          if (u < acc) {
            a = i;
            break;
          }
        }
        StepResult sr = sim->step(a);
        ret += sr.reward;
        done = sr.done;
        if (!done) {
          seen.push_back(sr.obs[0]);
          acts.push_back(a);
        }
      }
      sum += ret;
      sumsq += ret * ret;
    }
    double mean = sum / kEpisodes;
    double var = std::max(0.0, sumsq / kEpisodes - mean * mean);
    double se = std::sqrt(var / kEpisodes);
    double err = std::abs(mean - exact);
    if (err > 3 * std::max(se, 1e-12)) {
      ok = false;
      detail << "pair" << pair << ":|" << mean << "-" << exact << "|>3se ";
    }
  }
  if (ok) detail << "20/20 pairs within 3 standard errors";
  report(10, ok, detail.str());
}
