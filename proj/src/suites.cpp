#include "memlen/suites.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "memlen/diag.hpp"
#include "memlen/envs.hpp"

namespace memlen {

namespace fs = std::filesystem;

namespace {

void maybe_write(const std::string& out_dir, const std::string& file,
                 const std::string& content) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / file).string(), content);
}

void expect(SuiteResult& res, bool ok, const std::string& what) {
  if (!ok) {
    res.passed = false;
    res.failures.push_back(what);
  }
}

}  // namespace

std::string default_results_dir() {
  const char* env = std::getenv("MEMLEN_RESULTS");
  return env && *env ? env : "results";
}

SuiteResult suite_lengths_desk(const std::string& out_dir) {
  SuiteResult res;
  std::ostringstream csv;
  csv << "task,T,l_mem,l_value,m_reward,m_transit,m_task,c_task,num_optimal_policies\n";
  for (int T : {6, 8, 10}) {
    for (bool active : {false, true}) {
      TabularPOMDP m = active ? build_active_tmaze(T) : build_passive_tmaze(T);
      LengthReport r = analyze(m);
      const char* task = active ? "active" : "passive";
      csv << task << "," << T << "," << r.l_mem << "," << r.l_value << ","
          << r.m_reward << "," << r.m_transit << "," << r.m_task << "," << r.c_task
          << "," << r.num_optimal_policies << "\n";
      maybe_write(out_dir, std::string(task) + "-T" + std::to_string(T) + ".json",
                  length_report_to_json(r));
      std::string id = std::string(task) + " T=" + std::to_string(T);
      expect(res, r.l_mem == T, id + ": l_mem=" + std::to_string(r.l_mem) + " expected T");
      expect(res, r.m_task == T, id + ": m=" + std::to_string(r.m_task) + " expected T");
      int want_c = active ? T : 1;
      expect(res, r.c_task == want_c,
             id + ": c=" + std::to_string(r.c_task) + " expected " + std::to_string(want_c));
    }
  }
  {
    TabularPOMDP boat = build_boat_mdp();
    LengthReport r = analyze(boat);
    csv << "boat,4," << r.l_mem << "," << r.l_value << "," << r.m_reward << ","
        << r.m_transit << "," << r.m_task << "," << r.c_task << ","
        << r.num_optimal_policies << "\n";
    maybe_write(out_dir, "boat.json", length_report_to_json(r));
    expect(res, r.num_optimal_policies == 2,
           "boat: expected exactly 2 optimal policies, got " +
               std::to_string(r.num_optimal_policies));
    std::vector<int> cs = r.c_per_policy;
    std::sort(cs.begin(), cs.end());
    expect(res, cs == std::vector<int>({2, 3}), "boat: c-values expected {3,2}");
    expect(res, r.c_task == 2, "boat: c^M expected 2, got " + std::to_string(r.c_task));
  }
  res.summary_csv = csv.str();
  maybe_write(out_dir, "lengths-desk.csv", res.summary_csv);
  return res;
}

SuiteResult suite_theorem1(const std::string& out_dir, int instances,
                           int policies_per_instance) {
  SuiteResult res;
  std::ostringstream csv;
  csv << "seed,S,O,A,T,l_mem,l_value,m_reward,m_transit,theorem1,lemma1\n";
  for (int seed = 0; seed < instances; ++seed) {
    RandomPOMDPConfig cfg;
    cfg.seed = std::uint64_t(seed);
    cfg.num_states = 2 + seed % 3;        // 2..4
    cfg.num_observations = 2 + seed % 2;  // 2..3
    cfg.num_actions = 2;
    cfg.horizon = 2 + seed % 4;  // 2..5
    cfg.reward_sparsity = (seed % 5) / 10.0;
    TabularPOMDP m = random_pomdp(cfg);

    HistoryTree tree(m, m.horizon);
    OptimalValues opt = optimal_values(tree);
    OptimalPolicySet set = enumerate_optimal_policies(tree, opt);
    auto [idx, l_mem] = min_memory_optimal(tree, set);
    PolicyEvaluation ev = evaluate_policy(tree, *set.policies[size_t(idx)]);
    LengthResult l_value = value_memory_length(tree, ev);
    LengthResult m_r = reward_memory_length(tree);
    LengthResult m_t = transition_memory_length(tree);
    int m_task = std::max(m_r.length, m_t.length);
    bool thm = l_mem.length <= l_value.length && l_value.length <= m_task;
    expect(res, thm, "theorem1 violated at seed " + std::to_string(seed));

    bool lemma_ok = true;
    for (int p = 0; p < policies_per_instance; ++p) {
      auto pi = hashed_random_policy(m.num_actions, m.horizon,
                                     std::uint64_t(seed) * 1000 + std::uint64_t(p));
      PolicyEvaluation pe = evaluate_policy(tree, *pi);
      int lv = value_memory_length(tree, pe).length;
      int lm = policy_memory_length(tree, *pi, pe).length;
      if (lv > std::max({m_r.length, m_t.length, lm - 1})) {
        lemma_ok = false;
        expect(res, false,
               "lemma1 violated at seed " + std::to_string(seed) + " policy " +
                   std::to_string(p));
      }
    }
    csv << seed << "," << cfg.num_states << "," << cfg.num_observations << ","
        << cfg.num_actions << "," << cfg.horizon << "," << l_mem.length << ","
        << l_value.length << "," << m_r.length << "," << m_t.length << ","
        << (thm ? "pass" : "FAIL") << "," << (lemma_ok ? "pass" : "FAIL") << "\n";
  }
  res.summary_csv = csv.str();
  maybe_write(out_dir, "theorem1.csv", res.summary_csv);
  return res;
}

std::vector<LearningCell> learning_desk_cells() {
  std::vector<LearningCell> cells;
  auto add = [&](const std::string& env, const std::string& enc, int T, int ctx,
                 std::uint64_t seed, int episodes) {
    cells.push_back(LearningCell{env, enc, T, ctx, seed, episodes});
  };
  // Cheap cells first so partial caches are immediately useful.
  for (std::uint64_t s = 0; s < 10; ++s) add("passive-tmaze", "tabular", 20, 1, s, 4000);
  for (std::uint64_t s = 0; s < 10; ++s) add("passive-tmaze", "tabular", 20, 20, s, 4000);
  for (std::uint64_t s = 0; s < 10; ++s) add("passive-tmaze", "transformer", 20, 0, s, 4000);
  for (std::uint64_t s = 0; s < 10; ++s) add("passive-tmaze", "lstm", 20, 0, s, 4000);
  for (std::uint64_t s = 0; s < 10; ++s) add("active-tmaze", "transformer", 20, 0, s, 4000);
  // Same environment-step budget as T = 20 (80k steps).
  for (std::uint64_t s = 0; s < 5; ++s) add("active-tmaze", "transformer", 60, 0, s, 1333);
  return cells;
}

TrainSummary run_learning_cell(const LearningCell& cell, const std::string& results_dir,
                               bool use_cache,
                               const std::function<void(const RunRecord&)>& on_record) {
  TrainSummary want;
  want.env = cell.env;
  want.encoder = cell.encoder;
  want.T = cell.T;
  want.context = cell.encoder == "tabular" ? (cell.context == 0 ? cell.T : cell.context) : 0;
  want.seed = cell.seed;
  want.episodes_budget = cell.episodes;
  fs::create_directories(results_dir);
  fs::path cache = fs::path(results_dir) / (want.cell_name() + ".json");
  if (use_cache && fs::exists(cache)) {
    try {
      TrainSummary got = train_summary_from_json(read_file(cache.string()));
      if (got.episodes_budget == cell.episodes) return got;
    } catch (const std::exception&) {
      // fall through to recompute
    }
  }

  TabularPOMDP model = cell.env == "active-tmaze" ? build_active_tmaze(cell.T)
                                                  : build_passive_tmaze(cell.T);
  auto env = as_simulator(model);
  DDQNConfig cfg;
  cfg.num_episodes = cell.episodes;
  EncoderConfig enc = cell.encoder == "lstm"          ? nn::lstm_config()
                      : cell.encoder == "transformer" ? nn::transformer_config()
                                                      : EncoderConfig{};
  if (cell.encoder == "tabular") {
    enc.kind = "tabular";
    enc.context = cell.context == 0 ? cell.T : cell.context;
  } else {
    enc.layers = 1;
    enc.heads = 1;
  }
  auto agent = make_agent(enc, cfg, env->obs_slots(), env->obs_symbols(),
                          env->num_actions(), env->horizon(), cell.seed);
  TrainOptions opts;
  opts.seed = cell.seed;
  opts.exact_eval = [&](const Agent& a) { return exact_greedy_return(a, model); };
  opts.early_stop_return = 0.999;
  opts.on_record = on_record;
  TrainResult tr = train(*env, *agent, cfg, opts);

  want.episodes_run = tr.episodes_run;
  want.env_steps = tr.env_steps;
  want.final_greedy_return = tr.final_greedy_return;
  want.success_rate = tr.final_success_rate;
  want.wall_ms = tr.log.empty() ? 0 : tr.log.back().wall_ms;
  write_file(cache.string(), train_summary_to_json(want));
  std::ostringstream log;
  for (const auto& rec : tr.log) log << run_record_to_json(rec) << "\n";
  write_file((fs::path(results_dir) / (want.cell_name() + ".log.jsonl")).string(),
             log.str());
  return want;
}

SuiteResult suite_learning_desk(const std::string& results_dir,
                                const std::string& out_dir) {
  SuiteResult res;
  std::ostringstream csv;
  csv << "cell,final_greedy_return,episodes_run,env_steps,wall_ms\n";
  std::vector<TrainSummary> rows;
  for (const LearningCell& cell : learning_desk_cells()) {
    TrainSummary s = run_learning_cell(cell, results_dir);
    csv << s.cell_name() << "," << s.final_greedy_return << "," << s.episodes_run
        << "," << s.env_steps << "," << s.wall_ms << "\n";
    rows.push_back(std::move(s));
  }
  auto collect = [&](const std::string& env, const std::string& enc, int T, int ctx) {
    std::vector<double> out;
    for (const auto& s : rows)
      if (s.env == env && s.encoder == enc && s.T == T && (enc != "tabular" || s.context == ctx))
        out.push_back(s.final_greedy_return);
    return out;
  };
  auto count_ge = [](const std::vector<double>& v, double thr) {
    return int(std::count_if(v.begin(), v.end(), [&](double x) { return x >= thr; }));
  };
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  };

  auto tf = collect("passive-tmaze", "transformer", 20, 0);
  expect(res, count_ge(tf, 0.9) >= 8,
         "criterion 6a: passive transformer >=0.9 in " + std::to_string(count_ge(tf, 0.9)) +
             "/10 seeds (need 8)");
  auto ls = collect("passive-tmaze", "lstm", 20, 0);
  expect(res, count_ge(ls, 0.9) >= 7,
         "criterion 6b: passive lstm >=0.9 in " + std::to_string(count_ge(ls, 0.9)) +
             "/10 seeds (need 7)");
  for (double r : collect("passive-tmaze", "tabular", 20, 1))
    expect(res, std::abs(r - 0.5) <= 0.05,
           "criterion 6c: tabular k=1 return " + std::to_string(r) + " not 0.5 +/- 0.05");
  for (double r : collect("passive-tmaze", "tabular", 20, 20))
    expect(res, r >= 1.0 - 1e-3,
           "criterion 6d: tabular k=T return " + std::to_string(r) + " < 1 - 1e-3");
  auto a20 = collect("active-tmaze", "transformer", 20, 0);
  expect(res, count_ge(a20, 0.9) >= 6,
         "criterion 7: active T=20 transformer >=0.9 in " +
             std::to_string(count_ge(a20, 0.9)) + "/10 seeds (need 6)");
  auto a60 = collect("active-tmaze", "transformer", 60, 0);
  expect(res, median(a60) < median(a20),
         "criterion 7: median at T=60 (" + std::to_string(median(a60)) +
             ") not below T=20 (" + std::to_string(median(a20)) + ")");

  res.summary_csv = csv.str();
  maybe_write(out_dir, "learning-desk.csv", res.summary_csv);
  return res;
}

}  // namespace memlen
