#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "memlen/diag.hpp"
#include "memlen/envs.hpp"
#include "memlen/formats.hpp"
#include "memlen/suites.hpp"

namespace fs = std::filesystem;
using namespace memlen;

namespace {

int thread_count() {
  const char* env = std::getenv("MEMLEN_THREADS");
  if (!env || !*env) return 1;
  int n = std::atoi(env);
  return n > 0 ? n : 1;
}

struct EnvSpec {
  std::string name;  // path or builtin:<name>
  int T = 0;         // 0 = builder default
  std::string transform = "none";
  int delay_n = 1;
  std::uint64_t env_seed = 0;
};

TabularPOMDP resolve_tabular(const EnvSpec& e) {
  TabularPOMDP m;
  if (e.name.rfind("builtin:", 0) == 0) {
    std::string b = e.name.substr(8);
    if (b == "passive-tmaze") m = build_passive_tmaze(e.T ? e.T : 10);
    else if (b == "active-tmaze") m = build_active_tmaze(e.T ? e.T : 10);
    else if (b == "boat") m = build_boat_mdp(e.T ? e.T : 4);
    else if (b == "random-pomdp") {
      RandomPOMDPConfig cfg;
      cfg.seed = e.env_seed;
      if (e.T) cfg.horizon = e.T;
      m = random_pomdp(cfg);
    } else if (b == "random-mdp") {
      RandomPOMDPConfig cfg;
      cfg.seed = e.env_seed;
      cfg.markov = true;
      if (e.T) cfg.horizon = e.T;
      m = random_pomdp(cfg);
    } else {
      throw ValidationError("unknown builtin environment: " + b);
    }
  } else {
    m = load_pomdp(e.name);
  }
  if (e.transform == "none") return m;
  if (e.transform == "delay-reward") return apply_delay(m, DelayKind::kReward, e.delay_n);
  if (e.transform == "delay-execution")
    return apply_delay(m, DelayKind::kExecution, e.delay_n);
  if (e.transform == "delay-observation")
    return apply_delay(m, DelayKind::kObservation, e.delay_n);
  if (e.transform == "episodic-sum") return episodic_sum(m);
  throw ValidationError("unknown transform: " + e.transform);
}

std::unique_ptr<Simulator> resolve_sim(const EnvSpec& e, TabularPOMDP* model_out) {
  if (e.name == "builtin:visual-match" || e.name == "builtin:key-to-door") {
    GridTaskConfig cfg;
    return e.name == "builtin:visual-match" ? build_visual_match(cfg)
                                            : build_key_to_door(cfg);
  }
  TabularPOMDP m = resolve_tabular(e);
  if (model_out) *model_out = m;
  return as_simulator(m);
}

void add_env_flags(CLI::App* cmd, EnvSpec& env) {
  cmd->add_option("--T", env.T, "Horizon override for builtin tasks");
  cmd->add_option("--transform", env.transform,
                  "none|delay-reward|delay-execution|delay-observation|episodic-sum");
  cmd->add_option("--n", env.delay_n, "Delay steps for delay transforms");
  cmd->add_option("--env-seed", env.env_seed, "Seed for builtin:random-pomdp");
}

int cmd_analyze(const EnvSpec& env, double tol, std::int64_t budget,
                const std::string& out) {
  DiagConfig cfg;
  cfg.tol = tol;
  if (budget > 0) cfg.node_budget = budget;
  TabularPOMDP m = resolve_tabular(env);
  LengthReport r = analyze(m, cfg);
  std::string doc = length_report_to_json(r);
  if (out.empty()) std::cout << doc;
  else write_file(out, doc);
  return 0;
}

int cmd_train(const EnvSpec& env, const std::string& encoder, int layers, int heads,
              int context, std::uint64_t seed, int episodes, const std::string& out_dir,
              double early_stop) {
  TabularPOMDP model;
  auto sim = resolve_sim(env, &model);
  DDQNConfig cfg;
  cfg.num_episodes = episodes;
  EncoderConfig enc = encoder == "lstm"          ? nn::lstm_config()
                      : encoder == "transformer" ? nn::transformer_config()
                                                 : EncoderConfig{};
  if (encoder == "tabular") enc.kind = "tabular";
  else if (encoder != "lstm" && encoder != "transformer")
    throw ValidationError("unknown encoder: " + encoder);
  enc.layers = layers;
  enc.heads = heads;
  enc.context = context;
  auto agent = make_agent(enc, cfg, sim->obs_slots(), sim->obs_symbols(),
                          sim->num_actions(), sim->horizon(), seed);

  fs::create_directories(out_dir);
  std::ofstream log((fs::path(out_dir) / "log.jsonl").string());
  TrainOptions opts;
  opts.seed = seed;
  opts.early_stop_return = early_stop;
  if (model.num_states > 0)
    opts.exact_eval = [&](const Agent& a) { return exact_greedy_return(a, model); };
  opts.on_record = [&](const RunRecord& rec) { log << run_record_to_json(rec) << "\n"; };
  TrainResult tr = train(*sim, *agent, cfg, opts);

  std::string ckpt;
  agent->serialize(&ckpt);
  write_file((fs::path(out_dir) / "checkpoint.json").string(), ckpt);
  TrainSummary s;
  s.env = env.name;
  s.encoder = encoder;
  s.T = sim->horizon();
  s.context = enc.context;
  s.seed = seed;
  s.episodes_budget = episodes;
  s.episodes_run = tr.episodes_run;
  s.env_steps = tr.env_steps;
  s.final_greedy_return = tr.final_greedy_return;
  s.success_rate = tr.final_success_rate;
  s.wall_ms = tr.log.empty() ? 0 : tr.log.back().wall_ms;
  write_file((fs::path(out_dir) / "summary.json").string(), train_summary_to_json(s));
  std::cout << "final_greedy_return " << tr.final_greedy_return << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const EnvSpec& env, int episodes,
             std::uint64_t seed) {
  TabularPOMDP model;
  auto sim = resolve_sim(env, &model);
  std::string text = read_file(checkpoint);
  // Reconstruct the agent shell from the checkpoint's own encoder config.
  auto j = nlohmann::json::parse(text);
  EncoderConfig enc;
  if (j.at("type") == "tabular") {
    enc.kind = "tabular";
    enc.context = j.at("context").get<int>();
  } else {
    const auto& e = j.at("encoder");
    enc.kind = e.at("kind").get<std::string>();
    enc.hidden = e.at("hidden").get<int>();
    enc.layers = e.at("layers").get<int>();
    enc.heads = e.at("heads").get<int>();
    enc.dropout = e.at("dropout").get<double>();
    enc.obs_embed = e.at("obs_embed").get<int>();
    enc.act_embed = e.at("act_embed").get<int>();
    enc.context = e.at("context").get<int>();
  }
  DDQNConfig cfg;
  auto agent = make_agent(enc, cfg, sim->obs_slots(), sim->obs_symbols(),
                          sim->num_actions(), sim->horizon(), seed);
  agent->deserialize(text);
  EvalResult r = evaluate_agent(*agent, *sim, episodes, seed);
  std::cout << "mean_return " << r.mean_return << "\nsuccess_rate " << r.success_rate
            << "\n";
  return 0;
}

int cmd_reproduce(const std::string& suite, const std::string& out_dir) {
  SuiteResult r;
  if (suite == "lengths-desk") r = suite_lengths_desk(out_dir);
  else if (suite == "theorem1") r = suite_theorem1(out_dir);
  else if (suite == "learning-desk") r = suite_learning_desk(default_results_dir(), out_dir);
  else throw ValidationError("unknown suite: " + suite);
  std::cout << r.summary_csv;
  if (!r.passed) {
    for (const auto& f : r.failures) std::cerr << "FAIL: " << f << "\n";
    return 1;
  }
  return 0;
}

int cmd_gradcheck() {
  nn::GradCheckReport r = nn::grad_check(0);
  std::cout << grad_report_to_json(r);
  return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memlen: memory and credit-assignment length laboratory"};
  app.require_subcommand(1);
  (void)thread_count();  // MEMLEN_THREADS; current commands are single-run

  EnvSpec aenv, tenv, eenv;
  std::string spec_path, out, out_dir = "runs/out", checkpoint, encoder = "transformer";
  std::string suite;
  double tol = 1e-9, early_stop = 0.999;
  std::int64_t budget = 0;
  int layers = 1, heads = 1, context = 0, episodes = 4000, eval_episodes = 100;
  std::uint64_t seed = 0;

  CLI::App* analyze = app.add_subcommand("analyze", "Exact length analysis of a POMDP");
  analyze->add_option("spec", spec_path, "POMDP spec path or builtin:<name>")->required();
  add_env_flags(analyze, aenv);
  analyze->add_option("--tol", tol, "Equality tolerance");
  analyze->add_option("--budget", budget, "History-tree node budget");
  analyze->add_option("--out", out, "Write the report to a file");

  CLI::App* train = app.add_subcommand("train", "Train a memory-based DDQN agent");
  train->add_option("--env", tenv.name, "Environment (builtin:<name> or spec path)")
      ->required();
  add_env_flags(train, tenv);
  train->add_option("--encoder", encoder, "transformer|lstm|tabular");
  train->add_option("--layers", layers, "Encoder layers");
  train->add_option("--heads", heads, "Attention heads");
  train->add_option("--context", context, "Context length (0 = horizon)");
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--episodes", episodes, "Episode budget");
  train->add_option("--out-dir", out_dir, "Output directory");
  train->add_option("--early-stop", early_stop,
                    "Stop once greedy return reaches this value");

  CLI::App* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--env", eenv.name, "Environment")->required();
  add_env_flags(eval, eenv);
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval->add_option("--seed", seed, "Evaluation seed");

  CLI::App* repro = app.add_subcommand("reproduce", "Run a reproduction suite");
  repro->add_option("--suite", suite, "lengths-desk|theorem1|learning-desk")->required();
  repro->add_option("--out-dir", out_dir, "Output directory");

  app.add_subcommand("gradcheck", "Finite-difference checks for all layer types");

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) {
      aenv.name = spec_path;
      return cmd_analyze(aenv, tol, budget, out);
    }
    if (train->parsed())
      return cmd_train(tenv, encoder, layers, heads, context, seed, episodes, out_dir,
                       early_stop);
    if (eval->parsed()) return cmd_eval(checkpoint, eenv, eval_episodes, seed);
    if (repro->parsed()) return cmd_reproduce(suite, out_dir);
    return cmd_gradcheck();
  } catch (const BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
