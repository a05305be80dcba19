#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "memlen/agent.hpp"
#include "memlen/diag.hpp"
#include "memlen/envs.hpp"
#include "memlen/formats.hpp"
#include "memlen/history_tree.hpp"
#include "memlen/sim.hpp"
#include "memlen/suites.hpp"
#include "memlen/values.hpp"

namespace py = pybind11;
using namespace memlen;

namespace {

TabularPOMDP builtin_model(const std::string& name, int T, std::uint64_t seed) {
  if (name == "passive-tmaze") return build_passive_tmaze(T);
  if (name == "active-tmaze") return build_active_tmaze(T);
  if (name == "boat") return build_boat_mdp();
  if (name == "random-pomdp" || name == "random-mdp") {
    RandomPOMDPConfig cfg;
    cfg.seed = seed;
    if (T > 0) cfg.horizon = T;
    cfg.markov = name == "random-mdp";
    return random_pomdp(cfg);
  }
  throw ValidationError("unknown builtin task: " + name);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "memlen: exact memory/credit-assignment length analysis for tabular POMDPs";

  py::register_exception<ValidationError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<BudgetError>(m, "BudgetError", PyExc_RuntimeError);

  py::class_<TabularPOMDP>(m, "TabularPOMDP")
      .def_readonly("name", &TabularPOMDP::name)
      .def_readonly("num_states", &TabularPOMDP::num_states)
      .def_readonly("num_actions", &TabularPOMDP::num_actions)
      .def_readonly("num_observations", &TabularPOMDP::num_observations)
      .def_readonly("horizon", &TabularPOMDP::horizon)
      .def("to_json", [](const TabularPOMDP& self) { return pomdp_to_text(self); });

  m.def("builtin", &builtin_model, py::arg("name"), py::arg("T") = 0,
        py::arg("seed") = 0,
        "Construct a builtin task: passive-tmaze, active-tmaze, boat, "
        "random-pomdp, random-mdp");
  m.def("from_json", &pomdp_from_text, py::arg("text"));

  m.def(
      "delay",
      [](const TabularPOMDP& base, const std::string& kind, int n) {
        DelayKind k = kind == "reward"      ? DelayKind::kReward
                      : kind == "execution" ? DelayKind::kExecution
                      : kind == "observation"
                          ? DelayKind::kObservation
                          : throw ValidationError("unknown delay kind: " + kind);
        return apply_delay(base, k, n);
      },
      py::arg("base"), py::arg("kind"), py::arg("n"));
  m.def("episodic_sum", [](const TabularPOMDP& base) { return episodic_sum(base); },
        py::arg("base"));

  m.def(
      "analyze",
      [](const TabularPOMDP& model) {
        LengthReport r = analyze(model);
        py::dict d;
        d["name"] = r.name;
        d["horizon"] = r.horizon;
        d["l_mem"] = r.l_mem;
        d["l_value"] = r.l_value;
        d["m_reward"] = r.m_reward;
        d["m_transit"] = r.m_transit;
        d["m_task"] = r.m_task;
        d["c_task"] = r.c_task;
        d["c_per_policy"] = r.c_per_policy;
        d["num_optimal_policies"] = r.num_optimal_policies;
        d["theorem1_holds"] = r.theorem1.holds;
        return d;
      },
      py::arg("model"),
      "Exact length analysis; returns the headline lengths as a dict");
  m.def("analyze_json",
        [](const TabularPOMDP& model) { return length_report_to_json(analyze(model)); },
        py::arg("model"), "Full length report as a JSON string");

  m.def(
      "grad_check",
      [](std::uint64_t seed) {
        nn::GradCheckReport r = nn::grad_check(seed);
        double worst = 0;
        for (const auto& e : r.layers) worst = std::max(worst, e.max_rel_err);
        py::dict d;
        d["passed"] = r.passed();
        d["max_rel_err"] = worst;
        d["causality_err"] = r.causality_err;
        return d;
      },
      py::arg("seed") = 0);

  m.def(
      "rollout_return",
      [](const TabularPOMDP& model, std::uint64_t episode_seed,
         const std::vector<int>& actions) {
        auto sim = as_simulator(model);
        sim->reset(episode_seed);
        double ret = 0;
        for (int a : actions) {
          StepResult sr = sim->step(a);
          ret += sr.reward;
          if (sr.done) break;
        }
        return ret;
      },
      py::arg("model"), py::arg("episode_seed"), py::arg("actions"),
      "Sampled return of a fixed action sequence on the tabular simulator");

  m.def(
      "optimal_return",
      [](const TabularPOMDP& model) {
        HistoryTree tree(model, model.horizon);
        OptimalValues opt = optimal_values(tree);
        double v = 0;
        for (size_t n = 0; n < tree.level(0).size(); ++n)
          v += tree.weight(0, int(n)) * opt.v[0][n];
        return v;
      },
      py::arg("model"), "Exact optimal expected return");

  m.def(
      "train",
      [](const TabularPOMDP& model, const std::string& encoder, int episodes,
         int context, std::uint64_t seed) {
        auto env = as_simulator(model);
        DDQNConfig cfg;
        cfg.num_episodes = episodes;
        EncoderConfig enc = encoder == "lstm"          ? nn::lstm_config()
                            : encoder == "transformer" ? nn::transformer_config()
                                                       : EncoderConfig{};
        if (encoder == "tabular") {
          enc.kind = "tabular";
          enc.context = context == 0 ? model.horizon : context;
        } else {
          enc.layers = 1;
          enc.heads = 1;
        }
        auto agent = make_agent(enc, cfg, env->obs_slots(), env->obs_symbols(),
                                env->num_actions(), env->horizon(), seed);
        TrainOptions opts;
        opts.seed = seed;
        opts.exact_eval = [&](const Agent& a) { return exact_greedy_return(a, model); };
        opts.early_stop_return = 0.999;
        TrainResult tr = train(*env, *agent, cfg, opts);
        py::dict d;
        d["final_greedy_return"] = tr.final_greedy_return;
        d["episodes_run"] = tr.episodes_run;
        d["env_steps"] = tr.env_steps;
        return d;
      },
      py::arg("model"), py::arg("encoder"), py::arg("episodes") = 500,
      py::arg("context") = 0, py::arg("seed") = 0,
      "Train a DDQN agent on a tabular task; returns the final exact greedy return");
}
