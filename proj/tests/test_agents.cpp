#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "memlen/agent.hpp"
#include "memlen/envs.hpp"
#include "memlen/history_tree.hpp"
#include "memlen/values.hpp"

using namespace memlen;
using nn::EncoderConfig;

namespace {

EncoderConfig tabular_enc(int k) {
  EncoderConfig e;
  e.kind = "tabular";
  e.context = k;
  return e;
}

EncoderConfig tiny_net(const char* kind) {
  EncoderConfig e = kind == std::string("lstm") ? nn::lstm_config() : nn::transformer_config();
  e.hidden = 16;
  e.obs_embed = 8;
  e.act_embed = 8;
  e.dropout = 0.0;  // keeps update() deterministic for the round-trip check
  return e;
}

DDQNConfig small_cfg() {
  DDQNConfig c;
  c.head1 = 32;
  c.head2 = 32;
  c.batch_size = 8;
  c.warmup_episodes = 8;
  return c;
}

}  // namespace

TEST_CASE("epsilon schedule endpoints and midpoint") {
  EpsilonSchedule s{1.0, 1.0 / 20.0, 400.0};
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(400) == doctest::Approx(0.05));
  CHECK(s.at(1000) == doctest::Approx(0.05));
  CHECK(s.at(200) == doctest::Approx(0.5 * (1.0 + 0.05)));
}

TEST_CASE("episode buffer evicts whole oldest episodes by transition count") {
  EpisodeBuffer buf(10);
  auto ep = [](int len) {
    Episode e;
    e.obs.assign(size_t(len) + 1, {0});
    e.actions.assign(size_t(len), 0);
    e.rewards.assign(size_t(len), 0.0);
    return e;
  };
  buf.add(ep(4));
  buf.add(ep(4));
  buf.add(ep(4));  // 12 > 10: evicts the first episode
  CHECK(buf.size() == 2);
  CHECK(buf.transitions() == 8);
  buf.add(ep(40));  // oversized episodes are kept alone
  CHECK(buf.size() == 1);
}

TEST_CASE("select_action is greedy at eps 0 and uniform at eps 1") {
  DDQNConfig cfg = small_cfg();
  auto agent = make_agent(tabular_enc(1), cfg, 1, 3, 2, 4, 0);
  Episode prefix;
  prefix.obs = {{0}};
  std::mt19937_64 rng(3);
  int g = agent->greedy_action(prefix);
  for (int i = 0; i < 20; ++i) CHECK(agent->select_action(prefix, 0.0, rng) == g);
  int counts[2] = {0, 0};
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[agent->select_action(prefix, 1.0, rng)];
  // Within 4 standard errors of the uniform split.
  CHECK(std::abs(counts[0] - n / 2) < 4 * std::sqrt(n * 0.25));
}

TEST_CASE("fresh tabular agent has zero loss on zero-reward batch") {
  // With gamma arbitrary, all-zero rewards, and Q identically zero at init,
  // every Double-DQN target is zero and so is the loss.
  DDQNConfig cfg = small_cfg();
  auto agent = make_agent(tabular_enc(2), cfg, 1, 3, 2, 4, 0);
  Episode e;
  e.obs = {{0}, {1}, {2}, {1}};
  e.actions = {0, 1, 0};
  e.rewards = {0, 0, 0};
  std::vector<const Episode*> batch(8, &e);
  CHECK(agent->update(batch) == doctest::Approx(0.0));
  CHECK(agent->q_values(e)[0] == doctest::Approx(0.0));
}

TEST_CASE("tabular agent learns a 2-step MDP to its exact optimum") {
  RandomPOMDPConfig rc;
  rc.seed = 5;
  rc.markov = true;
  rc.horizon = 2;
  rc.num_states = 3;
  rc.num_observations = 3;
  TabularPOMDP m = random_pomdp(rc);
  auto sim = as_simulator(m);
  DDQNConfig cfg = small_cfg();
  cfg.num_episodes = 3000;
  cfg.lr = 1e-2;
  auto agent = make_agent(tabular_enc(m.horizon), cfg, 1, m.num_observations,
                          m.num_actions, m.horizon, 1);
  TrainOptions opts;
  opts.seed = 1;
  opts.exact_eval = [&](const Agent& a) { return exact_greedy_return(a, m); };
  HistoryTree tree(m, m.horizon);
  OptimalValues opt = optimal_values(tree);
  double vstar = 0;
  for (size_t n = 0; n < tree.level(0).size(); ++n)
    vstar += tree.weight(0, int(n)) * opt.v[0][n];
  opts.early_stop_return = vstar - 1e-3;
  TrainResult res = train(*sim, *agent, cfg, opts);
  CHECK(res.final_greedy_return >= vstar - 1e-3);
}

TEST_CASE("checkpoint round trip reproduces Q-values exactly") {
  for (const char* kind : {"lstm", "transformer", "tabular"}) {
    DDQNConfig cfg = small_cfg();
    EncoderConfig enc = kind == std::string("tabular") ? tabular_enc(3) : tiny_net(kind);
    auto a = make_agent(enc, cfg, 2, 4, 3, 5, 7);
    // Push the agent off its initial state with a few updates.
    Episode e;
    e.obs = {{0, 1}, {1, 2}, {3, 0}};
    e.actions = {0, 2};
    e.rewards = {0.5, -1.0};
    std::vector<const Episode*> batch(cfg.batch_size, &e);
    for (int i = 0; i < 3; ++i) a->update(batch);

    std::string blob;
    a->serialize(&blob);
    auto b = make_agent(enc, cfg, 2, 4, 3, 5, 991);
    b->deserialize(blob);
    Episode probe;
    probe.obs = {{0, 1}, {3, 3}};
    probe.actions = {1};
    CHECK(a->q_values(probe) == b->q_values(probe));
    // And the restored agent keeps updating identically.
    double la = a->update(batch), lb = b->update(batch);
    CHECK(la == doctest::Approx(lb).epsilon(1e-10));
  }
}

TEST_CASE("evaluate_agent and exact_greedy_return agree on a tabular task") {
  TabularPOMDP m = build_passive_tmaze(4);
  DDQNConfig cfg = small_cfg();
  auto agent = make_agent(tabular_enc(1), cfg, 1, 8, 4, m.horizon, 2);
  auto sim = as_simulator(m);
  double exact = exact_greedy_return(*agent, m);
  EvalResult mc = evaluate_agent(*agent, *sim, 3000, 11);
  CHECK(mc.mean_return == doctest::Approx(exact).epsilon(0.1).scale(1.0));
}

TEST_CASE("train honors the episode budget and logs evals") {
  TabularPOMDP m = build_passive_tmaze(3);
  auto sim = as_simulator(m);
  DDQNConfig cfg = small_cfg();
  cfg.num_episodes = 30;
  cfg.eval_every = 10;
  auto agent = make_agent(tabular_enc(1), cfg, 1, 8, 4, m.horizon, 3);
  TrainOptions opts;
  opts.seed = 5;
  opts.eval_episodes = 8;
  int evals = 0;
  opts.on_record = [&](const RunRecord& r) {
    if (r.greedy_return) ++evals;
    CHECK(r.episode >= 0);
    CHECK(r.episode < 30);
  };
  TrainResult res = train(*sim, *agent, cfg, opts);
  CHECK(res.episodes_run == 30);
  CHECK(res.env_steps == 30 * m.horizon);
  CHECK(evals >= 3);
  CHECK(res.log.size() == 30);
}
