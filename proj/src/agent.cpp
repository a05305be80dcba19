#include "memlen/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "json.hpp"

namespace memlen {

namespace {

using json = nlohmann::json;
using nn::BatchInput;
using nn::MatX;
using nn::QNetwork;

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXf>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

json mat_to_json(const MatX<float>& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) a.push_back(double(*(m.data() + i)));
  return a;
}

void mat_from_json(const json& a, MatX<float>& m) {
  if (Eigen::Index(a.size()) != m.size())
    throw ValidationError("checkpoint parameter size mismatch");
  for (Eigen::Index i = 0; i < m.size(); ++i) *(m.data() + i) = float(a[i].get<double>());
}

/// LSTM/transformer Double-DQN agent over full-episode contexts.
class NetAgent final : public Agent {
 public:
  NetAgent(const EncoderConfig& enc, const DDQNConfig& cfg, int obs_slots,
           int obs_symbols, int num_actions, int horizon, std::uint64_t seed)
      : enc_(enc),
        cfg_(cfg),
        obs_slots_(obs_slots),
        obs_symbols_(obs_symbols),
        num_actions_(num_actions),
        horizon_(horizon),
        online_(enc, obs_slots * obs_symbols, num_actions, seed, cfg.head1, cfg.head2),
        target_(enc, obs_slots * obs_symbols, num_actions, seed, cfg.head1, cfg.head2),
        drop_rng_(mix64(seed, 0x7261)) {
    cfg_.validate();
    if (enc_.context == 0) enc_.context = horizon;
    if (enc_.context < horizon)
      throw ValidationError("context length shorter than episode horizon");
    opt_.lr = cfg.lr;
    nn::copy_params(online_.params(), target_.params());
  }

  int num_actions() const override { return num_actions_; }
  const EncoderConfig& encoder() const override { return enc_; }

  std::vector<double> q_values(const Episode& prefix) const override {
    BatchInput<float> in = make_input(&prefix, 1, static_cast<int>(prefix.obs.size()));
    nn::Tape<float> tape;
    auto fwd = online_.forward(tape, in, /*training=*/false, nullptr);
    const auto& q = tape.val(fwd.q);
    std::vector<double> out(num_actions_);
    for (int a = 0; a < num_actions_; ++a) out[a] = q(q.rows() - 1, a);
    return out;
  }

  double update(const std::vector<const Episode*>& batch) override {
    if (batch.empty()) throw ValidationError("update on empty batch");
    const int B = static_cast<int>(batch.size());
    int T = 0;
    for (const Episode* e : batch) T = std::max(T, e->length());
    BatchInput<float> in = make_batch(batch, T);

    nn::Tape<float> ttape;
    auto tfwd = target_.forward(ttape, in, false, nullptr);
    const MatX<float>& qt = ttape.val(tfwd.q);

    nn::Tape<float> tape;
    auto fwd = online_.forward(tape, in, /*training=*/true, &drop_rng_);
    const MatX<float> qo = tape.val(fwd.q);  // copy: targets read pre-update values

    // y_t = r_t + γ Q_target(h_{1:t+1}, argmax_a Q_online(h_{1:t+1}, a));
    // y = r at the last (terminal) step of each episode.
    MatX<float> y = MatX<float>::Zero(Eigen::Index(T) * B, 1);
    MatX<float> mask = MatX<float>::Zero(Eigen::Index(T) * B, 1);
    std::vector<int> taken(size_t(T) * B, 0);
    for (int b = 0; b < B; ++b) {
      const Episode& e = *batch[b];
      for (int t = 0; t < e.length(); ++t) {
        Eigen::Index r = Eigen::Index(t) * B + b;
        mask(r, 0) = 1;
        taken[size_t(r)] = e.actions[size_t(t)];
        double v = e.rewards[size_t(t)];
        if (t + 1 < e.length()) {
          Eigen::Index rn = Eigen::Index(t + 1) * B + b;
          int astar = argmax_row(qo.row(rn));
          v += cfg_.discount * double(qt(rn, astar));
        }
        y(r, 0) = float(v);
      }
    }

    int diff = tape.sub(tape.gather_cols(fwd.q, taken), tape.constant(y));
    int masked = tape.mul(diff, tape.constant(mask));
    int loss = tape.scale(tape.sum_all(tape.mul(masked, masked)), 1.0f / float(B));
    tape.backward(loss);

    std::vector<MatX<float>> grads(online_.params().items.size());
    for (size_t i = 0; i < grads.size(); ++i) grads[i] = tape.grad(fwd.leaf_ids[i]);
    opt_.update(online_.params(), grads);
    nn::soft_update(online_.params(), target_.params(), cfg_.target_tau);
    return double(tape.val(loss)(0, 0));
  }

  void serialize(std::string* out) const override {
    json j;
    j["type"] = "net";
    j["encoder"] = {{"kind", enc_.kind},       {"hidden", enc_.hidden},
                    {"layers", enc_.layers},   {"heads", enc_.heads},
                    {"dropout", enc_.dropout}, {"obs_embed", enc_.obs_embed},
                    {"act_embed", enc_.act_embed}, {"context", enc_.context}};
    j["obs_slots"] = obs_slots_;
    j["obs_symbols"] = obs_symbols_;
    j["num_actions"] = num_actions_;
    j["horizon"] = horizon_;
    j["adam_step"] = opt_.step;
    json params = json::object();
    for (const auto& e : online_.params().items)
      params[e.name] = {{"value", mat_to_json(e.value)},
                       {"m", mat_to_json(e.m)},
                       {"v", mat_to_json(e.v)}};
    j["online"] = std::move(params);
    json tgt = json::object();
    for (const auto& e : target_.params().items) tgt[e.name] = mat_to_json(e.value);
    j["target"] = std::move(tgt);
    *out = j.dump();
  }

  void deserialize(const std::string& in) override {
    json j = json::parse(in);
    if (j.at("type") != "net") throw ValidationError("checkpoint type mismatch");
    if (j.at("obs_slots") != obs_slots_ || j.at("obs_symbols") != obs_symbols_ ||
        j.at("num_actions") != num_actions_)
      throw ValidationError("checkpoint/env shape mismatch");
    opt_.step = j.at("adam_step").get<std::int64_t>();
    for (auto& e : online_.params().items) {
      const json& p = j.at("online").at(e.name);
      mat_from_json(p.at("value"), e.value);
      mat_from_json(p.at("m"), e.m);
      mat_from_json(p.at("v"), e.v);
    }
    for (auto& e : target_.params().items) mat_from_json(j.at("target").at(e.name), e.value);
  }

 private:
  BatchInput<float> make_batch(const std::vector<const Episode*>& batch, int T) const {
    const int B = static_cast<int>(batch.size());
    BatchInput<float> in;
    in.T = T;
    in.B = B;
    in.obs = MatX<float>::Zero(Eigen::Index(T) * B, Eigen::Index(obs_slots_) * obs_symbols_);
    in.prev_actions.assign(size_t(T) * B, num_actions_);
    for (int b = 0; b < B; ++b) {
      const Episode& e = *batch[b];
      for (int t = 0; t < static_cast<int>(e.obs.size()) && t < T; ++t) {
        Eigen::Index r = Eigen::Index(t) * B + b;
        for (int s = 0; s < obs_slots_; ++s)
          in.obs(r, Eigen::Index(s) * obs_symbols_ + e.obs[size_t(t)][size_t(s)]) = 1.0f;
        if (t > 0) in.prev_actions[size_t(r)] = e.actions[size_t(t) - 1];
      }
    }
    return in;
  }

  BatchInput<float> make_input(const Episode* e, int B, int T) const {
    std::vector<const Episode*> one{e};
    return make_batch(one, T);
  }

  EncoderConfig enc_;
  DDQNConfig cfg_;
  int obs_slots_, obs_symbols_, num_actions_, horizon_;
  QNetwork<float> online_, target_;
  nn::Adam<float> opt_;
  mutable std::mt19937_64 drop_rng_;
};

std::string suffix_key(const Episode& e, int upto, int k) {
  // Context of the last min(k, t) observations and interleaved actions ending
  // at step index `upto` (0-based, inclusive).
  std::string key;
  int lo = std::max(0, upto + 1 - k);
  for (int t = lo; t <= upto; ++t) {
    for (int s : e.obs[size_t(t)]) {
      key.push_back(char('a' + (s % 26)));
      key += std::to_string(s);
    }
    key.push_back('|');
    if (t < upto) key += std::to_string(e.actions[size_t(t)]);
    key.push_back(';');
  }
  return key;
}

/// Tabular-context Double-DQN: a hash table over length-k suffixes with
/// per-entry Adam moments and a soft-updated target table.
class TabularAgent final : public Agent {
 public:
  TabularAgent(const EncoderConfig& enc, const DDQNConfig& cfg, int num_actions,
               int horizon)
      : enc_(enc), cfg_(cfg), num_actions_(num_actions) {
    cfg_.validate();
    if (enc_.context == 0) enc_.context = horizon;
    k_ = enc_.context;
  }

  int num_actions() const override { return num_actions_; }
  const EncoderConfig& encoder() const override { return enc_; }

  std::vector<double> q_values(const Episode& prefix) const override {
    auto it = online_.find(suffix_key(prefix, static_cast<int>(prefix.obs.size()) - 1, k_));
    if (it == online_.end()) return std::vector<double>(num_actions_, 0.0);
    return it->second.q;
  }

  double update(const std::vector<const Episode*>& batch) override {
    if (batch.empty()) throw ValidationError("update on empty batch");
    const double B = double(batch.size());
    std::unordered_map<std::string, std::vector<double>> grads;
    double loss = 0;
    for (const Episode* ep : batch) {
      const Episode& e = *ep;
      std::vector<std::string> keys(e.length());
      for (int t = 0; t < e.length(); ++t) keys[size_t(t)] = suffix_key(e, t, k_);
      for (int t = 0; t < e.length(); ++t) {
        double y = e.rewards[size_t(t)];
        if (t + 1 < e.length()) {
          const auto& qn = q_of(online_, keys[size_t(t + 1)]);
          int astar = 0;
          for (int a = 1; a < num_actions_; ++a)
            if (qn[size_t(a)] > qn[size_t(astar)]) astar = a;
          y += cfg_.discount * q_of(target_, keys[size_t(t + 1)])[size_t(astar)];
        }
        double q = q_of(online_, keys[size_t(t)])[size_t(e.actions[size_t(t)])];
        double d = q - y;
        loss += d * d / B;
        auto& g = grads.try_emplace(keys[size_t(t)], size_t(num_actions_), 0.0).first->second;
        g[size_t(e.actions[size_t(t)])] += 2 * d / B;
      }
    }
    ++adam_step_;
    const double bc1 = 1 - std::pow(0.9, double(adam_step_));
    const double bc2 = 1 - std::pow(0.999, double(adam_step_));
    for (auto& [key, g] : grads) {
      Entry& e = online_.try_emplace(key, Entry{std::vector<double>(size_t(num_actions_), 0.0),
                                               std::vector<double>(size_t(num_actions_), 0.0),
                                               std::vector<double>(size_t(num_actions_), 0.0)})
                     .first->second;
      for (int a = 0; a < num_actions_; ++a) {
        e.m[size_t(a)] = 0.9 * e.m[size_t(a)] + 0.1 * g[size_t(a)];
        e.v[size_t(a)] = 0.999 * e.v[size_t(a)] + 0.001 * g[size_t(a)] * g[size_t(a)];
        e.q[size_t(a)] -=
            cfg_.lr * (e.m[size_t(a)] / bc1) / (std::sqrt(e.v[size_t(a)] / bc2) + 1e-8);
      }
    }
    for (const auto& [key, e] : online_) {
      auto& tq = target_.try_emplace(key, std::vector<double>(size_t(num_actions_), 0.0))
                     .first->second;
      for (int a = 0; a < num_actions_; ++a)
        tq[size_t(a)] = (1 - cfg_.target_tau) * tq[size_t(a)] + cfg_.target_tau * e.q[size_t(a)];
    }
    return loss;
  }

  void serialize(std::string* out) const override {
    json j;
    j["type"] = "tabular";
    j["context"] = k_;
    j["num_actions"] = num_actions_;
    j["adam_step"] = adam_step_;
    json tbl = json::object();
    for (const auto& [key, e] : online_) tbl[key] = {{"q", e.q}, {"m", e.m}, {"v", e.v}};
    j["online"] = std::move(tbl);
    json tgt = json::object();
    for (const auto& [key, q] : target_) tgt[key] = q;
    j["target"] = std::move(tgt);
    *out = j.dump();
  }

  void deserialize(const std::string& in) override {
    json j = json::parse(in);
    if (j.at("type") != "tabular") throw ValidationError("checkpoint type mismatch");
    if (j.at("num_actions") != num_actions_)
      throw ValidationError("checkpoint/env shape mismatch");
    k_ = j.at("context").get<int>();
    adam_step_ = j.at("adam_step").get<std::int64_t>();
    online_.clear();
    target_.clear();
    for (auto& [key, val] : j.at("online").items())
      online_[key] = Entry{val.at("q").get<std::vector<double>>(),
                           val.at("m").get<std::vector<double>>(),
                           val.at("v").get<std::vector<double>>()};
    for (auto& [key, val] : j.at("target").items())
      target_[key] = val.get<std::vector<double>>();
  }

 private:
  struct Entry {
    std::vector<double> q, m, v;
  };
  template <typename Map>
  const std::vector<double>& q_of(const Map& map, const std::string& key) const {
    static const std::vector<double> zero4(8, 0.0);
    auto it = map.find(key);
    if (it == map.end()) {
      if (num_actions_ > 8) throw ValidationError("too many actions for zero row");
      return zero4;
    }
    if constexpr (std::is_same_v<typename Map::mapped_type, Entry>)
      return it->second.q;
    else
      return it->second;
  }

  EncoderConfig enc_;
  DDQNConfig cfg_;
  int num_actions_;
  int k_ = 1;
  std::int64_t adam_step_ = 0;
  std::unordered_map<std::string, Entry> online_;
  std::unordered_map<std::string, std::vector<double>> target_;
};

}  // namespace

void DDQNConfig::validate() const {
  if (discount < 0 || discount > 1) throw ValidationError("discount must be in [0,1]");
  if (target_tau <= 0 || target_tau > 1) throw ValidationError("target_tau in (0,1]");
  if (lr <= 0 || batch_size <= 0 || replay_capacity <= 0 || num_episodes <= 0)
    throw ValidationError("DDQN sizes must be positive");
  if (update_frequency <= 0 || update_frequency > 1)
    throw ValidationError("update_frequency must be in (0,1]");
}

int Agent::greedy_action(const Episode& prefix) const {
  auto q = q_values(prefix);
  int best = 0;
  for (int a = 1; a < static_cast<int>(q.size()); ++a)
    if (q[size_t(a)] > q[size_t(best)]) best = a;
  return best;
}

int Agent::select_action(const Episode& prefix, double eps, std::mt19937_64& rng) const {
  if (nn::rng_uniform01(rng) < eps) return int(rng() % std::uint64_t(num_actions()));
  return greedy_action(prefix);
}

std::unique_ptr<Agent> make_agent(const EncoderConfig& enc, const DDQNConfig& cfg,
                                  int obs_slots, int obs_symbols, int num_actions,
                                  int horizon, std::uint64_t seed) {
  enc.validate();
  if (enc.kind == "tabular")
    return std::make_unique<TabularAgent>(enc, cfg, num_actions, horizon);
  return std::make_unique<NetAgent>(enc, cfg, obs_slots, obs_symbols, num_actions,
                                    horizon, seed);
}

TrainResult train(Simulator& env, Agent& agent, const DDQNConfig& cfg,
                  const TrainOptions& opts) {
  TrainResult result;
  EpisodeBuffer buffer(cfg.replay_capacity);
  EpsilonSchedule eps{1.0, 1.0 / env.horizon(), 0.1 * cfg.num_episodes};
  std::mt19937_64 rng(mix64(opts.seed, 0x747261696eull));
  double credit = 0;
  const auto t0 = std::chrono::steady_clock::now();

  auto greedy_eval = [&](int fallback_seed) {
    if (opts.exact_eval) return opts.exact_eval(agent);
    return evaluate_agent(agent, env, opts.eval_episodes,
                          mix64(opts.seed, 0xe7a1 + std::uint64_t(fallback_seed)))
        .mean_return;
  };

  for (int epi = 0; epi < cfg.num_episodes; ++epi) {
    const double epsilon = eps.at(double(epi));
    Episode ep;
    ep.obs.push_back(env.reset(mix64(opts.seed, std::uint64_t(epi))));
    double loss_sum = 0;
    int loss_count = 0;
    bool done = false;
    while (!done) {
      int a = agent.select_action(ep, epsilon, rng);
      StepResult sr = env.step(a);
      ep.actions.push_back(a);
      ep.rewards.push_back(sr.reward);
      done = sr.done;
      if (!done) ep.obs.push_back(std::move(sr.obs));
      ++result.env_steps;
      credit += cfg.update_frequency;
      while (credit >= 1.0 && buffer.size() >= size_t(cfg.batch_size) &&
             epi >= cfg.warmup_episodes) {
        credit -= 1.0;
        std::vector<const Episode*> batch(size_t(cfg.batch_size));
        for (auto& p : batch) p = &buffer.sample(rng);
        loss_sum += agent.update(batch);
        ++loss_count;
      }
    }
    ep.success = env.success();
    RunRecord rec;
    rec.episode = epi;
    rec.env_steps = result.env_steps;
    rec.ret = ep.total_return();
    rec.success = ep.success;
    rec.epsilon = epsilon;
    rec.mean_loss = loss_count ? loss_sum / loss_count : 0.0;
    rec.seed = opts.seed;
    buffer.add(std::move(ep));
    ++result.episodes_run;

    const bool last = (epi + 1 == cfg.num_episodes);
    if (last || (cfg.eval_every > 0 && (epi + 1) % cfg.eval_every == 0)) {
      rec.greedy_return = greedy_eval(epi);
      result.final_greedy_return = *rec.greedy_return;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (opts.on_record) opts.on_record(rec);
    result.log.push_back(rec);
    if (rec.greedy_return && *rec.greedy_return >= opts.early_stop_return) break;
  }
  if (result.log.empty() || !result.log.back().greedy_return) {
    result.final_greedy_return = greedy_eval(-1);
    if (!result.log.empty()) result.log.back().greedy_return = result.final_greedy_return;
  }
  result.final_success_rate =
      evaluate_agent(agent, env, opts.eval_episodes, mix64(opts.seed, 0x5f5f)).success_rate;
  return result;
}

EvalResult evaluate_agent(const Agent& agent, Simulator& env, int episodes,
                          std::uint64_t seed) {
  EvalResult out;
  for (int epi = 0; epi < episodes; ++epi) {
    Episode ep;
    ep.obs.push_back(env.reset(mix64(seed, std::uint64_t(epi) + 0x9eb1)));
    bool done = false;
    while (!done) {
      int a = agent.greedy_action(ep);
      StepResult sr = env.step(a);
      ep.actions.push_back(a);
      ep.rewards.push_back(sr.reward);
      done = sr.done;
      if (!done) ep.obs.push_back(std::move(sr.obs));
    }
    out.mean_return += ep.total_return();
    out.success_rate += env.success() ? 1.0 : 0.0;
  }
  if (episodes > 0) {
    out.mean_return /= episodes;
    out.success_rate /= episodes;
  }
  return out;
}

double exact_greedy_return(const Agent& agent, const TabularPOMDP& model,
                           std::int64_t node_budget) {
  std::int64_t nodes = 0;
  double total = 0;
  // Depth-first expansion of every positive-probability trajectory under the
  // deterministic greedy policy.
  std::function<void(int, int, double, Episode&)> walk = [&](int t, int s, double w,
                                                             Episode& prefix) {
    if (t > model.horizon) return;
    if (++nodes > node_budget) throw BudgetError("exact_greedy_return node budget");
    int a = agent.greedy_action(prefix);
    const auto& row = model.transition[size_t(a)].row(s);
    for (int s2 = 0; s2 < model.num_states; ++s2) {
      double p = row[s2];
      if (p <= 0) continue;
      total += w * p * model.reward(t, s, a, s2);
      if (t == model.horizon) continue;
      for (int o = 0; o < model.num_observations; ++o) {
        double pe = model.emission(s2, o);
        if (pe <= 0) continue;
        prefix.actions.push_back(a);
        prefix.obs.push_back({o});
        walk(t + 1, s2, w * p * pe, prefix);
        prefix.actions.pop_back();
        prefix.obs.pop_back();
      }
    }
  };
  Episode prefix;
  for (int s = 0; s < model.num_states; ++s) {
    double p0 = model.initial_dist[s];
    if (p0 <= 0) continue;
    for (int o = 0; o < model.num_observations; ++o) {
      double pe = model.emission(s, o);
      if (pe <= 0) continue;
      prefix.obs.push_back({o});
      walk(1, s, p0 * pe, prefix);
      prefix.obs.pop_back();
    }
  }
  return total;
}

}  // namespace memlen
