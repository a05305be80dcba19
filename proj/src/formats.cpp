#include "memlen/formats.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace memlen {

using json = nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
}

TabularPOMDP pomdp_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("spec parse error: ") + e.what());
  }
  try {
    TabularPOMDP m;
    m.name = j.value("name", "unnamed");
    m.num_states = j.at("num_states").get<int>();
    m.num_actions = j.at("num_actions").get<int>();
    m.num_observations = j.at("num_observations").get<int>();
    m.horizon = j.at("horizon").get<int>();
    m.discount = j.value("discount", 1.0);
    if (m.num_states <= 0 || m.num_actions <= 0 || m.num_observations <= 0 ||
        m.horizon <= 0)
      throw ValidationError("spec: sizes and horizon must be positive");
    m.allocate();
    const auto& init = j.at("initial_dist");
    if (int(init.size()) != m.num_states)
      throw ValidationError("spec: initial_dist length != num_states");
    for (int s = 0; s < m.num_states; ++s) m.initial_dist[s] = init[size_t(s)].get<double>();
    const auto& tr = j.at("transition");
    if (int(tr.size()) != m.num_states)
      throw ValidationError("spec: transition must be [s][a][s']");
    for (int s = 0; s < m.num_states; ++s) {
      const auto& row_a = tr[size_t(s)];
      if (int(row_a.size()) != m.num_actions)
        throw ValidationError("spec: transition must be [s][a][s']");
      for (int a = 0; a < m.num_actions; ++a) {
        const auto& row = row_a[size_t(a)];
        if (int(row.size()) != m.num_states)
          throw ValidationError("spec: transition must be [s][a][s']");
        for (int s2 = 0; s2 < m.num_states; ++s2)
          m.transition[size_t(a)](s, s2) = row[size_t(s2)].get<double>();
      }
    }
    const auto& em = j.at("emission");
    if (int(em.size()) != m.num_states) throw ValidationError("spec: emission must be [s][o]");
    for (int s = 0; s < m.num_states; ++s) {
      const auto& row = em[size_t(s)];
      if (int(row.size()) != m.num_observations)
        throw ValidationError("spec: emission must be [s][o]");
      for (int o = 0; o < m.num_observations; ++o)
        m.emission(s, o) = row[size_t(o)].get<double>();
    }
    if (j.contains("rewards")) {
      bool any_timed = false;
      for (const auto& rec : j.at("rewards"))
        if (!rec.at("t").is_string()) any_timed = true;
      if (any_timed) m.make_time_dependent();
      for (const auto& rec : j.at("rewards")) {
        int s = rec.at("s").get<int>(), a = rec.at("a").get<int>(),
            s2 = rec.at("s2").get<int>();
        double v = rec.at("value").get<double>();
        if (s < 0 || s >= m.num_states || s2 < 0 || s2 >= m.num_states || a < 0 ||
            a >= m.num_actions)
          throw ValidationError("spec: reward record index out of range");
        if (rec.at("t").is_string()) {
          if (rec.at("t") != "any")
            throw ValidationError("spec: reward t must be an integer or \"any\"");
          if (m.time_dependent)
            for (int t = 1; t <= m.horizon; ++t) m.reward_ref(t, s, a, s2) = v;
          else
            m.reward_ref(1, s, a, s2) = v;
        } else {
          int t = rec.at("t").get<int>();
          if (t < 1 || t > m.horizon)
            throw ValidationError("spec: reward t out of range");
          m.reward_ref(t, s, a, s2) = v;
        }
      }
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("spec error: ") + e.what());
  }
}

std::string pomdp_to_text(const TabularPOMDP& m) {
  json j;
  j["name"] = m.name;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["num_observations"] = m.num_observations;
  j["horizon"] = m.horizon;
  j["discount"] = m.discount;
  json init = json::array();
  for (int s = 0; s < m.num_states; ++s) init.push_back(m.initial_dist[s]);
  j["initial_dist"] = std::move(init);
  json tr = json::array();
  for (int s = 0; s < m.num_states; ++s) {
    json by_a = json::array();
    for (int a = 0; a < m.num_actions; ++a) {
      json row = json::array();
      for (int s2 = 0; s2 < m.num_states; ++s2)
        row.push_back(m.transition[size_t(a)](s, s2));
      by_a.push_back(std::move(row));
    }
    tr.push_back(std::move(by_a));
  }
  j["transition"] = std::move(tr);
  json em = json::array();
  for (int s = 0; s < m.num_states; ++s) {
    json row = json::array();
    for (int o = 0; o < m.num_observations; ++o) row.push_back(m.emission(s, o));
    em.push_back(std::move(row));
  }
  j["emission"] = std::move(em);
  json rewards = json::array();
  const int steps = m.time_dependent ? m.horizon : 1;
  for (int ti = 0; ti < steps; ++ti)
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a)
        for (int s2 = 0; s2 < m.num_states; ++s2) {
          double v = m.reward(ti + 1, s, a, s2);
          if (v == 0) continue;
          json rec;
          rec["t"] = m.time_dependent ? json(ti + 1) : json("any");
          rec["s"] = s;
          rec["a"] = a;
          rec["s2"] = s2;
          rec["value"] = v;
          rewards.push_back(std::move(rec));
        }
  j["rewards"] = std::move(rewards);
  return j.dump(2) + "\n";
}

TabularPOMDP load_pomdp(const std::string& path) {
  return pomdp_from_text(read_file(path));
}

namespace {

json witness_to_json(const std::optional<LengthWitness>& w) {
  if (!w) return nullptr;
  json j;
  j["k"] = w->k;
  j["h1"] = {{"observations", w->h1.observations}, {"actions", w->h1.actions}};
  j["h2"] = {{"observations", w->h2.observations}, {"actions", w->h2.actions}};
  j["action"] = w->action;
  if (w->obs >= 0) j["obs"] = w->obs;
  j["v1"] = w->v1;
  j["v2"] = w->v2;
  return j;
}

}  // namespace

std::string length_report_to_json(const LengthReport& r) {
  json j;
  j["name"] = r.name;
  j["horizon"] = r.horizon;
  j["l_mem"] = r.l_mem;
  j["l_value"] = r.l_value;
  j["m_reward"] = r.m_reward;
  j["m_transit"] = r.m_transit;
  j["m_task"] = r.m_task;
  j["c_task"] = r.c_task;
  j["c_per_policy"] = r.c_per_policy;
  j["num_optimal_policies"] = r.num_optimal_policies;
  j["policy_enum_truncated"] = r.policy_enum_truncated;
  j["witnesses"] = {{"l_mem", witness_to_json(r.w_l_mem)},
                    {"l_value", witness_to_json(r.w_l_value)},
                    {"m_reward", witness_to_json(r.w_m_reward)},
                    {"m_transit", witness_to_json(r.w_m_transit)}};
  j["theorem1"] = {{"l_mem", r.theorem1.l_mem},       {"l_value", r.theorem1.l_value},
                   {"m_reward", r.theorem1.m_reward}, {"m_transit", r.theorem1.m_transit},
                   {"m_task", r.theorem1.m_task},     {"holds", r.theorem1.holds},
                   {"truncated", r.theorem1.truncated}};
  return j.dump(2) + "\n";
}

std::string run_record_to_json(const RunRecord& r) {
  json j;
  j["episode"] = r.episode;
  j["env_steps"] = r.env_steps;
  j["return"] = r.ret;
  j["success"] = r.success;
  j["epsilon"] = r.epsilon;
  j["mean_loss"] = r.mean_loss;
  j["wall_ms"] = r.wall_ms;
  j["seed"] = r.seed;
  if (r.greedy_return) j["greedy_return"] = *r.greedy_return;
  return j.dump();
}

std::string grad_report_to_json(const nn::GradCheckReport& r) {
  json j;
  json layers = json::array();
  for (const auto& e : r.layers)
    layers.push_back({{"name", e.name},
                      {"max_abs_err", e.max_abs_err},
                      {"max_rel_err", e.max_rel_err}});
  j["layers"] = std::move(layers);
  j["causality_err"] = r.causality_err;
  j["passed"] = r.passed();
  return j.dump(2) + "\n";
}

std::string TrainSummary::cell_name() const {
  std::string n = env + "-T" + std::to_string(T) + "-" + encoder;
  if (encoder == "tabular") n += "-k" + std::to_string(context);
  n += "-s" + std::to_string(seed);
  return n;
}

std::string train_summary_to_json(const TrainSummary& s) {
  json j;
  j["env"] = s.env;
  j["encoder"] = s.encoder;
  j["T"] = s.T;
  j["context"] = s.context;
  j["seed"] = s.seed;
  j["episodes_budget"] = s.episodes_budget;
  j["episodes_run"] = s.episodes_run;
  j["env_steps"] = s.env_steps;
  j["final_greedy_return"] = s.final_greedy_return;
  j["success_rate"] = s.success_rate;
  j["wall_ms"] = s.wall_ms;
  return j.dump(2) + "\n";
}

TrainSummary train_summary_from_json(const std::string& text) {
  json j = json::parse(text);
  TrainSummary s;
  s.env = j.at("env").get<std::string>();
  s.encoder = j.at("encoder").get<std::string>();
  s.T = j.at("T").get<int>();
  s.context = j.value("context", 0);
  s.seed = j.at("seed").get<std::uint64_t>();
  s.episodes_budget = j.at("episodes_budget").get<int>();
  s.episodes_run = j.at("episodes_run").get<int>();
  s.env_steps = j.at("env_steps").get<std::int64_t>();
  s.final_greedy_return = j.at("final_greedy_return").get<double>();
  s.success_rate = j.at("success_rate").get<double>();
  s.wall_ms = j.at("wall_ms").get<double>();
  return s;
}

}  // namespace memlen
