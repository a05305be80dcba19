#include "memlen/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <tuple>
#include <vector>

namespace memlen {

namespace {

void set_deterministic(TabularPOMDP& m, int s, int a, int s2) {
  m.transition[a](s, s2) = 1.0;
}

void emit(TabularPOMDP& m, int s, int o) { m.emission(s, o) = 1.0; }

}  // namespace

// Passive T-Maze. Latent state = (x, goal) along the corridor plus four goal
// cells (cell, goal). The agent starts on the oracle cell, which reveals the
// goal; the junction sits at x = L = T-1 and is first reachable at step T.
TabularPOMDP build_passive_tmaze(int T) {
  if (T < 3) throw ValidationError("passive T-Maze requires T >= 3");
  const int L = T - 1;
  const int A = 4;
  // Corridor states: (x, g) -> 2*x + g; goal cells: (j, g) -> base + 2*j + g.
  const int goal_base = 2 * (L + 1);
  const int S = goal_base + 4;

  TabularPOMDP m;
  m.name = "passive-tmaze-T" + std::to_string(T);
  m.num_states = S;
  m.num_actions = A;
  m.num_observations = 6;
  m.horizon = T;
  m.discount = 1.0;
  m.allocate();

  auto corridor = [&](int x, int g) { return 2 * x + g; };
  auto goal_cell = [&](int j, int g) { return goal_base + 2 * j + g; };

  for (int g = 0; g < 2; ++g) {
    m.initial_dist[corridor(0, g)] = 0.5;
    emit(m, corridor(0, g), g == 0 ? TMazeObs::kOracleA : TMazeObs::kOracleB);
    for (int x = 1; x < L; ++x) emit(m, corridor(x, g), TMazeObs::kNull);
    emit(m, corridor(L, g), TMazeObs::kJunction);
    for (int j = 0; j < 2; ++j)
      emit(m, goal_cell(j, g), j == 0 ? TMazeObs::kGoal1 : TMazeObs::kGoal2);

    for (int x = 0; x <= L; ++x) {
      const int s = corridor(x, g);
      set_deterministic(m, s, int(TMazeAction::kLeft), corridor(std::max(x - 1, 0), g));
      if (x < L) {
        set_deterministic(m, s, int(TMazeAction::kRight), corridor(x + 1, g));
        set_deterministic(m, s, int(TMazeAction::kUp), s);
        set_deterministic(m, s, int(TMazeAction::kDown), s);
      } else {
        set_deterministic(m, s, int(TMazeAction::kRight), s);
        set_deterministic(m, s, int(TMazeAction::kUp), goal_cell(0, g));
        set_deterministic(m, s, int(TMazeAction::kDown), goal_cell(1, g));
      }
    }
    for (int j = 0; j < 2; ++j)
      for (int a = 0; a < A; ++a)
        set_deterministic(m, goal_cell(j, g), a, goal_cell(j, g));
  }

  // R_t = (1(x_{t+1} >= t) - 1)/(T-1) for t <= T-1; R_T = goal indicator.
  m.make_time_dependent();
  for (int t = 1; t <= T; ++t)
    for (int g = 0; g < 2; ++g)
      for (int a = 0; a < A; ++a) {
        for (int x2 = 0; x2 <= L; ++x2)
          for (int x = 0; x <= L; ++x)
            if (m.transition[a](corridor(x, g), corridor(x2, g)) > 0 && t <= T - 1)
              m.reward_ref(t, corridor(x, g), a, corridor(x2, g)) =
                  (double(x2 >= t) - 1.0) / (T - 1);
        if (t == T)
          for (int j = 0; j < 2; ++j) {
            m.reward_ref(t, corridor(L, g), a, goal_cell(j, g)) = (j == g) ? 1.0 : 0.0;
            m.reward_ref(t, goal_cell(j, g), a, goal_cell(j, g)) = (j == g) ? 1.0 : 0.0;
          }
      }
  m.validate();
  return m;
}

// Active T-Maze. The oracle sits one cell left of the start and names the
// goal arm, but on a quarter of episodes a start cue (visible only on the
// first step) marks the oracle as inverted, so an optimal agent must retain
// both readings. Corridor cells carry distance marks and every action except
// Left advances, which keeps the oracle detour discoverable under
// epsilon-greedy exploration; the cue alone still pins m_reward = l_mem = T
// because only the first observation falls outside a (T-1)-suffix. Latent
// state = (x, cue, signal) plus a start-freshness flag and goal cells
// (j, cue, signal).
TabularPOMDP build_active_tmaze(int T) {
  if (T < 4) throw ValidationError("active T-Maze requires T >= 4");
  const int L = T - 2;
  const int A = 4;
  // Corridor: (x, c, z) -> 4*x + 2*c + z. Fresh-start states (x=1, c, z)
  // follow, then goal cells (j, c, z).
  const int fresh_base = 4 * (L + 1);
  const int goal_base = fresh_base + 4;
  const int S = goal_base + 8;

  TabularPOMDP m;
  m.name = "active-tmaze-T" + std::to_string(T);
  m.num_states = S;
  m.num_actions = A;
  m.num_observations = 8 + (L - 1);  // base symbols + corridor distance marks
  m.horizon = T;
  m.discount = 1.0;
  m.allocate();

  auto corridor = [&](int x, int c, int z) { return 4 * x + 2 * c + z; };
  auto fresh = [&](int c, int z) { return fresh_base + 2 * c + z; };
  auto goal_cell = [&](int j, int c, int z) { return goal_base + 4 * j + 2 * c + z; };
  auto goal_of = [&](int c, int z) { return c ^ z; };

  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < 2; ++z) {
      m.initial_dist[fresh(c, z)] = (c == 0 ? 0.75 : 0.25) * 0.5;
      emit(m, fresh(c, z), c == 0 ? TMazeObs::kStartA : TMazeObs::kStartB);
      emit(m, corridor(0, c, z), z == 0 ? TMazeObs::kOracleA : TMazeObs::kOracleB);
      for (int x = 1; x < L; ++x) emit(m, corridor(x, c, z), 8 + (x - 1));
      emit(m, corridor(L, c, z), TMazeObs::kJunction);
      for (int j = 0; j < 2; ++j)
        emit(m, goal_cell(j, c, z), j == 0 ? TMazeObs::kGoal1 : TMazeObs::kGoal2);

      auto wire_corridor_moves = [&](int s, int x) {
        set_deterministic(m, s, int(TMazeAction::kLeft), corridor(std::max(x - 1, 0), c, z));
        if (x < L) {
          set_deterministic(m, s, int(TMazeAction::kRight), corridor(x + 1, c, z));
          set_deterministic(m, s, int(TMazeAction::kUp), corridor(x + 1, c, z));
          set_deterministic(m, s, int(TMazeAction::kDown), corridor(x + 1, c, z));
        } else {
          set_deterministic(m, s, int(TMazeAction::kRight), s);
          set_deterministic(m, s, int(TMazeAction::kUp), goal_cell(0, c, z));
          set_deterministic(m, s, int(TMazeAction::kDown), goal_cell(1, c, z));
        }
      };
      for (int x = 0; x <= L; ++x) wire_corridor_moves(corridor(x, c, z), x);
      wire_corridor_moves(fresh(c, z), 1);  // the cue burns out after one step
      for (int j = 0; j < 2; ++j)
        for (int a = 0; a < A; ++a)
          set_deterministic(m, goal_cell(j, c, z), a, goal_cell(j, c, z));
    }

  // R_1 = 0; R_t = (1(x_{t+1} >= t-1) - 1)/(T-2) for 2 <= t <= T-1;
  // R_T = goal indicator. Goal cells never incur pace penalties.
  m.make_time_dependent();
  auto x_of = [&](int s) {
    if (s >= goal_base) return L;  // goal cells sit at the corridor's end
    if (s >= fresh_base) return 1;
    return s / 4;
  };
  for (int t = 2; t <= T - 1; ++t)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int s2 = 0; s2 < S; ++s2)
          if (m.transition[a](s, s2) > 0)
            m.reward_ref(t, s, a, s2) = (double(x_of(s2) >= t - 1) - 1.0) / (T - 2);
  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < 2; ++z)
      for (int a = 0; a < A; ++a)
        for (int j = 0; j < 2; ++j) {
          const double r = (j == goal_of(c, z)) ? 1.0 : 0.0;
          m.reward_ref(T, corridor(L, c, z), a, goal_cell(j, c, z)) = r;
          m.reward_ref(T, goal_cell(j, c, z), a, goal_cell(j, c, z)) = r;
        }
  m.validate();
  return m;
}

// Fully observable seven-state MDP whose two optimal policies have different
// credit assignment lengths (they disagree only at P2).
TabularPOMDP build_boat_mdp(int T) {
  if (T < 4) throw ValidationError("boat MDP requires T >= 4");
  TabularPOMDP m;
  m.name = "boat-T" + std::to_string(T);
  m.num_states = 7;
  m.num_actions = 2;
  m.num_observations = 7;
  m.horizon = T;
  m.discount = 1.0;
  m.allocate();

  m.initial_dist[0] = 1.0;
  for (int s = 0; s < 7; ++s) emit(m, s, s);

  const double entry_reward[7] = {0, 0, -1, 1, 1, -1, 5};
  auto edge = [&](int s, int a, int s2) {
    set_deterministic(m, s, a, s2);
    m.reward_ref(1, s, a, s2) = entry_reward[s2];
  };
  edge(0, 0, 0);  // P1 --x--> P1
  edge(0, 1, 1);  // P1 --y--> P2
  edge(1, 0, 2);  // P2 --x--> P3
  edge(1, 1, 4);  // P2 --y--> P5
  for (int a = 0; a < 2; ++a) {
    edge(2, a, 3);  // P3 -> P4
    edge(3, a, 6);  // P4 -> P7
    edge(4, a, 5);  // P5 -> P6
    edge(5, a, 6);  // P6 -> P7
    edge(6, a, 6);  // P7 absorbing, +5 per step
  }
  m.validate();
  return m;
}

namespace {

bool rewards_are_sa(const TabularPOMDP& m) {
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) {
      double r0 = m.reward(1, s, a, 0);
      for (int s2 = 1; s2 < m.num_states; ++s2)
        if (m.reward(1, s, a, s2) != r0) return false;
    }
  return true;
}

void require_markov_base(const TabularPOMDP& base, const char* what) {
  if (base.time_dependent)
    throw ValidationError(std::string(what) + " requires a time-invariant base");
  if (base.num_observations != base.num_states)
    throw ValidationError(std::string(what) + " requires an identity-emission base");
  for (int s = 0; s < base.num_states; ++s)
    if (base.emission(s, s) != 1.0)
      throw ValidationError(std::string(what) + " requires an identity-emission base");
  if (!rewards_are_sa(base))
    throw ValidationError(std::string(what) + " requires rewards of the form r(s, a)");
}

TabularPOMDP delay_rewards(const TabularPOMDP& base, int n) {
  // Augment the state with the last n-1 (s, a) pairs; the reward paid at
  // step t is the base reward generated at step t-n+1 (zero while warming up).
  require_markov_base(base, "delay(reward)");
  const int S = base.num_states, A = base.num_actions;
  const int slot = S * A + 1;  // +1 for the empty warm-up slot
  std::int64_t aug = S;
  for (int i = 0; i < n - 1; ++i) {
    aug *= slot;
    if (aug > 2'000'000) throw BudgetError("delay(reward): augmented state space too large");
  }
  const int depth = n - 1;

  // Augmented id = ((queue_oldest * slot + ...) * slot + queue_newest) * S + s.
  TabularPOMDP m;
  m.name = base.name + "-delay-reward-" + std::to_string(n);
  m.num_states = static_cast<int>(aug);
  m.num_actions = A;
  m.num_observations = base.num_observations;
  m.horizon = base.horizon;
  m.discount = base.discount;
  m.allocate();

  std::int64_t empty_prefix = 0;
  for (int i = 0; i < depth; ++i) empty_prefix = empty_prefix * slot + (slot - 1);
  for (int s = 0; s < S; ++s) {
    m.initial_dist[empty_prefix * S + s] = base.initial_dist[s];
  }
  for (std::int64_t id = 0; id < aug; ++id) {
    const int s = static_cast<int>(id % S);
    std::int64_t q = id / S;
    for (int o = 0; o < base.num_observations; ++o)
      m.emission(id, o) = base.emission(s, o);
    // Oldest queue entry pays now; the new (s, a) pair joins at the back.
    std::int64_t oldest = depth > 0 ? q : 0;
    for (int i = 1; i < depth; ++i) oldest /= slot;
    for (int a = 0; a < A; ++a) {
      double paid = 0.0;
      if (depth > 0 && oldest != slot - 1)
        paid = base.reward(1, static_cast<int>(oldest / A), static_cast<int>(oldest % A), 0);
      for (int s2 = 0; s2 < S; ++s2) {
        double p = base.transition[a](s, s2);
        if (p == 0.0) continue;
        std::int64_t q2 = q;
        if (depth > 0) {
          std::int64_t mod = 1;
          for (int i = 1; i < depth; ++i) mod *= slot;
          q2 = (q % mod) * slot + (static_cast<std::int64_t>(s) * A + a);
        }
        const std::int64_t id2 = q2 * S + s2;
        m.transition[a](id, id2) += p;
        m.reward_ref(1, static_cast<int>(id), a, static_cast<int>(id2)) =
            depth > 0 ? paid : base.reward(1, s, a, s2);
      }
    }
  }
  m.validate();
  return m;
}

TabularPOMDP delay_execution(const TabularPOMDP& base, int n) {
  // The action applied at step t is the one issued at step t-n+1; a queue of
  // n-1 pending actions (initially action 0) rides in the state.
  require_markov_base(base, "delay(execution)");
  const int S = base.num_states, A = base.num_actions;
  const int depth = n - 1;
  std::int64_t aug = S;
  for (int i = 0; i < depth; ++i) {
    aug *= A;
    if (aug > 2'000'000) throw BudgetError("delay(execution): augmented state space too large");
  }

  TabularPOMDP m;
  m.name = base.name + "-delay-exec-" + std::to_string(n);
  m.num_states = static_cast<int>(aug);
  m.num_actions = A;
  m.num_observations = base.num_observations;
  m.horizon = base.horizon;
  m.discount = base.discount;
  m.allocate();

  // id = queue * S + s, queue digits oldest-first in base A; queue starts
  // filled with action 0, i.e. digits all zero.
  for (int s = 0; s < S; ++s) m.initial_dist[s] = base.initial_dist[s];
  std::int64_t mod = 1;
  for (int i = 1; i < depth; ++i) mod *= A;
  for (std::int64_t id = 0; id < aug; ++id) {
    const int s = static_cast<int>(id % S);
    const std::int64_t q = id / S;
    for (int o = 0; o < base.num_observations; ++o)
      m.emission(id, o) = base.emission(s, o);
    const int exec = depth > 0 ? static_cast<int>(q / mod) : 0;
    for (int a = 0; a < A; ++a) {
      const int applied = depth > 0 ? exec : a;
      const std::int64_t q2 = depth > 0 ? (q % mod) * A + a : 0;
      for (int s2 = 0; s2 < S; ++s2) {
        double p = base.transition[applied](s, s2);
        if (p == 0.0) continue;
        const std::int64_t id2 = q2 * S + s2;
        m.transition[a](id, id2) += p;
        m.reward_ref(1, static_cast<int>(id), a, static_cast<int>(id2)) =
            base.reward(1, s, applied, s2);
      }
    }
  }
  m.validate();
  return m;
}

TabularPOMDP delay_observation(const TabularPOMDP& base, int n) {
  // Emit the observation generated n-1 steps ago; a queue of the last n-1
  // base states rides in the latent state. Warm-up steps emit a pad symbol.
  require_markov_base(base, "delay(observation)");
  const int S = base.num_states, A = base.num_actions;
  const int depth = n - 1;
  const int slot = S + 1;  // +1 for warm-up
  std::int64_t aug = S;
  for (int i = 0; i < depth; ++i) {
    aug *= slot;
    if (aug > 2'000'000) throw BudgetError("delay(observation): augmented state space too large");
  }

  TabularPOMDP m;
  m.name = base.name + "-delay-obs-" + std::to_string(n);
  m.num_states = static_cast<int>(aug);
  m.num_actions = A;
  m.num_observations = base.num_observations + 1;  // last id = pad
  m.horizon = base.horizon;
  m.discount = base.discount;
  m.allocate();
  const int pad = base.num_observations;

  std::int64_t empty_prefix = 0;
  for (int i = 0; i < depth; ++i) empty_prefix = empty_prefix * slot + S;
  for (int s = 0; s < S; ++s)
    m.initial_dist[empty_prefix * S + s] = base.initial_dist[s];

  std::int64_t mod = 1;
  for (int i = 1; i < depth; ++i) mod *= slot;
  for (std::int64_t id = 0; id < aug; ++id) {
    const int s = static_cast<int>(id % S);
    const std::int64_t q = id / S;
    const int oldest = depth > 0 ? static_cast<int>(q / mod) : s;
    if (depth > 0 && oldest == S)
      m.emission(id, pad) = 1.0;
    else
      for (int o = 0; o < base.num_observations; ++o)
        m.emission(id, o) = base.emission(depth > 0 ? oldest : s, o);
    for (int a = 0; a < A; ++a)
      for (int s2 = 0; s2 < S; ++s2) {
        double p = base.transition[a](s, s2);
        if (p == 0.0) continue;
        const std::int64_t q2 = depth > 0 ? (q % mod) * slot + s : 0;
        const std::int64_t id2 = q2 * S + s2;
        m.transition[a](id, id2) += p;
        m.reward_ref(1, static_cast<int>(id), a, static_cast<int>(id2)) =
            base.reward(1, s, a, s2);
      }
  }
  m.validate();
  return m;
}

}  // namespace

TabularPOMDP apply_delay(const TabularPOMDP& base, DelayKind kind, int n) {
  if (n < 0) throw ValidationError("delay steps must be non-negative");
  if (n <= 1) {
    TabularPOMDP copy = base;
    return copy;
  }
  switch (kind) {
    case DelayKind::kReward: return delay_rewards(base, n);
    case DelayKind::kExecution: return delay_execution(base, n);
    case DelayKind::kObservation: return delay_observation(base, n);
  }
  throw ValidationError("unknown delay kind");
}

TabularPOMDP episodic_sum(const TabularPOMDP& base, int state_budget) {
  require_markov_base(base, "episodic_sum");
  const int S = base.num_states, A = base.num_actions;

  // Collect the reachable partial sums per step by forward closure.
  std::map<double, int> sums;
  sums[0.0] = 0;
  std::vector<double> sum_values{0.0};
  std::vector<std::vector<char>> reachable(1, std::vector<char>(S, 0));
  for (int s = 0; s < S; ++s) reachable[0][s] = base.initial_dist[s] > 0;
  // Sums are indexed globally; reachability per (sum, s) grows as a worklist.
  std::deque<std::tuple<int, int, int>> work;  // (t, sum_id, s)
  for (int s = 0; s < S; ++s)
    if (reachable[0][s]) work.emplace_back(1, 0, s);
  std::map<std::tuple<int, int, int>, char> seen;
  for (auto& w : work) seen[w] = 1;
  while (!work.empty()) {
    auto [t, k, s] = work.front();
    work.pop_front();
    if (t >= base.horizon) continue;
    for (int a = 0; a < A; ++a) {
      const double add = base.reward(1, s, a, 0);
      const double next_sum = sum_values[k] + add;
      auto [it, inserted] = sums.try_emplace(next_sum, static_cast<int>(sum_values.size()));
      if (inserted) sum_values.push_back(next_sum);
      const int k2 = it->second;
      if (static_cast<std::int64_t>(sum_values.size()) * S > state_budget)
        throw BudgetError("episodic_sum: accumulated-sum state space too large");
      for (int s2 = 0; s2 < S; ++s2) {
        if (base.transition[a](s, s2) == 0.0) continue;
        auto key = std::make_tuple(t + 1, k2, s2);
        if (!seen.count(key)) {
          seen[key] = 1;
          work.push_back(key);
        }
      }
    }
  }

  const int K = static_cast<int>(sum_values.size());
  TabularPOMDP m;
  m.name = base.name + "-episodic";
  m.num_states = K * S;
  m.num_actions = A;
  m.num_observations = base.num_observations;
  m.horizon = base.horizon;
  m.discount = base.discount;
  m.allocate();
  m.make_time_dependent();

  for (int s = 0; s < S; ++s) m.initial_dist[0 * S + s] = base.initial_dist[s];
  for (int k = 0; k < K; ++k)
    for (int s = 0; s < S; ++s) {
      const int id = k * S + s;
      for (int o = 0; o < base.num_observations; ++o)
        m.emission(id, o) = base.emission(s, o);
      for (int a = 0; a < A; ++a) {
        const double add = base.reward(1, s, a, 0);
        const double next_sum = sum_values[k] + add;
        auto it = sums.find(next_sum);
        const int k2 = it == sums.end() ? k : it->second;  // unreachable combos
        for (int s2 = 0; s2 < S; ++s2) {
          double p = base.transition[a](s, s2);
          if (p == 0.0) continue;
          const int id2 = k2 * S + s2;
          m.transition[a](id, id2) += p;
          m.reward_ref(m.horizon, id, a, id2) = next_sum;
        }
      }
    }
  m.validate();
  return m;
}

namespace {

// Deterministic uniform double in [0, 1) from the engine's raw output.
double uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

Vec dirichlet_row(std::mt19937_64& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) {
    double u = uniform01(rng);
    v[i] = -std::log(std::max(u, 1e-300));  // Exp(1) == Gamma(1) == Dirichlet(1)
  }
  v /= v.sum();
  return v;
}

}  // namespace

TabularPOMDP random_pomdp(const RandomPOMDPConfig& cfg) {
  if (cfg.num_states < 1 || cfg.num_actions < 1 || cfg.num_observations < 1 ||
      cfg.horizon < 1)
    throw ValidationError("random_pomdp: sizes must be positive");
  std::mt19937_64 rng(cfg.seed);
  TabularPOMDP m;
  m.name = "random-" + std::to_string(cfg.seed);
  m.num_states = cfg.num_states;
  m.num_actions = cfg.num_actions;
  m.num_observations = cfg.markov ? cfg.num_states : cfg.num_observations;
  m.horizon = cfg.horizon;
  m.discount = 1.0;
  m.allocate();

  m.initial_dist = dirichlet_row(rng, m.num_states);
  for (int a = 0; a < m.num_actions; ++a)
    for (int s = 0; s < m.num_states; ++s)
      m.transition[a].row(s) = dirichlet_row(rng, m.num_states).transpose();
  if (cfg.markov) {
    for (int s = 0; s < m.num_states; ++s) emit(m, s, s);
  } else {
    for (int s = 0; s < m.num_states; ++s)
      m.emission.row(s) = dirichlet_row(rng, m.num_observations).transpose();
  }

  static const double kGrid[] = {-1.0, -0.5, 0.5, 1.0};
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) {
      if (cfg.markov) {
        double r = 0.0;
        if (uniform01(rng) >= cfg.reward_sparsity)
          r = kGrid[rng() % 4];
        for (int s2 = 0; s2 < m.num_states; ++s2)
          m.reward_ref(1, s, a, s2) = r;
      } else {
        for (int s2 = 0; s2 < m.num_states; ++s2)
          if (uniform01(rng) >= cfg.reward_sparsity)
            m.reward_ref(1, s, a, s2) = kGrid[rng() % 4];
      }
    }
  m.validate();
  return m;
}

}  // namespace memlen
