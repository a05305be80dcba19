#include "memlen/sim.hpp"

#include <random>

namespace memlen {

namespace {

double uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

int sample_index(const Eigen::VectorXd& dist, std::mt19937_64& rng) {
  double u = uniform01(rng);
  double acc = 0;
  for (int i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) return i;
  }
  for (int i = int(dist.size()) - 1; i >= 0; --i)
    if (dist[i] > 0) return i;
  throw ValidationError("sample_index: empty distribution");
}

class TabularSimulator final : public Simulator {
 public:
  explicit TabularSimulator(TabularPOMDP model) : model_(std::move(model)) {
    model_.validate();
  }

  std::vector<int> reset(std::uint64_t seed) override {
    rng_.seed(seed ^ 0xd1342543de82ef95ull);
    t_ = 1;
    done_ = false;
    state_ = sample_index(model_.initial_dist, rng_);
    return {sample_index(model_.emission.row(state_).transpose(), rng_)};
  }

  StepResult step(int action) override {
    if (done_) throw ValidationError("step after episode end");
    if (action < 0 || action >= model_.num_actions)
      throw ValidationError("action out of range");
    int next = sample_index(model_.transition[action].row(state_).transpose(), rng_);
    StepResult out;
    out.reward = model_.reward(t_, state_, action, next);
    state_ = next;
    ++t_;
    out.done = done_ = (t_ > model_.horizon);
    out.obs = {sample_index(model_.emission.row(state_).transpose(), rng_)};
    return out;
  }

  int num_actions() const override { return model_.num_actions; }
  int obs_slots() const override { return 1; }
  int obs_symbols() const override { return model_.num_observations; }
  int horizon() const override { return model_.horizon; }

 private:
  TabularPOMDP model_;
  std::mt19937_64 rng_;
  int state_ = 0;
  int t_ = 1;
  bool done_ = true;
};

}  // namespace

std::unique_ptr<Simulator> as_simulator(const TabularPOMDP& model) {
  return std::make_unique<TabularSimulator>(model);
}

}  // namespace memlen
