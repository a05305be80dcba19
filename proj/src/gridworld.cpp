#include <algorithm>
#include <random>

#include "memlen/sim.hpp"

namespace memlen {

namespace {

// Cell symbols. The window vocabulary is 5 + num_colors.
constexpr int kEmpty = 0, kWall = 1, kApple = 2, kKey = 3, kDoor = 4, kColor0 = 5;
constexpr int kViewRadius = 2;

class GridTask final : public GridSimulator {
 public:
  explicit GridTask(GridTaskConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    cy_ = cfg_.height / 2;
    cx_ = cfg_.width / 2;
  }

  std::vector<int> reset(std::uint64_t seed) override {
    rng_.seed(seed ^ 0xafc58a9b3f67cd11ull);
    steps_ = 0;
    done_ = false;
    success_ = false;
    apples_ = 0;
    has_key_ = false;
    target_ = int(rng_() % std::uint64_t(cfg_.num_colors));
    enter_phase(1);
    return observe();
  }

  StepResult step(int action) override {
    if (done_) throw ValidationError("step after episode end");
    if (action < 0 || action >= 4) throw ValidationError("action out of range");
    StepResult out;
    const int dy[4] = {0, 0, -1, 1};  // left, right, up, down
    const int dx[4] = {-1, 1, 0, 0};
    int ny = ay_ + dy[action], nx = ax_ + dx[action];
    if (cell(ny, nx) != kWall) {
      ay_ = ny;
      ax_ = nx;
      int c = cell(ay_, ax_);
      if (c == kApple) {
        out.reward += cfg_.apple_reward;
        ++apples_;
        set_cell(ay_, ax_, kEmpty);
      } else if (c == kKey) {
        has_key_ = true;
        set_cell(ay_, ax_, kEmpty);
      } else if (c == kDoor) {
        success_ = has_key_;
        if (success_) out.reward += cfg_.final_bonus;
        done_ = true;
      } else if (c >= kColor0 && phase_ == 3) {
        success_ = (c - kColor0 == target_);
        if (success_) out.reward += cfg_.final_bonus;
        done_ = true;
      }
    }
    ++steps_;
    if (!done_) {
      if (steps_ == cfg_.phase1_len) enter_phase(2);
      else if (steps_ == cfg_.phase1_len + cfg_.phase2_len) enter_phase(3);
      else if (steps_ >= horizon()) done_ = true;
    }
    out.done = done_;
    out.obs = observe();
    return out;
  }

  int num_actions() const override { return 4; }
  int obs_slots() const override { return (2 * kViewRadius + 1) * (2 * kViewRadius + 1); }
  int obs_symbols() const override { return kColor0 + cfg_.num_colors; }
  int horizon() const override { return cfg_.phase1_len + cfg_.phase2_len + cfg_.phase3_len; }
  bool success() const override { return success_; }
  int apples_collected() const override { return apples_; }

 private:
  int cell(int y, int x) const {
    if (y < 0 || y >= cfg_.height || x < 0 || x >= cfg_.width) return kWall;
    return grid_[size_t(y) * cfg_.width + x];
  }
  void set_cell(int y, int x, int v) { grid_[size_t(y) * cfg_.width + x] = v; }

  void enter_phase(int phase) {
    phase_ = phase;
    grid_.assign(size_t(cfg_.height) * cfg_.width, kEmpty);
    for (int x = 0; x < cfg_.width; ++x) {
      set_cell(0, x, kWall);
      set_cell(cfg_.height - 1, x, kWall);
    }
    for (int y = 0; y < cfg_.height; ++y) {
      set_cell(y, 0, kWall);
      set_cell(y, cfg_.width - 1, kWall);
    }
    // A wall below the center keeps the phase-3 junction a dead end, so a
    // random walk resolves among the colored cells almost surely.
    set_cell(cy_ + 1, cx_, kWall);
    ay_ = cy_;
    ax_ = cx_;
    const bool vm = cfg_.task == GridTaskConfig::Task::kVisualMatch;
    if (phase == 1) {
      set_cell(cy_ - 1, cx_, vm ? kColor0 + target_ : kKey);
    } else if (phase == 2) {
      std::vector<std::pair<int, int>> open;
      for (int y = 1; y < cfg_.height - 1; ++y)
        for (int x = 1; x < cfg_.width - 1; ++x)
          if (cell(y, x) == kEmpty && !(y == cy_ && x == cx_)) open.emplace_back(y, x);
      for (size_t i = open.size(); i > 1; --i)
        std::swap(open[i - 1], open[rng_() % i]);
      if (size_t(cfg_.apple_count) > open.size())
        throw ValidationError("apple_count exceeds free cells");
      for (int i = 0; i < cfg_.apple_count; ++i)
        set_cell(open[i].first, open[i].second, kApple);
    } else if (vm) {
      std::vector<int> colors(cfg_.num_colors);
      for (int i = 0; i < cfg_.num_colors; ++i) colors[i] = i;
      for (size_t i = colors.size(); i > 1; --i)
        std::swap(colors[i - 1], colors[rng_() % i]);
      const std::pair<int, int> spots[3] = {
          {cy_, cx_ - 1}, {cy_ - 1, cx_}, {cy_, cx_ + 1}};
      for (int i = 0; i < cfg_.num_colors; ++i)
        set_cell(spots[i].first, spots[i].second, kColor0 + colors[i]);
    } else {
      set_cell(cy_ - 1, cx_, kDoor);
    }
  }

  std::vector<int> observe() const {
    std::vector<int> w;
    w.reserve(size_t(obs_slots()));
    for (int dy = -kViewRadius; dy <= kViewRadius; ++dy)
      for (int dx = -kViewRadius; dx <= kViewRadius; ++dx)
        w.push_back(cell(ay_ + dy, ax_ + dx));
    return w;
  }

  GridTaskConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<int> grid_;
  int cy_ = 0, cx_ = 0, ay_ = 0, ax_ = 0;
  int phase_ = 1, steps_ = 0, target_ = 0, apples_ = 0;
  bool done_ = true, success_ = false, has_key_ = false;
};

}  // namespace

void GridTaskConfig::validate() const {
  if (width < 7 || height < 7) throw ValidationError("grid must be at least 7x7");
  if (phase1_len <= 0 || phase2_len <= 0 || phase3_len <= 0)
    throw ValidationError("phase lengths must be positive");
  if (num_colors < 2 || num_colors > 3)
    throw ValidationError("num_colors must be 2 or 3 for this layout");
  if (apple_count < 0) throw ValidationError("apple_count must be nonnegative");
}

std::unique_ptr<Simulator> build_visual_match(const GridTaskConfig& cfg) {
  GridTaskConfig c = cfg;
  c.task = GridTaskConfig::Task::kVisualMatch;
  return std::make_unique<GridTask>(c);
}

std::unique_ptr<Simulator> build_key_to_door(const GridTaskConfig& cfg) {
  GridTaskConfig c = cfg;
  c.task = GridTaskConfig::Task::kKeyToDoor;
  return std::make_unique<GridTask>(c);
}

}  // namespace memlen
