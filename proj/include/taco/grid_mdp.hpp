#pragma once

#include <array>

#include "taco/env.hpp"
#include "taco/random.hpp"

namespace taco {

// Deterministic 3x3 gridworld with a duplicated continuous action space: the
// scalar action in [-1,1] is split into 8 equal bins and bin b executes move
// b % 4, so bins (b, b+4) are behaviorally identical. Reaching the goal cell
// is absorbing (every move stays) and pays reward 1 per step; episodes end by
// time limit only. The tabular MDP is tiny, so exact Q* comes from value
// iteration.
class GridEnv : public Env {
 public:
  static constexpr int64_t kGrid = 3;
  static constexpr int64_t kStates = kGrid * kGrid;
  static constexpr int64_t kBins = 8;
  static constexpr int64_t kMoves = 4;
  static constexpr int64_t kStart = 0;                  // (row 0, col 0)
  static constexpr int64_t kGoal = kStates - 1;         // (row 2, col 2)

  struct Params {
    int64_t img_hw = 64;
    int64_t episode_len = 50;
  };

  GridEnv() : GridEnv(Params()) {}
  explicit GridEnv(Params p) : p_(p) {
    TACO_CHECK(p_.img_hw >= kGrid, ConfigError, "grid: image too small");
    spec_.id = "dup_action_grid";
    spec_.obs_shape = {3, p_.img_hw, p_.img_hw};
    spec_.action_dim = 1;
    spec_.action_repeat = 1;
    spec_.frame_stack = 1;
    spec_.episode_len = p_.episode_len;
    spec_.reward_min = 0.0;
    spec_.reward_max = 1.0;
  }

  const EnvSpec& spec() const override { return spec_; }

  static int64_t discretize(double a) {
    auto bin = static_cast<int64_t>((a + 1.0) * 0.5 * kBins);
    return std::clamp<int64_t>(bin, 0, kBins - 1);
  }
  // midpoint of a bin in action space
  static double bin_center(int64_t bin) {
    return (2.0 * (static_cast<double>(bin) + 0.5) / kBins) - 1.0;
  }
  // Mirrored duplication: bins b and kBins-1-b drive the same move, so the
  // action pairs (a, -a) at bin centers are exact duplicates.
  static int64_t move_of(int64_t bin) {
    return bin < kMoves ? bin : kBins - 1 - bin;
  }
  static int64_t next_state(int64_t s, int64_t bin) {
    if (s == kGoal) return kGoal;
    int64_t row = s / kGrid, col = s % kGrid;
    switch (move_of(bin)) {
      case 0: col = std::min(col + 1, kGrid - 1); break;  // right
      case 1: row = std::min(row + 1, kGrid - 1); break;  // down
      case 2: col = std::max<int64_t>(col - 1, 0); break; // left
      default: row = std::max<int64_t>(row - 1, 0); break;  // up
    }
    return row * kGrid + col;
  }
  static double reward_of(int64_t s, int64_t bin) {
    return next_state(s, bin) == kGoal ? 1.0 : 0.0;
  }

  ByteTensor reset(uint64_t seed) override {
    (void)seed;
    s_ = kStart;
    t_ = 0;
    done_ = false;
    return render();
  }

  StepResult step(const TensorF& action) override {
    TACO_CHECK(!done_, UsageError, "step after episode end");
    check_action(action, spec_);
    const int64_t bin = discretize(action[0]);
    StepResult r;
    r.reward = reward_of(s_, bin);
    s_ = next_state(s_, bin);
    t_ += 1;
    done_ = t_ >= p_.episode_len;
    r.observation = render();
    r.done = done_;
    r.info["state"] = static_cast<double>(s_);
    return r;
  }

  int64_t state() const { return s_; }

  // Frame-stack-1 observation of an arbitrary state, for oracle probes.
  ByteTensor observation_of(int64_t s) const {
    TACO_CHECK(s >= 0 && s < kStates, UsageError, "grid state out of range");
    GridEnv tmp(p_);
    tmp.s_ = s;
    return tmp.render();
  }

  // Q[s*kBins + b] for the infinite-horizon discounted MDP.
  static std::vector<double> value_iteration(double gamma, double tol = 1e-8,
                                             int64_t max_sweeps = 10000) {
    std::vector<double> q(kStates * kBins, 0.0);
    std::vector<double> next(q.size(), 0.0);
    for (int64_t sweep = 0; sweep < max_sweeps; ++sweep) {
      double delta = 0.0;
      // Synchronous sweeps keep actions with identical dynamics exactly tied.
      for (int64_t s = 0; s < kStates; ++s)
        for (int64_t b = 0; b < kBins; ++b) {
          const int64_t sn = next_state(s, b);
          double vn = q[sn * kBins];
          for (int64_t b2 = 1; b2 < kBins; ++b2)
            vn = std::max(vn, q[sn * kBins + b2]);
          const double nv = reward_of(s, b) + gamma * vn;
          delta = std::max(delta, std::abs(nv - q[s * kBins + b]));
          next[s * kBins + b] = nv;
        }
      q.swap(next);
      if (delta < tol) return q;
    }
    throw NumericError("value iteration did not converge");
  }

  // Undiscounted return of the greedy-on-Q* policy from the start cell.
  static double optimal_episode_return(int64_t episode_len, double gamma = 0.99) {
    const auto q = value_iteration(gamma);
    int64_t s = kStart;
    double ret = 0.0;
    for (int64_t t = 0; t < episode_len; ++t) {
      int64_t best = 0;
      for (int64_t b = 1; b < kBins; ++b)
        if (q[s * kBins + b] > q[s * kBins + best]) best = b;
      ret += reward_of(s, best);
      s = next_state(s, best);
    }
    return ret;
  }

 private:
  ByteTensor render() const {
    const int64_t hw = p_.img_hw;
    ByteTensor img({3, hw, hw});
    std::fill(img.vec().begin(), img.vec().end(), uint8_t(255));
    fill_cell(img, kGoal, 170, 230, 170);
    fill_cell(img, s_, 40, 40, 200);
    return img;
  }
  void fill_cell(ByteTensor& img, int64_t s, uint8_t cr, uint8_t cg,
                 uint8_t cb) const {
    const int64_t hw = p_.img_hw;
    const int64_t row = s / kGrid, col = s % kGrid;
    const int64_t r0 = row * hw / kGrid, r1 = (row + 1) * hw / kGrid;
    const int64_t c0 = col * hw / kGrid, c1 = (col + 1) * hw / kGrid;
    for (int64_t i = r0; i < r1; ++i)
      for (int64_t j = c0; j < c1; ++j) {
        img[(0 * hw + i) * hw + j] = cr;
        img[(1 * hw + i) * hw + j] = cg;
        img[(2 * hw + i) * hw + j] = cb;
      }
  }

  Params p_;
  EnvSpec spec_;
  int64_t s_ = kStart;
  int64_t t_ = 0;
  bool done_ = true;
};

}  // namespace taco
