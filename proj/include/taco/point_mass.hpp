#pragma once

#include "taco/env.hpp"
#include "taco/random.hpp"

namespace taco {

// 2-D double integrator in the arena [-1,1]^2 with a fixed goal. Per inner
// step: pos += dt*vel (then clamped to the arena), vel = clip(vel + dt*a,
// +-v_max), reward = exp(-||pos-goal||^2 / sigma^2). Rendered as flat-shaded
// discs (goal green, agent red) on white, no anti-aliasing.
class PointMassEnv : public Env {
 public:
  struct Params {
    double dt = 0.05;
    double v_max = 1.0;
    double sigma = 0.2;
    double goal_x = 0.5, goal_y = 0.5;
    double start_range = 0.9;  // start pos uniform in [-r, r]^2, vel = 0
    int64_t img_hw = 84;
    int64_t frame_stack = 3;
    int64_t action_repeat = 2;
    int64_t episode_len = 250;
  };

  PointMassEnv() : PointMassEnv(Params()) {}
  explicit PointMassEnv(Params p) : p_(p), rng_(0) {
    TACO_CHECK(p_.img_hw >= 8, ConfigError, "point_mass: image too small");
    spec_.id = "point_mass";
    spec_.obs_shape = {p_.frame_stack * 3, p_.img_hw, p_.img_hw};
    spec_.action_dim = 2;
    spec_.action_repeat = p_.action_repeat;
    spec_.frame_stack = p_.frame_stack;
    spec_.episode_len = p_.episode_len;
    spec_.reward_min = 0.0;
    spec_.reward_max = static_cast<double>(p_.action_repeat);
    stacker_ = FrameStacker(p_.frame_stack, {3, p_.img_hw, p_.img_hw});
  }

  const EnvSpec& spec() const override { return spec_; }

  ByteTensor reset(uint64_t seed) override {
    rng_ = Rng(seed_stream(seed, 0xE0F1));
    px_ = rng_.uniform(-p_.start_range, p_.start_range);
    py_ = rng_.uniform(-p_.start_range, p_.start_range);
    vx_ = vy_ = 0.0;
    t_ = 0;
    done_ = false;
    return stacker_.reset(render());
  }

  StepResult step(const TensorF& action) override {
    TACO_CHECK(!done_, UsageError, "step after episode end");
    check_action(action, spec_);
    double reward = 0.0;
    for (int64_t i = 0; i < p_.action_repeat; ++i)
      reward += inner_step(action[0], action[1]);
    t_ += 1;
    done_ = t_ >= p_.episode_len;
    StepResult r;
    r.observation = stacker_.push(render());
    r.reward = reward;
    r.done = done_;
    r.info["pos_x"] = px_;
    r.info["pos_y"] = py_;
    r.info["dist"] = std::sqrt(dist2());
    return r;
  }

  // state accessors for closed-form oracles
  double pos_x() const { return px_; }
  double pos_y() const { return py_; }
  double vel_x() const { return vx_; }
  double vel_y() const { return vy_; }
  void set_state(double px, double py, double vx, double vy) {
    px_ = px;
    py_ = py;
    vx_ = vx;
    vy_ = vy;
  }
  const Params& params() const { return p_; }

 private:
  double dist2() const {
    const double dx = px_ - p_.goal_x, dy = py_ - p_.goal_y;
    return dx * dx + dy * dy;
  }
  double inner_step(double ax, double ay) {
    px_ = std::clamp(px_ + p_.dt * vx_, -1.0, 1.0);
    py_ = std::clamp(py_ + p_.dt * vy_, -1.0, 1.0);
    vx_ = std::clamp(vx_ + p_.dt * ax, -p_.v_max, p_.v_max);
    vy_ = std::clamp(vy_ + p_.dt * ay, -p_.v_max, p_.v_max);
    return std::exp(-dist2() / (p_.sigma * p_.sigma));
  }

  ByteTensor render() const {
    const int64_t hw = p_.img_hw;
    ByteTensor img({3, hw, hw});
    std::fill(img.vec().begin(), img.vec().end(), uint8_t(255));
    const int64_t r = std::max<int64_t>(1, static_cast<int64_t>(0.05 * hw + 0.5));
    draw_disc(img, p_.goal_x, p_.goal_y, r, 0, 200, 0);
    draw_disc(img, px_, py_, r, 220, 0, 0);
    return img;
  }

  void draw_disc(ByteTensor& img, double x, double y, int64_t r, uint8_t cr,
                 uint8_t cg, uint8_t cb) const {
    const int64_t hw = p_.img_hw;
    const int64_t cx = static_cast<int64_t>((x + 1.0) * 0.5 * (hw - 1) + 0.5);
    const int64_t cy = static_cast<int64_t>((y + 1.0) * 0.5 * (hw - 1) + 0.5);
    for (int64_t i = std::max<int64_t>(0, cy - r); i <= std::min(hw - 1, cy + r); ++i)
      for (int64_t j = std::max<int64_t>(0, cx - r); j <= std::min(hw - 1, cx + r); ++j)
        if ((i - cy) * (i - cy) + (j - cx) * (j - cx) <= r * r) {
          img[(0 * hw + i) * hw + j] = cr;
          img[(1 * hw + i) * hw + j] = cg;
          img[(2 * hw + i) * hw + j] = cb;
        }
  }

  Params p_;
  EnvSpec spec_;
  Rng rng_;
  FrameStacker stacker_;
  double px_ = 0, py_ = 0, vx_ = 0, vy_ = 0;
  int64_t t_ = 0;
  bool done_ = true;
};

}  // namespace taco
