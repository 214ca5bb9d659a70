#pragma once

#include "taco/env.hpp"
#include "taco/grid_mdp.hpp"
#include "taco/point_mass.hpp"

namespace taco {

// Appends `extra` action dimensions the base environment never sees; dynamics
// and reward depend only on the first base-|A| components.
class DistractingActionWrapper : public Env {
 public:
  DistractingActionWrapper(std::unique_ptr<Env> base, int64_t extra)
      : base_(std::move(base)) {
    TACO_CHECK(extra >= 1, ConfigError, "distracting wrapper needs extra >= 1");
    spec_ = base_->spec();
    base_dim_ = spec_.action_dim;
    spec_.action_dim += extra;
    spec_.id = base_->spec().id + "_distract" + std::to_string(extra);
  }
  const EnvSpec& spec() const override { return spec_; }
  ByteTensor reset(uint64_t seed) override { return base_->reset(seed); }
  StepResult step(const TensorF& action) override {
    check_action(action, spec_);
    TensorF inner({base_dim_});
    std::copy(action.data(), action.data() + base_dim_, inner.data());
    return base_->step(inner);
  }
  int64_t base_action_dim() const { return base_dim_; }

 private:
  std::unique_ptr<Env> base_;
  EnvSpec spec_;
  int64_t base_dim_;
};

inline std::unique_ptr<Env> make_env(const std::string& id,
                                     const EnvOptions& opt = {}) {
  if (id == "point_mass") {
    PointMassEnv::Params p;
    if (opt.img_hw > 0) p.img_hw = opt.img_hw;
    if (opt.action_repeat > 0) p.action_repeat = opt.action_repeat;
    return std::make_unique<PointMassEnv>(p);
  }
  if (id == "point_mass_distract8") {
    return std::make_unique<DistractingActionWrapper>(make_env("point_mass", opt), 8);
  }
  if (id == "dup_action_grid") {
    GridEnv::Params p;
    if (opt.img_hw > 0) p.img_hw = opt.img_hw;
    return std::make_unique<GridEnv>(p);
  }
  auto it = env_registry().find(id);
  if (it != env_registry().end()) return it->second(opt);
  throw ConfigError("unknown environment id: " + id);
}

// Monte-Carlo mean return of the uniform-random policy.
inline double random_policy_return(Env& env, int64_t episodes, uint64_t seed) {
  Rng rng(seed_stream(seed, 0xBA5E));
  double total = 0.0;
  for (int64_t e = 0; e < episodes; ++e) {
    env.reset(seed_stream(seed, 0x100 + static_cast<uint64_t>(e)));
    TensorF a({env.spec().action_dim});
    bool done = false;
    while (!done) {
      for (int64_t i = 0; i < a.numel(); ++i)
        a[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      auto r = env.step(a);
      total += r.reward;
      done = r.done;
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace taco
