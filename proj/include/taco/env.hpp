#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "taco/error.hpp"
#include "taco/tensor.hpp"

namespace taco {

struct EnvSpec {
  std::string id;
  Shape obs_shape;        // [C, H, W], stacked
  int64_t action_dim = 0;
  int64_t action_repeat = 1;
  int64_t frame_stack = 1;
  int64_t episode_len = 0;  // agent steps per episode
  double reward_min = 0.0;  // per agent step
  double reward_max = 0.0;
};

struct StepResult {
  ByteTensor observation;
  double reward = 0.0;
  bool done = false;
  std::map<std::string, double> info;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual ByteTensor reset(uint64_t seed) = 0;
  virtual StepResult step(const TensorF& action) = 0;
};

inline void check_action(const TensorF& a, const EnvSpec& spec) {
  TACO_CHECK(a.numel() == spec.action_dim, UsageError, "action dim mismatch");
  for (int64_t i = 0; i < a.numel(); ++i)
    TACO_CHECK(std::isfinite(a[i]) && a[i] >= -1.0f && a[i] <= 1.0f, UsageError,
               "action components must lie in [-1,1]");
}

// Maintains the last `stack` frames as a [stack*C, H, W] observation.
class FrameStacker {
 public:
  FrameStacker() = default;
  FrameStacker(int64_t stack, Shape frame_shape)
      : stack_(stack), frame_shape_(std::move(frame_shape)) {}
  ByteTensor reset(const ByteTensor& frame) {
    frames_.assign(static_cast<size_t>(stack_), frame);
    return stacked();
  }
  ByteTensor push(const ByteTensor& frame) {
    frames_.erase(frames_.begin());
    frames_.push_back(frame);
    return stacked();
  }

 private:
  ByteTensor stacked() const {
    const int64_t c = frame_shape_[0], h = frame_shape_[1], w = frame_shape_[2];
    ByteTensor out({stack_ * c, h, w});
    for (int64_t s = 0; s < stack_; ++s)
      std::copy(frames_[s].data(), frames_[s].data() + c * h * w,
                out.data() + s * c * h * w);
    return out;
  }
  int64_t stack_ = 1;
  Shape frame_shape_;
  std::vector<ByteTensor> frames_;
};

// Hook for third-party environment bindings, addressed as "ext:<name>".
struct EnvOptions {
  int64_t img_hw = 0;         // 0 keeps the environment's default resolution
  int64_t action_repeat = 0;  // 0 keeps the environment's default
};
using EnvFactory = std::function<std::unique_ptr<Env>(const EnvOptions&)>;

inline std::map<std::string, EnvFactory>& env_registry() {
  static std::map<std::string, EnvFactory> reg;
  return reg;
}

inline void register_external_env(const std::string& name, EnvFactory factory) {
  TACO_CHECK(!name.empty(), UsageError, "external env needs a name");
  env_registry()["ext:" + name] = std::move(factory);
}

}  // namespace taco
