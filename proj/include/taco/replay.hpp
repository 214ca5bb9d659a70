#pragma once

#include <cstring>
#include <deque>
#include <utility>
#include <vector>

#include "taco/error.hpp"
#include "taco/random.hpp"
#include "taco/tensor.hpp"

namespace taco {

// One full episode. observations has T+1 entries (s_0 .. s_T); the remaining
// arrays have T. discounts[t] is 0.0 when s_{t+1} is terminal, else 1.0.
struct EpisodeRecord {
  ByteTensor observations;  // [T+1, C, H, W]
  TensorF actions;          // [T, |A|]
  TensorF rewards;          // [T]
  TensorF discounts;        // [T]

  int64_t length() const { return rewards.numel(); }
  double total_reward() const {
    double s = 0;
    for (int64_t i = 0; i < rewards.numel(); ++i) s += rewards[i];
    return s;
  }
  void validate() const {
    TACO_CHECK(observations.ndim() == 4, DataError, "episode: obs must be [T+1,C,H,W]");
    TACO_CHECK(actions.ndim() == 2, DataError, "episode: actions must be [T,|A|]");
    const int64_t t = rewards.numel();
    TACO_CHECK(t >= 1, DataError, "episode: T must be >= 1");
    TACO_CHECK(observations.dim(0) == t + 1, DataError, "episode: need T+1 observations");
    TACO_CHECK(actions.dim(0) == t, DataError, "episode: action count mismatch");
    TACO_CHECK(discounts.numel() == t, DataError, "episode: discount count mismatch");
    for (int64_t i = 0; i < actions.numel(); ++i)
      TACO_CHECK(std::isfinite(actions[i]) && actions[i] >= -1.0f && actions[i] <= 1.0f,
                 DataError, "episode: action outside [-1,1]");
    TACO_CHECK(rewards.all_finite(), DataError, "episode: non-finite reward");
  }
};

// Accumulates one episode frame by frame, then packs it into a record.
class EpisodeBuilder {
 public:
  void start(const ByteTensor& first_obs) {
    TACO_CHECK(first_obs.ndim() == 3, UsageError, "episode obs must be [C,H,W]");
    frames_.clear();
    actions_.clear();
    rewards_.clear();
    discounts_.clear();
    frames_.push_back(first_obs);
  }
  void step(const TensorF& action, float reward, float discount,
            const ByteTensor& next_obs) {
    TACO_CHECK(!frames_.empty(), UsageError, "EpisodeBuilder: start() first");
    actions_.push_back(action);
    rewards_.push_back(reward);
    discounts_.push_back(discount);
    frames_.push_back(next_obs);
  }
  int64_t length() const { return static_cast<int64_t>(actions_.size()); }
  bool active() const { return !frames_.empty(); }

  EpisodeRecord build() const {
    const int64_t t = length();
    TACO_CHECK(t >= 1, UsageError, "EpisodeBuilder: empty episode");
    const auto& fs = frames_[0].shape();
    EpisodeRecord ep;
    ep.observations = ByteTensor({t + 1, fs[0], fs[1], fs[2]});
    const int64_t px = frames_[0].numel();
    for (int64_t i = 0; i <= t; ++i) {
      TACO_CHECK(frames_[static_cast<size_t>(i)].numel() == px, DataError,
                 "EpisodeBuilder: frame shape changed mid-episode");
      std::memcpy(ep.observations.data() + i * px,
                  frames_[static_cast<size_t>(i)].data(), sizeof(uint8_t) * px);
    }
    const int64_t a = actions_[0].numel();
    ep.actions = TensorF({t, a});
    for (int64_t i = 0; i < t; ++i)
      std::memcpy(ep.actions.data() + i * a, actions_[static_cast<size_t>(i)].data(),
                  sizeof(float) * a);
    ep.rewards = TensorF({t});
    ep.discounts = TensorF({t});
    std::memcpy(ep.rewards.data(), rewards_.data(), sizeof(float) * t);
    std::memcpy(ep.discounts.data(), discounts_.data(), sizeof(float) * t);
    ep.validate();
    return ep;
  }

 private:
  std::vector<ByteTensor> frames_;
  std::vector<TensorF> actions_;
  std::vector<float> rewards_, discounts_;
};

// Keep the first m transitions of an episode.
inline EpisodeRecord truncate_episode(const EpisodeRecord& ep, int64_t m) {
  TACO_CHECK(m >= 1 && m <= ep.length(), UsageError, "truncate: bad length");
  EpisodeRecord out;
  const int64_t c = ep.observations.dim(1), h = ep.observations.dim(2),
                w = ep.observations.dim(3);
  const int64_t a = ep.actions.dim(1);
  out.observations = ByteTensor({m + 1, c, h, w});
  std::memcpy(out.observations.data(), ep.observations.data(),
              sizeof(uint8_t) * (m + 1) * c * h * w);
  out.actions = TensorF({m, a});
  std::memcpy(out.actions.data(), ep.actions.data(), sizeof(float) * m * a);
  out.rewards = TensorF({m});
  std::memcpy(out.rewards.data(), ep.rewards.data(), sizeof(float) * m);
  out.discounts = TensorF({m});
  std::memcpy(out.discounts.data(), ep.discounts.data(), sizeof(float) * m);
  return out;
}

// Everything one gradient step needs, sliced per-row from single episodes:
// the contrastive fields (s_t, K actions, undiscounted K-step reward sum,
// s_{t+K}) and the TD fields (a_t, discounted n-step return, terminal-aware
// discount factor gamma^n, s_{t+n}).
template <typename S>
struct SequenceBatch {
  ByteTensor s_t;         // [N, C, H, W]
  Tensor<S> actions;      // [N, K, |A|]
  Tensor<S> r_sum;        // [N]
  ByteTensor s_tk;        // [N, C, H, W]
  Tensor<S> a_t;          // [N, |A|]
  Tensor<S> r_nstep;      // [N]
  Tensor<S> discount_n;   // [N]
  ByteTensor s_tn;        // [N, C, H, W]

  int64_t size() const { return s_t.dim(0); }
};

// FIFO episode store with a transition-count capacity. Sampling draws (episode,
// start index) uniformly over all positions with t + max(K, n) <= T.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int64_t capacity_transitions)
      : capacity_(capacity_transitions) {
    TACO_CHECK(capacity_ >= 1, ConfigError, "replay capacity must be >= 1");
  }

  void add_episode(EpisodeRecord ep) {
    ep.validate();
    if (!episodes_.empty()) {
      const auto& first = episodes_.front();
      TACO_CHECK(ep.observations.dim(1) == first.observations.dim(1) &&
                     ep.observations.dim(2) == first.observations.dim(2) &&
                     ep.observations.dim(3) == first.observations.dim(3) &&
                     ep.actions.dim(1) == first.actions.dim(1),
                 DataError, "episode shape differs from buffer contents");
    }
    transitions_ += ep.length();
    episodes_.push_back(std::move(ep));
    while (transitions_ > capacity_ && episodes_.size() > 1) {
      transitions_ -= episodes_.front().length();
      episodes_.pop_front();
    }
  }

  int64_t size() const { return transitions_; }
  int64_t num_episodes() const { return static_cast<int64_t>(episodes_.size()); }
  const EpisodeRecord& episode(int64_t i) const { return episodes_.at(i); }
  const std::deque<EpisodeRecord>& episodes() const { return episodes_; }

  template <typename S>
  SequenceBatch<S> sample_sequence_batch(
      int64_t n_batch, int64_t k, int64_t nstep, S gamma, Rng& rng,
      std::vector<std::pair<int64_t, int64_t>>* picks = nullptr) const {
    TACO_CHECK(n_batch >= 2, UsageError, "batch size must be >= 2");
    TACO_CHECK(k >= 1 && nstep >= 1, UsageError, "K and n must be >= 1");
    const int64_t span = std::max(k, nstep);
    // cumulative valid-start counts per episode
    std::vector<int64_t> cum;
    cum.reserve(episodes_.size());
    int64_t total = 0;
    for (const auto& ep : episodes_) {
      const int64_t v = ep.length() >= span ? ep.length() - span + 1 : 0;
      total += v;
      cum.push_back(total);
    }
    if (total == 0) throw NotReady("no episode long enough to sample from");

    const auto& first = episodes_.front();
    const int64_t c = first.observations.dim(1), h = first.observations.dim(2),
                  w = first.observations.dim(3);
    const int64_t adim = first.actions.dim(1);
    const int64_t obs_sz = c * h * w;

    SequenceBatch<S> b;
    b.s_t = ByteTensor({n_batch, c, h, w});
    b.actions = Tensor<S>({n_batch, k, adim});
    b.r_sum = Tensor<S>({n_batch});
    b.s_tk = ByteTensor({n_batch, c, h, w});
    b.a_t = Tensor<S>({n_batch, adim});
    b.r_nstep = Tensor<S>({n_batch});
    b.discount_n = Tensor<S>({n_batch});
    b.s_tn = ByteTensor({n_batch, c, h, w});
    if (picks) picks->clear();

    for (int64_t i = 0; i < n_batch; ++i) {
      const int64_t flat = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(total)));
      const auto it = std::upper_bound(cum.begin(), cum.end(), flat);
      const int64_t ei = static_cast<int64_t>(it - cum.begin());
      const int64_t before = ei == 0 ? 0 : cum[ei - 1];
      const int64_t t = flat - before;
      const EpisodeRecord& ep = episodes_[ei];
      if (picks) picks->emplace_back(ei, t);

      std::memcpy(b.s_t.data() + i * obs_sz, ep.observations.data() + t * obs_sz, obs_sz);
      std::memcpy(b.s_tk.data() + i * obs_sz, ep.observations.data() + (t + k) * obs_sz, obs_sz);
      std::memcpy(b.s_tn.data() + i * obs_sz, ep.observations.data() + (t + nstep) * obs_sz, obs_sz);
      for (int64_t j = 0; j < k; ++j)
        for (int64_t d = 0; d < adim; ++d)
          b.actions[(i * k + j) * adim + d] = static_cast<S>(ep.actions[(t + j) * adim + d]);
      for (int64_t d = 0; d < adim; ++d)
        b.a_t[i * adim + d] = static_cast<S>(ep.actions[t * adim + d]);
      S rs = 0;
      for (int64_t j = 0; j < k; ++j) rs += static_cast<S>(ep.rewards[t + j]);
      b.r_sum[i] = rs;
      S rn = 0, disc = 1;
      for (int64_t j = 0; j < nstep; ++j) {
        rn += disc * static_cast<S>(ep.rewards[t + j]);
        disc *= gamma * static_cast<S>(ep.discounts[t + j]);
      }
      b.r_nstep[i] = rn;
      b.discount_n[i] = disc;
    }
    return b;
  }

 private:
  int64_t capacity_;
  int64_t transitions_ = 0;
  std::deque<EpisodeRecord> episodes_;
};

}  // namespace taco
