#include <gtest/gtest.h>

#include <map>

#include "taco/replay.hpp"

namespace taco {
namespace {

// Deterministic episode whose contents encode (episode id, step) so audits can
// verify sampled rows byte for byte.
EpisodeRecord make_episode(int64_t id, int64_t t_len, int64_t c = 1, int64_t hw = 4,
                           int64_t adim = 2) {
  EpisodeBuilder eb;
  auto obs_at = [&](int64_t t) {
    ByteTensor o({c, hw, hw});
    for (int64_t i = 0; i < o.numel(); ++i)
      o[i] = static_cast<uint8_t>((id * 31 + t * 7 + i) % 256);
    return o;
  };
  eb.start(obs_at(0));
  for (int64_t t = 0; t < t_len; ++t) {
    TensorF a({adim});
    for (int64_t d = 0; d < adim; ++d)
      a[d] = static_cast<float>(((id + t + d) % 19) - 9) / 10.0f;
    const float r = static_cast<float>(id) + 0.25f * static_cast<float>(t);
    const float disc = t == t_len - 1 ? 0.0f : 1.0f;
    eb.step(a, r, disc, obs_at(t + 1));
  }
  return eb.build();
}

TEST(EpisodeBuilder, RoundTrip) {
  EpisodeRecord ep = make_episode(3, 5);
  EXPECT_EQ(ep.length(), 5);
  EXPECT_EQ(ep.observations.dim(0), 6);
  EXPECT_EQ(ep.actions.shape(), (Shape{5, 2}));
  EXPECT_EQ(ep.rewards.numel(), 5);
  EXPECT_NEAR(ep.total_reward(), 5 * 3.0 + 0.25 * (0 + 1 + 2 + 3 + 4), 1e-6);
  EXPECT_EQ(ep.discounts[4], 0.0f);
  EXPECT_EQ(ep.discounts[0], 1.0f);
}

TEST(EpisodeBuilder, UsageErrors) {
  EpisodeBuilder eb;
  EXPECT_FALSE(eb.active());
  TensorF a({2});
  ByteTensor o({1, 4, 4});
  EXPECT_THROW(eb.step(a, 0.0f, 1.0f, o), UsageError);
  eb.start(o);
  EXPECT_TRUE(eb.active());
  EXPECT_THROW(eb.build(), UsageError);
  ByteTensor wrong({1, 5, 5});
  eb.step(a, 0.0f, 1.0f, wrong);
  EXPECT_THROW(eb.build(), DataError);
}

TEST(EpisodeRecord, ValidateRejectsBadData) {
  EpisodeRecord ep = make_episode(1, 3);
  EXPECT_NO_THROW(ep.validate());
  EpisodeRecord bad = ep;
  bad.actions[0] = 2.0f;
  EXPECT_THROW(bad.validate(), DataError);
  bad = ep;
  bad.rewards[1] = std::nanf("");
  EXPECT_THROW(bad.validate(), DataError);
  bad = ep;
  bad.discounts = TensorF({2});
  EXPECT_THROW(bad.validate(), DataError);
}

TEST(Truncate, KeepsExactPrefix) {
  EpisodeRecord ep = make_episode(2, 6);
  EpisodeRecord cut = truncate_episode(ep, 4);
  EXPECT_EQ(cut.length(), 4);
  EXPECT_EQ(cut.observations.dim(0), 5);
  const int64_t px = 16;
  for (int64_t i = 0; i < 5 * px; ++i)
    EXPECT_EQ(cut.observations[i], ep.observations[i]);
  for (int64_t i = 0; i < 4 * 2; ++i) EXPECT_EQ(cut.actions[i], ep.actions[i]);
  for (int64_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cut.rewards[i], ep.rewards[i]);
    EXPECT_EQ(cut.discounts[i], ep.discounts[i]);
  }
  EXPECT_THROW(truncate_episode(ep, 0), UsageError);
  EXPECT_THROW(truncate_episode(ep, 7), UsageError);
}

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer rb(10);
  rb.add_episode(make_episode(0, 4));
  rb.add_episode(make_episode(1, 4));
  EXPECT_EQ(rb.size(), 8);
  EXPECT_EQ(rb.num_episodes(), 2);
  rb.add_episode(make_episode(2, 4));
  // 12 > 10: the oldest episode goes.
  EXPECT_EQ(rb.size(), 8);
  EXPECT_EQ(rb.num_episodes(), 2);
  EXPECT_EQ(rb.episode(0).rewards[0], 1.0f);
  // One oversized episode stays: the buffer never evicts its last episode.
  ReplayBuffer small(3);
  small.add_episode(make_episode(5, 7));
  EXPECT_EQ(small.num_episodes(), 1);
  EXPECT_EQ(small.size(), 7);
}

TEST(ReplayBuffer, RejectsMismatchedShapes) {
  ReplayBuffer rb(100);
  rb.add_episode(make_episode(0, 3));
  EXPECT_THROW(rb.add_episode(make_episode(1, 3, 1, 5)), DataError);
  EXPECT_THROW(rb.add_episode(make_episode(1, 3, 1, 4, 3)), DataError);
}

TEST(ReplayBuffer, SampledRowsMatchStorage) {
  ReplayBuffer rb(1000);
  for (int64_t e = 0; e < 4; ++e) rb.add_episode(make_episode(e, 6 + e));
  Rng rng(81);
  const int64_t k = 2, nstep = 3;
  const double gamma = 0.9;
  std::vector<std::pair<int64_t, int64_t>> picks;
  auto b = rb.sample_sequence_batch<double>(16, k, nstep, gamma, rng, &picks);
  ASSERT_EQ(picks.size(), 16u);
  const int64_t px = 16, adim = 2;
  for (int64_t i = 0; i < 16; ++i) {
    const auto [ei, t] = picks[i];
    const EpisodeRecord& ep = rb.episode(ei);
    ASSERT_LE(t + std::max(k, nstep), ep.length());
    for (int64_t p = 0; p < px; ++p) {
      EXPECT_EQ(b.s_t[i * px + p], ep.observations[t * px + p]);
      EXPECT_EQ(b.s_tk[i * px + p], ep.observations[(t + k) * px + p]);
      EXPECT_EQ(b.s_tn[i * px + p], ep.observations[(t + nstep) * px + p]);
    }
    for (int64_t j = 0; j < k; ++j)
      for (int64_t d = 0; d < adim; ++d)
        EXPECT_EQ(b.actions[(i * k + j) * adim + d],
                  static_cast<double>(ep.actions[(t + j) * adim + d]));
    for (int64_t d = 0; d < adim; ++d)
      EXPECT_EQ(b.a_t[i * adim + d], static_cast<double>(ep.actions[t * adim + d]));
    double rs = 0;
    for (int64_t j = 0; j < k; ++j) rs += ep.rewards[t + j];
    EXPECT_NEAR(b.r_sum[i], rs, 1e-12);
    double rn = 0, disc = 1;
    for (int64_t j = 0; j < nstep; ++j) {
      rn += disc * ep.rewards[t + j];
      disc *= gamma * ep.discounts[t + j];
    }
    EXPECT_NEAR(b.r_nstep[i], rn, 1e-12);
    EXPECT_NEAR(b.discount_n[i], disc, 1e-12);
  }
}

TEST(ReplayBuffer, TerminalZeroesDiscount) {
  ReplayBuffer rb(100);
  rb.add_episode(make_episode(0, 4));
  Rng rng(82);
  // nstep spans the whole episode, so every draw crosses the terminal step.
  auto b = rb.sample_sequence_batch<double>(8, 1, 4, 0.9, rng);
  for (int64_t i = 0; i < 8; ++i) EXPECT_EQ(b.discount_n[i], 0.0);
}

TEST(ReplayBuffer, SamplingCoversAllValidStarts) {
  ReplayBuffer rb(100);
  rb.add_episode(make_episode(0, 5));
  rb.add_episode(make_episode(1, 4));
  Rng rng(83);
  const int64_t k = 3, nstep = 1;
  // valid starts: 3 in episode 0, 2 in episode 1
  std::vector<std::pair<int64_t, int64_t>> picks;
  std::map<std::pair<int64_t, int64_t>, int> seen;
  for (int rep = 0; rep < 50; ++rep) {
    rb.sample_sequence_batch<double>(10, k, nstep, 0.9, rng, &picks);
    for (auto& p : picks) seen[p]++;
  }
  EXPECT_EQ(seen.size(), 5u);
  for (auto& [p, cnt] : seen) {
    EXPECT_LE(p.second + k, rb.episode(p.first).length());
    EXPECT_GT(cnt, 20);
  }
}

TEST(ReplayBuffer, ErrorsAndNotReady) {
  ReplayBuffer rb(100);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
  rb.add_episode(make_episode(0, 2));
  Rng rng(84);
  EXPECT_THROW(rb.sample_sequence_batch<double>(1, 1, 1, 0.9, rng), UsageError);
  EXPECT_THROW(rb.sample_sequence_batch<double>(4, 0, 1, 0.9, rng), UsageError);
  EXPECT_THROW(rb.sample_sequence_batch<double>(4, 5, 1, 0.9, rng), NotReady);
  EXPECT_NO_THROW(rb.sample_sequence_batch<double>(4, 2, 1, 0.9, rng));
}

}  // namespace
}  // namespace taco
