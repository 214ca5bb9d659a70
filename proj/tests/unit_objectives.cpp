#include <gtest/gtest.h>

#include <cmath>

#include "taco/objectives.hpp"

namespace taco {
namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.frame_stack = 1;
  cfg.img_hw = 8;
  cfg.img_channels = 3;
  cfg.conv_channels = 8;
  cfg.conv_layers = 2;
  cfg.hidden_dim = 16;
  cfg.feature_dim = 12;
  cfg.contrastive_dim = 10;
  cfg.seq_embed_dim = 8;
  cfg.action_dim = 2;
  cfg.k = 2;
  return cfg;
}

SequenceBatch<double> random_batch(const ModelConfig& cfg, int64_t n, Rng& rng) {
  SequenceBatch<double> b;
  const Shape os{n, cfg.in_channels(), cfg.img_hw, cfg.img_hw};
  b.s_t = ByteTensor(os);
  b.s_tk = ByteTensor(os);
  b.s_tn = ByteTensor(os);
  for (int64_t i = 0; i < b.s_t.numel(); ++i) {
    b.s_t[i] = static_cast<uint8_t>(rng.uniform_int(256));
    b.s_tk[i] = static_cast<uint8_t>(rng.uniform_int(256));
    b.s_tn[i] = static_cast<uint8_t>(rng.uniform_int(256));
  }
  b.actions = TensorD({n, cfg.k, cfg.action_dim});
  for (int64_t i = 0; i < b.actions.numel(); ++i) b.actions[i] = rng.uniform(-1, 1);
  b.a_t = TensorD({n, cfg.action_dim});
  for (int64_t i = 0; i < b.a_t.numel(); ++i) b.a_t[i] = rng.uniform(-1, 1);
  b.r_sum = TensorD({n});
  b.r_nstep = TensorD({n});
  b.discount_n = TensorD({n});
  for (int64_t i = 0; i < n; ++i) {
    b.r_sum[i] = rng.uniform(-1, 1);
    b.r_nstep[i] = rng.uniform(-1, 1);
    b.discount_n[i] = 1.0;
  }
  return b;
}

TEST(InfoNce, MatchesNaiveLoop) {
  Rng rng(61);
  for (int64_t n : {2, 5, 16}) {
    TensorD s({n, n});
    for (int64_t i = 0; i < s.numel(); ++i) s[i] = rng.uniform(-8, 8);
    double naive = 0;
    for (int64_t i = 0; i < n; ++i) {
      double denom = 0;
      for (int64_t j = 0; j < n; ++j) denom += std::exp(s[i * n + j]);
      naive += -std::log(std::exp(s[i * n + i]) / denom);
    }
    naive /= static_cast<double>(n);
    EXPECT_NEAR(infonce(s), naive, 1e-12);
    EXPECT_NEAR(mi_lower_bound_estimate(s),
                std::log(static_cast<double>(n)) - naive, 1e-12);
  }
}

TEST(InfoNce, RowShiftInvariance) {
  Rng rng(62);
  const int64_t n = 6;
  TensorD s({n, n});
  for (int64_t i = 0; i < s.numel(); ++i) s[i] = rng.uniform(-3, 3);
  const double base = infonce(s);
  TensorD shifted = s;
  for (int64_t i = 0; i < n; ++i) {
    const double c = rng.uniform(-100, 100);
    for (int64_t j = 0; j < n; ++j) shifted[i * n + j] += c;
  }
  EXPECT_NEAR(infonce(shifted), base, 1e-9);
}

TEST(InfoNce, RejectsBadInput) {
  EXPECT_THROW(infonce(TensorD({2, 3})), UsageError);
  EXPECT_THROW(infonce(TensorD({1, 1})), UsageError);
  TensorD s({2, 2});
  s[0] = std::nan("");
  EXPECT_THROW(infonce(s), NumericError);
}

TEST(InfoNce, ExtremeScoresStayFinite) {
  TensorD s({2, 2}, {1000.0, -1000.0, -1000.0, 1000.0});
  const double l = infonce(s);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, 0.0, 1e-12);
}

TEST(PositivePairAccuracy, HandCases) {
  TensorD perfect({2, 2}, {3.0, 0.0, 0.0, 3.0});
  EXPECT_DOUBLE_EQ(positive_pair_accuracy(perfect), 1.0);
  TensorD half({2, 2}, {3.0, 0.0, 5.0, 3.0});
  EXPECT_DOUBLE_EQ(positive_pair_accuracy(half), 0.5);
  TensorD tie({2, 2}, {3.0, 3.0, 0.0, 3.0});
  EXPECT_DOUBLE_EQ(positive_pair_accuracy(tie), 0.5);
}

TEST(Views, Pad0IsIdentity) {
  ModelConfig cfg = tiny_config();
  Rng rng(63);
  SequenceBatch<double> batch = random_batch(cfg, 3, rng);
  Rng aug(64);
  AugmentedViews<double> v = draw_augmented_views(batch, 0, aug);
  TensorD want_s = normalize_pixels<double>(batch.s_t);
  TensorD want_k = normalize_pixels<double>(batch.s_tk);
  EXPECT_EQ(max_abs_diff(v.anchor_px, want_s), 0.0);
  EXPECT_EQ(max_abs_diff(v.curl_pos_px, want_s), 0.0);
  EXPECT_EQ(max_abs_diff(v.target_px, want_k), 0.0);
}

TEST(Views, SeedDeterministic) {
  ModelConfig cfg = tiny_config();
  Rng rng(65);
  SequenceBatch<double> batch = random_batch(cfg, 3, rng);
  Rng a(66), b(66);
  AugmentedViews<double> va = draw_augmented_views(batch, 2, a);
  AugmentedViews<double> vb = draw_augmented_views(batch, 2, b);
  EXPECT_EQ(max_abs_diff(va.anchor_px, vb.anchor_px), 0.0);
  EXPECT_EQ(max_abs_diff(va.curl_pos_px, vb.curl_pos_px), 0.0);
  EXPECT_EQ(max_abs_diff(va.target_px, vb.target_px), 0.0);
}

TEST(Objectives, MaskSelectsTerms) {
  ModelConfig cfg = tiny_config();
  nn::ParamStore<double> ps;
  Rng rng(67);
  TacoNets<double> nets(cfg, ps, rng);
  SequenceBatch<double> batch = random_batch(cfg, 4, rng);
  Rng aug(68);
  AugmentedViews<double> views = draw_augmented_views(batch, 1, aug);

  auto all = combined_objective(nets, batch, views, {true, true, true});
  EXPECT_NEAR(all.total_value, all.taco + all.curl + all.reward, 1e-12);
  EXPECT_GT(all.taco, 0.0);
  EXPECT_GT(all.curl, 0.0);
  EXPECT_GE(all.reward, 0.0);

  auto t = taco_loss(nets, batch, views);
  EXPECT_EQ(t.curl, 0.0);
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_NEAR(t.total_value, t.taco, 1e-15);
  EXPECT_NEAR(t.taco, all.taco, 1e-12);
  EXPECT_NEAR(t.mi_estimate, std::log(4.0) - t.taco, 1e-12);

  auto c = curl_loss(nets, batch, views);
  EXPECT_NEAR(c.total_value, c.curl, 1e-15);
  EXPECT_NEAR(c.curl, all.curl, 1e-12);

  auto r = reward_loss(nets, batch, views);
  EXPECT_NEAR(r.total_value, r.reward, 1e-15);
  EXPECT_NEAR(r.reward, all.reward, 1e-12);

  EXPECT_THROW(combined_objective(nets, batch, views, {false, false, false}),
               ConfigError);
}

TEST(Objectives, FrozenBranchesReproduceDefaultPath) {
  ModelConfig cfg = tiny_config();
  nn::ParamStore<double> ps;
  Rng rng(69);
  TacoNets<double> nets(cfg, ps, rng);
  SequenceBatch<double> batch = random_batch(cfg, 4, rng);
  Rng aug(70);
  AugmentedViews<double> views = draw_augmented_views(batch, 1, aug);
  StopBranches<double> frozen = compute_stop_branches(nets, views);
  EXPECT_EQ(frozen.z_next.shape(), (Shape{4, cfg.feature_dim}));
  EXPECT_EQ(frozen.h_pos.shape(), (Shape{4, cfg.contrastive_dim}));
  auto a = combined_objective(nets, batch, views, {true, true, true});
  auto b = combined_objective(nets, batch, views, {true, true, true}, &frozen);
  EXPECT_EQ(a.total_value, b.total_value);
  EXPECT_EQ(a.taco, b.taco);
  EXPECT_EQ(a.curl, b.curl);
  EXPECT_EQ(a.reward, b.reward);
}

TEST(Objectives, RewardOnlyLeavesContrastiveHeadsUntouched) {
  ModelConfig cfg = tiny_config();
  nn::ParamStore<double> ps;
  Rng rng(71);
  TacoNets<double> nets(cfg, ps, rng);
  SequenceBatch<double> batch = random_batch(cfg, 4, rng);
  Rng aug(72);
  AugmentedViews<double> views = draw_augmented_views(batch, 1, aug);
  nn::zero_grads(ps.all());
  auto r = reward_loss(nets, batch, views);
  ag::backward(r.total);
  for (const auto& p : ps.all()) {
    const bool contrastive_head = p->name.rfind("projg.", 0) == 0 ||
                                  p->name.rfind("projh.", 0) == 0 ||
                                  p->name.rfind("bilinear.", 0) == 0;
    if (!contrastive_head) continue;
    if (!p->grad_alloc) continue;
    for (int64_t i = 0; i < p->grad.numel(); ++i)
      ASSERT_EQ(p->grad[i], 0.0) << p->name;
  }
  bool reward_touched = false;
  for (const auto& p : ps.all())
    if (p->name.rfind("reward.", 0) == 0 && p->grad_alloc) {
      for (int64_t i = 0; i < p->grad.numel(); ++i)
        reward_touched |= p->grad[i] != 0.0;
    }
  EXPECT_TRUE(reward_touched);
}

TEST(Objectives, BatchKMustMatchModelK) {
  ModelConfig cfg = tiny_config();
  nn::ParamStore<double> ps;
  Rng rng(73);
  TacoNets<double> nets(cfg, ps, rng);
  ModelConfig other = cfg;
  other.k = cfg.k + 1;
  SequenceBatch<double> batch = random_batch(other, 4, rng);
  Rng aug(74);
  AugmentedViews<double> views = draw_augmented_views(batch, 1, aug);
  EXPECT_THROW(combined_objective(nets, batch, views, {true, true, true}),
               UsageError);
}

}  // namespace
}  // namespace taco
