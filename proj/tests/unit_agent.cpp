#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "taco/agent.hpp"

namespace taco {
namespace {

ModelConfig tiny_model() {
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

AgentConfig tiny_agent() {
  AgentConfig ac;
  ac.batch = 4;
  ac.nstep = 2;
  ac.aug_pad = 1;
  ac.lr = 1e-3;
  return ac;
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
    b.r_sum[i] = rng.uniform(0, 1);
    b.r_nstep[i] = rng.uniform(0, 1);
    b.discount_n[i] = 0.9;
  }
  return b;
}

ByteTensor random_obs(const ModelConfig& cfg, Rng& rng) {
  ByteTensor obs({cfg.in_channels(), cfg.img_hw, cfg.img_hw});
  for (int64_t i = 0; i < obs.numel(); ++i)
    obs[i] = static_cast<uint8_t>(rng.uniform_int(256));
  return obs;
}

TEST(AgentConfig, ValidateRejectsBadValues) {
  AgentConfig ac;
  EXPECT_NO_THROW(ac.validate());
  ac.gamma = 1.0;
  EXPECT_THROW(ac.validate(), ConfigError);
  ac = AgentConfig();
  ac.batch = 1;
  EXPECT_THROW(ac.validate(), ConfigError);
  ac = AgentConfig();
  ac.tau = 0.0;
  EXPECT_THROW(ac.validate(), ConfigError);
  ac = AgentConfig();
  ac.aug_pad = -1;
  EXPECT_THROW(ac.validate(), ConfigError);
  ac = AgentConfig();
  ac.cql_m = 0;
  EXPECT_THROW(ac.validate(), ConfigError);
}

TEST(Agent, SigmaSchedule) {
  AgentConfig ac = tiny_agent();
  ac.sigma_start = 1.0;
  ac.sigma_end = 0.1;
  ac.sigma_frames = 1000;
  Agent<double> agent(tiny_model(), ac, 1);
  EXPECT_DOUBLE_EQ(agent.sigma(0), 1.0);
  EXPECT_DOUBLE_EQ(agent.sigma(500), 0.55);
  EXPECT_DOUBLE_EQ(agent.sigma(1000), 0.1);
  EXPECT_DOUBLE_EQ(agent.sigma(5000), 0.1);
}

TEST(Agent, ActBoundsAndEvalDeterminism) {
  ModelConfig mc = tiny_model();
  Agent<double> agent(mc, tiny_agent(), 2);
  Rng rng(101);
  ByteTensor obs = random_obs(mc, rng);
  TensorF a1 = agent.act(obs, 0, true);
  TensorF a2 = agent.act(obs, 0, true);
  ASSERT_EQ(a1.numel(), mc.action_dim);
  for (int64_t d = 0; d < mc.action_dim; ++d) {
    EXPECT_EQ(a1[d], a2[d]);
    EXPECT_GE(a1[d], -1.0f);
    EXPECT_LE(a1[d], 1.0f);
  }
  // exploration noise perturbs and stays clamped
  bool any_diff = false;
  for (int t = 0; t < 8; ++t) {
    TensorF a = agent.act(obs, 0, false);
    for (int64_t d = 0; d < mc.action_dim; ++d) {
      EXPECT_GE(a[d], -1.0f);
      EXPECT_LE(a[d], 1.0f);
      any_diff |= a[d] != a1[d];
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Agent, CriticLearnsFixedBatch) {
  ModelConfig mc = tiny_model();
  Agent<double> agent(mc, tiny_agent(), 3);
  Rng rng(102);
  SequenceBatch<double> b = random_batch(mc, 4, rng);
  const double first = agent.update_critic(b, 0);
  double last = first;
  for (int i = 0; i < 30; ++i) last = agent.update_critic(b, 0);
  EXPECT_TRUE(std::isfinite(first));
  EXPECT_LT(last, first);
}

TEST(Agent, BcLearnsFixedBatchAndTrainsEncoder) {
  ModelConfig mc = tiny_model();
  Agent<double> agent(mc, tiny_agent(), 4);
  Rng rng(103);
  SequenceBatch<double> b = random_batch(mc, 4, rng);
  std::map<std::string, TensorD> before;
  for (const auto& p : agent.params().all()) before[p->name] = p->value;
  const double first = agent.update_actor(b, Agent<double>::ActorMode::bc);
  double last = first;
  for (int i = 0; i < 30; ++i)
    last = agent.update_actor(b, Agent<double>::ActorMode::bc);
  EXPECT_LT(last, first);
  bool enc_moved = false, actor_moved = false, critic_moved = false;
  for (const auto& p : agent.params().all()) {
    const bool moved = max_abs_diff(p->value, before[p->name]) > 0;
    if (p->name.rfind("enc.", 0) == 0) enc_moved |= moved;
    if (p->name.rfind("actor.", 0) == 0) actor_moved |= moved;
    if (p->name.rfind("critic", 0) == 0) critic_moved |= moved;
  }
  EXPECT_TRUE(enc_moved);
  EXPECT_TRUE(actor_moved);
  EXPECT_FALSE(critic_moved);
}

TEST(Agent, Td3bcModeStepsActorOnly) {
  ModelConfig mc = tiny_model();
  Agent<double> agent(mc, tiny_agent(), 5);
  Rng rng(104);
  SequenceBatch<double> b = random_batch(mc, 4, rng);
  std::map<std::string, TensorD> before;
  for (const auto& p : agent.params().all()) before[p->name] = p->value;
  const double loss = agent.update_actor(b, Agent<double>::ActorMode::td3bc);
  EXPECT_TRUE(std::isfinite(loss));
  for (const auto& p : agent.params().all()) {
    const bool moved = max_abs_diff(p->value, before[p->name]) > 0;
    EXPECT_EQ(moved, p->name.rfind("actor.", 0) == 0) << p->name;
  }
}

TEST(Agent, CqlPenaltyRunsAndZeroAlphaMatchesPlain) {
  ModelConfig mc = tiny_model();
  Agent<double> a1(mc, tiny_agent(), 6);
  Agent<double> a2(mc, tiny_agent(), 6);
  Rng rng(105);
  SequenceBatch<double> b = random_batch(mc, 4, rng);
  const double plain = a1.update_critic(b, 0, 0.0);
  const double same = a2.update_critic(b, 0);
  EXPECT_EQ(plain, same);
  for (size_t i = 0; i < a1.params().all().size(); ++i)
    ASSERT_EQ(max_abs_diff(a1.params().all()[i]->value,
                           a2.params().all()[i]->value), 0.0);
  // the conservative penalty shifts the loss
  Agent<double> a3(mc, tiny_agent(), 6);
  const double with_pen = a3.update_critic(b, 0, 1.0);
  EXPECT_TRUE(std::isfinite(with_pen));
  EXPECT_NE(with_pen, plain);
}

TEST(Agent, TacoUpdateRespectsMask) {
  ModelConfig mc = tiny_model();
  AgentConfig ac = tiny_agent();
  ac.mask = {true, true, true};
  Agent<double> agent(mc, ac, 7);
  Rng rng(106);
  SequenceBatch<double> b = random_batch(mc, 4, rng);
  auto lb = agent.update_taco(b);
  EXPECT_GT(lb.taco, 0.0);
  EXPECT_GT(lb.curl, 0.0);
  EXPECT_GE(lb.reward, 0.0);
  EXPECT_NEAR(lb.total_value, lb.taco + lb.curl + lb.reward, 1e-9);
  EXPECT_GE(lb.pospair_acc, 0.0);
  EXPECT_LE(lb.pospair_acc, 1.0);

  AgentConfig curl_only = tiny_agent();
  curl_only.mask = {false, true, false};
  Agent<double> c(mc, curl_only, 7);
  auto lc = c.update_taco(b);
  EXPECT_EQ(lc.taco, 0.0);
  EXPECT_EQ(lc.reward, 0.0);
  EXPECT_GT(lc.curl, 0.0);
}

TEST(Agent, QValueProbes) {
  ModelConfig mc = tiny_model();
  AgentConfig ac = tiny_agent();
  ac.aug_pad = 0;
  Agent<double> agent(mc, ac, 8);
  Rng rng(107);
  ByteTensor obs = random_obs(mc, rng);
  TensorF a({mc.action_dim}, {0.3f, -0.5f});
  const double q = agent.q_value(obs, a);
  EXPECT_TRUE(std::isfinite(q));
  // pad 0 collapses the shift group to the identity
  EXPECT_DOUBLE_EQ(agent.q_value_shift_avg(obs, a), q);
  AgentConfig ac2 = tiny_agent();
  ac2.aug_pad = 1;
  Agent<double> agent2(mc, ac2, 8);
  EXPECT_TRUE(std::isfinite(agent2.q_value_shift_avg(obs, a)));
}

TEST(Agent, SameSeedSameBehavior) {
  ModelConfig mc = tiny_model();
  Agent<double> a1(mc, tiny_agent(), 9);
  Agent<double> a2(mc, tiny_agent(), 9);
  Rng rng(108);
  ByteTensor obs = random_obs(mc, rng);
  for (int t = 0; t < 5; ++t) {
    TensorF x = a1.act(obs, t, false);
    TensorF y = a2.act(obs, t, false);
    for (int64_t d = 0; d < mc.action_dim; ++d) ASSERT_EQ(x[d], y[d]);
  }
  SequenceBatch<double> b = random_batch(mc, 4, rng);
  EXPECT_EQ(a1.update_critic(b, 0), a2.update_critic(b, 0));
  EXPECT_EQ(a1.update_actor(b), a2.update_actor(b));
  EXPECT_EQ(a1.update_taco(b).total_value, a2.update_taco(b).total_value);
}

}  // namespace
}  // namespace taco
