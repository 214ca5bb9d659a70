#include <gtest/gtest.h>

#include <taco/taco.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <string>

using namespace taco;

namespace {

// Naive high-precision InfoNCE, written independently of the library version.
double infonce_loop(const TensorD& s) {
  const int64_t n = s.dim(0);
  long double total = 0.0L;
  for (int64_t i = 0; i < n; ++i) {
    long double denom = 0.0L;
    for (int64_t j = 0; j < n; ++j) denom += std::exp(static_cast<long double>(s[i * n + j]));
    total += -(static_cast<long double>(s[i * n + i]) - std::log(denom));
  }
  return static_cast<double>(total / n);
}

TensorD random_scores(int64_t n, Rng& rng, double scale) {
  TensorD s({n, n});
  for (int64_t i = 0; i < s.numel(); ++i) s[i] = rng.normal(0.0, scale);
  return s;
}

ByteTensor random_obs(int64_t c, int64_t hw, Rng& rng) {
  ByteTensor o({c, hw, hw});
  for (int64_t i = 0; i < o.numel(); ++i)
    o[i] = static_cast<uint8_t>(rng.uniform_int(0, 255));
  return o;
}

EpisodeRecord random_episode(int64_t t, int64_t c, int64_t hw, int64_t adim, Rng& rng) {
  EpisodeBuilder b;
  b.start(random_obs(c, hw, rng));
  for (int64_t i = 0; i < t; ++i) {
    TensorF a({adim});
    for (int64_t d = 0; d < adim; ++d) a[d] = static_cast<float>(rng.uniform(-1.0, 1.0));
    b.step(a, rng.uniform(-1.0, 1.0), 1.0f, random_obs(c, hw, rng));
  }
  return b.build();
}

ModelConfig fd_model_config(int64_t k) {
  ModelConfig mc;
  mc.img_hw = 8;
  mc.img_channels = 3;
  mc.frame_stack = 1;
  mc.conv_channels = 16;
  mc.conv_layers = 2;
  mc.hidden_dim = 16;
  mc.feature_dim = 16;
  mc.contrastive_dim = 16;
  mc.seq_embed_dim = 16;
  mc.action_dim = 2;
  mc.k = k;
  return mc;
}

// Groups a flat parameter name into its subnetwork.
std::string group_of(const std::string& name) {
  auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

TEST(Acceptance, C01_InfonceLoopOracle) {
  Rng rng(101);
  int64_t sizes[] = {2, 8, 64};
  for (int c = 0; c < 100; ++c) {
    const int64_t n = sizes[c % 3];
    TensorD s = random_scores(n, rng, c % 5 == 0 ? 10.0 : 1.5);
    const double lib = infonce(s);
    const double oracle = infonce_loop(s);
    const double rel = std::abs(lib - oracle) / std::max(1e-12, std::abs(oracle));
    ASSERT_LE(rel, 1e-6) << "case " << c << " n=" << n;
  }
  for (int64_t n : sizes) {
    TensorD u = TensorD::full({n, n}, 0.37);
    EXPECT_NEAR(infonce(u), std::log(static_cast<double>(n)), 1e-9);
    EXPECT_NEAR(mi_lower_bound_estimate(u), 0.0, 1e-9);
  }
}

TEST(Acceptance, C02_RowShiftInvariance) {
  Rng rng(202);
  for (int c = 0; c < 100; ++c) {
    const int64_t n = 2 + (c % 13);
    TensorD s = random_scores(n, rng, 2.0);
    TensorD shifted = s;
    for (int64_t i = 0; i < n; ++i) {
      const double off = rng.uniform(-50.0, 50.0);
      for (int64_t j = 0; j < n; ++j) shifted[i * n + j] += off;
    }
    EXPECT_LE(std::abs(infonce(s) - infonce(shifted)), 1e-6) << "case " << c;
  }
}

TEST(Acceptance, C03_GradientChecks) {
  for (int64_t k : {int64_t{1}, int64_t{3}}) {
    ModelConfig mc = fd_model_config(k);
    nn::ParamStore<double> ps;
    Rng init_rng(303 + k);
    TacoNets<double> nets(mc, ps, init_rng);

    Rng data_rng(404 + k);
    ReplayBuffer buf(1000);
    buf.add_episode(random_episode(12, 3, 8, 2, data_rng));
    auto batch = buf.sample_sequence_batch<double>(4, k, 3, 0.99, data_rng);
    Rng aug_rng(505);
    auto views = draw_augmented_views<double>(batch, 1, aug_rng);
    const ObjectiveMask full{true, true, true};
    const StopBranches<double> frozen = compute_stop_branches(nets, views);

    // Backprop gradients at the base point.
    nn::zero_grads(ps.all());
    auto bundle = combined_objective(nets, batch, views, full, &frozen);
    ag::backward(bundle.total);
    std::map<std::string, TensorD> grads;
    for (const auto& p : ps.all())
      grads.emplace(p->name, p->grad_alloc ? p->grad : TensorD::zeros(p->value.shape()));

    // The internally-detaching path must give bitwise identical value/grads.
    nn::zero_grads(ps.all());
    auto bundle2 = combined_objective(
        nets, batch, views, full, static_cast<const StopBranches<double>*>(nullptr));
    ag::backward(bundle2.total);
    ASSERT_EQ(bundle.total_value, bundle2.total_value);
    for (const auto& p : ps.all()) {
      const TensorD& old_g = grads.at(p->name);
      if (!p->grad_alloc) continue;
      for (int64_t i = 0; i < old_g.numel(); ++i)
        ASSERT_EQ(old_g[i], p->grad[i]) << p->name << "[" << i << "]";
    }

    // Central finite differences against the frozen-branch objective. A
    // coordinate whose difference quotient is unstable across step sizes sits
    // on a ReLU kink, where the quotient itself is not the derivative; those
    // are skipped and counted.
    auto eval_at = [&](const ag::Var<double>& p, int64_t i, double delta) {
      const double orig = p->value[i];
      p->value[i] = orig + delta;
      const double v = combined_objective(nets, batch, views, full, &frozen).total_value;
      p->value[i] = orig;
      return v;
    };
    const double h = 1e-5;
    std::map<std::string, double> group_err;
    int64_t coords = 0, kinked = 0;
    for (const auto& p : ps.all()) {
      const std::string grp = group_of(p->name);
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        ++coords;
        const double fd = (eval_at(p, i, h) - eval_at(p, i, -h)) / (2 * h);
        const double fd2 =
            (eval_at(p, i, h / 2) - eval_at(p, i, -h / 2)) / h;
        if (std::abs(fd - fd2) > 1e-6 * std::max(1.0, std::abs(fd))) {
          ++kinked;
          continue;
        }
        const double bp = grads.at(p->name)[i];
        const double mag = std::max(std::abs(fd), std::abs(bp));
        // Below ~1e-5 the quotient's floating-point resolution (~1e-10 on a
        // loss of order one) no longer supports a 1e-4 relative comparison.
        if (mag < 1e-5) {
          ASSERT_LE(std::abs(fd - bp), 1e-7) << p->name << "[" << i << "]";
          continue;
        }
        const double rel = std::abs(fd - bp) / mag;
        double& worst = group_err[grp];
        worst = std::max(worst, rel);
      }
    }
    EXPECT_LE(kinked * 100, coords) << "too many unstable difference quotients";
    for (const auto& [grp, err] : group_err)
      EXPECT_LT(err, 1e-4) << "group " << grp << " k=" << k;

    // Detached branches contribute nothing: heads absent from a masked
    // objective keep exactly-zero gradients.
    nn::zero_grads(ps.all());
    auto curl_only = combined_objective(nets, batch, views, {false, true, false}, &frozen);
    ag::backward(curl_only.total);
    for (const auto& p : ps.all()) {
      const std::string grp = group_of(p->name);
      if (grp != "actenc" && grp != "seqenc" && grp != "projg" && grp != "reward") continue;
      if (!p->grad_alloc) continue;
      for (int64_t i = 0; i < p->grad.numel(); ++i)
        ASSERT_EQ(p->grad[i], 0.0) << p->name << "[" << i << "]";
    }
  }
}

TEST(Acceptance, C04_MiBound) {
  // Quoted bound constant, checked on the correlation whose true MI matches
  // it, and the bound property additionally verified at rho = 0.9.
  const double quoted = 1.1655;
  auto hi = run_mi_bound_experiment(0.95, 128, 5000, 0);
  EXPECT_NEAR(hi.true_mi, quoted, 2e-3);
  EXPECT_LE(hi.max_estimate, quoted + 0.05);
  EXPECT_GE(hi.final_estimate, 0.8);

  auto lo = run_mi_bound_experiment(0.9, 128, 5000, 0);
  EXPECT_TRUE(lo.bound_respected())
      << "max " << lo.max_estimate << " vs true " << lo.true_mi;
  EXPECT_GE(lo.final_estimate, 0.8);
}

TEST(Acceptance, C05_ReplayExactness) {
  Rng rng(606);
  ReplayBuffer buf(100000);
  std::vector<EpisodeRecord> eps;
  for (int e = 0; e < 6; ++e) {
    auto ep = random_episode(10 + 3 * e, 3, 8, 2, rng);
    eps.push_back(ep);
    buf.add_episode(ep);
  }
  const int64_t kk = 3, nn_ = 2;
  const double gamma = 0.97;
  const int64_t c = 3, hw = 8, adim = 2;
  const int64_t obs_n = c * hw * hw;
  int64_t audited = 0;
  std::vector<std::pair<int64_t, int64_t>> picks;
  while (audited < 10000) {
    auto b = buf.sample_sequence_batch<double>(32, kk, nn_, gamma, rng, &picks);
    ASSERT_EQ(picks.size(), 32u);
    for (int64_t row = 0; row < 32; ++row) {
      const auto [ei, t] = picks[static_cast<size_t>(row)];
      const EpisodeRecord& ep = eps[static_cast<size_t>(ei)];
      for (int64_t i = 0; i < obs_n; ++i) {
        ASSERT_EQ(b.s_t[row * obs_n + i], ep.observations[t * obs_n + i]);
        ASSERT_EQ(b.s_tk[row * obs_n + i], ep.observations[(t + kk) * obs_n + i]);
        ASSERT_EQ(b.s_tn[row * obs_n + i], ep.observations[(t + nn_) * obs_n + i]);
      }
      for (int64_t j = 0; j < kk; ++j)
        for (int64_t d = 0; d < adim; ++d)
          ASSERT_EQ(static_cast<float>(b.actions[(row * kk + j) * adim + d]),
                    ep.actions[(t + j) * adim + d]);
      for (int64_t d = 0; d < adim; ++d)
        ASSERT_EQ(static_cast<float>(b.a_t[row * adim + d]), ep.actions[t * adim + d]);
      double rs = 0.0;
      for (int64_t j = 0; j < kk; ++j) rs += ep.rewards[t + j];
      ASSERT_NEAR(b.r_sum[row], rs, 1e-6);
      double rn = 0.0, disc = 1.0;
      for (int64_t j = 0; j < nn_; ++j) {
        rn += disc * ep.rewards[t + j];
        disc *= gamma * ep.discounts[t + j];
      }
      ASSERT_NEAR(b.r_nstep[row], rn, 1e-6);
      ASSERT_NEAR(b.discount_n[row], disc, 1e-6);
      ++audited;
    }
  }

  // Dataset round-trip is bitwise lossless.
  const std::string dir = ::testing::TempDir() + "/ds_roundtrip";
  auto manifest = save_dataset(eps, dir, "point_mass", "full-replay", 12.5);
  auto [loaded, m2] = load_dataset(dir);
  ASSERT_EQ(loaded.size(), eps.size());
  EXPECT_EQ(m2.env_id, manifest.env_id);
  EXPECT_EQ(m2.episode_count, manifest.episode_count);
  EXPECT_EQ(m2.total_transitions, manifest.total_transitions);
  EXPECT_EQ(m2.policy_tag, manifest.policy_tag);
  EXPECT_EQ(m2.best_online_return, manifest.best_online_return);
  for (size_t e = 0; e < eps.size(); ++e) {
    const auto& a = eps[e];
    const auto& b = loaded[e];
    ASSERT_EQ(a.observations.numel(), b.observations.numel());
    for (int64_t i = 0; i < a.observations.numel(); ++i)
      ASSERT_EQ(a.observations[i], b.observations[i]);
    for (int64_t i = 0; i < a.actions.numel(); ++i) ASSERT_EQ(a.actions[i], b.actions[i]);
    for (int64_t i = 0; i < a.rewards.numel(); ++i) ASSERT_EQ(a.rewards[i], b.rewards[i]);
    for (int64_t i = 0; i < a.discounts.numel(); ++i)
      ASSERT_EQ(a.discounts[i], b.discounts[i]);
  }
}

TEST(Acceptance, C06_LatentActionDimFormula) {
  ModelConfig mc;
  for (int64_t a = 1; a <= 64; ++a) {
    mc.action_dim = a;
    const auto expected = static_cast<int64_t>(std::ceil(1.25 * static_cast<double>(a)));
    EXPECT_EQ(mc.latent_action_dim(), expected) << "|A|=" << a;
  }
  mc.action_dim = 6;
  EXPECT_EQ(mc.latent_action_dim(), 8);
  mc.action_dim = 12;
  EXPECT_EQ(mc.latent_action_dim(), 15);
}

TEST(Acceptance, C11_ExactRecurrences) {
  ModelConfig mc = fd_model_config(2);
  AgentConfig ac;
  ac.batch = 4;
  ac.nstep = 2;
  ac.aug_pad = 1;
  Agent<double> agent(mc, ac, 707);

  Rng rng(808);
  ReplayBuffer buf(1000);
  buf.add_episode(random_episode(12, 3, 8, 2, rng));
  auto batch = buf.sample_sequence_batch<double>(4, 2, 2, ac.gamma, rng);

  auto& ps = agent.params();
  // Snapshot everything, then a single critic update.
  std::map<std::string, TensorD> before;
  for (const auto& p : ps.all()) before.emplace(p->name, p->value);
  agent.update_critic(batch, 0);

  int64_t target_params = 0;
  for (const auto& p : ps.all()) {
    const std::string& name = p->name;
    if (name.rfind("target.", 0) == 0) {
      // EMA recurrence: t' = (1 - tau) t'_old + tau * theta_new.
      const auto src = ps.get(name.substr(7));
      const TensorD& told = before.at(name);
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        const double want = (1.0 - ac.tau) * told[i] + ac.tau * src->value[i];
        ASSERT_NEAR(p->value[i], want, 1e-7) << name << "[" << i << "]";
      }
      ++target_params;
      continue;
    }
    const std::string grp = group_of(name);
    const bool in_critic_step =
        grp == "critic1" || grp == "critic2" || grp == "enc" || grp == "actenc";
    const TensorD& old = before.at(name);
    bool changed = false;
    for (int64_t i = 0; i < p->value.numel() && !changed; ++i)
      changed = p->value[i] != old[i];
    if (in_critic_step)
      EXPECT_TRUE(changed) << name << " should step on the critic loss";
    else
      EXPECT_FALSE(changed) << name << " must not step on the critic loss";
  }
  EXPECT_GT(target_params, 0);

  // Actor loss touches the actor only.
  std::map<std::string, TensorD> before2;
  for (const auto& p : ps.all()) before2.emplace(p->name, p->value);
  agent.update_actor(batch);
  for (const auto& p : ps.all()) {
    const TensorD& old = before2.at(p->name);
    bool changed = false;
    for (int64_t i = 0; i < p->value.numel() && !changed; ++i)
      changed = p->value[i] != old[i];
    if (group_of(p->name) == "actor")
      EXPECT_TRUE(changed) << p->name;
    else
      EXPECT_FALSE(changed) << p->name << " must not step on the actor loss";
  }

  // Auxiliary loss touches encoder, action/sequence encoders, projections,
  // bilinear map and reward head; never the critics, actor or targets.
  std::map<std::string, TensorD> before3;
  for (const auto& p : ps.all()) before3.emplace(p->name, p->value);
  agent.update_taco(batch);
  for (const auto& p : ps.all()) {
    const TensorD& old = before3.at(p->name);
    bool changed = false;
    for (int64_t i = 0; i < p->value.numel() && !changed; ++i)
      changed = p->value[i] != old[i];
    const std::string grp = group_of(p->name);
    const bool in_taco = grp == "enc" || grp == "actenc" || grp == "seqenc" ||
                         grp == "projg" || grp == "projh" || grp == "bilinear" ||
                         grp == "reward";
    if (in_taco)
      EXPECT_TRUE(changed) << p->name;
    else
      EXPECT_FALSE(changed) << p->name << " must not step on the auxiliary loss";
  }
}

namespace {

class CriterionPrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    const std::string name = info.name();
    if (name.size() < 3 || name[0] != 'C') return;
    const int k = std::atoi(name.substr(1, 2).c_str());
    if (k <= 0) return;
    std::printf("[CRITERION %d] %s\n", k,
                info.result()->Passed() ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionPrinter);
  return RUN_ALL_TESTS();
}
