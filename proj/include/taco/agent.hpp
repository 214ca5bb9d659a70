#pragma once

#include "taco/objectives.hpp"

namespace taco {

struct AgentConfig {
  double gamma = 0.99;
  int64_t nstep = 3;
  double tau = 0.01;
  double lr = 1e-4;
  int64_t batch = 256;
  double sigma_start = 1.0;
  double sigma_end = 0.1;
  int64_t sigma_frames = 25000;  // schedule horizon, raw frames
  double noise_clip = 0.3;       // target policy smoothing clip
  int64_t update_every = 2;      // agent steps between update cycles
  int64_t warmup_frames = 1000;  // random-action frames before updates
  int aug_pad = 4;
  ObjectiveMask mask;
  double alpha_td3bc = 2.5;
  double alpha_cql = 1.0;
  int64_t cql_m = 10;  // random actions per state in the CQL penalty

  void validate() const {
    TACO_CHECK(gamma > 0.0 && gamma < 1.0, ConfigError, "gamma must be in (0,1)");
    TACO_CHECK(nstep >= 1, ConfigError, "nstep must be >= 1");
    TACO_CHECK(tau > 0.0 && tau <= 1.0, ConfigError, "tau must be in (0,1]");
    TACO_CHECK(lr > 0.0, ConfigError, "lr must be positive");
    TACO_CHECK(batch >= 2, ConfigError, "batch must be >= 2");
    TACO_CHECK(sigma_frames >= 1, ConfigError, "sigma_frames must be >= 1");
    TACO_CHECK(update_every >= 1, ConfigError, "update_every must be >= 1");
    TACO_CHECK(aug_pad >= 0, ConfigError, "aug_pad must be >= 0");
    TACO_CHECK(alpha_td3bc > 0.0, ConfigError, "alpha_td3bc must be positive");
    TACO_CHECK(alpha_cql > 0.0, ConfigError, "alpha_cql must be positive");
    TACO_CHECK(cql_m >= 1, ConfigError, "cql_m must be >= 1");
  }
};

// Deterministic-actor double-Q agent with the auxiliary representation
// objective attached. Update order per training cycle: critic, actor, aux.
// Optimizer partition: the critic loss steps {critic1, critic2, phi, psi};
// the actor loss steps the actor alone; the aux loss steps {phi, psi, seq,
// G, H, W, reward head}. One Adam state exists per tensor across groups.
template <typename S>
class Agent {
 public:
  enum class ActorMode { online, td3bc, bc };

  Agent(const ModelConfig& mc, const AgentConfig& ac, uint64_t seed)
      : mcfg_(mc),
        acfg_(ac),
        rng_init_(seed_stream(seed, 0x1717)),
        rng_act_(seed_stream(seed, 0xAC70)),
        rng_update_(seed_stream(seed, 0x0BDA)),
        opt_(static_cast<S>(ac.lr)) {
    mc.validate();
    ac.validate();
    nets_ = TacoNets<S>(mc, ps_, rng_init_);
    actor_ = nn::MLP<S>(
        ps_, "actor", {mc.feature_dim, mc.hidden_dim, mc.hidden_dim, mc.action_dim},
        rng_init_);
    const int64_t qin = mc.feature_dim + mc.latent_action_dim();
    critic1_ = nn::MLP<S>(ps_, "critic1", {qin, mc.hidden_dim, mc.hidden_dim, 1}, rng_init_);
    critic2_ = nn::MLP<S>(ps_, "critic2", {qin, mc.hidden_dim, mc.hidden_dim, 1}, rng_init_);
    target_enc_ = PixelEncoder<S>(mc, ps_, "target.enc", rng_init_);
    tcritic1_ = nn::MLP<S>(ps_, "target.critic1", {qin, mc.hidden_dim, mc.hidden_dim, 1}, rng_init_);
    tcritic2_ = nn::MLP<S>(ps_, "target.critic2", {qin, mc.hidden_dim, mc.hidden_dim, 1}, rng_init_);
    for (auto& p : ps_.with_prefix("target.")) p->requires_grad = false;
    nn::hard_copy(ps_.with_prefix("target.enc."), ps_.with_prefix("enc."));
    nn::hard_copy(ps_.with_prefix("target.critic1."), ps_.with_prefix("critic1."));
    nn::hard_copy(ps_.with_prefix("target.critic2."), ps_.with_prefix("critic2."));

    auto append = [this](std::vector<ag::Var<S>>& dst, const std::string& prefix) {
      for (auto& p : ps_.with_prefix(prefix)) dst.push_back(p);
    };
    append(critic_group_, "critic1.");
    append(critic_group_, "critic2.");
    append(critic_group_, "enc.");
    append(critic_group_, "actenc.");
    append(actor_group_, "actor.");
    for (const char* pre : {"enc.", "actenc.", "seqenc.", "projg.", "projh.",
                            "bilinear.w", "reward."})
      append(taco_group_, pre);
    append(bc_group_, "actor.");
    append(bc_group_, "enc.");
  }

  const ModelConfig& model_config() const { return mcfg_; }
  const AgentConfig& agent_config() const { return acfg_; }
  const TacoNets<S>& nets() const { return nets_; }
  nn::ParamStore<S>& params() { return ps_; }
  const nn::ParamStore<S>& params() const { return ps_; }
  nn::Adam<S>& optimizer() { return opt_; }
  Rng& update_rng() { return rng_update_; }

  double sigma(int64_t frame) const {
    const double t =
        std::min(1.0, static_cast<double>(frame) / static_cast<double>(acfg_.sigma_frames));
    return acfg_.sigma_start + (acfg_.sigma_end - acfg_.sigma_start) * t;
  }

  TensorF act(const ByteTensor& obs, int64_t frame, bool eval_mode) {
    const Tensor<S> z = nets_.encode_state(obs);
    auto a = ag::tanh_op(actor_(ag::constant(z.reshaped({1, mcfg_.feature_dim}))));
    const double sig = sigma(frame);
    TensorF out({mcfg_.action_dim});
    for (int64_t d = 0; d < mcfg_.action_dim; ++d) {
      double v = static_cast<double>(a->value[d]);
      if (!eval_mode) v += rng_act_.normal(0.0, sig);
      out[d] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return out;
  }

  // One critic step: n-step clipped double-Q toward EMA targets, then the EMA
  // recurrence on {target encoder, target critics}. cql_alpha > 0 adds the
  // conservative penalty. Returns the loss value.
  S update_critic(const SequenceBatch<S>& b, int64_t frame, double cql_alpha = 0.0) {
    const int64_t n = b.size();
    Tensor<S> y({n, 1});
    {
      auto px = ag::constant(normalize_pixels<S>(
          random_shift_batch(b.s_tn, acfg_.aug_pad, rng_update_)));
      auto zt = target_enc_(px);
      auto mu = ag::tanh_op(actor_(zt));
      Tensor<S> a2 = mu->value;
      const double sig = sigma(frame);
      for (int64_t i = 0; i < a2.numel(); ++i) {
        const double eps = std::clamp(rng_update_.normal(0.0, sig),
                                      -acfg_.noise_clip, acfg_.noise_clip);
        a2[i] = static_cast<S>(std::clamp(static_cast<double>(a2[i]) + eps, -1.0, 1.0));
      }
      auto u2 = nets_.encode_action(ag::constant(a2));
      auto zu = ag::concat_cols(zt, u2);
      auto q1 = tcritic1_(zu);
      auto q2 = tcritic2_(zu);
      for (int64_t i = 0; i < n; ++i)
        y[i] = b.r_nstep[i] + b.discount_n[i] * std::min(q1->value[i], q2->value[i]);
    }
    TACO_CHECK(y.all_finite(), NumericError, "non-finite TD target");

    nn::zero_grads(ps_.all());
    auto px = ag::constant(normalize_pixels<S>(
        random_shift_batch(b.s_t, acfg_.aug_pad, rng_update_)));
    auto z = nets_.encode(px);
    auto u = nets_.encode_action(ag::constant(b.a_t));
    auto zu = ag::concat_cols(z, u);
    auto q1 = critic1_(zu);
    auto q2 = critic2_(zu);
    auto loss = ag::add(ag::mse(q1, y), ag::mse(q2, y));
    if (cql_alpha > 0.0) {
      std::vector<ag::Var<S>> cols1, cols2;
      cols1.reserve(static_cast<size_t>(acfg_.cql_m));
      cols2.reserve(static_cast<size_t>(acfg_.cql_m));
      for (int64_t m = 0; m < acfg_.cql_m; ++m) {
        Tensor<S> am({n, mcfg_.action_dim});
        for (int64_t i = 0; i < am.numel(); ++i)
          am[i] = static_cast<S>(rng_update_.uniform(-1.0, 1.0));
        auto um = nets_.encode_action(ag::constant(am));
        auto zum = ag::concat_cols(z, um);
        cols1.push_back(critic1_(zum));
        cols2.push_back(critic2_(zum));
      }
      auto pen1 = ag::sub(ag::mean_all(ag::logsumexp_rows(ag::stack_cols(cols1))),
                          ag::mean_all(q1));
      auto pen2 = ag::sub(ag::mean_all(ag::logsumexp_rows(ag::stack_cols(cols2))),
                          ag::mean_all(q2));
      loss = ag::add(loss, ag::scale(ag::add(pen1, pen2), static_cast<S>(cql_alpha)));
    }
    TACO_CHECK(std::isfinite(static_cast<double>(loss->value[0])), NumericError,
               "non-finite critic loss");
    ag::backward(loss);
    opt_.step(critic_group_);
    const S tau = static_cast<S>(acfg_.tau);
    nn::ema_update(ps_.with_prefix("target.enc."), ps_.with_prefix("enc."), tau);
    nn::ema_update(ps_.with_prefix("target.critic1."), ps_.with_prefix("critic1."), tau);
    nn::ema_update(ps_.with_prefix("target.critic2."), ps_.with_prefix("critic2."), tau);
    return loss->value[0];
  }

  // One actor step. online: maximize min-Q through psi (psi and phi params
  // untouched). td3bc: adds the behavior-cloning term with lambda =
  // alpha / mean|Q|. bc: pure cloning, trains actor and encoder.
  S update_actor(const SequenceBatch<S>& b, ActorMode mode = ActorMode::online) {
    nn::zero_grads(ps_.all());
    auto px = ag::constant(normalize_pixels<S>(
        random_shift_batch(b.s_t, acfg_.aug_pad, rng_update_)));
    auto z_enc = nets_.encode(px);
    ag::Var<S> loss;
    if (mode == ActorMode::bc) {
      auto a = ag::tanh_op(actor_(z_enc));
      loss = ag::mse(a, b.a_t);
    } else {
      auto z = ag::detach(z_enc);
      auto a = ag::tanh_op(actor_(z));
      auto u = nets_.encode_action(a);
      auto zu = ag::concat_cols(z, u);
      auto minq = ag::min_elem(critic1_(zu), critic2_(zu));
      auto mean_q = ag::mean_all(minq);
      if (mode == ActorMode::online) {
        loss = ag::scale(mean_q, S(-1));
      } else {
        S abs_q = 0;
        for (int64_t i = 0; i < minq->value.numel(); ++i)
          abs_q += std::abs(minq->value[i]);
        abs_q /= S(minq->value.numel());
        const S lambda = static_cast<S>(acfg_.alpha_td3bc) / std::max(abs_q, S(1e-6));
        loss = ag::add(ag::scale(mean_q, -lambda), ag::mse(a, b.a_t));
      }
    }
    TACO_CHECK(std::isfinite(static_cast<double>(loss->value[0])), NumericError,
               "non-finite actor loss");
    ag::backward(loss);
    opt_.step(mode == ActorMode::bc ? bc_group_ : actor_group_);
    return loss->value[0];
  }

  // One step on the auxiliary objective over the representation params.
  LossBundle<S> update_taco(const SequenceBatch<S>& b) {
    nn::zero_grads(ps_.all());
    auto views = draw_augmented_views(b, acfg_.aug_pad, rng_update_);
    auto lb = combined_objective(nets_, b, views, acfg_.mask);
    ag::backward(lb.total);
    opt_.step(taco_group_);
    return lb;
  }

  // min over the twin heads, no gradients; for analysis and probes.
  S q_value(const ByteTensor& obs, const TensorF& action) {
    const Tensor<S> z = nets_.encode_state(obs);
    Tensor<S> a({1, mcfg_.action_dim});
    for (int64_t d = 0; d < mcfg_.action_dim; ++d) a[d] = static_cast<S>(action[d]);
    auto u = nets_.encode_action(ag::constant(a));
    auto zu = ag::concat_cols(ag::constant(z.reshaped({1, mcfg_.feature_dim})), u);
    return std::min(critic1_(zu)->value[0], critic2_(zu)->value[0]);
  }

  // Shift-averaged value estimate: the critics only ever see shifted frames
  // during training, so the mean over the full shift group is the estimate
  // the learned value function actually defines at a state.
  S q_value_shift_avg(const ByteTensor& obs, const TensorF& action) {
    const int pad = acfg_.aug_pad;
    double acc = 0.0;
    int64_t n = 0;
    for (int dy = -pad; dy <= pad; ++dy)
      for (int dx = -pad; dx <= pad; ++dx) {
        acc += static_cast<double>(q_value(shift_image(obs, dx, dy), action));
        ++n;
      }
    return static_cast<S>(acc / static_cast<double>(n));
  }

  const std::vector<ag::Var<S>>& critic_group() const { return critic_group_; }
  const std::vector<ag::Var<S>>& actor_group() const { return actor_group_; }
  const std::vector<ag::Var<S>>& taco_group() const { return taco_group_; }

 private:
  ModelConfig mcfg_;
  AgentConfig acfg_;
  Rng rng_init_, rng_act_, rng_update_;
  nn::ParamStore<S> ps_;
  TacoNets<S> nets_;
  nn::MLP<S> actor_;
  nn::MLP<S> critic1_, critic2_;
  PixelEncoder<S> target_enc_;
  nn::MLP<S> tcritic1_, tcritic2_;
  nn::Adam<S> opt_;
  std::vector<ag::Var<S>> critic_group_, actor_group_, taco_group_, bc_group_;
};

}  // namespace taco
