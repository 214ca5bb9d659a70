#pragma once

#include <string>
#include <vector>

#include "taco/augment.hpp"
#include "taco/nn.hpp"

namespace taco {

// Shapes and widths of every representation-side network. Defaults are the
// full-scale configuration; smaller presets shrink these for fast runs.
struct ModelConfig {
  int64_t frame_stack = 3;
  int64_t img_hw = 84;
  int64_t img_channels = 3;
  int64_t conv_channels = 32;
  int64_t conv_layers = 4;  // stride 2 first, stride 1 after
  int64_t hidden_dim = 1024;
  int64_t feature_dim = 50;
  int64_t contrastive_dim = 100;
  int64_t seq_embed_dim = 50;
  int64_t action_dim = 6;
  int64_t k = 3;                       // prediction horizon
  int64_t latent_action_override = 0;  // 0 keeps the ceil(1.25 |A|) rule

  int64_t in_channels() const { return frame_stack * img_channels; }
  int64_t latent_action_dim() const {
    return latent_action_override > 0 ? latent_action_override
                                      : (5 * action_dim + 3) / 4;
  }
  int64_t conv_out_hw() const {
    int64_t h = (img_hw - 3) / 2 + 1;
    for (int64_t l = 1; l < conv_layers; ++l) h -= 2;
    TACO_CHECK(h >= 1, ConfigError, "image too small for the conv stack");
    return h;
  }
  int64_t flat_dim() const {
    return conv_channels * conv_out_hw() * conv_out_hw();
  }
  void validate() const {
    TACO_CHECK(frame_stack >= 1, ConfigError, "frame_stack must be >= 1");
    TACO_CHECK(conv_layers >= 1, ConfigError, "conv_layers must be >= 1");
    TACO_CHECK(action_dim >= 1, ConfigError, "action_dim must be >= 1");
    TACO_CHECK(k >= 1, ConfigError, "k must be >= 1");
    TACO_CHECK(latent_action_override >= 0, ConfigError,
               "latent_action_override must be >= 0");
    (void)conv_out_hw();
  }
};

// Conv stack + 50-dim trunk with layer norm and tanh. Standalone so the agent
// can keep an EMA target copy under its own parameter prefix.
template <typename S>
class PixelEncoder {
 public:
  PixelEncoder() = default;
  PixelEncoder(const ModelConfig& cfg, nn::ParamStore<S>& ps,
               const std::string& prefix, Rng& rng)
      : cfg_(cfg) {
    int64_t cin = cfg.in_channels();
    for (int64_t l = 0; l < cfg.conv_layers; ++l) {
      convs_.emplace_back(ps, prefix + ".conv" + std::to_string(l), cin,
                          cfg.conv_channels, 3, l == 0 ? 2 : 1, rng);
      cin = cfg.conv_channels;
    }
    head_ = nn::Linear<S>(ps, prefix + ".head", cfg.flat_dim(), cfg.feature_dim, rng);
    ln_ = nn::LayerNorm<S>(ps, prefix + ".ln", cfg.feature_dim);
  }

  // img: [N, C, H, W] float pixels (already augmented + normalized) -> [N, feature]
  ag::Var<S> operator()(const ag::Var<S>& img) const {
    const auto& sh = img->value.shape();
    TACO_CHECK(sh.size() == 4 && sh[1] == cfg_.in_channels() &&
                   sh[2] == cfg_.img_hw && sh[3] == cfg_.img_hw,
               ConfigError, "encode: observation shape mismatch");
    ag::Var<S> x = img;
    for (const auto& c : convs_) x = ag::relu(c(x));
    x = ag::reshape(x, {sh[0], cfg_.flat_dim()});
    return ag::tanh_op(ln_(head_(x)));
  }

 private:
  ModelConfig cfg_;
  std::vector<nn::Conv2d<S>> convs_;
  nn::Linear<S> head_;
  nn::LayerNorm<S> ln_;
};

// The representation networks: state encoder phi (conv stack + normalized
// tanh trunk), action encoder psi, action-sequence encoder (single affine),
// projections G and H into the shared contrastive space, bilinear similarity
// W, and the reward head. All ops are batched; leading dim is N.
template <typename S>
class TacoNets {
 public:
  TacoNets() = default;
  TacoNets(const ModelConfig& cfg, nn::ParamStore<S>& ps, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    enc_ = PixelEncoder<S>(cfg, ps, "enc", rng);
    const int64_t u = cfg.latent_action_dim();
    actenc_ = nn::MLP<S>(ps, "actenc", {cfg.action_dim, cfg.hidden_dim, u}, rng);
    seqenc_ = nn::Linear<S>(ps, "seqenc", cfg.k * u, cfg.seq_embed_dim, rng);
    proj_g_ = nn::MLP<S>(
        ps, "projg",
        {cfg.feature_dim + cfg.seq_embed_dim, cfg.hidden_dim, cfg.contrastive_dim},
        rng);
    proj_h_ = nn::MLP<S>(
        ps, "projh", {cfg.feature_dim, cfg.hidden_dim, cfg.contrastive_dim}, rng);
    Tensor<S> w0 = Tensor<S>::identity(cfg.contrastive_dim);
    for (int64_t i = 0; i < w0.numel(); ++i)
      w0[i] += S(0.01) * static_cast<S>(rng.normal());
    bilinear_w_ = ps.add("bilinear.w", std::move(w0));
    reward_ = nn::MLP<S>(
        ps, "reward", {cfg.feature_dim + cfg.seq_embed_dim, cfg.hidden_dim, 1},
        rng);
  }

  const ModelConfig& cfg() const { return cfg_; }
  const ag::Var<S>& bilinear_w() const { return bilinear_w_; }

  // img: [N, C, H, W] float pixels (already augmented + normalized) -> [N, feature]
  ag::Var<S> encode(const ag::Var<S>& img) const { return enc_(img); }

  // a: [N, |A|] -> [N, latent_action_dim]
  ag::Var<S> encode_action(const ag::Var<S>& a) const {
    TACO_CHECK(a->value.ndim() == 2 && a->value.dim(1) == cfg_.action_dim,
               ConfigError, "encode_action: action dim mismatch");
    return actenc_(a);
  }

  // us: [N, K, latent_action_dim] -> [N, seq_embed_dim]
  ag::Var<S> encode_sequence(const ag::Var<S>& us) const {
    const auto& sh = us->value.shape();
    TACO_CHECK(sh.size() == 3 && sh[1] == cfg_.k &&
                   sh[2] == cfg_.latent_action_dim(),
               UsageError, "encode_sequence: wants [N, K, u]");
    return seqenc_(ag::reshape(us, {sh[0], sh[1] * sh[2]}));
  }

  ag::Var<S> project_anchor(const ag::Var<S>& z, const ag::Var<S>& seq) const {
    return proj_g_(ag::concat_cols(z, seq));
  }
  ag::Var<S> project_target(const ag::Var<S>& z) const { return proj_h_(z); }

  // S[i][j] = x_i^T W y_j over rows of X and Y.
  ag::Var<S> bilinear_scores(const ag::Var<S>& x, const ag::Var<S>& y) const {
    TACO_CHECK(x->value.ndim() == 2 && y->value.ndim() == 2 &&
                   x->value.dim(1) == cfg_.contrastive_dim &&
                   y->value.dim(1) == cfg_.contrastive_dim,
               UsageError, "bilinear_scores: vector dim mismatch");
    TACO_CHECK(x->value.dim(0) == y->value.dim(0), UsageError,
               "bilinear_scores: count mismatch");
    TACO_CHECK(x->value.dim(0) >= 2, UsageError,
               "bilinear_scores: contrastive loss needs N >= 2");
    return ag::matmul(ag::matmul(x, bilinear_w_), y, false, true);
  }

  ag::Var<S> predict_reward(const ag::Var<S>& z, const ag::Var<S>& seq) const {
    return reward_(ag::concat_cols(z, seq));
  }

  // ---- single-example, no-grad convenience wrappers ----

  Tensor<S> encode_state(const ByteTensor& obs) const {
    TACO_CHECK(obs.ndim() == 3, ConfigError, "encode_state wants [C,H,W]");
    Tensor<S> f = normalize_pixels<S>(obs).reshaped(
        {1, obs.dim(0), obs.dim(1), obs.dim(2)});
    return encode(ag::constant(std::move(f)))->value.reshaped({cfg_.feature_dim});
  }
  Tensor<S> encode_action_one(const Tensor<S>& a) const {
    TACO_CHECK(a.numel() == cfg_.action_dim, ConfigError,
               "encode_action: action dim mismatch");
    TACO_CHECK(a.all_finite(), UsageError, "encode_action: non-finite action");
    auto v = encode_action(ag::constant(a.reshaped({1, cfg_.action_dim})));
    return v->value.reshaped({cfg_.latent_action_dim()});
  }
  Tensor<S> encode_sequence_one(const std::vector<Tensor<S>>& us) const {
    TACO_CHECK(static_cast<int64_t>(us.size()) == cfg_.k, UsageError,
               "encode_sequence: need exactly K latent actions");
    const int64_t u = cfg_.latent_action_dim();
    Tensor<S> packed({1, cfg_.k, u});
    for (int64_t i = 0; i < cfg_.k; ++i) {
      TACO_CHECK(us[i].numel() == u, UsageError, "encode_sequence: latent dim");
      std::copy(us[i].data(), us[i].data() + u, packed.data() + i * u);
    }
    return encode_sequence(ag::constant(std::move(packed)))
        ->value.reshaped({cfg_.seq_embed_dim});
  }

 private:
  ModelConfig cfg_;
  PixelEncoder<S> enc_;
  nn::MLP<S> actenc_;
  nn::Linear<S> seqenc_;
  nn::MLP<S> proj_g_, proj_h_;
  ag::Var<S> bilinear_w_;
  nn::MLP<S> reward_;
};

}  // namespace taco
