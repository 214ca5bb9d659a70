#pragma once

#include <cmath>
#include <optional>

#include "taco/augment.hpp"
#include "taco/model.hpp"
#include "taco/replay.hpp"

namespace taco {

// Stabilized InfoNCE on a plain score matrix: -(1/N) sum_i log softmax(S)_ii.
template <typename S>
S infonce(const Tensor<S>& scores) {
  TACO_CHECK(scores.ndim() == 2 && scores.dim(0) == scores.dim(1), UsageError,
             "infonce wants a square matrix");
  const int64_t n = scores.dim(0);
  TACO_CHECK(n >= 2, UsageError, "infonce needs N >= 2");
  TACO_CHECK(scores.all_finite(), NumericError, "infonce: non-finite scores");
  S loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    S mx = scores[i * n];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, scores[i * n + j]);
    S denom = 0;
    for (int64_t j = 0; j < n; ++j) denom += std::exp(scores[i * n + j] - mx);
    loss += std::log(denom) - (scores[i * n + i] - mx);
  }
  return loss / S(n);
}

// ln N - L_N; a lower bound on the mutual information of the pairing.
template <typename S>
S mi_lower_bound_estimate(const Tensor<S>& scores) {
  return std::log(S(scores.dim(0))) - infonce(scores);
}

// Fraction of rows whose diagonal strictly dominates every off-diagonal score.
template <typename S>
S positive_pair_accuracy(const Tensor<S>& scores) {
  const int64_t n = scores.dim(0);
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    bool top = true;
    for (int64_t j = 0; j < n; ++j)
      if (j != i && scores[i * n + j] >= scores[i * n + i]) {
        top = false;
        break;
      }
    hits += top;
  }
  return S(hits) / S(n);
}

struct ObjectiveMask {
  bool taco = true;
  bool curl = true;
  bool reward = true;
  bool any() const { return taco || curl || reward; }
};

template <typename S>
struct LossBundle {
  ag::Var<S> total;  // graph root for backward
  S taco = 0, curl = 0, reward = 0;
  S total_value = 0;
  S pospair_acc = 0;
  S mi_estimate = 0;
};

// The three augmented pixel views, pre-drawn so callers control the draws:
// anchor aug(s_t), the curl positive aug'(s_t), and the target aug''(s_{t+K}).
template <typename S>
struct AugmentedViews {
  Tensor<S> anchor_px;
  Tensor<S> curl_pos_px;
  Tensor<S> target_px;
};

// Draw order: anchor shifts, then curl-positive shifts, then target shifts.
template <typename S>
AugmentedViews<S> draw_augmented_views(const SequenceBatch<S>& batch, int pad,
                                       Rng& rng) {
  AugmentedViews<S> v;
  v.anchor_px = normalize_pixels<S>(random_shift_batch(batch.s_t, pad, rng));
  v.curl_pos_px = normalize_pixels<S>(random_shift_batch(batch.s_t, pad, rng));
  v.target_px = normalize_pixels<S>(random_shift_batch(batch.s_tk, pad, rng));
  return v;
}

// Values of the two stop-gradient branches: the target latent z_{t+K}
// (encoder detached; H still trains on it) and the curl positive projection
// (detached after H). Evaluating them separately lets finite-difference
// oracles hold them fixed, which makes FD match backprop exactly.
template <typename S>
struct StopBranches {
  Tensor<S> z_next;  // [N, feature]
  Tensor<S> h_pos;   // [N, contrastive]
};

template <typename S>
StopBranches<S> compute_stop_branches(const TacoNets<S>& nets,
                                      const AugmentedViews<S>& views) {
  StopBranches<S> s;
  s.z_next = nets.encode(ag::constant(views.target_px))->value;
  s.h_pos =
      nets.project_target(nets.encode(ag::constant(views.curl_pos_px)))->value;
  return s;
}

// Builds the enabled losses on one shared anchor encoding and returns their
// sum as the graph root. Pass `frozen` to substitute externally evaluated
// stop-branch values; by default they are recomputed from current params.
template <typename S>
LossBundle<S> combined_objective(const TacoNets<S>& nets,
                                 const SequenceBatch<S>& batch,
                                 const AugmentedViews<S>& views,
                                 const ObjectiveMask& mask,
                                 const StopBranches<S>* frozen = nullptr) {
  TACO_CHECK(mask.any(), ConfigError, "all objectives disabled");
  const int64_t n = batch.size();
  const auto& cfg = nets.cfg();
  TACO_CHECK(batch.actions.dim(1) == cfg.k, UsageError,
             "batch K does not match model K");

  StopBranches<S> local;
  if (!frozen) {
    local = compute_stop_branches(nets, views);
    frozen = &local;
  }

  auto z = nets.encode(ag::leaf(views.anchor_px));

  ag::Var<S> seq;
  if (mask.taco || mask.reward) {
    auto flat_actions =
        ag::constant(batch.actions.reshaped({n * cfg.k, cfg.action_dim}));
    auto u = nets.encode_action(flat_actions);
    seq = nets.encode_sequence(
        ag::reshape(u, {n, cfg.k, cfg.latent_action_dim()}));
  }

  LossBundle<S> out;
  ag::Var<S> total;
  auto accumulate = [&total](const ag::Var<S>& term) {
    total = total ? ag::add(total, term) : term;
  };

  bool have_diag = false;
  if (mask.taco) {
    auto anchors = nets.project_anchor(z, seq);
    auto targets = nets.project_target(ag::constant(frozen->z_next));
    auto scores = nets.bilinear_scores(anchors, targets);
    Tensor<S> probs;
    auto l = ag::softmax_xent_diag(scores, &probs);
    out.taco = l->value[0];
    out.pospair_acc = positive_pair_accuracy(scores->value);
    out.mi_estimate = std::log(S(n)) - out.taco;
    have_diag = true;
    accumulate(l);
  }
  if (mask.curl) {
    auto anchors = nets.project_target(z);
    auto positives = ag::constant(frozen->h_pos);
    auto scores = nets.bilinear_scores(anchors, positives);
    auto l = ag::softmax_xent_diag(scores);
    out.curl = l->value[0];
    if (!have_diag) {
      out.pospair_acc = positive_pair_accuracy(scores->value);
      out.mi_estimate = std::log(S(n)) - out.curl;
    }
    accumulate(l);
  }
  if (mask.reward) {
    auto pred = nets.predict_reward(z, seq);
    auto l = ag::mse(pred, batch.r_sum.reshaped({n, 1}));
    out.reward = l->value[0];
    accumulate(l);
  }
  out.total = total;
  out.total_value = total->value[0];
  TACO_CHECK(std::isfinite(out.total_value), NumericError,
             "non-finite auxiliary loss");
  return out;
}

template <typename S>
LossBundle<S> taco_loss(const TacoNets<S>& nets, const SequenceBatch<S>& batch,
                        const AugmentedViews<S>& views,
                        const StopBranches<S>* frozen = nullptr) {
  return combined_objective(nets, batch, views, {true, false, false}, frozen);
}

template <typename S>
LossBundle<S> curl_loss(const TacoNets<S>& nets, const SequenceBatch<S>& batch,
                        const AugmentedViews<S>& views,
                        const StopBranches<S>* frozen = nullptr) {
  return combined_objective(nets, batch, views, {false, true, false}, frozen);
}

template <typename S>
LossBundle<S> reward_loss(const TacoNets<S>& nets, const SequenceBatch<S>& batch,
                          const AugmentedViews<S>& views) {
  return combined_objective(nets, batch, views, {false, false, true});
}

}  // namespace taco
