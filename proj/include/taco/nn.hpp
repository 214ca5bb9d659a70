#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "taco/graph.hpp"
#include "taco/random.hpp"

namespace taco {
namespace nn {

// Orthogonal [rows, cols] via QR of a Gaussian matrix, sign-corrected so the
// result is unique given the draws.
template <typename S>
Tensor<S> orthogonal(int64_t rows, int64_t cols, S gain, Rng& rng) {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  const int64_t r = std::max(rows, cols), c = std::min(rows, cols);
  Mat a(r, c);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) a(i, j) = static_cast<S>(rng.normal());
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(r, c);
  for (int64_t j = 0; j < c; ++j)
    if (qr.matrixQR()(j, j) < S(0)) q.col(j) = -q.col(j);
  Tensor<S> out({rows, cols});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      out[i * cols + j] = gain * (rows >= cols ? q(i, j) : q(j, i));
  return out;
}

// Ordered, named registry of trainable tensors. Modules register themselves
// here; optimizers and checkpoints consume the flat view.
template <typename S>
class ParamStore {
 public:
  ag::Var<S> add(const std::string& name, Tensor<S> value, bool trainable = true) {
    TACO_CHECK(!index_.count(name), UsageError, "duplicate parameter: " + name);
    auto v = ag::leaf(std::move(value), trainable, name);
    index_[name] = params_.size();
    params_.push_back(v);
    return v;
  }
  const std::vector<ag::Var<S>>& all() const { return params_; }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  ag::Var<S> get(const std::string& name) const {
    auto it = index_.find(name);
    TACO_CHECK(it != index_.end(), UsageError, "unknown parameter: " + name);
    return params_[it->second];
  }
  std::vector<ag::Var<S>> with_prefix(const std::string& prefix) const {
    std::vector<ag::Var<S>> out;
    for (const auto& p : params_)
      if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
    TACO_CHECK(!out.empty(), UsageError, "no parameters under prefix: " + prefix);
    return out;
  }
  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<ag::Var<S>> params_;
  std::unordered_map<std::string, size_t> index_;
};

template <typename S>
void zero_grads(const std::vector<ag::Var<S>>& params) {
  for (const auto& p : params) p->zero_grad();
}

template <typename S>
bool all_params_finite(const std::vector<ag::Var<S>>& params) {
  for (const auto& p : params)
    if (!p->value.all_finite()) return false;
  return true;
}

// dst <- tau * src + (1 - tau) * dst, matched by position.
template <typename S>
void ema_update(const std::vector<ag::Var<S>>& dst,
                const std::vector<ag::Var<S>>& src, S tau) {
  TACO_CHECK(dst.size() == src.size(), UsageError, "ema: param list mismatch");
  for (size_t k = 0; k < dst.size(); ++k) {
    TACO_CHECK(dst[k]->value.same_shape(src[k]->value), UsageError,
               "ema: shape mismatch at " + src[k]->name);
    auto& d = dst[k]->value;
    const auto& s = src[k]->value;
    for (int64_t i = 0; i < d.numel(); ++i)
      d[i] = tau * s[i] + (S(1) - tau) * d[i];
  }
}

template <typename S>
void hard_copy(const std::vector<ag::Var<S>>& dst,
               const std::vector<ag::Var<S>>& src) {
  TACO_CHECK(dst.size() == src.size(), UsageError, "copy: param list mismatch");
  for (size_t k = 0; k < dst.size(); ++k) dst[k]->value = src[k]->value;
}

// Adam keeps one (m, v, t) state per tensor regardless of how many parameter
// groups include it; a tensor's moments advance only on steps that list it.
template <typename S>
class Adam {
 public:
  explicit Adam(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ag::Var<S>>& params) {
    for (const auto& p : params) {
      if (!p->requires_grad || !p->grad_alloc) continue;
      State& st = states_[p.get()];
      if (st.t == 0) {
        st.m = Tensor<S>::zeros(p->value.shape());
        st.v = Tensor<S>::zeros(p->value.shape());
      }
      st.t += 1;
      const S bc1 = S(1) - std::pow(beta1_, S(st.t));
      const S bc2 = S(1) - std::pow(beta2_, S(st.t));
      auto& val = p->value;
      const auto& g = p->grad;
      for (int64_t i = 0; i < val.numel(); ++i) {
        st.m[i] = beta1_ * st.m[i] + (S(1) - beta1_) * g[i];
        st.v[i] = beta2_ * st.v[i] + (S(1) - beta2_) * g[i] * g[i];
        val[i] -= lr_ * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps_);
      }
    }
  }

  int64_t step_count(const ag::Var<S>& p) const {
    auto it = states_.find(p.get());
    return it == states_.end() ? 0 : it->second.t;
  }
  S lr() const { return lr_; }

 private:
  struct State {
    Tensor<S> m, v;
    int64_t t = 0;
  };
  S lr_, beta1_, beta2_, eps_;
  std::unordered_map<const ag::Node<S>*, State> states_;
};

// ---- modules ----

template <typename S>
struct Linear {
  ag::Var<S> w, b;
  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out,
         Rng& rng, S gain = S(1)) {
    w = ps.add(name + ".w", orthogonal<S>(in, out, gain, rng));
    b = ps.add(name + ".b", Tensor<S>::zeros({out}));
  }
  ag::Var<S> operator()(const ag::Var<S>& x) const { return ag::linear(x, w, b); }
};

template <typename S>
struct Conv2d {
  ag::Var<S> w, b;
  int64_t k = 3, stride = 1;
  Conv2d() = default;
  Conv2d(ParamStore<S>& ps, const std::string& name, int64_t cin, int64_t cout,
         int64_t k_, int64_t stride_, Rng& rng)
      : k(k_), stride(stride_) {
    w = ps.add(name + ".w",
               orthogonal<S>(cout, cin * k_ * k_, std::sqrt(S(2)), rng));
    b = ps.add(name + ".b", Tensor<S>::zeros({cout}));
  }
  ag::Var<S> operator()(const ag::Var<S>& x) const {
    return ag::conv2d(x, w, b, k, stride);
  }
};

template <typename S>
struct LayerNorm {
  ag::Var<S> gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& name, int64_t d) {
    gamma = ps.add(name + ".gamma", Tensor<S>::full({d}, S(1)));
    beta = ps.add(name + ".beta", Tensor<S>::zeros({d}));
  }
  ag::Var<S> operator()(const ag::Var<S>& x) const {
    return ag::layer_norm(x, gamma, beta);
  }
};

// Fully connected stack with ReLU between layers, linear output.
template <typename S>
struct MLP {
  std::vector<Linear<S>> layers;
  MLP() = default;
  MLP(ParamStore<S>& ps, const std::string& name, const std::vector<int64_t>& dims,
      Rng& rng) {
    TACO_CHECK(dims.size() >= 2, UsageError, "MLP needs at least [in, out]");
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(ps, name + ".fc" + std::to_string(i), dims[i],
                          dims[i + 1], rng);
  }
  ag::Var<S> operator()(ag::Var<S> x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = ag::relu(x);
    }
    return x;
  }
};

}  // namespace nn
}  // namespace taco
