#pragma once

#include <atomic>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "taco/error.hpp"
#include "taco/tensor.hpp"

// Reverse-mode autodiff over dense tensors. Nodes are tensor-granular (one GEMM
// or one activation per node), so tape overhead is negligible next to the math.
// Templated on the scalar so the same graph runs in float for training and in
// double for gradient verification.

namespace taco {
namespace ag {

inline uint64_t next_seq() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1);
}

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  uint64_t seq = 0;
  std::string name;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backward_fn;

  Tensor<S>& ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor<S>::zeros(value.shape());
      grad_alloc = true;
    }
    return grad;
  }
  void zero_grad() {
    if (grad_alloc) std::fill(grad.vec().begin(), grad.vec().end(), S(0));
  }
};

template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
Var<S> leaf(Tensor<S> value, bool requires_grad = false, std::string name = "") {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  n->seq = next_seq();
  return n;
}

template <typename S>
Var<S> constant(Tensor<S> value) {
  return leaf(std::move(value), false);
}

template <typename S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> bw) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  if (n->requires_grad) n->backward_fn = std::move(bw);
  n->seq = next_seq();
  return n;
}

// Accumulates 1 into the (scalar) root and propagates to every reachable
// grad-requiring node in reverse creation order.
template <typename S>
void backward(const Var<S>& root) {
  TACO_CHECK(root->value.numel() == 1, UsageError, "backward root must be scalar");
  if (!root->requires_grad) return;
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<Node<S>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<S>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.push_back(p.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node<S>* a, const Node<S>* b) { return a->seq > b->seq; });
  root->ensure_grad()[0] += S(1);
  for (Node<S>* n : order) {
    if (n->backward_fn && n->grad_alloc) n->backward_fn(*n);
  }
}

// ---- elementwise and shape ops ----

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  TACO_CHECK(a->value.same_shape(b->value), UsageError, "add shape mismatch");
  Tensor<S> v = a->value;
  for (int64_t i = 0; i < v.numel(); ++i) v[i] += b->value[i];
  return make_op<S>(std::move(v), {a, b}, [](Node<S>& n) {
    const Tensor<S>& g = n.grad;
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parents[k];
      if (!p->requires_grad) continue;
      Tensor<S>& pg = p->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  TACO_CHECK(a->value.same_shape(b->value), UsageError, "sub shape mismatch");
  Tensor<S> v = a->value;
  for (int64_t i = 0; i < v.numel(); ++i) v[i] -= b->value[i];
  return make_op<S>(std::move(v), {a, b}, [](Node<S>& n) {
    const Tensor<S>& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor<S>& pg = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor<S>& pg = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg[i] -= g[i];
    }
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  Tensor<S> v = a->value;
  for (int64_t i = 0; i < v.numel(); ++i) v[i] *= c;
  return make_op<S>(std::move(v), {a}, [c](Node<S>& n) {
    Tensor<S>& pg = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += c * n.grad[i];
  });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> v = a->value;
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = v[i] > S(0) ? v[i] : S(0);
  return make_op<S>(std::move(v), {a}, [](Node<S>& n) {
    Tensor<S>& pg = n.parents[0]->ensure_grad();
    const Tensor<S>& x = n.parents[0]->value;
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      if (x[i] > S(0)) pg[i] += n.grad[i];
  });
}

template <typename S>
Var<S> tanh_op(const Var<S>& a) {
  Tensor<S> v = a->value;
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::tanh(v[i]);
  return make_op<S>(std::move(v), {a}, [](Node<S>& n) {
    Tensor<S>& pg = n.parents[0]->ensure_grad();
    const Tensor<S>& y = n.value;
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      pg[i] += n.grad[i] * (S(1) - y[i] * y[i]);
  });
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape shape) {
  Tensor<S> v = a->value.reshaped(shape);
  return make_op<S>(std::move(v), {a}, [](Node<S>& n) {
    Tensor<S>& pg = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i];
  });
}

// Value copy that gradients never cross.
template <typename S>
Var<S> detach(const Var<S>& a) {
  return leaf(a->value, false);
}

template <typename S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
  TACO_CHECK(a->value.ndim() == 2 && b->value.ndim() == 2 &&
                 a->value.dim(0) == b->value.dim(0),
             UsageError, "concat_cols wants [N,da],[N,db]");
  const int64_t n = a->value.dim(0), da = a->value.dim(1), db = b->value.dim(1);
  Tensor<S> v({n, da + db});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(v.data() + i * (da + db), a->value.data() + i * da, sizeof(S) * da);
    std::memcpy(v.data() + i * (da + db) + da, b->value.data() + i * db, sizeof(S) * db);
  }
  return make_op<S>(std::move(v), {a, b}, [n, da, db](Node<S>& n_) {
    const Tensor<S>& g = n_.grad;
    if (n_.parents[0]->requires_grad) {
      Tensor<S>& pg = n_.parents[0]->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < da; ++j) pg[i * da + j] += g[i * (da + db) + j];
    }
    if (n_.parents[1]->requires_grad) {
      Tensor<S>& pg = n_.parents[1]->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < db; ++j) pg[i * db + j] += g[i * (da + db) + da + j];
    }
  });
}

// Concatenate a list of [N,1] columns into [N,M].
template <typename S>
Var<S> stack_cols(const std::vector<Var<S>>& cols) {
  TACO_CHECK(!cols.empty(), UsageError, "stack_cols: empty");
  const int64_t n = cols[0]->value.dim(0);
  const int64_t m = static_cast<int64_t>(cols.size());
  Tensor<S> v({n, m});
  for (int64_t j = 0; j < m; ++j) {
    TACO_CHECK(cols[j]->value.numel() == n, UsageError, "stack_cols: column shape");
    for (int64_t i = 0; i < n; ++i) v[i * m + j] = cols[j]->value[i];
  }
  std::vector<Var<S>> parents(cols.begin(), cols.end());
  return make_op<S>(std::move(v), std::move(parents), [n, m](Node<S>& node) {
    for (int64_t j = 0; j < m; ++j) {
      auto& p = node.parents[j];
      if (!p->requires_grad) continue;
      Tensor<S>& pg = p->ensure_grad();
      for (int64_t i = 0; i < n; ++i) pg[i] += node.grad[i * m + j];
    }
  });
}

// ---- matrix ops ----

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool ta = false, bool tb = false) {
  const auto& A = a->value;
  const auto& B = b->value;
  TACO_CHECK(A.ndim() == 2 && B.ndim() == 2, UsageError, "matmul wants 2-D");
  const int64_t m = ta ? A.dim(1) : A.dim(0);
  const int64_t k = ta ? A.dim(0) : A.dim(1);
  const int64_t k2 = tb ? B.dim(1) : B.dim(0);
  const int64_t n = tb ? B.dim(0) : B.dim(1);
  TACO_CHECK(k == k2, UsageError, "matmul inner dims");
  Tensor<S> v({m, n});
  {
    auto Am = A.mat();
    auto Bm = B.mat();
    auto Vm = v.mat();
    if (!ta && !tb)
      Vm.noalias() = Am * Bm;
    else if (!ta && tb)
      Vm.noalias() = Am * Bm.transpose();
    else if (ta && !tb)
      Vm.noalias() = Am.transpose() * Bm;
    else
      Vm.noalias() = Am.transpose() * Bm.transpose();
  }
  return make_op<S>(std::move(v), {a, b}, [ta, tb](Node<S>& nd) {
    auto G = nd.grad.mat();
    auto& pa = nd.parents[0];
    auto& pb = nd.parents[1];
    if (pa->requires_grad) {
      auto dA = pa->ensure_grad().mat();
      auto Bm = pb->value.mat();
      if (!ta && !tb)
        dA.noalias() += G * Bm.transpose();
      else if (!ta && tb)
        dA.noalias() += G * Bm;
      else if (ta && !tb)
        dA.noalias() += Bm * G.transpose();
      else
        dA.noalias() += Bm.transpose() * G.transpose();
    }
    if (pb->requires_grad) {
      auto dB = pb->ensure_grad().mat();
      auto Am = pa->value.mat();
      if (!ta && !tb)
        dB.noalias() += Am.transpose() * G;
      else if (!ta && tb)
        dB.noalias() += G.transpose() * Am;
      else if (ta && !tb)
        dB.noalias() += Am * G;
      else
        dB.noalias() += G.transpose() * Am.transpose();
    }
  });
}

// y = x W + b, x:[N,in] W:[in,out] b:[out]
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const auto& X = x->value;
  const auto& W = w->value;
  const auto& B = b->value;
  TACO_CHECK(X.ndim() == 2 && W.ndim() == 2 && X.dim(1) == W.dim(0) &&
                 B.numel() == W.dim(1),
             UsageError, "linear shapes");
  const int64_t n = X.dim(0), out = W.dim(1);
  Tensor<S> v({n, out});
  v.mat().noalias() = X.mat() * W.mat();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < out; ++j) v[i * out + j] += B[j];
  return make_op<S>(std::move(v), {x, w, b}, [](Node<S>& nd) {
    auto G = nd.grad.mat();
    auto& px = nd.parents[0];
    auto& pw = nd.parents[1];
    auto& pb = nd.parents[2];
    if (px->requires_grad)
      px->ensure_grad().mat().noalias() += G * pw->value.mat().transpose();
    if (pw->requires_grad)
      pw->ensure_grad().mat().noalias() += px->value.mat().transpose() * G;
    if (pb->requires_grad) {
      Tensor<S>& gb = pb->ensure_grad();
      const int64_t n_ = nd.grad.dim(0), out_ = nd.grad.dim(1);
      for (int64_t i = 0; i < n_; ++i)
        for (int64_t j = 0; j < out_; ++j) gb[j] += nd.grad[i * out_ + j];
    }
  });
}

// Layer normalization over the last dimension of [N,D].
template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                  S eps = S(1e-5)) {
  const auto& X = x->value;
  TACO_CHECK(X.ndim() == 2, UsageError, "layer_norm wants [N,D]");
  const int64_t n = X.dim(0), d = X.dim(1);
  TACO_CHECK(gamma->value.numel() == d && beta->value.numel() == d, UsageError,
             "layer_norm affine dims");
  Tensor<S> v({n, d});
  auto xhat = std::make_shared<Tensor<S>>(Shape{n, d});
  auto inv_std = std::make_shared<Tensor<S>>(Shape{n});
  for (int64_t i = 0; i < n; ++i) {
    S mu = 0;
    for (int64_t j = 0; j < d; ++j) mu += X[i * d + j];
    mu /= S(d);
    S var = 0;
    for (int64_t j = 0; j < d; ++j) {
      S c = X[i * d + j] - mu;
      var += c * c;
    }
    var /= S(d);
    S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int64_t j = 0; j < d; ++j) {
      S xh = (X[i * d + j] - mu) * is;
      (*xhat)[i * d + j] = xh;
      v[i * d + j] = gamma->value[j] * xh + beta->value[j];
    }
  }
  return make_op<S>(std::move(v), {x, gamma, beta}, [xhat, inv_std, n, d](Node<S>& nd) {
    auto& px = nd.parents[0];
    auto& pg = nd.parents[1];
    auto& pbt = nd.parents[2];
    const Tensor<S>& g = nd.grad;
    if (pg->requires_grad) {
      Tensor<S>& gg = pg->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * (*xhat)[i * d + j];
    }
    if (pbt->requires_grad) {
      Tensor<S>& gb = pbt->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
    }
    if (px->requires_grad) {
      Tensor<S>& gx = px->ensure_grad();
      const Tensor<S>& gamma_v = pg->value;
      for (int64_t i = 0; i < n; ++i) {
        S mean_dxh = 0, mean_dxh_xh = 0;
        for (int64_t j = 0; j < d; ++j) {
          S dxh = g[i * d + j] * gamma_v[j];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * (*xhat)[i * d + j];
        }
        mean_dxh /= S(d);
        mean_dxh_xh /= S(d);
        for (int64_t j = 0; j < d; ++j) {
          S dxh = g[i * d + j] * gamma_v[j];
          gx[i * d + j] +=
              (*inv_std)[i] * (dxh - mean_dxh - (*xhat)[i * d + j] * mean_dxh_xh);
        }
      }
    }
  });
}

// ---- convolution (valid padding, square kernel) ----

namespace detail {
template <typename S>
void im2col(const Tensor<S>& x, int64_t k, int64_t stride, Tensor<S>& col,
            int64_t ho, int64_t wo) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cols = n * ho * wo;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        const int64_t row = (ci * k + ki) * k + kj;
        S* dst = col.data() + row * cols;
        for (int64_t ni = 0; ni < n; ++ni) {
          const S* src = x.data() + ((ni * c + ci) * h) * w;
          for (int64_t oh = 0; oh < ho; ++oh) {
            const S* srow = src + (oh * stride + ki) * w + kj;
            S* drow = dst + (ni * ho + oh) * wo;
            if (stride == 1) {
              std::memcpy(drow, srow, sizeof(S) * wo);
            } else {
              for (int64_t ow = 0; ow < wo; ++ow) drow[ow] = srow[ow * stride];
            }
          }
        }
      }
}

template <typename S>
void col2im_acc(const Tensor<S>& col, int64_t k, int64_t stride, Tensor<S>& dx,
                int64_t ho, int64_t wo) {
  const int64_t n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const int64_t cols = n * ho * wo;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        const int64_t row = (ci * k + ki) * k + kj;
        const S* src = col.data() + row * cols;
        for (int64_t ni = 0; ni < n; ++ni) {
          S* dst = dx.data() + ((ni * c + ci) * h) * w;
          for (int64_t oh = 0; oh < ho; ++oh) {
            const S* srow = src + (ni * ho + oh) * wo;
            S* drow = dst + (oh * stride + ki) * w + kj;
            for (int64_t ow = 0; ow < wo; ++ow) drow[ow * stride] += srow[ow];
          }
        }
      }
}
}  // namespace detail

// x:[N,Cin,H,W], w:[Cout, Cin*k*k], b:[Cout] -> [N,Cout,Ho,Wo]
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int64_t k,
              int64_t stride) {
  const auto& X = x->value;
  TACO_CHECK(X.ndim() == 4, UsageError, "conv2d wants [N,C,H,W]");
  const int64_t n = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const int64_t cout = w->value.dim(0);
  TACO_CHECK(w->value.dim(1) == cin * k * k, UsageError, "conv2d weight shape");
  TACO_CHECK(h >= k && wd >= k, ConfigError, "conv2d input smaller than kernel");
  const int64_t ho = (h - k) / stride + 1;
  const int64_t wo = (wd - k) / stride + 1;
  auto col = std::make_shared<Tensor<S>>(Shape{cin * k * k, n * ho * wo});
  detail::im2col(X, k, stride, *col, ho, wo);

  Tensor<S> yall({cout, n * ho * wo});
  yall.mat().noalias() = w->value.mat() * col->mat();
  Tensor<S> v({n, cout, ho, wo});
  const int64_t hw = ho * wo;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t co = 0; co < cout; ++co) {
      const S* src = yall.data() + co * (n * hw) + ni * hw;
      S* dst = v.data() + (ni * cout + co) * hw;
      const S bias = b->value[co];
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }

  return make_op<S>(std::move(v), {x, w, b},
                    [col, k, stride, n, cin, cout, h, wd, ho, wo](Node<S>& nd) {
    const int64_t hw = ho * wo;
    // regroup incoming grad to [Cout, N*Ho*Wo]
    Tensor<S> gall({cout, n * hw});
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t co = 0; co < cout; ++co)
        std::memcpy(gall.data() + co * (n * hw) + ni * hw,
                    nd.grad.data() + (ni * cout + co) * hw, sizeof(S) * hw);
    auto& px = nd.parents[0];
    auto& pw = nd.parents[1];
    auto& pb = nd.parents[2];
    if (pb->requires_grad) {
      Tensor<S>& gb = pb->ensure_grad();
      for (int64_t co = 0; co < cout; ++co) {
        S s = 0;
        const S* row = gall.data() + co * (n * hw);
        for (int64_t i = 0; i < n * hw; ++i) s += row[i];
        gb[co] += s;
      }
    }
    if (pw->requires_grad)
      pw->ensure_grad().mat().noalias() += gall.mat() * col->mat().transpose();
    if (px->requires_grad) {
      Tensor<S> dcol({cin * k * k, n * hw});
      dcol.mat().noalias() = pw->value.mat().transpose() * gall.mat();
      detail::col2im_acc(dcol, k, stride, px->ensure_grad(), ho, wo);
    }
  });
}

// ---- reductions and losses ----

template <typename S>
Var<S> mean_all(const Var<S>& x) {
  const int64_t n = x->value.numel();
  S s = 0;
  for (int64_t i = 0; i < n; ++i) s += x->value[i];
  Tensor<S> v = Tensor<S>::scalar(s / S(n));
  return make_op<S>(std::move(v), {x}, [n](Node<S>& nd) {
    Tensor<S>& pg = nd.parents[0]->ensure_grad();
    const S g = nd.grad[0] / S(n);
    for (int64_t i = 0; i < n; ++i) pg[i] += g;
  });
}

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  const int64_t n = x->value.numel();
  S s = 0;
  for (int64_t i = 0; i < n; ++i) s += x->value[i];
  Tensor<S> v = Tensor<S>::scalar(s);
  return make_op<S>(std::move(v), {x}, [n](Node<S>& nd) {
    Tensor<S>& pg = nd.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n; ++i) pg[i] += nd.grad[0];
  });
}

// Elementwise minimum; ties route the gradient to `a`.
template <typename S>
Var<S> min_elem(const Var<S>& a, const Var<S>& b) {
  TACO_CHECK(a->value.same_shape(b->value), UsageError, "min_elem shape mismatch");
  Tensor<S> v = a->value;
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::min(v[i], b->value[i]);
  return make_op<S>(std::move(v), {a, b}, [](Node<S>& nd) {
    const Tensor<S>& av = nd.parents[0]->value;
    const Tensor<S>& bv = nd.parents[1]->value;
    for (int64_t i = 0; i < nd.grad.numel(); ++i) {
      auto& p = (av[i] <= bv[i]) ? nd.parents[0] : nd.parents[1];
      if (p->requires_grad) p->ensure_grad()[i] += nd.grad[i];
    }
  });
}

// Mean squared error against a fixed target.
template <typename S>
Var<S> mse(const Var<S>& pred, const Tensor<S>& target) {
  TACO_CHECK(pred->value.numel() == target.numel(), UsageError, "mse size mismatch");
  const int64_t n = pred->value.numel();
  S s = 0;
  for (int64_t i = 0; i < n; ++i) {
    S d = pred->value[i] - target[i];
    s += d * d;
  }
  Tensor<S> v = Tensor<S>::scalar(s / S(n));
  auto tgt = std::make_shared<Tensor<S>>(target);
  return make_op<S>(std::move(v), {pred}, [n, tgt](Node<S>& nd) {
    Tensor<S>& pg = nd.parents[0]->ensure_grad();
    const Tensor<S>& pv = nd.parents[0]->value;
    const S g = nd.grad[0] * S(2) / S(n);
    for (int64_t i = 0; i < n; ++i) pg[i] += g * (pv[i] - (*tgt)[i]);
  });
}

// Row-wise log-sum-exp of [N,M] -> [N,1], max-stabilized.
template <typename S>
Var<S> logsumexp_rows(const Var<S>& x) {
  TACO_CHECK(x->value.ndim() == 2, UsageError, "logsumexp_rows wants [N,M]");
  const int64_t n = x->value.dim(0), m = x->value.dim(1);
  Tensor<S> v({n, 1});
  auto probs = std::make_shared<Tensor<S>>(Shape{n, m});
  for (int64_t i = 0; i < n; ++i) {
    S mx = x->value[i * m];
    for (int64_t j = 1; j < m; ++j) mx = std::max(mx, x->value[i * m + j]);
    S denom = 0;
    for (int64_t j = 0; j < m; ++j) denom += std::exp(x->value[i * m + j] - mx);
    v[i] = mx + std::log(denom);
    for (int64_t j = 0; j < m; ++j)
      (*probs)[i * m + j] = std::exp(x->value[i * m + j] - mx) / denom;
  }
  return make_op<S>(std::move(v), {x}, [n, m, probs](Node<S>& nd) {
    Tensor<S>& pg = nd.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) pg[i * m + j] += nd.grad[i] * (*probs)[i * m + j];
  });
}

// Softmax cross-entropy over rows of a square score matrix with diagonal
// labels: the InfoNCE core. Returns the scalar loss; optionally exposes the
// row-softmax matrix for diagnostics.
template <typename S>
Var<S> softmax_xent_diag(const Var<S>& scores, Tensor<S>* probs_out = nullptr) {
  const auto& sm = scores->value;
  TACO_CHECK(sm.ndim() == 2 && sm.dim(0) == sm.dim(1), UsageError,
             "softmax_xent_diag wants a square matrix");
  const int64_t n = sm.dim(0);
  TACO_CHECK(n >= 2, UsageError, "contrastive loss needs N >= 2");
  TACO_CHECK(sm.all_finite(), NumericError, "non-finite contrastive scores");
  auto probs = std::make_shared<Tensor<S>>(Shape{n, n});
  S loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    S mx = sm[i * n];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, sm[i * n + j]);
    S denom = 0;
    for (int64_t j = 0; j < n; ++j) denom += std::exp(sm[i * n + j] - mx);
    loss += std::log(denom) - (sm[i * n + i] - mx);
    for (int64_t j = 0; j < n; ++j)
      (*probs)[i * n + j] = std::exp(sm[i * n + j] - mx) / denom;
  }
  loss /= S(n);
  if (probs_out) *probs_out = *probs;
  Tensor<S> v = Tensor<S>::scalar(loss);
  return make_op<S>(std::move(v), {scores}, [n, probs](Node<S>& nd) {
    Tensor<S>& pg = nd.parents[0]->ensure_grad();
    const S g = nd.grad[0] / S(n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        pg[i * n + j] += g * ((*probs)[i * n + j] - (i == j ? S(1) : S(0)));
  });
}

}  // namespace ag
}  // namespace taco
