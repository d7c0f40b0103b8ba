// Copyright 2026 The LCFD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tape-based reverse-mode differentiation over Tensor4 values.
//
// A Graph records every operation in creation order; backward() walks the
// tape in reverse. Nothing is shared between graphs, so independent graphs may
// live on different threads. A graph built with record=false keeps only the
// forward values (inference).

#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lcfd/errors.hpp"
#include "lcfd/nn/kernels.hpp"
#include "lcfd/nn/params.hpp"
#include "lcfd/nn/tensor.hpp"

namespace lcfd::nn {

template <typename T>
struct Node {
  Tensor4<T> value;
  Tensor4<T> grad;
  bool needs_grad = false;
  Parameter<T>* param = nullptr;
  std::function<void()> backward;

  Tensor4<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor4<T>(value.n, value.c, value.h, value.w);
    return grad;
  }
};

// How the binary low-frequency mask propagates gradients.
enum class MaskGradient {
  kNone,  // exact derivative of the hard threshold (zero almost everywhere)
  kSte,   // hard forward, sigmoid(-(sigma - tau)) derivative backward
  kSoft,  // sigmoid forward and backward (smooth surrogate, for checks)
};

template <typename T>
class Graph {
 public:
  using Var = Node<T>*;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor4<T> v) { return make(std::move(v), false); }

  // Leaf that collects gradients (used for input-sensitivity checks).
  Var input(Tensor4<T> v) { return make(std::move(v), record_); }

  // Leaf bound to a stored parameter; its gradient is added to the store on
  // backward().
  Var param(Parameter<T>& p) {
    Var v = make(p.value, record_ && p.trainable);
    v->param = &p;
    return v;
  }
  Var param(const Parameter<T>& p) { return constant(p.value); }

  // ---------------------------------------------------------------------
  // Convolution family

  // "Same" convolution with zero padding. w: (Cout, Cin, k, k), k in {1, 3};
  // b: (1, Cout, 1, 1).
  Var conv2d(Var x, Var w, Var b) {
    const auto& X = x->value;
    const auto& Wt = w->value;
    const int k = Wt.h;
    if ((k != 1 && k != 3) || Wt.w != k || Wt.c != X.c || b->value.c != Wt.n ||
        b->value.size() != static_cast<size_t>(Wt.n))
      throw input_error("conv2d shape mismatch: x" + shape_str(X.dims()) +
                        " w" + shape_str(Wt.dims()));
    const int cin = X.c, cout = Wt.n;
    const size_t P = X.plane_size();
    Tensor4<T> Y(X.n, cout, X.h, X.w);
    std::vector<T> col(k == 3 ? static_cast<size_t>(cin) * 9 * P : 0);
    for (int n = 0; n < X.n; ++n) {
      const T* src = X.plane(n, 0);
      if (k == 3) {
        kernels::im2col3(src, cin, X.h, X.w, col.data());
        src = col.data();
      }
      kernels::gemm_bias(cout, cin * k * k, P, Wt.data.data(), src,
                         b->value.data.data(), Y.plane(n, 0));
    }
    Var y = make(std::move(Y), any_grad({x, w, b}));
    if (y->needs_grad)
      y->backward = [=] {
        const auto& X = x->value;
        const auto& Wt = w->value;
        const auto& dY = y->grad;
        std::vector<T> col(k == 3 ? static_cast<size_t>(cin) * 9 * P : 0);
        std::vector<T> dcol(x->needs_grad ? static_cast<size_t>(cin) * k * k * P : 0);
        for (int n = 0; n < X.n; ++n) {
          const T* src = X.plane(n, 0);
          if (k == 3) {
            kernels::im2col3(src, cin, X.h, X.w, col.data());
            src = col.data();
          }
          if (w->needs_grad)
            kernels::gemm_nt_acc(cout, cin * k * k, P, dY.plane(n, 0), src,
                                 w->ensure_grad().data.data());
          if (b->needs_grad) {
            T* db = b->ensure_grad().data.data();
            for (int o = 0; o < cout; ++o) db[o] += kernels::sum(dY.plane(n, o), P);
          }
          if (x->needs_grad) {
            T* dx = x->ensure_grad().plane(n, 0);
            if (k == 3) {
              std::fill(dcol.begin(), dcol.end(), T(0));
              kernels::gemm_tn_acc(cout, cin * 9, P, Wt.data.data(),
                                   dY.plane(n, 0), dcol.data());
              kernels::col2im3_acc(dcol.data(), cin, X.h, X.w, dx);
            } else {
              kernels::gemm_tn_acc(cout, cin, P, Wt.data.data(), dY.plane(n, 0), dx);
            }
          }
        }
      };
    return y;
  }

  // Fully connected layer on (N, K, 1, 1) vectors: w (O, K, 1, 1).
  Var linear(Var x, Var w, Var b) {
    if (x->value.h != 1 || x->value.w != 1 || w->value.h != 1)
      throw input_error("linear expects (N,K,1,1) input and (O,K,1,1) weights");
    return conv2d(x, w, b);
  }

  // (N, C, H, W) -> (N, C, 1, 1)
  Var global_mean_pool(Var x) {
    const auto& X = x->value;
    const size_t P = X.plane_size();
    Tensor4<T> Y(X.n, X.c, 1, 1);
    for (int n = 0; n < X.n; ++n)
      for (int c = 0; c < X.c; ++c)
        Y.at(n, c, 0, 0) = kernels::sum(X.plane(n, c), P) / static_cast<T>(P);
    Var y = make(std::move(Y), x->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        auto& dX = x->ensure_grad();
        for (int n = 0; n < dX.n; ++n)
          for (int c = 0; c < dX.c; ++c) {
            const T g = y->grad.at(n, c, 0, 0) / static_cast<T>(P);
            T* d = dX.plane(n, c);
            for (size_t p = 0; p < P; ++p) d[p] += g;
          }
      };
    return y;
  }

  Var concat_channels(std::span<const Var> xs) {
    if (xs.empty()) throw input_error("concat of nothing");
    const auto& F = xs[0]->value;
    int c = 0;
    bool ng = false;
    for (Var v : xs) {
      if (v->value.n != F.n || v->value.h != F.h || v->value.w != F.w)
        throw input_error("concat shape mismatch");
      c += v->value.c;
      ng |= v->needs_grad;
    }
    Tensor4<T> Y(F.n, c, F.h, F.w);
    const size_t P = F.plane_size();
    for (int n = 0; n < F.n; ++n) {
      int off = 0;
      for (Var v : xs) {
        std::copy_n(v->value.plane(n, 0), v->value.c * P, Y.plane(n, off));
        off += v->value.c;
      }
    }
    Var y = make(std::move(Y), ng);
    if (y->needs_grad) {
      std::vector<Var> parts(xs.begin(), xs.end());
      y->backward = [=] {
        for (int n = 0; n < y->value.n; ++n) {
          int off = 0;
          for (Var v : parts) {
            if (v->needs_grad) {
              const T* g = y->grad.plane(n, off);
              T* d = v->ensure_grad().plane(n, 0);
              for (size_t i = 0; i < v->value.c * P; ++i) d[i] += g[i];
            }
            off += v->value.c;
          }
        }
      };
    }
    return y;
  }

  // ---------------------------------------------------------------------
  // Elementwise

  Var leaky_relu(Var x, T slope = T(0.2)) {
    return unary(
        x, [slope](T v) { return v > 0 ? v : slope * v; },
        [slope](T v, T) { return v > 0 ? T(1) : slope; });
  }

  Var softplus(Var x) {
    return unary(
        x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
        [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
  }

  Var sigmoid(Var x) {
    return unary(
        x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); });
  }

  Var abs(Var x) {
    return unary(
        x, [](T v) { return std::abs(v); },
        [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
  }

  Var scale(Var x, T s) {
    return unary(x, [s](T v) { return s * v; }, [s](T, T) { return s; });
  }

  Var add_scalar(Var x, T s) {
    return unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
  }

  // 1 - x
  Var one_minus(Var x) {
    return unary(x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
  }

  // Gradient flows only strictly inside [lo, hi].
  Var clamp(Var x, T lo, T hi) {
    return unary(
        x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
        [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
  }

  // Forward floor(x + 0.5); backward identity (straight-through).
  Var ste_round(Var x) {
    return unary(
        x, [](T v) { return std::floor(v + T(0.5)); }, [](T, T) { return T(1); });
  }

  Var add(Var a, Var b) { return binary(a, b, T(1), T(1)); }
  Var sub(Var a, Var b) { return binary(a, b, T(1), T(-1)); }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Tensor4<T> Y = a->value;
    for (size_t i = 0; i < Y.size(); ++i) Y.data[i] *= b->value.data[i];
    Var y = make(std::move(Y), a->needs_grad || b->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        const auto& g = y->grad.data;
        if (a->needs_grad) {
          auto& d = a->ensure_grad().data;
          for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * b->value.data[i];
        }
        if (b->needs_grad) {
          auto& d = b->ensure_grad().data;
          for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * a->value.data[i];
        }
      };
    return y;
  }

  // ---------------------------------------------------------------------
  // Reductions

  Var sum(Var x) {
    Tensor4<T> Y(1, 1, 1, 1);
    Y.data[0] = kernels::sum(x->value.data.data(), x->value.size());
    Var y = make(std::move(Y), x->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        const T g = y->grad.data[0];
        for (auto& d : x->ensure_grad().data) d += g;
      };
    return y;
  }

  Var mean(Var x) {
    return scale(sum(x), T(1) / static_cast<T>(x->value.size()));
  }

  // Scalar num / max(den, floor). No gradient reaches `den` while the floor
  // is active.
  Var ratio(Var num, Var den, T floor) {
    if (num->value.size() != 1 || den->value.size() != 1) throw input_error("ratio needs scalars");
    const T d = std::max(den->value.data[0], floor);
    Tensor4<T> Y(1, 1, 1, 1);
    Y.data[0] = num->value.data[0] / d;
    Var y = make(std::move(Y), num->needs_grad || den->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        const T g = y->grad.data[0];
        if (num->needs_grad) num->ensure_grad().data[0] += g / d;
        if (den->needs_grad && den->value.data[0] > floor)
          den->ensure_grad().data[0] -= g * num->value.data[0] / (d * d);
      };
    return y;
  }

  // Mean pinball loss of `tau` (N,1,1,1) against the samples of `x`
  // (N,1,H,W) at quantile q; minimised when tau is the q-quantile of each
  // sample's values. Only `tau` receives a gradient.
  Var quantile_loss(Var x, Var tau, T q) {
    const auto& X = x->value;
    if (X.c != 1 || tau->value.size() != static_cast<size_t>(X.n))
      throw input_error("quantile_loss shape mismatch");
    const size_t P = X.plane_size();
    const T inv = T(1) / static_cast<T>(X.size());
    Tensor4<T> Y(1, 1, 1, 1);
    for (int n = 0; n < X.n; ++n) {
      const T t = tau->value.data[n];
      const T* v = X.plane(n, 0);
      for (size_t p = 0; p < P; ++p) {
        const T u = v[p] - t;
        Y.data[0] += (u >= 0 ? q * u : (q - T(1)) * u) * inv;
      }
    }
    Var y = make(std::move(Y), tau->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        const T g = y->grad.data[0];
        auto& dt = tau->ensure_grad().data;
        for (int n = 0; n < X.n; ++n) {
          const T t = tau->value.data[n];
          const T* v = x->value.plane(n, 0);
          T d = 0;
          for (size_t p = 0; p < P; ++p) d += v[p] - t >= 0 ? -q : T(1) - q;
          dt[n] += g * d * inv;
        }
      };
    return y;
  }

  // Same value, no gradient.
  Var detach(Var x) { return constant(x->value); }

  // Softmax over the channel axis, independently at every (n, y, x).
  Var softmax_channels(Var x) {
    const auto& X = x->value;
    const size_t P = X.plane_size();
    Tensor4<T> Y = X;
    std::vector<T> scratch(2 * P);
    for (int n = 0; n < X.n; ++n)
      kernels::softmax_columns(Y.plane(n, 0), X.c, P, scratch.data());
    Var y = make(std::move(Y), x->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        // dx_c = y_c * (g_c - sum_k g_k y_k)
        const auto& Yv = y->value;
        std::vector<T> s(P);
        for (int n = 0; n < Yv.n; ++n) {
          std::fill(s.begin(), s.end(), T(0));
          for (int c = 0; c < Yv.c; ++c) {
            const T* yr = Yv.plane(n, c);
            const T* gr = y->grad.plane(n, c);
            for (size_t p = 0; p < P; ++p) s[p] += yr[p] * gr[p];
          }
          for (int c = 0; c < Yv.c; ++c) {
            const T* yr = Yv.plane(n, c);
            const T* gr = y->grad.plane(n, c);
            T* d = x->ensure_grad().plane(n, c);
            for (size_t p = 0; p < P; ++p) d[p] += yr[p] * (gr[p] - s[p]);
          }
        }
      };
    return y;
  }

  // scale * sum_i w_i * -log2(max(softmax(logits)_i[target_i], floor)).
  // logits (N, C, H, W); targets one symbol index per (n, y, x); weights
  // (N, 1, H, W). Pixels whose target probability falls below `floor` cost
  // -log2(floor) and pass no gradient to the logits. If `bits_out` is given it
  // receives the unweighted per-pixel bits, (N, 1, H, W).
  Var cross_entropy_bits(Var logits, std::span<const int32_t> targets,
                         Var weights, T scale_by,
                         T floor = T(1.0 / (1 << 20)),
                         Tensor4<T>* bits_out = nullptr) {
    const auto& L = logits->value;
    const size_t P = L.plane_size();
    if (targets.size() != L.n * P || weights->value.c != 1 ||
        weights->value.n != L.n || weights->value.plane_size() != P)
      throw input_error("cross_entropy_bits shape mismatch");
    for (int32_t t : targets)
      if (t < 0 || t >= L.c) throw input_error("target symbol out of range");

    auto probs = std::make_shared<Tensor4<T>>(L);
    std::vector<T> scratch(2 * P);
    Tensor4<T> bits(L.n, 1, L.h, L.w);
    for (int n = 0; n < L.n; ++n) {
      kernels::softmax_columns(probs->plane(n, 0), L.c, P, scratch.data());
      for (size_t p = 0; p < P; ++p) {
        const T pt = probs->plane(n, targets[n * P + p])[p];
        bits.plane(n, 0)[p] = -std::log2(std::max(pt, floor));
      }
    }
    T total = 0;
    for (int n = 0; n < L.n; ++n)
      total += kernels::dot(bits.plane(n, 0), weights->value.plane(n, 0), P);
    Tensor4<T> Y(1, 1, 1, 1, total * scale_by);
    if (bits_out) *bits_out = bits;

    Var y = make(std::move(Y), logits->needs_grad || weights->needs_grad);
    if (y->needs_grad) {
      std::vector<int32_t> tg(targets.begin(), targets.end());
      auto bits_keep = std::make_shared<Tensor4<T>>(std::move(bits));
      y->backward = [=] {
        const T g = y->grad.data[0] * scale_by;
        if (weights->needs_grad) {
          auto& dw = weights->ensure_grad().data;
          for (size_t i = 0; i < dw.size(); ++i) dw[i] += g * bits_keep->data[i];
        }
        if (logits->needs_grad) {
          auto& dL = logits->ensure_grad();
          const T inv_ln2 = T(1) / std::log(T(2));
          std::vector<T> coef(P);
          for (int n = 0; n < dL.n; ++n) {
            const T* wv = weights->value.plane(n, 0);
            for (size_t p = 0; p < P; ++p) {
              const T pt = probs->plane(n, tg[n * P + p])[p];
              coef[p] = pt < floor ? T(0) : g * wv[p] * inv_ln2;
            }
            for (int c = 0; c < dL.c; ++c) {
              const T* pr = probs->plane(n, c);
              T* d = dL.plane(n, c);
              for (size_t p = 0; p < P; ++p) d[p] += coef[p] * pr[p];
            }
            for (size_t p = 0; p < P; ++p) dL.plane(n, tg[n * P + p])[p] -= coef[p];
          }
        }
      };
    }
    return y;
  }

  // Low-frequency mask: 1 where sigma <= tau. sigma (N, 1, H, W); tau
  // (N, 1, 1, 1). See MaskGradient for the backward behaviour.
  Var frequency_mask(Var sigma, Var tau, MaskGradient mode) {
    const auto& S = sigma->value;
    if (S.c != 1 || tau->value.size() != static_cast<size_t>(S.n))
      throw input_error("frequency_mask shape mismatch");
    const size_t P = S.plane_size();
    Tensor4<T> M(S.n, 1, S.h, S.w);
    for (int n = 0; n < S.n; ++n) {
      const T t = tau->value.data[n];
      const T* s = S.plane(n, 0);
      T* m = M.plane(n, 0);
      for (size_t p = 0; p < P; ++p)
        m[p] = mode == MaskGradient::kSoft ? T(1) / (T(1) + std::exp(s[p] - t))
                                           : (s[p] <= t ? T(1) : T(0));
    }
    const bool ng = mode != MaskGradient::kNone &&
                    (sigma->needs_grad || tau->needs_grad);
    Var y = make(std::move(M), ng);
    if (y->needs_grad)
      y->backward = [=] {
        // d/dsigma sigmoid(tau - sigma) = -s(1-s); d/dtau = +s(1-s)
        for (int n = 0; n < S.n; ++n) {
          const T t = tau->value.data[n];
          const T* s = sigma->value.plane(n, 0);
          const T* g = y->grad.plane(n, 0);
          T dt = 0;
          T* ds = sigma->needs_grad ? sigma->ensure_grad().plane(n, 0) : nullptr;
          for (size_t p = 0; p < P; ++p) {
            const T sg = T(1) / (T(1) + std::exp(s[p] - t));
            const T d = sg * (T(1) - sg) * g[p];
            if (ds) ds[p] -= d;
            dt += d;
          }
          if (tau->needs_grad) tau->ensure_grad().data[n] += dt;
        }
      };
    return y;
  }

  // ---------------------------------------------------------------------

  // Runs reverse-mode differentiation from a scalar and accumulates parameter
  // gradients into their stores.
  void backward(Var loss) {
    if (!record_) throw input_error("backward on a graph that was not recorded");
    if (loss->value.size() != 1) throw input_error("backward needs a scalar loss");
    if (!std::isfinite(static_cast<double>(loss->value.data[0])))
      throw Error(ErrorKind::kTraining, "non-finite loss");
    if (!loss->needs_grad) return;
    loss->ensure_grad().data[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& nd = *it;
      if (nd.grad.empty()) continue;
      if (nd.backward) nd.backward();
      if (nd.param) nd.param->accumulate(nd.grad);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  Var make(Tensor4<T> v, bool needs_grad) {
    nodes_.emplace_back();
    Node<T>& nd = nodes_.back();
    nd.value = std::move(v);
    nd.needs_grad = record_ && needs_grad;
    return &nd;
  }

  static bool any_grad(std::initializer_list<Var> vs) {
    for (Var v : vs)
      if (v->needs_grad) return true;
    return false;
  }

  static void check_same(Var a, Var b, const char* op) {
    if (!a->value.same_shape(b->value))
      throw input_error(std::string(op) + " shape mismatch: " +
                        shape_str(a->value.dims()) + " vs " +
                        shape_str(b->value.dims()));
  }

  // f(x) forward; df(x, y) derivative given input and output.
  template <typename F, typename DF>
  Var unary(Var x, F f, DF df) {
    Tensor4<T> Y = x->value;
    for (auto& v : Y.data) v = f(v);
    Var y = make(std::move(Y), x->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        auto& d = x->ensure_grad().data;
        const auto& xv = x->value.data;
        const auto& yv = y->value.data;
        const auto& g = y->grad.data;
        for (size_t i = 0; i < d.size(); ++i) d[i] += g[i] * df(xv[i], yv[i]);
      };
    return y;
  }

  Var binary(Var a, Var b, T ca, T cb) {
    check_same(a, b, "add/sub");
    Tensor4<T> Y = a->value;
    for (size_t i = 0; i < Y.size(); ++i)
      Y.data[i] = ca * Y.data[i] + cb * b->value.data[i];
    Var y = make(std::move(Y), a->needs_grad || b->needs_grad);
    if (y->needs_grad)
      y->backward = [=] {
        const auto& g = y->grad.data;
        if (a->needs_grad) {
          auto& d = a->ensure_grad().data;
          for (size_t i = 0; i < g.size(); ++i) d[i] += ca * g[i];
        }
        if (b->needs_grad) {
          auto& d = b->ensure_grad().data;
          for (size_t i = 0; i < g.size(); ++i) d[i] += cb * g[i];
        }
      };
    return y;
  }

  bool record_;
  std::deque<Node<T>> nodes_;
};

}  // namespace lcfd::nn
