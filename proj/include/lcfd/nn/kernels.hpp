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

// Dense loops behind the tensor operations. Every reduction runs in a fixed
// order that does not depend on which columns are present, so evaluating a
// subset of pixels gives bit-identical results to evaluating all of them.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <vector>
#include <cstddef>
#include <cstdint>
#include <type_traits>

namespace lcfd::nn::kernels {

// exp(x) for x <= 0-ish softmax arguments. The float path is a branch-free
// Cody-Waite reduction with a degree-6 polynomial (~2 ulp) that the compiler
// can vectorise; double uses the library function.
inline float fast_exp(float x) {
  x = std::clamp(x, -87.0f, 88.0f);
  const float t = x * 1.44269504088896341f;
  const float kf = (t + 12582912.0f) - 12582912.0f;  // round to nearest
  float r = x - kf * 0.693145751953125f;
  r = r - kf * 1.428606765330187e-06f;
  float p = 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const int32_t k = static_cast<int32_t>(kf);
  return p * std::bit_cast<float>((k + 127) << 23);
}

inline double fast_exp(double x) { return std::exp(x); }

// Sum with eight interleaved partial accumulators, combined pairwise.
template <typename T>
T sum(const T* a, size_t n) {
  T acc[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l];
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
T dot(const T* a, const T* b, size_t n) {
  T acc[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Matrix kernels. Each output element is produced by one fixed sequence of
// vector operations that depends only on the reduction length, never on its
// position or on the matrix width: edge tiles are zero padded and run through
// the same code.
namespace simd {

template <typename T>
struct Vec {
  typedef T type __attribute__((vector_size(64)));
  static constexpr int kLanes = 64 / sizeof(T);
};

template <typename T>
using V = typename Vec<T>::type;

template <typename T>
inline V<T> load(const T* p) {
  V<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline void store(T* p, V<T> v) {
  std::memcpy(p, &v, sizeof v);
}

}  // namespace simd

namespace detail {

inline constexpr int kRowBlock = 8;

// Rows [m0, m0+R) of C[:, tile] = init + sum_j A(row, j) * B[j][tile], where
// the tile is two vectors wide. `a(r, j)` yields the scalar coefficient.
template <typename T, int R, typename Coef>
inline void tile_kernel(int J, const T* B, size_t ldb, Coef a, T* C, size_t ldc) {
  using simd::V;
  constexpr int L = simd::Vec<T>::kLanes;
  V<T> acc[R][2];
  for (int r = 0; r < R; ++r) {
    acc[r][0] = simd::load(C + r * ldc);
    acc[r][1] = simd::load(C + r * ldc + L);
  }
  for (int j = 0; j < J; ++j) {
    const V<T> b0 = simd::load(B + j * ldb);
    const V<T> b1 = simd::load(B + j * ldb + L);
    for (int r = 0; r < R; ++r) {
      const T c = a(r, j);
      acc[r][0] += c * b0;
      acc[r][1] += c * b1;
    }
  }
  for (int r = 0; r < R; ++r) {
    simd::store(C + r * ldc, acc[r][0]);
    simd::store(C + r * ldc + L, acc[r][1]);
  }
}

// C[row][p] += sum_j coef(row, j) * B[j][p] for rows [0, M), columns [0, P).
// C rows must already hold their initial values.
template <typename T, typename Coef>
void rank_update(int M, int J, size_t P, const T* B, Coef coef, T* C) {
  constexpr size_t TP = 2 * simd::Vec<T>::kLanes;
  std::vector<T> bpad, cpad;
  for (size_t p0 = 0; p0 < P; p0 += TP) {
    const size_t w = std::min(TP, P - p0);
    const T* bt = B + p0;
    size_t ldb = P;
    if (w < TP) {
      bpad.assign(static_cast<size_t>(J) * TP, T(0));
      for (int j = 0; j < J; ++j) std::copy_n(B + j * P + p0, w, bpad.data() + j * TP);
      bt = bpad.data();
      ldb = TP;
      cpad.assign(static_cast<size_t>(M) * TP, T(0));
      for (int m = 0; m < M; ++m) std::copy_n(C + m * P + p0, w, cpad.data() + m * TP);
    }
    T* ct = w < TP ? cpad.data() : C + p0;
    const size_t ldc = w < TP ? TP : P;
    int m = 0;
    for (; m + kRowBlock <= M; m += kRowBlock)
      tile_kernel<T, kRowBlock>(J, bt, ldb, [&](int r, int j) { return coef(m + r, j); },
                                ct + m * ldc, ldc);
    for (; m < M; ++m)
      tile_kernel<T, 1>(J, bt, ldb, [&](int, int j) { return coef(m, j); }, ct + m * ldc, ldc);
    if (w < TP)
      for (int r = 0; r < M; ++r) std::copy_n(cpad.data() + r * TP, w, C + r * P + p0);
  }
}

}  // namespace detail

// C[m][p] = bias[m] + sum_k A[m][k] * B[k][p]   (bias may be null: start at 0)
// A is M x K row-major, B is K x P, C is M x P. k runs in ascending order for
// every output element.
template <typename T>
void gemm_bias(int M, int K, size_t P, const T* A, const T* B, const T* bias,
               T* C) {
  for (int m = 0; m < M; ++m) std::fill(C + m * P, C + (m + 1) * P, bias ? bias[m] : T(0));
  detail::rank_update<T>(M, K, P, B, [A, K](int m, int k) { return A[m * K + k]; }, C);
}

// C[k][p] += sum_m A[m][k] * D[m][p]   (A is M x K, D is M x P, C is K x P)
template <typename T>
void gemm_tn_acc(int M, int K, size_t P, const T* A, const T* D, T* C) {
  detail::rank_update<T>(K, M, P, D, [A, K](int k, int m) { return A[m * K + k]; }, C);
}

// C[m][k] += sum_p D[m][p] * B[k][p]   (D is M x P, B is K x P, C is M x K)
template <typename T>
void gemm_nt_acc(int M, int K, size_t P, const T* D, const T* B, T* C) {
  using simd::V;
  constexpr int L = simd::Vec<T>::kLanes;
  constexpr int BM = 4, BK = 4;
  const size_t PV = (P + L - 1) / L * L;
  // Zero-padded copies so every row is a whole number of vectors.
  std::vector<T> dp(static_cast<size_t>(M) * PV, T(0)), bp(static_cast<size_t>(K) * PV, T(0));
  for (int m = 0; m < M; ++m) std::copy_n(D + m * P, P, dp.data() + m * PV);
  for (int k = 0; k < K; ++k) std::copy_n(B + k * P, P, bp.data() + k * PV);
  auto reduce = [](V<T> v) {
    T s = 0;
    for (int l = 0; l < L; ++l) s += v[l];
    return s;
  };
  auto block = [&]<int RM, int RK>(int m0, int k0) {
    V<T> acc[RM][RK] = {};
    for (size_t p = 0; p < PV; p += L) {
      V<T> d[RM], b[RK];
      for (int i = 0; i < RM; ++i) d[i] = simd::load(dp.data() + (m0 + i) * PV + p);
      for (int j = 0; j < RK; ++j) b[j] = simd::load(bp.data() + (k0 + j) * PV + p);
      for (int i = 0; i < RM; ++i)
        for (int j = 0; j < RK; ++j) acc[i][j] += d[i] * b[j];
    }
    for (int i = 0; i < RM; ++i)
      for (int j = 0; j < RK; ++j) C[(m0 + i) * K + k0 + j] += reduce(acc[i][j]);
  };
  for (int m = 0; m < M; m += BM) {
    for (int k = 0; k < K; k += BK) {
      if (m + BM <= M && k + BK <= K) {
        block.template operator()<BM, BK>(m, k);
      } else {
        for (int i = m; i < std::min(M, m + BM); ++i)
          for (int j = k; j < std::min(K, k + BK); ++j) block.template operator()<1, 1>(i, j);
      }
    }
  }
}

// Unfolds a C x H x W plane into (C*9) x (H*W) columns for a 3x3 "same"
// convolution with zero padding. Row index = (c*3 + ky)*3 + kx.
template <typename T>
void im2col3(const T* x, int C, int H, int W, T* col) {
  const size_t P = static_cast<size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + ((c * 3 + ky) * 3 + kx) * P;
        const T* src = x + c * P;
        const int dy = ky - 1, dx = kx - 1;
        for (int y = 0; y < H; ++y) {
          T* row = dst + static_cast<size_t>(y) * W;
          const int sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(row, row + W, T(0));
            continue;
          }
          const T* srow = src + static_cast<size_t>(sy) * W;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int xx = 0; xx < x0; ++xx) row[xx] = T(0);
          for (int xx = x0; xx < x1; ++xx) row[xx] = srow[xx + dx];
          for (int xx = x1; xx < W; ++xx) row[xx] = T(0);
        }
      }
}

// Adjoint of im2col3: scatters column gradients back into the plane.
template <typename T>
void col2im3_acc(const T* col, int C, int H, int W, T* dx) {
  const size_t P = static_cast<size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + ((c * 3 + ky) * 3 + kx) * P;
        T* dst = dx + c * P;
        const int dy = ky - 1, ddx = kx - 1;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* row = src + static_cast<size_t>(y) * W;
          T* drow = dst + static_cast<size_t>(sy) * W;
          const int x0 = std::max(0, -ddx), x1 = std::min(W, W - ddx);
          for (int xx = x0; xx < x1; ++xx) drow[xx + ddx] += row[xx];
        }
      }
}

namespace detail {

// Lane-wise fast_exp(float); identical arithmetic to the scalar version.
inline simd::V<float> exp_lanes(simd::V<float> x) {
  using VF = simd::V<float>;
  typedef int32_t VI __attribute__((vector_size(64)));
  const VF lo = VF{} - 87.0f, hi = VF{} + 88.0f;
  x = x < lo ? lo : x;
  x = x > hi ? hi : x;
  const VF t = x * 1.44269504088896341f;
  const VF kf = (t + 12582912.0f) - 12582912.0f;
  VF r = x - kf * 0.693145751953125f;
  r = r - kf * 1.428606765330187e-06f;
  VF p = VF{} + 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const VI e = (__builtin_convertvector(kf, VI) + 127) << 23;
  VF scale;
  std::memcpy(&scale, &e, sizeof scale);
  return p * scale;
}

inline simd::V<double> exp_lanes(simd::V<double> x) {
  for (int l = 0; l < simd::Vec<double>::kLanes; ++l) x[l] = std::exp(x[l]);
  return x;
}

// Row-wise passes over a C x PV block whose row length PV is a whole number of
// vectors; `mx` and `s` hold PV values each.
template <typename T>
inline void softmax_block(T* x, int C, size_t ld, size_t PV, T* mx, T* s) {
  using VT = simd::V<T>;
  constexpr size_t L = simd::Vec<T>::kLanes;
  std::copy_n(x, PV, mx);
  for (int c = 1; c < C; ++c)
    for (size_t p = 0; p < PV; p += L) {
      const VT v = simd::load(x + c * ld + p), m = simd::load(mx + p);
      simd::store(mx + p, v > m ? v : m);
    }
  std::fill_n(s, PV, T(0));
  for (int c = 0; c < C; ++c)
    for (size_t p = 0; p < PV; p += L) {
      const VT e = exp_lanes(simd::load(x + c * ld + p) - simd::load(mx + p));
      simd::store(x + c * ld + p, e);
      simd::store(s + p, simd::load(s + p) + e);
    }
  for (size_t p = 0; p < PV; p += L) simd::store(s + p, T(1) / simd::load(s + p));
  for (int c = 0; c < C; ++c)
    for (size_t p = 0; p < PV; p += L)
      simd::store(x + c * ld + p, simd::load(x + c * ld + p) * simd::load(s + p));
}

}  // namespace detail

// In-place softmax over the C rows of a C x P block (one distribution per
// column). `scratch` holds at least 2 * P values.
template <typename T>
void softmax_columns(T* x, int C, size_t P, T* scratch) {
  constexpr size_t L = simd::Vec<T>::kLanes;
  const size_t PV = P / L * L;
  if (PV > 0) detail::softmax_block(x, C, P, PV, scratch, scratch + P);
  if (PV < P) {
    const size_t w = P - PV;
    std::vector<T> pad(static_cast<size_t>(C) * L, T(0)), ms(2 * L);
    for (int c = 0; c < C; ++c) std::copy_n(x + c * P + PV, w, pad.data() + c * L);
    detail::softmax_block(pad.data(), C, L, L, ms.data(), ms.data() + L);
    for (int c = 0; c < C; ++c) std::copy_n(pad.data() + c * L, w, x + c * P + PV);
  }
}

}  // namespace lcfd::nn::kernels
