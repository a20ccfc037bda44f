#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/tensor.hpp"
#include "seizdet/rng.hpp"

// Raw kernels behind the layers. All reductions run in a fixed order so a
// given build produces bit-identical results run to run.
namespace seizdet::nn::kernels {

inline constexpr std::size_t kLanes = 16;

template <typename T>
inline T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  T sum{0};
  for (std::size_t l = 0; l < kLanes; ++l) sum += acc[l];
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

template <typename T>
inline void axpy(T alpha, const T* __restrict x, T* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Sum of n values with lane-parallel double accumulators, fixed order.
template <typename T>
inline double sum(const T* x, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += static_cast<double>(x[i + l]);
  double s = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; i < n; ++i) s += static_cast<double>(x[i]);
  return s;
}

// Sum of (x - centre)^2, same accumulation scheme.
template <typename T>
inline double sum_sq_dev(const T* x, std::size_t n, double centre) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = static_cast<double>(x[i + l]) - centre;
      acc[l] += d * d;
    }
  double s = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - centre;
    s += d * d;
  }
  return s;
}

// Sum of a[i] * b[i] in double lanes.
template <typename T>
inline double sum_prod(const T* a, const T* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
  double s = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

namespace detail {

// Blocked valid correlation; requires (L - k + 1) % kLanes == 0. Each block
// keeps kLanes output times of four filters in registers.
template <typename T>
void conv_valid_blocked(const T* __restrict x, std::size_t C, std::size_t L, const T* __restrict w, const T* bias,
                        std::size_t K, std::size_t k, T* __restrict y) {
  const std::size_t Lout = L - k + 1;
  std::size_t o = 0;
  for (; o + 4 <= K; o += 4) {
    const T* w0 = w + (o + 0) * C * k;
    const T* w1 = w + (o + 1) * C * k;
    const T* w2 = w + (o + 2) * C * k;
    const T* w3 = w + (o + 3) * C * k;
    for (std::size_t t0 = 0; t0 < Lout; t0 += kLanes) {
      T a0[kLanes], a1[kLanes], a2[kLanes], a3[kLanes];
      for (std::size_t l = 0; l < kLanes; ++l) {
        a0[l] = bias ? bias[o] : T{0};
        a1[l] = bias ? bias[o + 1] : T{0};
        a2[l] = bias ? bias[o + 2] : T{0};
        a3[l] = bias ? bias[o + 3] : T{0};
      }
      for (std::size_t c = 0; c < C; ++c) {
        const T* xr = x + c * L + t0;
        for (std::size_t j = 0; j < k; ++j) {
          const T* xp = xr + j;
          const T v0 = w0[c * k + j], v1 = w1[c * k + j], v2 = w2[c * k + j], v3 = w3[c * k + j];
          for (std::size_t l = 0; l < kLanes; ++l) {
            const T xv = xp[l];
            a0[l] += v0 * xv;
            a1[l] += v1 * xv;
            a2[l] += v2 * xv;
            a3[l] += v3 * xv;
          }
        }
      }
      for (std::size_t l = 0; l < kLanes; ++l) {
        y[(o + 0) * Lout + t0 + l] = a0[l];
        y[(o + 1) * Lout + t0 + l] = a1[l];
        y[(o + 2) * Lout + t0 + l] = a2[l];
        y[(o + 3) * Lout + t0 + l] = a3[l];
      }
    }
  }
  for (; o < K; ++o) {
    const T* wo = w + o * C * k;
    for (std::size_t t0 = 0; t0 < Lout; t0 += kLanes) {
      T a[kLanes];
      for (std::size_t l = 0; l < kLanes; ++l) a[l] = bias ? bias[o] : T{0};
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const T v = wo[c * k + j];
          const T* xp = x + c * L + t0 + j;
          for (std::size_t l = 0; l < kLanes; ++l) a[l] += v * xp[l];
        }
      for (std::size_t l = 0; l < kLanes; ++l) y[o * Lout + t0 + l] = a[l];
    }
  }
}

}  // namespace detail

// Valid cross-correlation of one sample: x [C x L], w [K x C x k] -> y [K x (L-k+1)].
// Output lengths that are not a lane multiple run on a zero-padded copy.
template <typename T>
void conv_valid(const T* __restrict x, std::size_t C, std::size_t L, const T* __restrict w, const T* bias, std::size_t K,
                std::size_t k, T* __restrict y) {
  const std::size_t Lout = L - k + 1;
  if (Lout % kLanes == 0) {
    detail::conv_valid_blocked(x, C, L, w, bias, K, k, y);
    return;
  }
  const std::size_t Lup = Lout + (kLanes - Lout % kLanes);
  const std::size_t Lp = Lup + k - 1;
  thread_local std::vector<T> xpad, ypad;
  xpad.assign(C * Lp, T{0});
  ypad.resize(K * Lup);
  for (std::size_t c = 0; c < C; ++c) std::copy_n(x + c * L, L, xpad.begin() + static_cast<std::ptrdiff_t>(c * Lp));
  detail::conv_valid_blocked(xpad.data(), C, Lp, w, bias, K, k, ypad.data());
  for (std::size_t o = 0; o < K; ++o) std::copy_n(ypad.begin() + static_cast<std::ptrdiff_t>(o * Lup), Lout, y + o * Lout);
}

// gw[o, c, j] += sum_t gy[o, t] * x[c, t + j] for one sample. The input is
// unrolled into cols[t, (c, j)] so the reduction over t becomes a register
// tiled 4 x kLanes outer-product update.
template <typename T>
void conv_weight_grad(const T* __restrict x, std::size_t C, std::size_t L, const T* __restrict gy, std::size_t K,
                      std::size_t k, T* __restrict gw) {
  const std::size_t Lout = L - k + 1;
  const std::size_t Q = C * k;
  const std::size_t Qp = Q % kLanes ? Q + (kLanes - Q % kLanes) : Q;
  thread_local std::vector<T> cols;
  cols.assign(Lout * Qp, T{0});
  for (std::size_t t = 0; t < Lout; ++t)
    for (std::size_t c = 0; c < C; ++c) std::copy_n(x + c * L + t, k, cols.begin() + static_cast<std::ptrdiff_t>(t * Qp + c * k));
  std::size_t o = 0;
  for (; o + 4 <= K; o += 4) {
    const T* g0 = gy + (o + 0) * Lout;
    const T* g1 = gy + (o + 1) * Lout;
    const T* g2 = gy + (o + 2) * Lout;
    const T* g3 = gy + (o + 3) * Lout;
    for (std::size_t q0 = 0; q0 < Qp; q0 += kLanes) {
      T a0[kLanes] = {}, a1[kLanes] = {}, a2[kLanes] = {}, a3[kLanes] = {};
      for (std::size_t t = 0; t < Lout; ++t) {
        const T* cr = cols.data() + t * Qp + q0;
        const T v0 = g0[t], v1 = g1[t], v2 = g2[t], v3 = g3[t];
        for (std::size_t l = 0; l < kLanes; ++l) {
          const T cv = cr[l];
          a0[l] += v0 * cv;
          a1[l] += v1 * cv;
          a2[l] += v2 * cv;
          a3[l] += v3 * cv;
        }
      }
      const std::size_t n = std::min(kLanes, Q - q0);
      for (std::size_t l = 0; l < n; ++l) {
        gw[(o + 0) * Q + q0 + l] += a0[l];
        gw[(o + 1) * Q + q0 + l] += a1[l];
        gw[(o + 2) * Q + q0 + l] += a2[l];
        gw[(o + 3) * Q + q0 + l] += a3[l];
      }
    }
  }
  for (; o < K; ++o) {
    const T* g = gy + o * Lout;
    for (std::size_t q0 = 0; q0 < Qp; q0 += kLanes) {
      T a[kLanes] = {};
      for (std::size_t t = 0; t < Lout; ++t) {
        const T* cr = cols.data() + t * Qp + q0;
        for (std::size_t l = 0; l < kLanes; ++l) a[l] += g[t] * cr[l];
      }
      const std::size_t n = std::min(kLanes, Q - q0);
      for (std::size_t l = 0; l < n; ++l) gw[o * Q + q0 + l] += a[l];
    }
  }
}

}  // namespace seizdet::nn::kernels

namespace seizdet::nn {

enum class Mode { train, infer };

namespace detail {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* op) {
  if (t.rank() != r)
    throw ContractError(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " + shape_string(t.shape()));
}

// Views a [C x L] tensor as a batch of one.
template <typename T>
Tensor<T> as_batch3(const Tensor<T>& t, const char* op) {
  if (t.rank() == 2) return t.reshaped({1, t.dim(0), t.dim(1)});
  require_rank(t, 3, op);
  return t;
}

}  // namespace detail

// input [C x L] or [B x C x L]; weights [K x C x k]; bias [K].
template <typename T>
Tensor<T> conv_time_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const bool single = input.rank() == 2;
  const Tensor<T> x = detail::as_batch3(input, "conv_time_forward");
  detail::require_rank(weights, 3, "conv_time_forward");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t K = weights.dim(0), k = weights.dim(2);
  if (weights.dim(1) != C) throw ContractError("conv_time_forward: weight channels do not match input channels");
  if (bias.size() != K) throw ContractError("conv_time_forward: bias length must equal filter count");
  if (L < k) throw ContractError("conv_time_forward: input length " + std::to_string(L) + " shorter than kernel " + std::to_string(k));
  const std::size_t Lout = L - k + 1;
  Tensor<T> y({B, K, Lout});
  for (std::size_t b = 0; b < B; ++b)
    kernels::conv_valid(x.data() + b * C * L, C, L, weights.data(), bias.data(), K, k, y.data() + b * K * Lout);
  if (single) return std::move(y).reshaped({K, Lout});
  return y;
}

// Width-2 stride-2 max over time; a trailing odd sample is dropped. The
// second result holds, per output, the flat input index of the winner.
template <typename T>
std::pair<Tensor<T>, std::vector<std::size_t>> maxpool_time_forward(const Tensor<T>& input) {
  if (input.rank() < 2) throw ContractError("maxpool_time_forward: expected [.. x L] input");
  const std::size_t L = input.dim(input.rank() - 1);
  if (L < 2) throw ContractError("maxpool_time_forward: input length must be >= 2");
  const std::size_t rows = input.size() / L, Lout = L / 2;
  Shape out_shape = input.shape();
  out_shape.back() = Lout;
  Tensor<T> y(out_shape);
  std::vector<std::size_t> argmax(rows * Lout);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data() + r * L;
    for (std::size_t i = 0; i < Lout; ++i) {
      const std::size_t a = 2 * i, b = 2 * i + 1;
      const std::size_t win = x[b] > x[a] ? b : a;
      y[r * Lout + i] = x[win];
      argmax[r * Lout + i] = r * L + win;
    }
  }
  return {std::move(y), std::move(argmax)};
}

// Inverted dropout. The mask holds 0 or 1/(1-rate) per unit.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> dropout_forward(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout_forward: rate must be in [0, 1)");
  Tensor<T> mask(input.shape(), T{1});
  if (mode == Mode::train && rate > 0.0) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    // Two 32-bit decisions per 64-bit draw.
    const auto threshold = static_cast<std::uint64_t>(rate * 4294967296.0);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (i % 2 == 0) bits = rng();
      const std::uint64_t u = i % 2 == 0 ? (bits & 0xffffffffULL) : (bits >> 32);
      mask[i] = u < threshold ? T{0} : keep_scale;
    }
  }
  Tensor<T> y = input;
  if (mode == Mode::train && rate > 0.0)
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return {std::move(y), std::move(mask)};
}

// input [d] or [B x d]; weights [u x d]; bias [u].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  detail::require_rank(weights, 2, "dense_forward");
  const std::size_t u = weights.dim(0), d = weights.dim(1);
  if (bias.size() != u) throw ContractError("dense_forward: bias length must equal unit count");
  if (input.size() == 0 || input.dim(input.rank() - 1) != d)
    throw ContractError("dense_forward: input width " + (input.rank() ? std::to_string(input.dim(input.rank() - 1)) : "0") +
                        " does not match weights " + shape_string(weights.shape()));
  const std::size_t B = input.size() / d;
  Tensor<T> y(input.rank() == 1 ? Shape{u} : Shape{B, u});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < u; ++i)
      y[b * u + i] = bias[i] + kernels::dot(weights.data() + i * d, input.data() + b * d, d);
  return y;
}

template <typename T>
struct LossAndGrad {
  double loss{0.0};
  Tensor<T> grad;
};

// Mean over the batch of -log softmax(logits)[true class]; grad = (p - y)/B.
template <typename T>
LossAndGrad<T> softmax_ce(const Tensor<T>& logits, const Tensor<T>& labels) {
  detail::require_rank(logits, 2, "softmax_ce");
  if (labels.shape() != logits.shape()) throw ContractError("softmax_ce: labels shape must match logits");
  const std::size_t B = logits.dim(0), n = logits.dim(1);
  LossAndGrad<T> out{0.0, Tensor<T>(logits.shape())};
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits.data() + b * n;
    const T* y = labels.data() + b * n;
    double zmax = z[0];
    for (std::size_t i = 1; i < n; ++i) zmax = std::max<double>(zmax, z[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) denom += std::exp(static_cast<double>(z[i]) - zmax);
    const double log_denom = std::log(denom);
    for (std::size_t i = 0; i < n; ++i) {
      const double log_p = static_cast<double>(z[i]) - zmax - log_denom;
      out.loss -= static_cast<double>(y[i]) * log_p;
      out.grad[b * n + i] = static_cast<T>((std::exp(log_p) - static_cast<double>(y[i])) / static_cast<double>(B));
    }
  }
  out.loss /= static_cast<double>(B);
  return out;
}

}  // namespace seizdet::nn
