#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "convit/ops.hpp"

namespace convit {

// Convolution parameters. Kernel layout [kh,kw,c_in,c_out] flattens row-major
// to the [kh*kw*c_in, c_out] matrix the im2col product expects.
template <typename S>
struct ConvParams {
  Tensor<S> kernel;
  Tensor<S> bias;
  int stride = 1;
  int padding = 0;
};

enum class PoolKind { Max, Avg };
enum class NormMode { Train, Eval };

// Shared by layer-norm (gamma/beta/eps only) and batch-norm (all fields).
template <typename S>
struct NormParams {
  Tensor<S> gamma;
  Tensor<S> beta;
  Tensor<S> running_mean;  // batch-norm only
  Tensor<S> running_var;   // batch-norm only
  double momentum = 0.1;
  double eps = 1e-5;
  NormMode mode = NormMode::Train;
};

template <typename S>
NormParams<S> make_layer_norm(int channels, double eps = 1e-6) {
  NormParams<S> p;
  p.gamma = Tensor<S>::ones({channels});
  p.beta = Tensor<S>::zeros({channels});
  p.eps = eps;
  return p;
}

template <typename S>
NormParams<S> make_batch_norm(int channels, double momentum = 0.1, double eps = 1e-5) {
  NormParams<S> p;
  p.gamma = Tensor<S>::ones({channels});
  p.beta = Tensor<S>::zeros({channels});
  p.running_mean = Tensor<S>::zeros({channels});
  p.running_var = Tensor<S>::ones({channels});
  p.momentum = momentum;
  p.eps = eps;
  return p;
}

namespace detail {

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// Cross-correlation with symmetric zero padding plus bias.
// x: [B,H,W,Cin], kernel: [kh,kw,Cin,Cout] -> [B,Ho,Wo,Cout].
template <typename S>
FeatureMap<S> conv2d(const FeatureMap<S>& x, const ConvParams<S>& p) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,H,W,C], got " + shape_str(x.shape()));
  if (p.kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be [kh,kw,c_in,c_out], got " + shape_str(p.kernel.shape()));
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const int kh = p.kernel.dim(0), kw = p.kernel.dim(1);
  const int kcin = p.kernel.dim(2), Cout = p.kernel.dim(3);
  if (kcin != Cin)
    throw ShapeError("conv2d: input has " + std::to_string(Cin) + " channels, kernel expects " +
                     std::to_string(kcin));
  if (p.bias.rank() != 1 || p.bias.dim(0) != Cout)
    throw ShapeError("conv2d: bias must be [c_out]");
  if (p.stride < 1 || p.padding < 0) throw ConfigError("conv2d: stride >= 1, padding >= 0");
  const int Ho = detail::conv_out_dim(H, kh, p.stride, p.padding);
  const int Wo = detail::conv_out_dim(W, kw, p.stride, p.padding);
  if (Ho < 1 || Wo < 1)
    throw ShapeError("conv2d: output dims would be " + std::to_string(Ho) + "x" + std::to_string(Wo));

  const std::int64_t rows = static_cast<std::int64_t>(B) * Ho * Wo;
  const std::int64_t K = static_cast<std::int64_t>(kh) * kw * Cin;
  auto cols = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows * K), S(0));

  const auto& xv = x.value();
  std::int64_t row = 0;
  for (int b = 0; b < B; ++b) {
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox, ++row) {
        S* dst = cols->data() + row * K;
        const int y0 = oy * p.stride - p.padding;
        const int x0 = ox * p.stride - p.padding;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = y0 + ky;
          if (iy < 0 || iy >= H) continue;  // stays zero (padding)
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = x0 + kx;
            if (ix < 0 || ix >= W) continue;
            const S* src = xv.data() +
                           ((static_cast<std::int64_t>(b) * H + iy) * W + ix) * Cin;
            S* cell = dst + (static_cast<std::int64_t>(ky) * kw + kx) * Cin;
            for (int c = 0; c < Cin; ++c) cell[c] = src[c];
          }
        }
      }
    }
  }

  std::vector<S> out(static_cast<std::size_t>(rows * Cout));
  detail::gemm_nn(cols->data(), p.kernel.value().data(), out.data(), static_cast<int>(rows),
                  static_cast<int>(K), Cout, false);
  const auto& bias = p.bias.value();
  for (std::int64_t r = 0; r < rows; ++r) {
    S* orow = out.data() + r * Cout;
    for (int c = 0; c < Cout; ++c) orow[c] += bias[static_cast<std::size_t>(c)];
  }

  Tensor<S> result({B, Ho, Wo, Cout}, std::move(out));
  if (detail::want_record<S>({&x, &p.kernel, &p.bias})) {
    result.set_requires_grad(true);
    auto xn = x.node(), kn = p.kernel.node(), bn = p.bias.node(), on = result.node();
    const int stride = p.stride, pad = p.padding;
    active_tape<S>()->record(on, [xn, kn, bn, on, cols, B, H, W, Cin, kh, kw, Cout, Ho, Wo, K,
                                  rows, stride, pad]() {
      const auto& g = on->grad;
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          const S* grow = g.data() + r * Cout;
          for (int c = 0; c < Cout; ++c) bn->grad[static_cast<std::size_t>(c)] += grow[c];
        }
      }
      if (kn->requires_grad) {
        kn->ensure_grad();
        detail::gemm_tn_acc(cols->data(), g.data(), kn->grad.data(), static_cast<int>(rows),
                            static_cast<int>(K), Cout);
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        // dcols = g * kernel^T, then scatter-add back through im2col.
        std::vector<S> dcols(static_cast<std::size_t>(rows * K), S(0));
        detail::gemm_nt_acc(g.data(), kn->value.data(), dcols.data(), static_cast<int>(rows),
                            Cout, static_cast<int>(K));
        std::int64_t row = 0;
        for (int b = 0; b < B; ++b) {
          for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox, ++row) {
              const S* src = dcols.data() + row * K;
              const int y0 = oy * stride - pad;
              const int x0 = ox * stride - pad;
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = y0 + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = x0 + kx;
                  if (ix < 0 || ix >= W) continue;
                  S* dst = xn->grad.data() +
                           ((static_cast<std::int64_t>(b) * H + iy) * W + ix) * Cin;
                  const S* cell = src + (static_cast<std::int64_t>(ky) * kw + kx) * Cin;
                  for (int c = 0; c < Cin; ++c) dst[c] += cell[c];
                }
              }
            }
          }
        }
      }
    });
  }
  return result;
}

// Per-window max or mean over each channel; no padding.
template <typename S>
FeatureMap<S> pool2d(const FeatureMap<S>& x, PoolKind kind, int k, int stride) {
  if (x.rank() != 4) throw ShapeError("pool2d: input must be [B,H,W,C]");
  if (k < 1 || stride < 1) throw ConfigError("pool2d: k and stride must be >= 1");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (k > H || k > W)
    throw ShapeError("pool2d: window " + std::to_string(k) + " exceeds input " +
                     std::to_string(H) + "x" + std::to_string(W));
  const int Ho = (H - k) / stride + 1;
  const int Wo = (W - k) / stride + 1;

  const auto& xv = x.value();
  const std::int64_t onum = static_cast<std::int64_t>(B) * Ho * Wo * C;
  std::vector<S> out(static_cast<std::size_t>(onum));
  // For max: flat input index of each selected element (first max wins).
  auto argmax = kind == PoolKind::Max
                    ? std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(onum))
                    : nullptr;

  std::int64_t o = 0;
  for (int b = 0; b < B; ++b) {
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        for (int c = 0; c < C; ++c, ++o) {
          const int y0 = oy * stride, x0 = ox * stride;
          if (kind == PoolKind::Max) {
            std::int64_t best_idx =
                ((static_cast<std::int64_t>(b) * H + y0) * W + x0) * C + c;
            S best = xv[static_cast<std::size_t>(best_idx)];
            for (int dy = 0; dy < k; ++dy) {
              for (int dx = 0; dx < k; ++dx) {
                const std::int64_t idx =
                    ((static_cast<std::int64_t>(b) * H + y0 + dy) * W + x0 + dx) * C + c;
                const S v = xv[static_cast<std::size_t>(idx)];
                if (v > best) {
                  best = v;
                  best_idx = idx;
                }
              }
            }
            out[static_cast<std::size_t>(o)] = best;
            (*argmax)[static_cast<std::size_t>(o)] = best_idx;
          } else {
            S acc = 0;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                acc += xv[static_cast<std::size_t>(
                    ((static_cast<std::int64_t>(b) * H + y0 + dy) * W + x0 + dx) * C + c)];
            out[static_cast<std::size_t>(o)] = acc / static_cast<S>(k * k);
          }
        }
      }
    }
  }

  Tensor<S> result({B, Ho, Wo, C}, std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    if (kind == PoolKind::Max) {
      active_tape<S>()->record(on, [xn, on, argmax]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          xn->grad[static_cast<std::size_t>((*argmax)[i])] += on->grad[i];
      });
    } else {
      active_tape<S>()->record(on, [xn, on, B, H, W, C, Ho, Wo, k, stride]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const S inv = S(1) / static_cast<S>(k * k);
        std::int64_t o = 0;
        for (int b = 0; b < B; ++b)
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox)
              for (int c = 0; c < C; ++c, ++o) {
                const S g = on->grad[static_cast<std::size_t>(o)] * inv;
                for (int dy = 0; dy < k; ++dy)
                  for (int dx = 0; dx < k; ++dx)
                    xn->grad[static_cast<std::size_t>(
                        ((static_cast<std::int64_t>(b) * H + oy * stride + dy) * W + ox * stride +
                         dx) *
                            C +
                        c)] += g;
              }
      });
    }
  }
  return result;
}

// Normalizes the last axis to zero mean / unit variance, then applies
// gamma/beta. Works on any rank >= 1.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const NormParams<S>& p) {
  const int C = x.dim(x.rank() - 1);
  if (p.gamma.numel() != C || p.beta.numel() != C)
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(C) + " entries");
  if (p.eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  const std::int64_t vecs = x.numel() / C;

  const auto& xv = x.value();
  const auto& gv = p.gamma.value();
  const auto& bv = p.beta.value();
  std::vector<S> out(xv.size());
  auto xhat = std::make_shared<std::vector<S>>(xv.size());
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(vecs));

  for (std::int64_t v = 0; v < vecs; ++v) {
    const S* row = xv.data() + v * C;
    S mu = 0;
    for (int c = 0; c < C; ++c) mu += row[c];
    mu /= static_cast<S>(C);
    S var = 0;
    for (int c = 0; c < C; ++c) {
      const S d = row[c] - mu;
      var += d * d;
    }
    var /= static_cast<S>(C);
    const S istd = S(1) / std::sqrt(var + static_cast<S>(p.eps));
    (*inv_std)[static_cast<std::size_t>(v)] = istd;
    S* hrow = xhat->data() + v * C;
    S* orow = out.data() + v * C;
    for (int c = 0; c < C; ++c) {
      hrow[c] = (row[c] - mu) * istd;
      orow[c] = gv[static_cast<std::size_t>(c)] * hrow[c] + bv[static_cast<std::size_t>(c)];
    }
  }

  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x, &p.gamma, &p.beta})) {
    result.set_requires_grad(true);
    auto xn = x.node(), gn = p.gamma.node(), bn = p.beta.node(), on = result.node();
    active_tape<S>()->record(on, [xn, gn, bn, on, xhat, inv_std, vecs, C]() {
      const auto& g = on->grad;
      const bool gx = xn->requires_grad, gg = gn->requires_grad, gb = bn->requires_grad;
      if (gx) xn->ensure_grad();
      if (gg) gn->ensure_grad();
      if (gb) bn->ensure_grad();
      for (std::int64_t v = 0; v < vecs; ++v) {
        const S* grow = g.data() + v * C;
        const S* hrow = xhat->data() + v * C;
        const S istd = (*inv_std)[static_cast<std::size_t>(v)];
        if (gg || gb) {
          for (int c = 0; c < C; ++c) {
            if (gg) gn->grad[static_cast<std::size_t>(c)] += grow[c] * hrow[c];
            if (gb) bn->grad[static_cast<std::size_t>(c)] += grow[c];
          }
        }
        if (gx) {
          // dxhat = g*gamma; dx = istd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
          S m1 = 0, m2 = 0;
          for (int c = 0; c < C; ++c) {
            const S dh = grow[c] * gn->value[static_cast<std::size_t>(c)];
            m1 += dh;
            m2 += dh * hrow[c];
          }
          m1 /= static_cast<S>(C);
          m2 /= static_cast<S>(C);
          S* xrow = xn->grad.data() + v * C;
          for (int c = 0; c < C; ++c) {
            const S dh = grow[c] * gn->value[static_cast<std::size_t>(c)];
            xrow[c] += istd * (dh - m1 - hrow[c] * m2);
          }
        }
      }
    });
  }
  return result;
}

// Batch normalization over B,H,W per channel. Train mode uses batch
// statistics (biased variance) and updates running stats in place at forward
// time; eval mode is a pure affine map from the stored running stats.
template <typename S>
FeatureMap<S> batch_norm2d(const FeatureMap<S>& x, NormParams<S>& p) {
  if (x.rank() != 4) throw ShapeError("batch_norm2d: input must be [B,H,W,C]");
  const int C = x.dim(3);
  if (p.gamma.numel() != C || p.beta.numel() != C || !p.running_mean.valid() ||
      p.running_mean.numel() != C || p.running_var.numel() != C)
    throw ShapeError("batch_norm2d: params must carry 4 per-channel vectors of length " +
                     std::to_string(C));
  if (p.eps <= 0.0) throw ConfigError("batch_norm2d: eps must be positive");
  const std::int64_t N = x.numel() / C;

  const auto& xv = x.value();
  const auto& gv = p.gamma.value();
  const auto& bv = p.beta.value();
  std::vector<S> out(xv.size());

  if (p.mode == NormMode::Eval) {
    const auto& rm = p.running_mean.value();
    const auto& rv = p.running_var.value();
    std::vector<S> sc(static_cast<std::size_t>(C)), sh(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      sc[uc] = gv[uc] / std::sqrt(rv[uc] + static_cast<S>(p.eps));
      sh[uc] = bv[uc] - sc[uc] * rm[uc];
    }
    for (std::int64_t i = 0; i < N; ++i) {
      const S* row = xv.data() + i * C;
      S* orow = out.data() + i * C;
      for (int c = 0; c < C; ++c)
        orow[c] = sc[static_cast<std::size_t>(c)] * row[c] + sh[static_cast<std::size_t>(c)];
    }
    Tensor<S> result(x.shape(), std::move(out));
    if (detail::want_record<S>({&x, &p.gamma, &p.beta})) {
      result.set_requires_grad(true);
      auto xn = x.node(), gn = p.gamma.node(), bn = p.beta.node(), on = result.node();
      auto scale_vec = std::make_shared<std::vector<S>>(sc);
      auto rm_copy = std::make_shared<std::vector<S>>(rm);
      auto rv_copy = std::make_shared<std::vector<S>>(rv);
      const double eps = p.eps;
      active_tape<S>()->record(on, [xn, gn, bn, on, scale_vec, rm_copy, rv_copy, eps, N, C]() {
        const auto& g = on->grad;
        const bool gx = xn->requires_grad, gg = gn->requires_grad, gb = bn->requires_grad;
        if (gx) xn->ensure_grad();
        if (gg) gn->ensure_grad();
        if (gb) bn->ensure_grad();
        for (std::int64_t i = 0; i < N; ++i) {
          const S* grow = g.data() + i * C;
          const S* xrow = xn->value.data() + i * C;
          for (int c = 0; c < C; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            if (gx) xn->grad[static_cast<std::size_t>(i * C + c)] += grow[c] * (*scale_vec)[uc];
            if (gg)
              gn->grad[uc] += grow[c] * (xrow[c] - (*rm_copy)[uc]) /
                              std::sqrt((*rv_copy)[uc] + static_cast<S>(eps));
            if (gb) bn->grad[uc] += grow[c];
          }
        }
      });
    }
    return result;
  }

  // Train mode.
  if (N < 2) throw ContractError("batch_norm2d: train mode needs B*H*W >= 2, got a degenerate batch");
  std::vector<S> mu(static_cast<std::size_t>(C), S(0)), var(static_cast<std::size_t>(C), S(0));
  for (std::int64_t i = 0; i < N; ++i) {
    const S* row = xv.data() + i * C;
    for (int c = 0; c < C; ++c) mu[static_cast<std::size_t>(c)] += row[c];
  }
  for (int c = 0; c < C; ++c) mu[static_cast<std::size_t>(c)] /= static_cast<S>(N);
  for (std::int64_t i = 0; i < N; ++i) {
    const S* row = xv.data() + i * C;
    for (int c = 0; c < C; ++c) {
      const S d = row[c] - mu[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] += d * d;
    }
  }
  for (int c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= static_cast<S>(N);

  // Running-stat update: running = (1-m)*old + m*batch.
  {
    auto& rm = p.running_mean.value();
    auto& rv = p.running_var.value();
    const S m = static_cast<S>(p.momentum);
    for (int c = 0; c < C; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      rm[uc] = (S(1) - m) * rm[uc] + m * mu[uc];
      rv[uc] = (S(1) - m) * rv[uc] + m * var[uc];
    }
  }

  auto xhat = std::make_shared<std::vector<S>>(xv.size());
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c)
    (*inv_std)[static_cast<std::size_t>(c)] =
        S(1) / std::sqrt(var[static_cast<std::size_t>(c)] + static_cast<S>(p.eps));
  for (std::int64_t i = 0; i < N; ++i) {
    const S* row = xv.data() + i * C;
    S* hrow = xhat->data() + i * C;
    S* orow = out.data() + i * C;
    for (int c = 0; c < C; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      hrow[c] = (row[c] - mu[uc]) * (*inv_std)[uc];
      orow[c] = gv[uc] * hrow[c] + bv[uc];
    }
  }

  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x, &p.gamma, &p.beta})) {
    result.set_requires_grad(true);
    auto xn = x.node(), gn = p.gamma.node(), bn = p.beta.node(), on = result.node();
    active_tape<S>()->record(on, [xn, gn, bn, on, xhat, inv_std, N, C]() {
      const auto& g = on->grad;
      const bool gx = xn->requires_grad, gg = gn->requires_grad, gb = bn->requires_grad;
      if (gx) xn->ensure_grad();
      if (gg) gn->ensure_grad();
      if (gb) bn->ensure_grad();
      // Per channel: dx = istd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)).
      std::vector<S> m1(static_cast<std::size_t>(C), S(0)), m2(static_cast<std::size_t>(C), S(0));
      for (std::int64_t i = 0; i < N; ++i) {
        const S* grow = g.data() + i * C;
        const S* hrow = xhat->data() + i * C;
        for (int c = 0; c < C; ++c) {
          const auto uc = static_cast<std::size_t>(c);
          const S dh = grow[c] * gn->value[uc];
          m1[uc] += dh;
          m2[uc] += dh * hrow[c];
          if (gg) gn->grad[uc] += grow[c] * hrow[c];
          if (gb) bn->grad[uc] += grow[c];
        }
      }
      if (!gx) return;
      for (int c = 0; c < C; ++c) {
        m1[static_cast<std::size_t>(c)] /= static_cast<S>(N);
        m2[static_cast<std::size_t>(c)] /= static_cast<S>(N);
      }
      for (std::int64_t i = 0; i < N; ++i) {
        const S* grow = g.data() + i * C;
        const S* hrow = xhat->data() + i * C;
        S* xrow = xn->grad.data() + i * C;
        for (int c = 0; c < C; ++c) {
          const auto uc = static_cast<std::size_t>(c);
          const S dh = grow[c] * gn->value[uc];
          xrow[c] += (*inv_std)[uc] * (dh - m1[uc] - hrow[c] * m2[uc]);
        }
      }
    });
  }
  return result;
}

// Affine map along the last axis: y = x W + b. Rank-1 inputs are treated as
// a single row.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& W, const Tensor<S>& b) {
  if (W.rank() != 2) throw ShapeError("linear: W must be [d_in,d_out]");
  if (b.rank() != 1 || b.dim(0) != W.dim(1)) throw ShapeError("linear: b must be [d_out]");
  if (x.dim(x.rank() - 1) != W.dim(0))
    throw ShapeError("linear: trailing dim " + std::to_string(x.dim(x.rank() - 1)) +
                     " != d_in " + std::to_string(W.dim(0)));
  if (x.rank() == 1) {
    auto y = add(matmul(reshape(x, {1, x.dim(0)}), W), b);
    return reshape(y, {W.dim(1)});
  }
  return add(matmul(x, W), b);
}

// Mean over all spatial positions per channel: [B,H,W,C] -> [B,C].
template <typename S>
Tensor<S> global_avg_pool(const FeatureMap<S>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: input must be [B,H,W,C]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  const auto& xv = x.value();
  std::vector<S> out(static_cast<std::size_t>(B) * C, S(0));
  for (int b = 0; b < B; ++b) {
    const S* base = xv.data() + static_cast<std::int64_t>(b) * hw * C;
    S* orow = out.data() + static_cast<std::int64_t>(b) * C;
    for (std::int64_t i = 0; i < hw; ++i)
      for (int c = 0; c < C; ++c) orow[c] += base[i * C + c];
    for (int c = 0; c < C; ++c) orow[c] /= static_cast<S>(hw);
  }
  Tensor<S> result({B, C}, std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on, B, C, hw]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const S inv = S(1) / static_cast<S>(hw);
      for (int b = 0; b < B; ++b) {
        const S* grow = on->grad.data() + static_cast<std::int64_t>(b) * C;
        S* base = xn->grad.data() + static_cast<std::int64_t>(b) * hw * C;
        for (std::int64_t i = 0; i < hw; ++i)
          for (int c = 0; c < C; ++c) base[i * C + c] += grow[c] * inv;
      }
    });
  }
  return result;
}

}  // namespace convit
