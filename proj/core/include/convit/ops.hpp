#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "convit/tape.hpp"
#include "convit/tensor.hpp"

namespace convit {

namespace detail {

// Trailing-axis alignment with size-1 expansion.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int da = i < ra ? a[static_cast<std::size_t>(ra - 1 - i)] : 1;
    const int db = i < rb ? b[static_cast<std::size_t>(rb - 1 - i)] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[static_cast<std::size_t>(r - 1 - i)] = std::max(da, db);
  }
  return out;
}

// Per-output-dim strides of an input under broadcasting (0 on expanded dims).
inline std::vector<std::int64_t> bcast_strides(const Shape& in, const Shape& out) {
  const int r = static_cast<int>(out.size()), ri = static_cast<int>(in.size());
  std::vector<std::int64_t> st(static_cast<std::size_t>(r), 0);
  std::int64_t acc = 1;
  for (int i = 0; i < ri; ++i) {
    const int d = in[static_cast<std::size_t>(ri - 1 - i)];
    st[static_cast<std::size_t>(r - 1 - i)] = (d == 1) ? 0 : acc;
    acc *= d;
  }
  return st;
}

// Odometer walk over `out`, calling f(flat_out, off_a, off_b).
template <class F>
void bcast_walk(const Shape& out, const std::vector<std::int64_t>& sa,
                const std::vector<std::int64_t>& sb, F f) {
  const int r = static_cast<int>(out.size());
  const std::int64_t n = shape_numel(out);
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  std::int64_t offa = 0, offb = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    f(i, offa, offb);
    for (int d = r - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      ++idx[ud];
      offa += sa[ud];
      offb += sb[ud];
      if (idx[ud] < out[ud]) break;
      idx[ud] = 0;
      offa -= sa[ud] * out[ud];
      offb -= sb[ud] * out[ud];
    }
  }
}

template <typename S>
bool want_record(std::initializer_list<const Tensor<S>*> ins) {
  if (!active_tape<S>()) return false;
  for (const Tensor<S>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    S* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, S(0));
    const S* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += G[m,n] * B[k,n]^T
template <typename S>
void gemm_nt_acc(const S* g, const S* b, S* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const S* grow = g + static_cast<std::size_t>(i) * n;
    S* crow = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S* brow = b + static_cast<std::size_t>(p) * n;
      S s = 0;
      for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
      crow[p] += s;
    }
  }
}

// C[k,n] += A[m,k]^T * G[m,n]
template <typename S>
void gemm_tn_acc(const S* a, const S* g, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<std::size_t>(i) * k;
    const S* grow = g + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const S av = arow[p];
      if (av == S(0)) continue;
      S* crow = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise ops with trailing-axis broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { Add, Sub, Mul };

template <typename S>
Tensor<S> binary_op(BinKind kind, const Tensor<S>& a, const Tensor<S>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<S> out(static_cast<std::size_t>(shape_numel(out_shape)));

  const bool same = a.shape() == b.shape();
  if (same) {
    switch (kind) {
      case BinKind::Add:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
        break;
      case BinKind::Sub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
        break;
      case BinKind::Mul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
        break;
    }
  } else {
    const auto sa = bcast_strides(a.shape(), out_shape);
    const auto sb = bcast_strides(b.shape(), out_shape);
    switch (kind) {
      case BinKind::Add:
        bcast_walk(out_shape, sa, sb,
                   [&](std::int64_t i, std::int64_t oa, std::int64_t ob) {
                     out[static_cast<std::size_t>(i)] = av[static_cast<std::size_t>(oa)] +
                                                        bv[static_cast<std::size_t>(ob)];
                   });
        break;
      case BinKind::Sub:
        bcast_walk(out_shape, sa, sb,
                   [&](std::int64_t i, std::int64_t oa, std::int64_t ob) {
                     out[static_cast<std::size_t>(i)] = av[static_cast<std::size_t>(oa)] -
                                                        bv[static_cast<std::size_t>(ob)];
                   });
        break;
      case BinKind::Mul:
        bcast_walk(out_shape, sa, sb,
                   [&](std::int64_t i, std::int64_t oa, std::int64_t ob) {
                     out[static_cast<std::size_t>(i)] = av[static_cast<std::size_t>(oa)] *
                                                        bv[static_cast<std::size_t>(ob)];
                   });
        break;
    }
  }

  Tensor<S> result(out_shape, std::move(out));
  if (want_record<S>({&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = result.node();
    Shape osh = out_shape;
    active_tape<S>()->record(on, [kind, an, bn, on, osh]() {
      const bool ga = an->requires_grad, gb = bn->requires_grad;
      if (ga) an->ensure_grad();
      if (gb) bn->ensure_grad();
      const auto& g = on->grad;
      if (an->shape == bn->shape) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case BinKind::Add:
              if (ga) an->grad[i] += g[i];
              if (gb) bn->grad[i] += g[i];
              break;
            case BinKind::Sub:
              if (ga) an->grad[i] += g[i];
              if (gb) bn->grad[i] -= g[i];
              break;
            case BinKind::Mul:
              if (ga) an->grad[i] += g[i] * bn->value[i];
              if (gb) bn->grad[i] += g[i] * an->value[i];
              break;
          }
        }
        return;
      }
      const auto sa = bcast_strides(an->shape, osh);
      const auto sb = bcast_strides(bn->shape, osh);
      bcast_walk(osh, sa, sb, [&](std::int64_t i, std::int64_t oa, std::int64_t ob) {
        const S gi = g[static_cast<std::size_t>(i)];
        switch (kind) {
          case BinKind::Add:
            if (ga) an->grad[static_cast<std::size_t>(oa)] += gi;
            if (gb) bn->grad[static_cast<std::size_t>(ob)] += gi;
            break;
          case BinKind::Sub:
            if (ga) an->grad[static_cast<std::size_t>(oa)] += gi;
            if (gb) bn->grad[static_cast<std::size_t>(ob)] -= gi;
            break;
          case BinKind::Mul:
            if (ga)
              an->grad[static_cast<std::size_t>(oa)] +=
                  gi * bn->value[static_cast<std::size_t>(ob)];
            if (gb)
              bn->grad[static_cast<std::size_t>(ob)] +=
                  gi * an->value[static_cast<std::size_t>(oa)];
            break;
        }
      });
    });
  }
  return result;
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinKind::Add, a, b);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinKind::Sub, a, b);
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinKind::Mul, a, b);
}

// x * c for a host-side constant.
template <typename S>
Tensor<S> scale(const Tensor<S>& x, double c) {
  const auto& xv = x.value();
  std::vector<S> out(xv.size());
  const S cs = static_cast<S>(c);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * cs;
  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on, cs]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * cs;
    });
  }
  return result;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  const auto& xv = x.value();
  std::vector<S> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (xn->value[i] > S(0)) xn->grad[i] += on->grad[i];
    });
  }
  return result;
}

// Exact-erf GELU: x * 0.5 * (1 + erf(x / sqrt(2))).
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  const auto& xv = x.value();
  std::vector<S> out(xv.size());
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = static_cast<double>(xv[i]);
    out[i] = static_cast<S>(v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)));
  }
  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      constexpr double inv_sqrt2pi = 0.39894228040143267794;
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double v = static_cast<double>(xn->value[i]);
        const double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        xn->grad[i] += on->grad[i] * static_cast<S>(phi + v * pdf);
      }
    });
  }
  return result;
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  const auto& xv = x.value();
  std::vector<S> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * on->value[i];
    });
  }
  return result;
}

enum class EwOp { Add, Sub, Mul, Scale, Relu, Gelu, Exp };

// Dispatcher over the elementwise family; `b` is required for the binary
// kinds, `c` only for Scale.
template <typename S>
Tensor<S> elementwise(EwOp op, const Tensor<S>& a, const Tensor<S>* b = nullptr, double c = 1.0) {
  switch (op) {
    case EwOp::Add:
    case EwOp::Sub:
    case EwOp::Mul:
      if (!b) throw ContractError("elementwise: binary op needs two inputs");
      if (op == EwOp::Add) return add(a, *b);
      if (op == EwOp::Sub) return sub(a, *b);
      return mul(a, *b);
    case EwOp::Scale:
      return scale(a, c);
    case EwOp::Relu:
      return relu(a);
    case EwOp::Gelu:
      return gelu(a);
    case EwOp::Exp:
      return exp(a);
  }
  throw ContractError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Softmax along an axis. Subtracts the per-slice max before exponentiation.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range");
  const auto& sh = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= sh[static_cast<std::size_t>(i)];
  const std::int64_t len = sh[static_cast<std::size_t>(axis)];

  const auto& xv = x.value();
  std::vector<S> out(xv.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      S mx = xv[static_cast<std::size_t>(base)];
      for (std::int64_t j = 1; j < len; ++j)
        mx = std::max(mx, xv[static_cast<std::size_t>(base + j * inner)]);
      S sum = 0;
      for (std::int64_t j = 0; j < len; ++j) {
        const S e = std::exp(xv[static_cast<std::size_t>(base + j * inner)] - mx);
        out[static_cast<std::size_t>(base + j * inner)] = e;
        sum += e;
      }
      const S norm = S(1) / sum;
      for (std::int64_t j = 0; j < len; ++j)
        out[static_cast<std::size_t>(base + j * inner)] *= norm;
    }
  }

  Tensor<S> result(x.shape(), std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on, outer, inner, len]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const auto& s = on->value;
      const auto& g = on->grad;
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * len * inner + in;
          S dot = 0;
          for (std::int64_t j = 0; j < len; ++j) {
            const auto k = static_cast<std::size_t>(base + j * inner);
            dot += g[k] * s[k];
          }
          for (std::int64_t j = 0; j < len; ++j) {
            const auto k = static_cast<std::size_t>(base + j * inner);
            xn->grad[k] += s[k] * (g[k] - dot);
          }
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Matrix multiplication: [m,k]x[k,n]; batched with equal leading dims; or
// rank-N by rank-2 (contraction over the last axis).
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const int ra = a.rank(), rb = b.rank();
  if (ra < 2 || rb < 2) throw ShapeError("matmul: operands must have rank >= 2");
  const auto& ash = a.shape();
  const auto& bsh = b.shape();
  const int k = ash[static_cast<std::size_t>(ra - 1)];
  const int k2 = bsh[static_cast<std::size_t>(rb - 2)];
  if (k != k2)
    throw ShapeError("matmul: inner dims differ, " + shape_str(ash) + " vs " + shape_str(bsh));
  const int n = bsh[static_cast<std::size_t>(rb - 1)];

  std::int64_t batch = 1;
  int m;
  Shape out_shape;
  bool shared_b;
  if (rb == 2) {
    // Contract the last axis of a against b; leading axes of a are batch rows.
    shared_b = true;
    m = static_cast<int>(a.numel() / k);
    out_shape = ash;
    out_shape.back() = n;
  } else {
    if (ra != rb) throw ShapeError("matmul: rank mismatch " + shape_str(ash) + " vs " + shape_str(bsh));
    for (int i = 0; i < ra - 2; ++i)
      if (ash[static_cast<std::size_t>(i)] != bsh[static_cast<std::size_t>(i)])
        throw ShapeError("matmul: batch dims differ, " + shape_str(ash) + " vs " + shape_str(bsh));
    shared_b = false;
    for (int i = 0; i < ra - 2; ++i) batch *= ash[static_cast<std::size_t>(i)];
    m = ash[static_cast<std::size_t>(ra - 2)];
    out_shape = ash;
    out_shape[static_cast<std::size_t>(ra - 1)] = n;
  }

  std::vector<S> out(static_cast<std::size_t>(shared_b ? static_cast<std::int64_t>(m) * n
                                                       : batch * m * n));
  if (shared_b) {
    detail::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  } else {
    const std::int64_t as = static_cast<std::int64_t>(m) * k;
    const std::int64_t bs = static_cast<std::int64_t>(k) * n;
    const std::int64_t os = static_cast<std::int64_t>(m) * n;
    for (std::int64_t t = 0; t < batch; ++t)
      detail::gemm_nn(a.value().data() + t * as, b.value().data() + t * bs, out.data() + t * os,
                      m, k, n, false);
  }

  Tensor<S> result(out_shape, std::move(out));
  if (detail::want_record<S>({&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = result.node();
    active_tape<S>()->record(on, [an, bn, on, m, k, n, batch, shared_b]() {
      const bool ga = an->requires_grad, gb = bn->requires_grad;
      if (ga) an->ensure_grad();
      if (gb) bn->ensure_grad();
      if (shared_b) {
        if (ga) detail::gemm_nt_acc(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
        if (gb) detail::gemm_tn_acc(an->value.data(), on->grad.data(), bn->grad.data(), m, k, n);
        return;
      }
      const std::int64_t as = static_cast<std::int64_t>(m) * k;
      const std::int64_t bs = static_cast<std::int64_t>(k) * n;
      const std::int64_t os = static_cast<std::int64_t>(m) * n;
      for (std::int64_t t = 0; t < batch; ++t) {
        if (ga)
          detail::gemm_nt_acc(on->grad.data() + t * os, bn->value.data() + t * bs,
                              an->grad.data() + t * as, m, n, k);
        if (gb)
          detail::gemm_tn_acc(an->value.data() + t * as, on->grad.data() + t * os,
                              bn->grad.data() + t * bs, m, k, n);
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Layout ops.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                     " changes element count");
  Tensor<S> result(std::move(new_shape), x.value());
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return result;
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)])
      throw ShapeError("permute: invalid axes");
    seen[static_cast<std::size_t>(a)] = true;
  }
  const auto& ish = x.shape();
  Shape osh(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) osh[static_cast<std::size_t>(i)] = ish[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];

  std::vector<std::int64_t> istr(static_cast<std::size_t>(r));
  std::int64_t acc = 1;
  for (int i = r - 1; i >= 0; --i) {
    istr[static_cast<std::size_t>(i)] = acc;
    acc *= ish[static_cast<std::size_t>(i)];
  }
  // Input strides expressed in output-dim order.
  std::vector<std::int64_t> ostr(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i)
    ostr[static_cast<std::size_t>(i)] = istr[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];

  const auto& xv = x.value();
  std::vector<S> out(xv.size());
  std::vector<std::int64_t> zero(static_cast<std::size_t>(r), 0);
  detail::bcast_walk(osh, ostr, zero, [&](std::int64_t i, std::int64_t src, std::int64_t) {
    out[static_cast<std::size_t>(i)] = xv[static_cast<std::size_t>(src)];
  });

  Tensor<S> result(osh, std::move(out));
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on, osh, ostr, zero]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      detail::bcast_walk(osh, ostr, zero, [&](std::int64_t i, std::int64_t src, std::int64_t) {
        xn->grad[static_cast<std::size_t>(src)] += on->grad[static_cast<std::size_t>(i)];
      });
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions and selection.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S s = 0;
  for (S v : x.value()) s += v;
  Tensor<S> result({1}, {s});
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const S g = on->grad[0];
      for (auto& gi : xn->grad) gi += g;
    });
  }
  return result;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  S s = 0;
  for (S v : x.value()) s += v;
  const S inv = S(1) / static_cast<S>(x.numel());
  Tensor<S> result({1}, {s * inv});
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on, inv]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const S g = on->grad[0] * inv;
      for (auto& gi : xn->grad) gi += g;
    });
  }
  return result;
}

// Extract one element (by flat row-major index) as a [1]-tensor.
template <typename S>
Tensor<S> pick(const Tensor<S>& x, std::int64_t flat_index) {
  if (flat_index < 0 || flat_index >= x.numel())
    throw ShapeError("pick: index out of range");
  Tensor<S> result({1}, {x.value()[static_cast<std::size_t>(flat_index)]});
  if (detail::want_record<S>({&x})) {
    result.set_requires_grad(true);
    auto xn = x.node(), on = result.node();
    active_tape<S>()->record(on, [xn, on, flat_index]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      xn->grad[static_cast<std::size_t>(flat_index)] += on->grad[0];
    });
  }
  return result;
}

// Concatenate along axis 0; all parts must agree on trailing dims.
template <typename S>
Tensor<S> concat0(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  Shape osh = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(osh.size()))
      throw ShapeError("concat0: rank mismatch");
    for (std::size_t i = 1; i < osh.size(); ++i)
      if (p.shape()[i] != osh[i]) throw ShapeError("concat0: trailing dims differ");
    total += p.dim(0);
  }
  osh[0] = static_cast<int>(total);
  std::vector<S> out;
  out.reserve(static_cast<std::size_t>(shape_numel(osh)));
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());

  Tensor<S> result(osh, std::move(out));
  bool rec = false;
  if (active_tape<S>())
    for (const auto& p : parts)
      if (p.requires_grad()) rec = true;
  if (rec) {
    result.set_requires_grad(true);
    std::vector<std::shared_ptr<detail::Node<S>>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.node());
    auto on = result.node();
    active_tape<S>()->record(on, [nodes, on]() {
      std::size_t off = 0;
      for (const auto& nd : nodes) {
        const std::size_t len = nd->value.size();
        if (nd->requires_grad) {
          nd->ensure_grad();
          for (std::size_t i = 0; i < len; ++i) nd->grad[i] += on->grad[off + i];
        }
        off += len;
      }
    });
  }
  return result;
}

}  // namespace convit
