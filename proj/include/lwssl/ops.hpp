// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <type_traits>
#include <memory>
#include <utility>
#include <vector>

#include "lwssl/kernels.hpp"
#include "lwssl/tape.hpp"

// Autodiff primitives. Conventions shared by every op:
//  - shapes are validated up front; mismatches raise ShapeError naming the op;
//  - tensors needed by the backward pass go through Tape::save (never into
//    the closure), so the byte ledger sees exactly what is retained;
//  - backward closures accumulate into inputs via grad_buf, and only into
//    inputs that require grad.
namespace lwssl::ops {

namespace detail {

template <class T>
bool wants(TapeT<T>& t, int id) {
  return t.node(id).requires_grad;
}

template <class T>
void require_same_shape(const char* op, const ValueT<T>& a, const ValueT<T>& b) {
  if (!a.arr.same_shape(b.arr))
    throw ShapeError(cat(op, ": operand shapes differ, ", shape_str(a.shape()), " vs ",
                         shape_str(b.shape())));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
ValueT<T> add(TapeT<T>& t, const ValueT<T>& a, const ValueT<T>& b) {
  detail::require_same_shape("add", a, b);
  auto out = t.alloc(a.shape());
  kernels::table<T>().add(out.data(), a.arr.data(), b.arr.data(), out.numel());
  bool req = a.requires_grad || b.requires_grad;
  return t.make_node("add", std::move(out), {a.id, b.id}, req, [](TapeT<T>& tp, int id) {
    const auto& g = *tp.grad(id);
    for (int in : tp.node(id).inputs)
      if (detail::wants(tp, in))
        kernels::table<T>().axpy(tp.grad_buf(in).data(), T(1), g.data(), g.numel());
  });
}

template <class T>
ValueT<T> sub(TapeT<T>& t, const ValueT<T>& a, const ValueT<T>& b) {
  detail::require_same_shape("sub", a, b);
  auto out = t.alloc(a.shape());
  kernels::table<T>().sub(out.data(), a.arr.data(), b.arr.data(), out.numel());
  bool req = a.requires_grad || b.requires_grad;
  return t.make_node("sub", std::move(out), {a.id, b.id}, req, [](TapeT<T>& tp, int id) {
    const auto& g = *tp.grad(id);
    const auto& ins = tp.node(id).inputs;
    if (detail::wants(tp, ins[0]))
      kernels::table<T>().axpy(tp.grad_buf(ins[0]).data(), T(1), g.data(), g.numel());
    if (detail::wants(tp, ins[1]))
      kernels::table<T>().axpy(tp.grad_buf(ins[1]).data(), T(-1), g.data(), g.numel());
  });
}

template <class T>
ValueT<T> mul(TapeT<T>& t, const ValueT<T>& a, const ValueT<T>& b) {
  detail::require_same_shape("mul", a, b);
  auto out = t.alloc(a.shape());
  kernels::table<T>().mul(out.data(), a.arr.data(), b.arr.data(), out.numel());
  bool req = a.requires_grad || b.requires_grad;
  auto v = t.make_node("mul", std::move(out), {a.id, b.id}, req, [](TapeT<T>& tp, int id) {
    const auto& g = *tp.grad(id);
    const auto& ins = tp.node(id).inputs;
    if (detail::wants(tp, ins[0]))
      kernels::table<T>().mul_acc(tp.grad_buf(ins[0]).data(), g.data(), tp.saved(id, 1).data(),
                                  g.numel());
    if (detail::wants(tp, ins[1]))
      kernels::table<T>().mul_acc(tp.grad_buf(ins[1]).data(), g.data(), tp.saved(id, 0).data(),
                                  g.numel());
  });
  if (req) {
    t.save(v.id, a.arr);
    t.save(v.id, b.arr);
  }
  return v;
}

template <class T>
ValueT<T> scale(TapeT<T>& t, const ValueT<T>& a, double alpha) {
  auto out = t.alloc(a.shape());
  kernels::table<T>().scale(out.data(), a.arr.data(), static_cast<T>(alpha), out.numel());
  return t.make_node("scale", std::move(out), {a.id}, a.requires_grad,
                     [alpha](TapeT<T>& tp, int id) {
                       const auto& g = *tp.grad(id);
                       int in = tp.node(id).inputs[0];
                       if (detail::wants(tp, in))
                         kernels::table<T>().axpy(tp.grad_buf(in).data(), static_cast<T>(alpha),
                                                  g.data(), g.numel());
                     });
}

template <class T>
ValueT<T> silu(TapeT<T>& t, const ValueT<T>& a) {
  auto out = t.alloc(a.shape());
  const T* x = a.arr.data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    T s = T(1) / (T(1) + std::exp(-x[i]));
    out.data()[i] = x[i] * s;
  }
  auto v = t.make_node("silu", std::move(out), {a.id}, a.requires_grad, [](TapeT<T>& tp, int id) {
    const auto& g = *tp.grad(id);
    int in = tp.node(id).inputs[0];
    if (!detail::wants(tp, in)) return;
    const auto& xs = tp.saved(id, 0);
    T* dst = tp.grad_buf(in).data();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      T xv = xs.data()[i];
      T s = T(1) / (T(1) + std::exp(-xv));
      dst[i] += g.data()[i] * (s + xv * s * (T(1) - s));
    }
  });
  if (v.requires_grad) t.save(v.id, a.arr);
  return v;
}

template <class T>
ValueT<T> abs_val(TapeT<T>& t, const ValueT<T>& a) {
  auto out = t.alloc(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::abs(a.arr.data()[i]);
  auto v = t.make_node("abs", std::move(out), {a.id}, a.requires_grad, [](TapeT<T>& tp, int id) {
    const auto& g = *tp.grad(id);
    int in = tp.node(id).inputs[0];
    if (!detail::wants(tp, in)) return;
    const auto& xs = tp.saved(id, 0);
    T* dst = tp.grad_buf(in).data();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      T xv = xs.data()[i];
      dst[i] += g.data()[i] * (xv > T(0) ? T(1) : (xv < T(0) ? T(-1) : T(0)));
    }
  });
  if (v.requires_grad) t.save(v.id, a.arr);
  return v;
}

template <class T>
ValueT<T> square(TapeT<T>& t, const ValueT<T>& a) {
  auto out = t.alloc(a.shape());
  kernels::table<T>().mul(out.data(), a.arr.data(), a.arr.data(), out.numel());
  auto v = t.make_node("square", std::move(out), {a.id}, a.requires_grad, [](TapeT<T>& tp, int id) {
    const auto& g = *tp.grad(id);
    int in = tp.node(id).inputs[0];
    if (!detail::wants(tp, in)) return;
    const auto& xs = tp.saved(id, 0);
    T* dst = tp.grad_buf(in).data();
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += T(2) * g.data()[i] * xs.data()[i];
  });
  if (v.requires_grad) t.save(v.id, a.arr);
  return v;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// out[..., dout] = x[..., din] . w[din, dout] (+ bias[dout]).
template <class T>
ValueT<T> linear(TapeT<T>& t, const ValueT<T>& x, const ValueT<T>& w, const ValueT<T>* bias) {
  if (w.arr.rank() != 2)
    throw ShapeError(cat("linear: weight must be rank 2, got ", shape_str(w.shape())));
  if (x.arr.rank() < 1 || x.shape().back() != w.shape()[0])
    throw ShapeError(cat("linear: x ", shape_str(x.shape()), " incompatible with w ",
                         shape_str(w.shape())));
  const std::size_t din = w.shape()[0], dout = w.shape()[1];
  const std::size_t rows = x.numel() / din;
  std::vector<std::size_t> out_shape(x.shape());
  out_shape.back() = dout;
  auto out = t.alloc(out_shape);
  kernels::table<T>().mm_nn(out.data(), x.arr.data(), w.arr.data(), rows, din, dout, false);
  if (bias) {
    if (bias->shape() != std::vector<std::size_t>{dout})
      throw ShapeError(cat("linear: bias shape ", shape_str(bias->shape()), ", expected [",
                           dout, "]"));
    for (std::size_t r = 0; r < rows; ++r)
      kernels::table<T>().axpy(out.data() + r * dout, T(1), bias->arr.data(), dout);
  }
  bool req = x.requires_grad || w.requires_grad || (bias && bias->requires_grad);
  std::vector<int> inputs{x.id, w.id};
  if (bias) inputs.push_back(bias->id);
  auto v = t.make_node(
      "linear", std::move(out), std::move(inputs), req,
      [rows, din, dout](TapeT<T>& tp, int id) {
        const auto& g = *tp.grad(id);
        const auto& ins = tp.node(id).inputs;
        const auto& xs = tp.saved(id, 0);
        const auto& ws = tp.saved(id, 1);
        if (detail::wants(tp, ins[0]))
          kernels::table<T>().mm_nt(tp.grad_buf(ins[0]).data(), g.data(), ws.data(), rows, dout,
                                    din, true);
        if (detail::wants(tp, ins[1]))
          kernels::table<T>().mm_tn(tp.grad_buf(ins[1]).data(), xs.data(), g.data(), rows, din,
                                    dout, true);
        if (ins.size() > 2 && detail::wants(tp, ins[2])) {
          T* db = tp.grad_buf(ins[2]).data();
          for (std::size_t r = 0; r < rows; ++r)
            kernels::table<T>().axpy(db, T(1), g.data() + r * dout, dout);
        }
      });
  if (req) {
    t.save(v.id, x.arr);
    t.save(v.id, w.arr);
  }
  return v;
}

template <class T>
ValueT<T> linear(TapeT<T>& t, const ValueT<T>& x, const ValueT<T>& w) {
  return linear(t, x, w, static_cast<const ValueT<T>*>(nullptr));
}

template <class T>
ValueT<T> matmul(TapeT<T>& t, const ValueT<T>& a, const ValueT<T>& b) {
  if (a.arr.rank() != 2 || b.arr.rank() != 2)
    throw ShapeError(cat("matmul: expects rank-2 operands, got ", shape_str(a.shape()), " and ",
                         shape_str(b.shape())));
  if (a.shape()[1] != b.shape()[0])
    throw ShapeError(cat("matmul: inner dimensions differ, ", shape_str(a.shape()), " vs ",
                         shape_str(b.shape())));
  return linear(t, a, b);
}

// Normalization over the last dimension, y = (x - mu) * rstd * gamma + beta.
// Saves the normalized activations and per-row rstd instead of the input.
template <class T>
ValueT<T> layer_norm(TapeT<T>& t, const ValueT<T>& x, const ValueT<T>& gamma,
                     const ValueT<T>& beta, double eps = 1e-5) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != std::vector<std::size_t>{d} || beta.shape() != std::vector<std::size_t>{d})
    throw ShapeError(cat("layer_norm: scale/offset must be [", d, "], got ",
                         shape_str(gamma.shape()), " and ", shape_str(beta.shape())));
  const std::size_t rows = x.numel() / d;
  auto out = t.alloc(x.shape());
  auto xhat = t.alloc(x.shape());
  auto rstd = t.alloc({rows});
  const T* xp = x.arr.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xp + r * d;
    T mu = kernels::table<T>().sum(row, d) / static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(d);
    T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
    rstd.data()[r] = rs;
    T* xh = xhat.data() + r * d;
    T* yo = out.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] = (row[i] - mu) * rs;
      yo[i] = xh[i] * gamma.arr.data()[i] + beta.arr.data()[i];
    }
  }
  bool req = x.requires_grad || gamma.requires_grad || beta.requires_grad;
  auto v = t.make_node(
      "layer_norm", std::move(out), {x.id, gamma.id, beta.id}, req,
      [rows, d](TapeT<T>& tp, int id) {
        const auto& g = *tp.grad(id);
        const auto& ins = tp.node(id).inputs;
        const auto& xh = tp.saved(id, 0);
        const auto& rs = tp.saved(id, 1);
        const auto& gam = tp.saved(id, 2);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* grow = g.data() + r * d;
          const T* xrow = xh.data() + r * d;
          if (detail::wants(tp, ins[0])) {
            // dx = rstd * (g*gamma - mean(g*gamma) - xhat * mean(g*gamma*xhat))
            T m1 = T(0), m2 = T(0);
            for (std::size_t i = 0; i < d; ++i) {
              T gd = grow[i] * gam.data()[i];
              m1 += gd;
              m2 += gd * xrow[i];
            }
            m1 /= static_cast<T>(d);
            m2 /= static_cast<T>(d);
            T* dx = tp.grad_buf(ins[0]).data() + r * d;
            for (std::size_t i = 0; i < d; ++i)
              dx[i] += rs.data()[r] * (grow[i] * gam.data()[i] - m1 - xrow[i] * m2);
          }
          if (detail::wants(tp, ins[1]))
            kernels::table<T>().mul_acc(tp.grad_buf(ins[1]).data(), grow, xrow, d);
          if (detail::wants(tp, ins[2]))
            kernels::table<T>().axpy(tp.grad_buf(ins[2]).data(), T(1), grow, d);
        }
      });
  if (req) {
    t.save(v.id, xhat);
    t.save(v.id, rstd);
    t.save(v.id, gamma.arr);
  }
  return v;
}

// Causal depthwise convolution. out[b,t,c] = sum_j w[j,c] * x[b,t-K+1+j,c],
// zero-padded on the left, plus bias. No parameter can see future frames.
template <class T>
ValueT<T> causal_dw_conv1d(TapeT<T>& t, const ValueT<T>& x, const ValueT<T>& w,
                           const ValueT<T>& bias) {
  if (x.arr.rank() != 3)
    throw ShapeError(cat("causal_dw_conv1d: x must be [B,T,D], got ", shape_str(x.shape())));
  const std::size_t B = x.shape()[0], Tn = x.shape()[1], D = x.shape()[2];
  if (w.arr.rank() != 2 || w.shape()[1] != D)
    throw ShapeError(cat("causal_dw_conv1d: w must be [K,", D, "], got ", shape_str(w.shape())));
  const std::size_t K = w.shape()[0];
  auto out = t.alloc(x.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t tt = 0; tt < Tn; ++tt) {
      T* orow = out.data() + (b * Tn + tt) * D;
      std::copy(bias.arr.data(), bias.arr.data() + D, orow);
      for (std::size_t j = 0; j < K; ++j) {
        std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tt + j) - static_cast<std::ptrdiff_t>(K) + 1;
        if (s < 0) continue;
        kernels::table<T>().mul_acc(orow, w.arr.data() + j * D,
                                    x.arr.data() + (b * Tn + s) * D, D);
      }
    }
  }
  bool req = x.requires_grad || w.requires_grad || bias.requires_grad;
  auto v = t.make_node(
      "causal_dw_conv1d", std::move(out), {x.id, w.id, bias.id}, req,
      [B, Tn, D, K](TapeT<T>& tp, int id) {
        const auto& g = *tp.grad(id);
        const auto& ins = tp.node(id).inputs;
        const auto& xs = tp.saved(id, 0);
        const auto& ws = tp.saved(id, 1);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t tt = 0; tt < Tn; ++tt) {
            const T* grow = g.data() + (b * Tn + tt) * D;
            if (detail::wants(tp, ins[2]))
              kernels::table<T>().axpy(tp.grad_buf(ins[2]).data(), T(1), grow, D);
            for (std::size_t j = 0; j < K; ++j) {
              std::ptrdiff_t s =
                  static_cast<std::ptrdiff_t>(tt + j) - static_cast<std::ptrdiff_t>(K) + 1;
              if (s < 0) continue;
              const T* xrow = xs.data() + (b * Tn + static_cast<std::size_t>(s)) * D;
              if (detail::wants(tp, ins[1]))
                kernels::table<T>().mul_acc(tp.grad_buf(ins[1]).data() + j * D, grow, xrow, D);
              if (detail::wants(tp, ins[0]))
                kernels::table<T>().mul_acc(
                    tp.grad_buf(ins[0]).data() + (b * Tn + static_cast<std::size_t>(s)) * D, grow,
                    ws.data() + j * D, D);
            }
          }
        }
      });
  if (req) {
    t.save(v.id, x.arr);
    t.save(v.id, w.arr);
  }
  return v;
}

// ---------------------------------------------------------------------------
// banded streaming attention
// ---------------------------------------------------------------------------
// Scores live on a [B,H,T,W+1] band: slot j of frame t is frame t-W+j, so the
// newest key is always slot W and nothing right of the diagonal exists.

inline constexpr double kBandNegInf = -1e30;

template <class T>
ValueT<T> band_scores(TapeT<T>& t, const ValueT<T>& q, const ValueT<T>& k,
                      const ValueT<T>& rel_bias, std::size_t heads, std::size_t window) {
  detail::require_same_shape("band_scores", q, k);
  if (q.arr.rank() != 3)
    throw ShapeError(cat("band_scores: q must be [B,T,D], got ", shape_str(q.shape())));
  const std::size_t B = q.shape()[0], Tn = q.shape()[1], D = q.shape()[2];
  if (D % heads != 0)
    throw ShapeError(cat("band_scores: D=", D, " not divisible by heads=", heads));
  const std::size_t dh = D / heads, S = window + 1;
  if (rel_bias.shape() != std::vector<std::size_t>{heads, S})
    throw ShapeError(cat("band_scores: rel_bias must be [", heads, "x", S, "], got ",
                         shape_str(rel_bias.shape())));
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  auto out = t.alloc({B, heads, Tn, S});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t tt = 0; tt < Tn; ++tt) {
        T* orow = out.data() + ((b * heads + h) * Tn + tt) * S;
        const T* qrow = q.arr.data() + (b * Tn + tt) * D + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tt + j) - static_cast<std::ptrdiff_t>(window);
          if (s < 0) {
            orow[j] = static_cast<T>(kBandNegInf);
            continue;
          }
          const T* krow = k.arr.data() + (b * Tn + static_cast<std::size_t>(s)) * D + h * dh;
          orow[j] = sc * kernels::table<T>().dot(qrow, krow, dh) +
                    rel_bias.arr.data()[h * S + j];
        }
      }
  bool req = q.requires_grad || k.requires_grad || rel_bias.requires_grad;
  auto v = t.make_node(
      "band_scores", std::move(out), {q.id, k.id, rel_bias.id}, req,
      [B, Tn, D, heads, dh, S, window, sc](TapeT<T>& tp, int id) {
        const auto& g = *tp.grad(id);
        const auto& ins = tp.node(id).inputs;
        const auto& qs = tp.saved(id, 0);
        const auto& ks = tp.saved(id, 1);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t tt = 0; tt < Tn; ++tt) {
              const T* grow = g.data() + ((b * heads + h) * Tn + tt) * S;
              for (std::size_t j = 0; j < S; ++j) {
                std::ptrdiff_t s =
                    static_cast<std::ptrdiff_t>(tt + j) - static_cast<std::ptrdiff_t>(window);
                if (s < 0 || grow[j] == T(0)) continue;
                const std::size_t so = (b * Tn + static_cast<std::size_t>(s)) * D + h * dh;
                const std::size_t qo = (b * Tn + tt) * D + h * dh;
                if (detail::wants(tp, ins[0]))
                  kernels::table<T>().axpy(tp.grad_buf(ins[0]).data() + qo, sc * grow[j],
                                           ks.data() + so, dh);
                if (detail::wants(tp, ins[1]))
                  kernels::table<T>().axpy(tp.grad_buf(ins[1]).data() + so, sc * grow[j],
                                           qs.data() + qo, dh);
                if (detail::wants(tp, ins[2])) tp.grad_buf(ins[2]).data()[h * S + j] += grow[j];
              }
            }
      });
  if (req) {
    t.save(v.id, q.arr);
    t.save(v.id, k.arr);
  }
  return v;
}

// Softmax over band slots; slots left of the sequence start get exactly zero
// probability. Saves its own output.
template <class T>
ValueT<T> band_softmax(TapeT<T>& t, const ValueT<T>& s, std::size_t window) {
  if (s.arr.rank() != 4)
    throw ShapeError(cat("band_softmax: expects [B,H,T,W+1], got ", shape_str(s.shape())));
  const std::size_t S = s.shape()[3], Tn = s.shape()[2];
  const std::size_t rows = s.numel() / S;
  auto out = t.alloc(s.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t tt = r % Tn;
    const std::size_t j0 = window > tt ? window - tt : 0;  // first valid slot
    const T* in = s.arr.data() + r * S;
    T* o = out.data() + r * S;
    T mx = in[j0];
    for (std::size_t j = j0; j < S; ++j) mx = std::max(mx, in[j]);
    T z = T(0);
    for (std::size_t j = 0; j < S; ++j) {
      if (j < j0) {
        o[j] = T(0);
        continue;
      }
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = j0; j < S; ++j) o[j] /= z;
  }
  auto v = t.make_node("band_softmax", std::move(out), {s.id}, s.requires_grad,
                       [S, rows](TapeT<T>& tp, int id) {
                         const auto& g = *tp.grad(id);
                         int in = tp.node(id).inputs[0];
                         if (!detail::wants(tp, in)) return;
                         const auto& p = tp.saved(id, 0);
                         T* ds = tp.grad_buf(in).data();
                         for (std::size_t r = 0; r < rows; ++r) {
                           const T* prow = p.data() + r * S;
                           const T* grow = g.data() + r * S;
                           T dotpg = kernels::table<T>().dot(prow, grow, S);
                           for (std::size_t j = 0; j < S; ++j)
                             ds[r * S + j] += prow[j] * (grow[j] - dotpg);
                         }
                       });
  if (v.requires_grad) t.save(v.id, v.arr);
  return v;
}

template <class T>
ValueT<T> band_context(TapeT<T>& t, const ValueT<T>& p, const ValueT<T>& v,
                       std::size_t heads, std::size_t window) {
  if (p.arr.rank() != 4 || v.arr.rank() != 3)
    throw ShapeError(cat("band_context: got ", shape_str(p.shape()), " and ",
                         shape_str(v.shape())));
  const std::size_t B = v.shape()[0], Tn = v.shape()[1], D = v.shape()[2];
  const std::size_t dh = D / heads, S = window + 1;
  auto out = t.alloc({B, Tn, D});
  out.fill(T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t tt = 0; tt < Tn; ++tt) {
        const T* prow = p.arr.data() + ((b * heads + h) * Tn + tt) * S;
        T* orow = out.data() + (b * Tn + tt) * D + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tt + j) - static_cast<std::ptrdiff_t>(window);
          if (s < 0 || prow[j] == T(0)) continue;
          kernels::table<T>().axpy(orow, prow[j],
                                   v.arr.data() + (b * Tn + static_cast<std::size_t>(s)) * D + h * dh,
                                   dh);
        }
      }
  bool req = p.requires_grad || v.requires_grad;
  auto val = t.make_node(
      "band_context", std::move(out), {p.id, v.id}, req,
      [B, Tn, D, heads, dh, S, window](TapeT<T>& tp, int id) {
        const auto& g = *tp.grad(id);
        const auto& ins = tp.node(id).inputs;
        const auto& ps = tp.saved(id, 0);
        const auto& vs = tp.saved(id, 1);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t tt = 0; tt < Tn; ++tt) {
              const T* grow = g.data() + (b * Tn + tt) * D + h * dh;
              const T* prow = ps.data() + ((b * heads + h) * Tn + tt) * S;
              for (std::size_t j = 0; j < S; ++j) {
                std::ptrdiff_t s =
                    static_cast<std::ptrdiff_t>(tt + j) - static_cast<std::ptrdiff_t>(window);
                if (s < 0) continue;
                const std::size_t vo = (b * Tn + static_cast<std::size_t>(s)) * D + h * dh;
                if (detail::wants(tp, ins[0]))
                  tp.grad_buf(ins[0]).data()[((b * heads + h) * Tn + tt) * S + j] +=
                      kernels::table<T>().dot(grow, vs.data() + vo, dh);
                if (detail::wants(tp, ins[1]))
                  kernels::table<T>().axpy(tp.grad_buf(ins[1]).data() + vo, prow[j], grow, dh);
              }
            }
      });
  if (req) {
    t.save(val.id, p.arr);
    t.save(val.id, v.arr);
  }
  return val;
}

// ---------------------------------------------------------------------------
// gather / masking / slicing
// ---------------------------------------------------------------------------

// out[m, :] = x[idx[m].first, idx[m].second, :]
template <class T>
ValueT<T> gather_frames(TapeT<T>& t, const ValueT<T>& x,
                        std::shared_ptr<const std::vector<std::pair<std::uint32_t, std::uint32_t>>>
                            idx) {
  if (x.arr.rank() != 3)
    throw ShapeError(cat("gather_frames: x must be [B,T,D], got ", shape_str(x.shape())));
  const std::size_t B = x.shape()[0], Tn = x.shape()[1], D = x.shape()[2];
  const std::size_t M = idx->size();
  if (M == 0) throw ValueError("gather_frames: empty index list");
  auto out = t.alloc({M, D});
  for (std::size_t m = 0; m < M; ++m) {
    auto [b, tt] = (*idx)[m];
    if (b >= B || tt >= Tn)
      throw ValueError(cat("gather_frames: index (", b, ",", tt, ") out of range"));
    std::copy(x.arr.data() + (b * Tn + tt) * D, x.arr.data() + (b * Tn + tt + 1) * D,
              out.data() + m * D);
  }
  return t.make_node("gather_frames", std::move(out), {x.id}, x.requires_grad,
                     [idx, Tn, D](TapeT<T>& tp, int id) {
                       const auto& g = *tp.grad(id);
                       int in = tp.node(id).inputs[0];
                       if (!detail::wants(tp, in)) return;
                       T* dx = tp.grad_buf(in).data();
                       for (std::size_t m = 0; m < idx->size(); ++m) {
                         auto [b, tt] = (*idx)[m];
                         kernels::table<T>().axpy(dx + (b * Tn + tt) * D, T(1), g.data() + m * D,
                                                  D);
                       }
                     });
}

// Per-frame masking: out[b,t,...] = x[b,t,...] * mask[b,t]. The mask is data,
// not a differentiable input.
template <class T>
ValueT<T> mask_frames(TapeT<T>& t, const ValueT<T>& x, ArrayT<T> mask) {
  if (x.arr.rank() < 2 || mask.rank() != 2 || mask.shape()[0] != x.shape()[0] ||
      mask.shape()[1] != x.shape()[1])
    throw ShapeError(cat("mask_frames: x ", shape_str(x.shape()), " vs mask ",
                         shape_str(mask.shape())));
  const std::size_t rows = mask.numel();
  const std::size_t inner = x.numel() / rows;
  auto out = t.alloc(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    kernels::table<T>().scale(out.data() + r * inner, x.arr.data() + r * inner, mask.data()[r],
                              inner);
  auto v = t.make_node("mask_frames", std::move(out), {x.id}, x.requires_grad,
                       [rows, inner](TapeT<T>& tp, int id) {
                         const auto& g = *tp.grad(id);
                         int in = tp.node(id).inputs[0];
                         if (!detail::wants(tp, in)) return;
                         const auto& m = tp.saved(id, 0);
                         T* dx = tp.grad_buf(in).data();
                         for (std::size_t r = 0; r < rows; ++r)
                           kernels::table<T>().axpy(dx + r * inner, m.data()[r],
                                                    g.data() + r * inner, inner);
                       });
  if (v.requires_grad) t.save(v.id, mask);
  return v;
}

// out[b, i, :] = x[b, t0 + i, :] for i in [0, len)
template <class T>
ValueT<T> slice_time(TapeT<T>& t, const ValueT<T>& x, std::size_t t0, std::size_t len) {
  if (x.arr.rank() != 3)
    throw ShapeError(cat("slice_time: x must be [B,T,D], got ", shape_str(x.shape())));
  const std::size_t B = x.shape()[0], Tn = x.shape()[1], D = x.shape()[2];
  if (t0 + len > Tn)
    throw ShapeError(cat("slice_time: window [", t0, ",", t0 + len, ") exceeds T=", Tn));
  auto out = t.alloc({B, len, D});
  for (std::size_t b = 0; b < B; ++b)
    std::copy(x.arr.data() + (b * Tn + t0) * D, x.arr.data() + (b * Tn + t0 + len) * D,
              out.data() + b * len * D);
  return t.make_node("slice_time", std::move(out), {x.id}, x.requires_grad,
                     [B, Tn, D, t0, len](TapeT<T>& tp, int id) {
                       const auto& g = *tp.grad(id);
                       int in = tp.node(id).inputs[0];
                       if (!detail::wants(tp, in)) return;
                       T* dx = tp.grad_buf(in).data();
                       for (std::size_t b = 0; b < B; ++b)
                         kernels::table<T>().axpy(dx + (b * Tn + t0) * D, T(1),
                                                  g.data() + b * len * D, len * D);
                     });
}

// Identity in the forward pass, a wall in the backward pass. Shares the input
// buffer, so it costs no activation bytes.
template <class T>
ValueT<T> stop_grad(TapeT<T>& t, const ValueT<T>& x) {
  return t.make_node("stop_grad", x.arr, {x.id}, false, nullptr);
}

// ---------------------------------------------------------------------------
// reductions and loss heads
// ---------------------------------------------------------------------------

// y = alpha * sum(x). The workhorse behind every masked mean.
template <class T>
ValueT<T> scaled_sum_all(TapeT<T>& t, const ValueT<T>& x, double alpha) {
  auto out = t.alloc({1});
  out.data()[0] = static_cast<T>(alpha) * kernels::table<T>().sum(x.arr.data(), x.numel());
  return t.make_node("scaled_sum_all", std::move(out), {x.id}, x.requires_grad,
                     [alpha](TapeT<T>& tp, int id) {
                       const T gv = tp.grad(id)->data()[0] * static_cast<T>(alpha);
                       int in = tp.node(id).inputs[0];
                       if (!detail::wants(tp, in)) return;
                       T* dx = tp.grad_buf(in).data();
                       const std::size_t n = tp.grad_buf(in).numel();
                       for (std::size_t i = 0; i < n; ++i) dx[i] += gv;
                     });
}

template <class T>
ValueT<T> mean_all(TapeT<T>& t, const ValueT<T>& x) {
  return scaled_sum_all(t, x, 1.0 / static_cast<double>(x.numel()));
}

template <class T>
ValueT<T> sum_all(TapeT<T>& t, const ValueT<T>& x) {
  return scaled_sum_all(t, x, 1.0);
}

// Index plan for one contrastive head evaluation: row n scores anchor
// (anchor_b[n], anchor_t[n]) against its positive pos_t[n] and K negatives
// negs[n*K .. n*K+K-1], all within the same sequence.
struct NcePlan {
  std::vector<std::uint32_t> anchor_b, anchor_t, pos_t, negs;
  std::size_t num_negatives = 0;
  std::size_t rows() const { return anchor_t.size(); }
};

// logits[n, 0] = <pred[anchor], tgt[pos]>; logits[n, 1+i] = <pred[anchor], tgt[neg_i]>.
// Gathers by index internally so no [N*(K+1), D] tensor is ever materialized.
template <class T>
ValueT<T> contrastive_logits(TapeT<T>& t, const ValueT<T>& pred, const ValueT<T>& targets,
                             std::shared_ptr<const NcePlan> plan) {
  detail::require_same_shape("contrastive_logits", pred, targets);
  if (pred.arr.rank() != 3)
    throw ShapeError(cat("contrastive_logits: expects [B,T,D], got ", shape_str(pred.shape())));
  const std::size_t Tn = pred.shape()[1], D = pred.shape()[2];
  const std::size_t N = plan->rows(), K = plan->num_negatives;
  if (N == 0) throw ValueError("contrastive_logits: empty anchor set");
  auto out = t.alloc({N, K + 1});
  for (std::size_t n = 0; n < N; ++n) {
    const T* pv = pred.arr.data() + (plan->anchor_b[n] * Tn + plan->anchor_t[n]) * D;
    const T* base = targets.arr.data() + plan->anchor_b[n] * Tn * D;
    out.data()[n * (K + 1)] = kernels::table<T>().dot(pv, base + plan->pos_t[n] * D, D);
    for (std::size_t i = 0; i < K; ++i)
      out.data()[n * (K + 1) + 1 + i] =
          kernels::table<T>().dot(pv, base + plan->negs[n * K + i] * D, D);
  }
  bool req = pred.requires_grad || targets.requires_grad;
  auto v = t.make_node(
      "contrastive_logits", std::move(out), {pred.id, targets.id}, req,
      [plan, Tn, D, N, K](TapeT<T>& tp, int id) {
        const auto& g = *tp.grad(id);
        const auto& ins = tp.node(id).inputs;
        const auto& ps = tp.saved(id, 0);
        const auto& ts = tp.saved(id, 1);
        const bool wp = detail::wants(tp, ins[0]);
        const bool wt = detail::wants(tp, ins[1]);
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t po = (plan->anchor_b[n] * Tn + plan->anchor_t[n]) * D;
          const std::size_t bo = plan->anchor_b[n] * Tn * D;
          for (std::size_t c = 0; c <= K; ++c) {
            const T gv = g.data()[n * (K + 1) + c];
            if (gv == T(0)) continue;
            const std::size_t to = bo + (c == 0 ? plan->pos_t[n] : plan->negs[n * K + c - 1]) * D;
            if (wp) kernels::table<T>().axpy(tp.grad_buf(ins[0]).data() + po, gv, ts.data() + to, D);
            if (wt) kernels::table<T>().axpy(tp.grad_buf(ins[1]).data() + to, gv, ps.data() + po, D);
          }
        }
      });
  if (req) {
    t.save(v.id, pred.arr);
    t.save(v.id, targets.arr);
  }
  return v;
}

// InfoNCE over logit rows with the positive in column 0:
//   loss = sum_n w_n * (logsumexp(logits[n,:]) - logits[n,0]).
// At all-equal scores this is sum(w) * ln(C).
template <class T>
ValueT<T> infonce_rows(TapeT<T>& t, const ValueT<T>& logits,
                       std::shared_ptr<const std::vector<std::type_identity_t<T>>> row_weights) {
  if (logits.arr.rank() != 2)
    throw ShapeError(cat("infonce_rows: expects [N,C], got ", shape_str(logits.shape())));
  const std::size_t N = logits.shape()[0], C = logits.shape()[1];
  if (row_weights->size() != N)
    throw ShapeError(cat("infonce_rows: ", N, " rows but ", row_weights->size(), " weights"));
  auto probs = t.alloc({N, C});
  auto out = t.alloc({1});
  T loss = T(0);
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = logits.arr.data() + n * C;
    T* prow = probs.data() + n * C;
    T mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T z = T(0);
    for (std::size_t c = 0; c < C; ++c) {
      prow[c] = std::exp(row[c] - mx);
      z += prow[c];
    }
    for (std::size_t c = 0; c < C; ++c) prow[c] /= z;
    loss += (*row_weights)[n] * (std::log(z) + mx - row[0]);
  }
  out.data()[0] = loss;
  auto v = t.make_node("infonce_rows", std::move(out), {logits.id}, logits.requires_grad,
                       [row_weights, N, C](TapeT<T>& tp, int id) {
                         const T gv = tp.grad(id)->data()[0];
                         int in = tp.node(id).inputs[0];
                         if (!detail::wants(tp, in)) return;
                         const auto& p = tp.saved(id, 0);
                         T* dl = tp.grad_buf(in).data();
                         for (std::size_t n = 0; n < N; ++n) {
                           const T w = gv * (*row_weights)[n];
                           for (std::size_t c = 0; c < C; ++c)
                             dl[n * C + c] += w * (p.data()[n * C + c] - (c == 0 ? T(1) : T(0)));
                         }
                       });
  if (v.requires_grad) t.save(v.id, probs);
  return v;
}

// Weighted softmax cross-entropy over rows against integer labels.
template <class T>
ValueT<T> cross_entropy_rows(TapeT<T>& t, const ValueT<T>& logits,
                             std::shared_ptr<const std::vector<std::uint32_t>> labels,
                             std::shared_ptr<const std::vector<std::type_identity_t<T>>> row_weights) {
  if (logits.arr.rank() != 2)
    throw ShapeError(cat("cross_entropy_rows: expects [N,C], got ", shape_str(logits.shape())));
  const std::size_t N = logits.shape()[0], C = logits.shape()[1];
  if (labels->size() != N || row_weights->size() != N)
    throw ShapeError("cross_entropy_rows: label/weight count mismatch");
  for (std::size_t n = 0; n < N; ++n)
    if ((*labels)[n] >= C) throw ValueError(cat("cross_entropy_rows: label ", (*labels)[n],
                                                " out of range [0,", C, ")"));
  auto probs = t.alloc({N, C});
  auto out = t.alloc({1});
  T loss = T(0);
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = logits.arr.data() + n * C;
    T* prow = probs.data() + n * C;
    T mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T z = T(0);
    for (std::size_t c = 0; c < C; ++c) {
      prow[c] = std::exp(row[c] - mx);
      z += prow[c];
    }
    for (std::size_t c = 0; c < C; ++c) prow[c] /= z;
    loss += (*row_weights)[n] * (std::log(z) + mx - row[(*labels)[n]]);
  }
  out.data()[0] = loss;
  auto v = t.make_node("cross_entropy_rows", std::move(out), {logits.id}, logits.requires_grad,
                       [labels, row_weights, N, C](TapeT<T>& tp, int id) {
                         const T gv = tp.grad(id)->data()[0];
                         int in = tp.node(id).inputs[0];
                         if (!detail::wants(tp, in)) return;
                         const auto& p = tp.saved(id, 0);
                         T* dl = tp.grad_buf(in).data();
                         for (std::size_t n = 0; n < N; ++n) {
                           const T w = gv * (*row_weights)[n];
                           for (std::size_t c = 0; c < C; ++c)
                             dl[n * C + c] +=
                                 w * (p.data()[n * C + c] - ((*labels)[n] == c ? T(1) : T(0)));
                         }
                       });
  if (v.requires_grad) t.save(v.id, probs);
  return v;
}

}  // namespace lwssl::ops
