// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "lwssl/ops.hpp"
#include "lwssl/rng.hpp"
#include "lwssl/tape.hpp"

namespace lwssl {

enum class SslLossKind { APC, CPC, W2V2 };

const char* to_string(SslLossKind k);
SslLossKind ssl_loss_from_string(const std::string& s);

// Contrastive future prediction: one linear head per future offset, bilinear
// scoring of predicted vs true future against same-sequence negatives.
// Heads default to zero (exactly uniform scores).
struct CPCConfig {
  std::size_t future_horizon = 12;
  std::size_t num_negatives = 8;

  void validate() const {
    if (future_horizon < 1) throw ConfigError("cpc: future_horizon must be >= 1");
    if (num_negatives < 1) throw ConfigError("cpc: num_negatives must be >= 1");
  }
};

// Future-frame regression with a total-variation penalty between consecutive
// predicted frames.
struct APCConfig {
  std::size_t shift = 3;
  double tv_weight = 0.1;

  void validate() const {
    if (shift < 1) throw ConfigError("apc: shift must be >= 1");
    if (tv_weight < 0) throw ConfigError("apc: tv_weight must be >= 0");
  }
};

// Masked-position contrastive loss. The mask is applied to the encoder input
// (the data module provides it); targets are the unmasked input features, and
// negatives come from other masked positions of the same sequence. Note the
// targets may lie in the anchor's future, which makes this the bi-directional
// objective of the three.
struct W2V2Config {
  double mask_prob = 0.065;  // per-frame span start probability
  std::size_t mask_span = 4;
  std::size_t num_negatives = 8;

  void validate() const {
    if (!(mask_prob > 0.0 && mask_prob < 1.0))
      throw ConfigError("w2v2: mask_prob must be in (0, 1)");
    if (mask_span < 1) throw ConfigError("w2v2: mask_span must be >= 1");
    if (num_negatives < 1) throw ConfigError("w2v2: num_negatives must be >= 1");
  }
};

// K distinct indices in [0, num_frames) excluding `anchor`, uniform over the
// eligible set, deterministic given the rng state.
std::vector<std::uint32_t> sample_negatives(Rng& rng, std::size_t num_frames, std::size_t anchor,
                                            std::size_t num_negatives);

// ---------------------------------------------------------------------------
// loss heads (owned by the trainer, trained together with the attached block)
// ---------------------------------------------------------------------------

template <class T>
struct CpcHeadT {
  std::vector<ParamT<T>> offset_w;  // one [d, d_t] head per future offset

  // rng == nullptr gives exactly-zero heads (uniform scores); with an rng the
  // heads start small-random so gradients reach the attached block from the
  // first step while scores stay near-uniform.
  static CpcHeadT init(std::size_t hidden_dim, std::size_t target_dim, std::size_t horizon,
                       Rng* rng = nullptr) {
    CpcHeadT h;
    h.offset_w.resize(horizon);
    const T bound = T(0.1) / std::sqrt(static_cast<T>(hidden_dim));
    for (std::size_t k = 0; k < horizon; ++k) {
      h.offset_w[k].value = rng ? ArrayT<T>::uniform({hidden_dim, target_dim}, *rng, -bound, bound)
                                : ArrayT<T>::zeros({hidden_dim, target_dim});
      h.offset_w[k].name = cat("cpc.w", k + 1);
    }
    return h;
  }
  template <class F>
  void for_each(F&& f) {
    for (auto& p : offset_w) f(p);
  }
};

template <class T>
struct ApcHeadT {
  ParamT<T> w, b;

  static ApcHeadT init(std::size_t hidden_dim, std::size_t target_dim, Rng* rng = nullptr) {
    ApcHeadT h;
    const T bound = T(0.1) / std::sqrt(static_cast<T>(hidden_dim));
    h.w.value = rng ? ArrayT<T>::uniform({hidden_dim, target_dim}, *rng, -bound, bound)
                    : ArrayT<T>::zeros({hidden_dim, target_dim});
    h.w.name = "apc.w";
    h.b.value = ArrayT<T>::zeros({target_dim});
    h.b.name = "apc.b";
    return h;
  }
  template <class F>
  void for_each(F&& f) {
    f(w);
    f(b);
  }
};

template <class T>
struct W2v2HeadT {
  ParamT<T> context_proj;  // [d, p], zero so initial scores are uniform
  ParamT<T> target_proj;   // [d_in, p], random so gradients can flow

  static W2v2HeadT init(std::size_t hidden_dim, std::size_t input_dim, std::size_t proj_dim,
                        Rng& rng, bool zero_context = true) {
    W2v2HeadT h;
    const T cb = T(0.1) / std::sqrt(static_cast<T>(hidden_dim));
    h.context_proj.value = zero_context ? ArrayT<T>::zeros({hidden_dim, proj_dim})
                                        : ArrayT<T>::uniform({hidden_dim, proj_dim}, rng, -cb, cb);
    h.context_proj.name = "w2v2.u";
    const T bound = T(1) / std::sqrt(static_cast<T>(input_dim));
    h.target_proj.value = ArrayT<T>::uniform({input_dim, proj_dim}, rng, -bound, bound);
    h.target_proj.name = "w2v2.v";
    return h;
  }
  template <class F>
  void for_each(F&& f) {
    f(context_proj);
    f(target_proj);
  }
};

using CpcHead = CpcHeadT<float>;
using ApcHead = ApcHeadT<float>;
using W2v2Head = W2v2HeadT<float>;

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean InfoNCE over offsets 1..horizon; per offset, per sequence the anchors
// are every frame with a valid future target, each scored against K
// same-sequence negatives. Reduction: mean over a sequence's anchors, then
// over the batch, then over offsets.
template <class T>
ValueT<T> cpc_loss(TapeT<T>& tape, const ValueT<T>& hidden, const ValueT<T>& targets,
                   CpcHeadT<T>& head, const CPCConfig& cfg,
                   const std::vector<std::size_t>& lengths, Rng& rng);

template <class T>
struct ApcLossOut {
  ValueT<T> total, l2, tv;
};

// l2 term: mean squared error between head(hidden[t]) and target[t+shift]
// over valid anchors; tv term: tv_weight * mean |pred[t+1] - pred[t]| over
// valid consecutive pairs. Means are per-sequence, then over the batch.
template <class T>
ApcLossOut<T> apc_loss(TapeT<T>& tape, const ValueT<T>& hidden, const ArrayT<T>& future_targets,
                       ApcHeadT<T>& head, const APCConfig& cfg,
                       const std::vector<std::size_t>& lengths);

// Contrastive loss over the masked positions. `masked_positions[b]` holds the
// frame indices that were zeroed in the encoder input for sequence b.
template <class T>
ValueT<T> w2v2_loss(TapeT<T>& tape, const ValueT<T>& hidden, const ArrayT<T>& input_latents,
                    W2v2HeadT<T>& head, const W2V2Config& cfg,
                    const std::vector<std::vector<std::uint32_t>>& masked_positions, Rng& rng);

extern template ValueT<float> cpc_loss<float>(TapeT<float>&, const ValueT<float>&,
                                              const ValueT<float>&, CpcHeadT<float>&,
                                              const CPCConfig&, const std::vector<std::size_t>&,
                                              Rng&);
extern template ValueT<double> cpc_loss<double>(TapeT<double>&, const ValueT<double>&,
                                                const ValueT<double>&, CpcHeadT<double>&,
                                                const CPCConfig&, const std::vector<std::size_t>&,
                                                Rng&);
extern template ApcLossOut<float> apc_loss<float>(TapeT<float>&, const ValueT<float>&,
                                                  const ArrayT<float>&, ApcHeadT<float>&,
                                                  const APCConfig&,
                                                  const std::vector<std::size_t>&);
extern template ApcLossOut<double> apc_loss<double>(TapeT<double>&, const ValueT<double>&,
                                                    const ArrayT<double>&, ApcHeadT<double>&,
                                                    const APCConfig&,
                                                    const std::vector<std::size_t>&);
extern template ValueT<float> w2v2_loss<float>(TapeT<float>&, const ValueT<float>&,
                                               const ArrayT<float>&, W2v2HeadT<float>&,
                                               const W2V2Config&,
                                               const std::vector<std::vector<std::uint32_t>>&,
                                               Rng&);
extern template ValueT<double> w2v2_loss<double>(TapeT<double>&, const ValueT<double>&,
                                                 const ArrayT<double>&, W2v2HeadT<double>&,
                                                 const W2V2Config&,
                                                 const std::vector<std::vector<std::uint32_t>>&,
                                                 Rng&);

}  // namespace lwssl
