// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lwssl/ops.hpp"
#include "lwssl/rng.hpp"
#include "lwssl/tape.hpp"

namespace lwssl {

// Streaming "conformer-lite" stack: every block is layer-norm -> banded
// left-context self-attention (residual) -> causal depthwise + pointwise conv
// (residual) -> feed-forward with 4x expansion (residual). Right context is
// structurally zero: no op can read a future frame.
struct EncoderConfig {
  std::size_t num_layers = 6;
  std::size_t model_dim = 32;
  std::size_t conv_kernel = 5;
  std::size_t num_heads = 2;
  std::size_t left_context = 8;
  std::size_t input_dim = 32;  // stacked feature dims, without the domain one-hot
  std::size_t domain_onehot_dim = 4;
  std::size_t subsample_factor = 3;
  std::size_t ffn_expand = 4;

  std::size_t total_input_dim() const { return input_dim + domain_onehot_dim; }
  std::size_t head_dim() const { return model_dim / num_heads; }

  void validate() const;

  // Per-layer and total trainable parameter counts, as closed forms.
  std::size_t params_per_layer() const;
  std::size_t input_proj_params() const;
  std::size_t total_params() const;

  // The production-scale instance; used by the memory planner only.
  static EncoderConfig paper_scale();
};

struct LayerParams {
  Param ln1_g, ln1_b;
  Param wq, bq, wk, bk, wv, bv, wo, bo;
  Param rel_bias;  // [heads, left_context+1] learned position bias
  Param ln2_g, ln2_b;
  Param conv_w, conv_b;
  Param pw_w, pw_b;
  Param ln3_g, ln3_b;
  Param ff1_w, ff1_b;
  Param ff2_w, ff2_b;

  template <class F>
  void for_each(F&& f) {
    f(ln1_g), f(ln1_b), f(wq), f(bq), f(wk), f(bk), f(wv), f(bv), f(wo), f(bo), f(rel_bias);
    f(ln2_g), f(ln2_b), f(conv_w), f(conv_b), f(pw_w), f(pw_b);
    f(ln3_g), f(ln3_b), f(ff1_w), f(ff1_b), f(ff2_w), f(ff2_b);
  }

  void set_trainable(bool on);
  bool trainable() const { return ln1_g.trainable; }
  std::int64_t bytes() const;
  std::uint64_t content_hash() const;
};

class EncoderState {
 public:
  static EncoderState init(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t num_layers() const { return cfg_.num_layers; }

  // `layers` uses 1-based indices, bottom layer is 1. The input projection
  // trains together with layer 1. Throws on an empty set: a training step
  // must update something.
  void set_trainable(const std::set<std::size_t>& layers);
  void freeze_all();
  std::vector<std::size_t> trainable_layers() const;

  LayerParams& layer(std::size_t idx1) { return layers_.at(idx1 - 1); }
  const LayerParams& layer(std::size_t idx1) const { return layers_.at(idx1 - 1); }
  Param& input_proj_w() { return in_w_; }
  Param& input_proj_b() { return in_b_; }

  template <class F>
  void for_each_param(F&& f) {
    f(in_w_), f(in_b_);
    for (auto& l : layers_) l.for_each(f);
  }

  std::size_t actual_param_count();
  std::int64_t trainable_param_bytes();
  std::int64_t frozen_param_bytes();

  // Hash of one layer's parameter payload; layer 0 is the input projection.
  std::uint64_t layer_hash(std::size_t idx) const;
  std::uint64_t content_hash() const;

  // Input features [B, T, input_dim + domain_onehot_dim] -> hidden of layer
  // `upto_layer` [B, T, model_dim]. Layers above upto_layer do not touch the
  // tape.
  Value encode(Tape& tape, const Arr& features, std::size_t upto_layer);

  // Building blocks for schedule-specific graphs.
  Value project_input(Tape& tape, const Arr& features);
  Value apply_block(Tape& tape, std::size_t layer_idx1, const Value& x);

  void save_checkpoint(const std::string& path) const;
  static EncoderState load_checkpoint(const std::string& path);

 private:
  EncoderConfig cfg_;
  Param in_w_, in_b_;
  std::vector<LayerParams> layers_;
};

}  // namespace lwssl
