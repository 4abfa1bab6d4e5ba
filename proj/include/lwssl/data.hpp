// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lwssl/nd_array.hpp"
#include "lwssl/rng.hpp"

namespace lwssl {

// Synthetic domain: a hidden Markov emitter whose state sequence is the frame
// label. Markov dynamics and state geometry are shared across domains through
// world_seed; each domain observes them through its own mixing matrix, bias
// and noise, and its own length distribution. That keeps the probe task
// transferable while making the domains separable in feature space.
struct DomainSpec {
  std::size_t id = 0;
  std::size_t min_len = 60;  // raw frames, before stacking/subsampling
  std::size_t max_len = 120;
  bool labeled = true;

  std::size_t num_states = 8;
  std::size_t raw_feature_dim = 8;
  std::size_t latent_dim = 6;
  double self_transition = 0.85;
  double noise_scale = 0.25;
  double mixing_perturb = 0.0;  // 0 = the shared base geometry
  std::uint64_t world_seed = 1234;

  void validate() const;
};

struct Sequence {
  Arr features;  // [T, F]
  std::vector<std::uint32_t> labels;  // empty when unlabeled
  std::size_t domain_id = 0;

  bool has_labels() const { return !labels.empty(); }
  std::size_t num_frames() const { return features.shape()[0]; }
  std::size_t dim() const { return features.shape()[1]; }
};

struct Dataset {
  std::vector<Sequence> seqs;

  std::size_t size() const { return seqs.size(); }
  bool empty() const { return seqs.empty(); }
  std::size_t dim() const { return seqs.empty() ? 0 : seqs[0].dim(); }
};

// n raw sequences from the domain's emitter; labels attached iff spec.labeled.
// Deterministic given the rng state.
Dataset generate(const DomainSpec& spec, std::size_t n, Rng& rng);

// Frame stacking with striding: output frame i concatenates input frames
// [i*stride, i*stride + stack), repeating the last frame past the edge.
// Output length is ceil(T / stride).
Arr stack_subsample(const Arr& frames, std::size_t stack, std::size_t stride);

// stack_subsample over a dataset, with labels mapped to the last raw frame of
// each stack window and the domain one-hot appended to every frame.
Dataset prepare_model_inputs(const Dataset& raw, std::size_t stack, std::size_t stride,
                             std::size_t onehot_dim);

// Removes labels (the target-domain hygiene step; training code paths only
// ever see a dataset that went through this).
Dataset strip_labels(const Dataset& ds);

struct FeatureBatch {
  Arr features;  // [B, T, F], zero beyond lengths[b]
  std::vector<std::size_t> lengths;
  std::vector<std::vector<std::uint32_t>> labels;  // empty vectors when unlabeled
  std::vector<std::size_t> domain_ids;             // derived from the one-hot block
  bool has_labels = false;

  std::size_t batch_size() const { return lengths.size(); }
  std::size_t max_frames() const { return features.defined() ? features.shape()[1] : 0; }
};

// Pads the picked sequences to a common length. domain_ids are recovered from
// the trailing one-hot block so they cannot disagree with the features.
FeatureBatch assemble_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                            std::size_t onehot_dim);

// Crops sequences longer than max_len to a random contiguous window (labels
// and lengths follow). min_required is the attached loss's minimum length.
FeatureBatch truncate(const FeatureBatch& batch, std::size_t max_len, Rng& rng,
                      std::size_t min_required = 1);

// Span masking for the masked-prediction loss: every position covered by a
// span starting at a sampled frame. Forces extra random spans until at least
// min_positions frames are masked (the contrastive loss needs more masked
// positions than negatives). Returns sorted positions per sequence.
std::vector<std::vector<std::uint32_t>> sample_span_mask(Rng& rng,
                                                         const std::vector<std::size_t>& lengths,
                                                         double mask_prob, std::size_t span,
                                                         std::size_t min_positions = 1);

// Copy of `features` with the first feat_dim dims of the masked frames zeroed
// (the one-hot block stays intact, the model always knows the domain).
Arr apply_frame_mask(const Arr& features,
                     const std::vector<std::vector<std::uint32_t>>& masked_positions,
                     std::size_t feat_dim);

// Global mean/variance normalization of the feature block (the one-hot tail
// is left alone). Fit once on the training pool, apply to every split.
struct FeatureScaler {
  std::vector<float> mean, inv_std;

  static FeatureScaler fit(const Dataset& ds, std::size_t feat_dim);
  Dataset apply(const Dataset& ds) const;
};

// FSEQ container:
// magic "FSEQ" | u32 version=1 | u32 num_sequences |
//   { u32 num_frames | u32 dim | u8 has_labels | f32 data[] | u32 labels[] }* |
//   u32 crc32 of everything after the magic
void write_fseq(const Dataset& ds, const std::string& path);
Dataset read_fseq(const std::string& path, std::size_t onehot_dim);

}  // namespace lwssl
