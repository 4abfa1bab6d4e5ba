// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "lwssl/data.hpp"
#include "lwssl/encoder.hpp"
#include "lwssl/membudget.hpp"
#include "lwssl/optimizer.hpp"
#include "lwssl/schedule.hpp"

namespace lwssl {

struct StepMetrics {
  std::size_t step = 0;
  Regime regime = Regime::E2E;
  std::size_t active_lo = 1, active_hi = 1;
  double loss = 0;
  std::vector<double> layer_losses;  // GLW only: one local loss per layer
  MemoryReport mem;
};

struct PretrainOptions {
  std::size_t batch_size = 4;
  double lr = 1e-3;
  CPCConfig cpc;
  APCConfig apc;
  W2V2Config w2v2;
  // called after every step (metrics CSV sink)
  std::function<void(const StepMetrics&)> on_step;
  // ILW: called when a block finishes, with its 0-based block index
  std::function<void(std::size_t, EncoderState&)> on_block_end;
};

// Shortest input the given objective can score.
std::size_t loss_min_input_len(SslLossKind kind, const PretrainOptions& opt);

// Loss heads attached at one point of the encoder. ILW creates a fresh set
// per block (heads of finished blocks are dropped together with their
// optimizer slots); GLW keeps one per layer; E2E one on top.
struct SslHeads {
  std::optional<CpcHead> cpc;
  std::optional<ApcHead> apc;
  std::optional<W2v2Head> w2v2;

  static SslHeads init(SslLossKind kind, const EncoderConfig& cfg, const PretrainOptions& opt,
                       Rng& rng);
  std::vector<Param*> params();
  std::int64_t bytes();
};

// Drives one self-supervised pretraining run: E2E, GLW, or ILW per the plan.
// All per-step randomness (batch picks, truncation windows, negatives, masks,
// head init) is derived functionally from the run seed, so a run can resume
// at any block boundary and reproduce the uninterrupted run bit for bit.
class Pretrainer {
 public:
  Pretrainer(EncoderState& state, PretrainPlan plan, PretrainOptions opt, std::uint64_t seed);

  const PretrainPlan& plan() const { return plan_; }
  const std::vector<PretrainPlan::BlockWindow>& windows() const { return windows_; }

  // Executes steps [first_step, plan.total_steps) over the dataset.
  std::vector<StepMetrics> run(const Dataset& data, std::size_t first_step = 0);

  // One step on an explicit batch (tests drive this directly).
  StepMetrics step(std::size_t step_index, const FeatureBatch& batch);

 private:
  StepMetrics blockwise_step(std::size_t step_index, const FeatureBatch& batch,
                             const PretrainPlan::BlockWindow& w, Rng& step_rng);
  StepMetrics glw_step(std::size_t step_index, const FeatureBatch& batch, Rng& step_rng);

  ValueT<float> attach_loss(Tape& tape, const Value& hidden, SslHeads& heads,
                            const FeatureBatch& batch, const Arr& latents, Rng& rng);

  EncoderState& state_;
  PretrainPlan plan_;
  PretrainOptions opt_;
  Rng base_rng_;
  AdamOptimizer adam_;
  std::vector<PretrainPlan::BlockWindow> windows_;
  std::size_t current_block_ = SIZE_MAX;
  SslHeads heads_;                     // active block's heads (E2E/ILW)
  std::vector<SslHeads> layer_heads_;  // GLW: one per layer
  std::vector<std::vector<std::uint32_t>> masked_;  // current step's mask (W2V2)
};

// Measured memory report from a tape after backward, before release.
MemoryReport measure_report(Tape& tape, std::int64_t trainable_param_bytes,
                            std::int64_t frozen_weight_bytes, std::int64_t optimizer_bytes);

// Per-op-kind breakdown of the tape's retained activations (diagnostics for
// planner validation).
std::vector<std::pair<std::string, std::int64_t>> measured_activation_items(const Tape& tape);

// CSV sink writing the per-step metrics schema:
// step,regime,active_block,loss,activation_bytes,grad_bytes,optimizer_bytes,
// param_bytes,peak_bytes
class StepCsvWriter {
 public:
  explicit StepCsvWriter(const std::string& path);
  void write(const StepMetrics& m);
  ~StepCsvWriter();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lwssl
