// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "lwssl/data.hpp"
#include "lwssl/encoder.hpp"
#include "lwssl/membudget.hpp"

namespace lwssl {

// Frame-classification head on top of the encoder; the supervised stage and
// the evaluation metric (frame error rate) both live here.
struct ProbeHead {
  Param w, b;  // [model_dim, num_classes], [num_classes]

  static ProbeHead init(std::size_t model_dim, std::size_t num_classes, Rng& rng);
  std::size_t num_classes() const { return w.value.shape()[1]; }
  std::vector<Param*> params() { return {&w, &b}; }
};

enum class FinetuneMode { Full, HeadOnly };

struct FinetuneOptions {
  std::size_t steps = 300;
  std::size_t batch_size = 4;
  double lr = 3e-4;
  FinetuneMode mode = FinetuneMode::Full;
  // steps trained head-only before the encoder unfreezes (both arms of any
  // comparison get the same schedule); ignored in HeadOnly mode
  std::size_t head_warmup_steps = 0;
  // evaluation curve: every eval_every steps, frame error on `curve_eval`
  std::size_t eval_every = 0;
  const Dataset* curve_eval = nullptr;
  std::function<void(std::size_t step, double fer, double train_loss)> on_eval;
  std::function<void(const MemoryReport&)> on_memory;  // first-step report
};

// Supervised cross-entropy on valid frames of labeled data. Throws on
// unlabeled input; target-domain data never reaches this function in the
// experiment wiring (its labels are stripped at load time).
void finetune(EncoderState& state, ProbeHead& head, const Dataset& labeled, FinetuneOptions opt,
              std::uint64_t seed);

struct EvalResult {
  double source_fer = 1.0, target_fer = 1.0;
  std::size_t source_frames = 0, source_errors = 0;
  std::size_t target_frames = 0, target_errors = 0;
};

// Misclassified valid frames / valid frames, per domain. Read-only: trainable
// flags are saved and restored, parameters never change.
double frame_error_rate(EncoderState& state, ProbeHead& head, const Dataset& eval_set);
EvalResult evaluate(EncoderState& state, ProbeHead& head, const Dataset& source_eval,
                    const Dataset& target_eval);

// Teacher labels for the semi-supervised baseline: argmax frame predictions
// attached as labels to a copy of `unlabeled`.
Dataset pseudo_label(EncoderState& teacher, ProbeHead& head, const Dataset& unlabeled);

}  // namespace lwssl
