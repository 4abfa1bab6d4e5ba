// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lwssl/encoder.hpp"
#include "lwssl/losses.hpp"

namespace lwssl {

// Byte decomposition of one training step. param/grad/optimizer/activation
// cover the trainable side; frozen_weight_bytes is the weight storage of the
// frozen layers the forward pass runs through (layers above the attach point
// are not in the graph and are not counted). total is the sum of those five.
// peak adds the transient forward buffers that are freed before backward:
// peak = param + frozen + optimizer + activation + max(grad, transient).
struct MemoryReport {
  std::int64_t param_bytes = 0;
  std::int64_t grad_bytes = 0;
  std::int64_t optimizer_bytes = 0;
  std::int64_t activation_bytes = 0;
  std::int64_t frozen_weight_bytes = 0;
  bool frozen_quantized = false;
  std::int64_t total_bytes = 0;
  std::int64_t transient_bytes = 0;
  std::int64_t peak_bytes = 0;

  void finalize() {
    total_bytes =
        param_bytes + grad_bytes + optimizer_bytes + activation_bytes + frozen_weight_bytes;
    peak_bytes = param_bytes + frozen_weight_bytes + optimizer_bytes + activation_bytes +
                 std::max(grad_bytes, transient_bytes);
  }
};

struct QuantizationMode {
  bool int8_frozen = false;  // frozen weights held as int8 + one f32 scale per tensor
};

// Everything the planner needs to size a loss head.
struct PlannerLoss {
  SslLossKind kind = SslLossKind::CPC;
  CPCConfig cpc;
  APCConfig apc;
  W2V2Config w2v2;
  std::size_t target_dim = 0;  // APC/W2V2 latent dim (the un-stacked feature block)
  // W2V2 masked positions per sequence; defaults to the expected count.
  std::optional<std::vector<std::size_t>> masked_counts;

  std::size_t min_input_len() const;
};

// Closed-form prediction of one step's MemoryReport from tensor shapes alone,
// without touching a tape: activations retained only inside the active block
// [active_lo, active_hi] and its loss head, gradients and optimizer slots
// only for trainable params, frozen prefix contributing weights and transient
// (non-retained) forward buffers.
MemoryReport plan_step(const EncoderConfig& cfg, std::size_t active_lo, std::size_t active_hi,
                       std::size_t input_len, std::size_t batch, const PlannerLoss& loss,
                       QuantizationMode quant = {});

// Itemized activation breakdown for diagnostics (same enumeration plan_step
// sums over).
std::vector<std::pair<std::string, std::int64_t>> plan_activation_items(
    const EncoderConfig& cfg, std::size_t active_lo, std::size_t active_hi, std::size_t input_len,
    std::size_t batch, const PlannerLoss& loss);

struct ComponentErrors {
  double activation = 0, grad = 0, optimizer = 0;
  double max_component() const { return std::max({activation, grad, optimizer}); }
};

// Relative errors |planner - measured| / measured per headline component.
// Throws with an itemized diagnostic when any component is off by > 10%.
ComponentErrors validate_against_measurement(
    const MemoryReport& planned, const MemoryReport& measured,
    const std::vector<std::pair<std::string, std::int64_t>>& planned_items = {},
    const std::vector<std::pair<std::string, std::int64_t>>& measured_items = {});

struct LinearFit {
  double slope = 0, intercept = 0, r2 = 0;
  double predicted = 0;  // at the requested x
};

// Ordinary least squares through (layers_updated, bytes) points, evaluated at
// x = layers. Needs at least two distinct x values.
LinearFit extrapolate_linear(const std::vector<std::pair<double, double>>& points, double at_x);

}  // namespace lwssl
