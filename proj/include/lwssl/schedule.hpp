// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lwssl/losses.hpp"

namespace lwssl {

enum class Regime { E2E, GLW, ILW };

const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

enum class ScheduleKind { MoreAtBottom, Uniform, FewerAtBottom };

const char* to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

// Geometric step-allocation profile. more-at-bottom weights layer l by
// decay^(l-1); fewer-at-bottom is its mirror; uniform splits evenly.
struct ScheduleShape {
  ScheduleKind kind = ScheduleKind::Uniform;
  double decay = 0.5;
};

// Length-L positive integer list summing to total_steps. more-at-bottom is
// non-increasing, fewer-at-bottom non-decreasing, uniform equal up to 1.
std::vector<std::size_t> build_schedule(const ScheduleShape& shape, std::size_t num_layers,
                                        std::size_t total_steps);

// Which layers update at which steps, which loss is attached, and how inputs
// are truncated.
struct PretrainPlan {
  Regime regime = Regime::E2E;
  SslLossKind loss = SslLossKind::CPC;
  std::size_t total_steps = 0;
  std::size_t layers_per_step = 1;                // ILW block size k
  std::vector<std::size_t> steps_per_layer;       // ILW; built from `shape` if empty
  ScheduleShape shape;
  std::optional<std::size_t> truncate_len;

  // Fills steps_per_layer if empty and checks the ILW invariants.
  void resolve(std::size_t num_layers);

  struct BlockWindow {
    std::size_t first_layer = 1, last_layer = 1;  // inclusive, 1-based
    std::size_t begin_step = 0, end_step = 0;     // [begin, end)
  };

  // ILW blocks bottom-to-top, each covering the step window that equals the
  // sum of its layers' schedule entries.
  std::vector<BlockWindow> block_windows(std::size_t num_layers) const;
  const BlockWindow& window_for_step(const std::vector<BlockWindow>& windows,
                                     std::size_t step_index) const;
};

}  // namespace lwssl
