// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unordered_map>
#include <vector>

#include "lwssl/tape.hpp"

namespace lwssl {

// Adam with per-param moment slots. Slots exist only for trainable params
// that have received a gradient, and are freed when a layer freezes, so
// slot_bytes() tracks what an on-device trainer would actually hold.
class AdamOptimizer {
 public:
  struct Hyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamOptimizer() = default;
  explicit AdamOptimizer(Hyper h) : h_(h) {}

  const Hyper& hyper() const { return h_; }
  void set_lr(double lr) { h_.lr = lr; }

  // Updates every param in the list that is trainable and has a grad.
  void step(const std::vector<Param*>& params);

  void drop_slots(const std::vector<Param*>& params);
  void drop_all() { slots_.clear(); }

  std::int64_t slot_bytes() const;

 private:
  struct Slots {
    Arr m, v;
    std::int64_t t = 0;
  };
  std::unordered_map<Param*, Slots> slots_;
  Hyper h_;
};

}  // namespace lwssl
