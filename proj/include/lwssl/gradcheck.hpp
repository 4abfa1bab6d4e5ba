// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "lwssl/ops.hpp"
#include "lwssl/rng.hpp"
#include "lwssl/tape.hpp"

namespace lwssl {

// Central finite differences against the reverse-mode gradient, in f64.
// Independent of the backward implementation: it only re-evaluates the
// forward build with perturbed leaves.
//
// The reported error is |fd - grad| / max(|fd| + |grad|, floor), i.e. a
// relative error with an absolute floor so that near-zero gradients are
// compared absolutely.
struct FdCheck {
  double step = 1e-5;
  double denom_floor = 1e-3;
  std::size_t max_elems_per_leaf = 256;

  double max_error(std::vector<ParamT<double>*> leaves,
                   const std::function<ValueT<double>(TapeT<double>&)>& build,
                   Rng& pick_rng) const {
    // Analytic pass.
    std::vector<ArrayT<double>> analytic;
    {
      TapeT<double> tape;
      auto loss = build(tape);
      tape.backward(loss);
      for (auto* p : leaves)
        analytic.push_back(p->grad.defined() ? p->grad.clone()
                                             : ArrayT<double>::zeros(p->value.shape()));
      tape.release();
    }

    auto eval = [&]() {
      TapeT<double> tape;
      auto loss = build(tape);
      double v = loss.arr.data()[0];
      tape.release();
      return v;
    };

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      auto* p = leaves[li];
      const std::size_t n = p->value.numel();
      std::vector<std::size_t> idx;
      if (n <= max_elems_per_leaf) {
        for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
      } else {
        for (std::size_t i = 0; i < max_elems_per_leaf; ++i)
          idx.push_back(static_cast<std::size_t>(pick_rng.below(n)));
      }
      for (std::size_t i : idx) {
        const double orig = p->value.data()[i];
        p->value.data()[i] = orig + step;
        const double fp = eval();
        p->value.data()[i] = orig - step;
        const double fm = eval();
        p->value.data()[i] = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double g = analytic[li].data()[i];
        const double err = std::abs(fd - g) / std::max(std::abs(fd) + std::abs(g), denom_floor);
        worst = std::max(worst, err);
      }
    }
    return worst;
  }
};

}  // namespace lwssl
