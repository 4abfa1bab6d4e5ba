// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace lwssl {

// Finite-difference gradient suite over every primitive op and the three SSL
// losses, in f64. Prints one line per op with the worst relative error over
// `cases_per_op` random cases; returns the overall worst error.
double run_gradcheck_suite(std::ostream& out, std::size_t cases_per_op, double tolerance = 1e-6);

// Fast built-in sanity checks (kernel equivalence, tape byte conservation,
// freeze soundness, planner agreement, container round-trips). Prints one
// pass/fail line per check; returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace lwssl
