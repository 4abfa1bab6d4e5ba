// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

#include "lwssl/config.hpp"
#include "lwssl/probe.hpp"

namespace lwssl {

struct CellOutcome {
  std::string plan_name;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalResult eval;
  std::int64_t peak_bytes = 0;            // max over the cell's training steps
  std::int64_t max_activation_bytes = 0;  // max retained activations per step
  std::string dir;
};

// Builds this cell's datasets, pretrains per the plan, fine-tunes on the
// source domain, evaluates both domains, and writes steps.csv / curve.csv /
// eval.csv / checkpoints under cell_dir. Pure function of (config, plan,
// seed): rerunning it reproduces every output byte.
CellOutcome run_cell(const ExperimentConfig& cfg, const PlanConfig& plan, std::uint64_t seed,
                     const std::string& cell_dir, bool resume = false);

// Full (plan x seed) matrix. Writes resolved.toml, MANIFEST.csv, summary.csv
// under cfg.out_dir. Returns 0 when every cell succeeded, 3 when partial.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log, bool resume = false);

// Renders the summary into table CSVs (regimes x losses, k vs memory,
// truncation vs memory) and per-plan fine-tuning curve files. Returns 0 for a
// complete results dir, 3 when cells are missing or failed.
int write_report(const std::string& results_dir, std::ostream& log);

// Cell directory name for (plan, seed).
std::string cell_dir_name(const std::string& plan_name, std::uint64_t seed);

}  // namespace lwssl
