// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lwssl/data.hpp"
#include "lwssl/encoder.hpp"
#include "lwssl/schedule.hpp"

namespace lwssl {

// Plain-text key/value config, a TOML-compatible subset:
//   [section] / [section.sub] headers, key = value pairs, # comments,
//   values: integer, float, bool, "string", [list, of, values].
// Unknown sections and keys are rejected with field-level diagnostics.
namespace toml {

using Value = std::variant<std::int64_t, double, bool, std::string,
                           std::vector<std::int64_t>, std::vector<std::string>>;

struct Doc {
  // section -> key -> value, plus consumption tracking for unknown-key checks
  std::map<std::string, std::map<std::string, Value>> sections;

  static Doc parse(const std::string& text);

  bool has(const std::string& section) const { return sections.count(section) > 0; }
  std::vector<std::string> sections_with_prefix(const std::string& prefix) const;
};

// Typed view of one section that records which keys were read; finish() throws
// on any key that was never consumed.
class Section {
 public:
  Section(const Doc& doc, const std::string& name);

  std::int64_t get_int(const std::string& key, std::int64_t def);
  std::int64_t require_int(const std::string& key);
  double get_double(const std::string& key, double def);
  bool get_bool(const std::string& key, bool def);
  std::string get_string(const std::string& key, const std::string& def);
  std::string require_string(const std::string& key);
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         std::vector<std::int64_t> def);
  std::optional<std::int64_t> get_opt_int(const std::string& key);

  void finish() const;  // reject unconsumed keys

 private:
  const Value* find(const std::string& key);
  std::string name_;
  const std::map<std::string, Value>* kv_ = nullptr;
  mutable std::vector<std::string> consumed_;
};

}  // namespace toml

struct DataConfig {
  std::size_t num_states = 8;
  std::size_t raw_feature_dim = 8;
  std::size_t latent_dim = 6;
  std::size_t stack = 4;
  std::size_t stride = 3;
  std::uint64_t world_seed = 1234;
  std::size_t source_sequences = 160;
  std::size_t target_sequences = 64;
  std::size_t eval_sequences = 48;
  std::size_t source_min_len = 150, source_max_len = 240;  // raw frames
  std::size_t target_min_len = 240, target_max_len = 360;
  double source_noise = 1.4, target_noise = 1.5;
  double target_mixing_perturb = 0.15;
  double self_transition = 0.85;
  bool normalize_features = true;  // global stats over the pretraining pool

  DomainSpec source_spec() const;
  DomainSpec target_spec() const;
};

struct PlanConfig {
  std::string name;
  std::string regime = "e2e";  // supervised|semi_supervised|e2e|glw|ilw
  SslLossKind loss = SslLossKind::CPC;
  std::size_t total_steps = 0;
  std::size_t layers_per_step = 1;
  ScheduleShape shape;
  std::optional<std::size_t> truncate_len;
  std::optional<double> lr;  // overrides pretrain.lr for this plan

  bool is_ssl() const { return regime == "e2e" || regime == "glw" || regime == "ilw"; }
  PretrainPlan to_plan() const;
};

struct PretrainSettings {
  std::size_t batch_size = 4;
  double lr = 1e-3;
  CPCConfig cpc;
  APCConfig apc;
  W2V2Config w2v2;
};

struct FinetuneSettings {
  std::size_t steps = 300;
  std::size_t batch_size = 4;
  double lr = 3e-4;
  std::size_t head_warmup_steps = 150;
  std::size_t eval_every = 50;
};

struct MemplanSettings {
  std::size_t input_len = 100;
  std::size_t batch = 1;
  std::string loss = "cpc";
  bool quantized_frozen = false;
};

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "results";
  std::size_t workers = 1;
  EncoderConfig encoder;
  DataConfig data;
  PretrainSettings pretrain;
  FinetuneSettings finetune;
  MemplanSettings memplan;
  std::vector<PlanConfig> plans;

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_string(const std::string& text);

  // Serialization with every default expanded; parse_string(to_toml()) must
  // rebuild an identical object.
  std::string to_toml() const;

  void validate() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace lwssl
