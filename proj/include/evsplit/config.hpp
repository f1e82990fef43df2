// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "evsplit/dtd.hpp"
#include "evsplit/edl.hpp"

namespace evsplit {

enum class PartitionKind { kDirichlet, kIid };
enum class RatioScope { kParticipating, kRegistered };

/// Every knob of a run. Defaults are the documented ones; parse_config()
/// fills anything omitted.
struct ExperimentConfig {
  // data
  std::size_t num_classes = 3;
  std::size_t input_dim = 8;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  double separation = 3.0;
  double noise = 1.0;
  PartitionKind partition = PartitionKind::kDirichlet;
  double kappa = 0.1;

  // federation
  std::size_t clients = 8;
  std::size_t clients_per_round = 8;
  int rounds = 60;
  int annealing_horizon = 0;  // 0: same as rounds
  std::size_t local_steps = 1;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  bool shared_replica = false;

  // model
  std::vector<std::size_t> client_widths{16};
  std::vector<std::size_t> processor_widths{16};
  std::vector<std::size_t> head_hidden{};
  std::vector<std::size_t> aux_extractor_widths{8};
  std::vector<std::size_t> aux_head_hidden{};

  // csr / ea
  double beta = 0.9;
  int ttl = 10;  // rounds; 0 disables eviction
  double epsilon = 1e-8;
  RatioScope ratio_scope = RatioScope::kParticipating;
  edl::EntropyForm entropy = edl::EntropyForm::kPerClass;

  // dtd
  double temperature = 5.0;
  double lambda_c = 0.2;
  double lambda_g = 0.3;
  dtd::KdDirection kd_direction = dtd::KdDirection::kTeacherReference;
  dtd::RelationMode relation = dtd::RelationMode::kDistance;
  dtd::StudentScores student_scores = dtd::StudentScores::kExpectedProb;

  // toggles
  bool use_ea = true;
  bool use_bcc = true;
  bool use_dtd = true;
  bool ea_evidence = true;
  bool ea_aleatoric = true;
  bool ea_epistemic = true;

  // metrics / io
  std::vector<int> critical_classes{0};
  std::vector<double> rta_targets{0.5, 0.7, 0.9};
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string tag = "run";

  /// Throws ConfigError naming the field and the bound.
  void validate() const;
  int horizon() const { return annealing_horizon > 0 ? annealing_horizon : rounds; }
  dtd::DistillConfig distill() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Ordered key -> text view of every field.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);

/// Applies one key/value; throws ConfigError for an unknown key or a bad value.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& base = {});
ExperimentConfig parse_config_file(const std::string& path);

/// Applies `key=value` overrides on top of `config` and validates.
ExperimentConfig apply_overrides(ExperimentConfig config, const std::vector<std::string>& overrides);

std::string serialize_config(const ExperimentConfig& config);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace evsplit
