// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "evsplit/config.hpp"
#include "evsplit/csr.hpp"
#include "evsplit/data.hpp"
#include "evsplit/dtd.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::engine {

/// Independent stream per (seed, tags...).
std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Uniform draw of k of K client ids without replacement, sorted ascending.
std::vector<int> sample_clients(std::size_t total, std::size_t k, std::uint64_t seed, int round);

struct Metrics {
  double accuracy = 0.0;
  double critical_rate = 0.0;
  bool critical_empty = false;  ///< no critical classes configured, or none in the eval set
};

/// Critical rate: share of critical-class samples predicted as a
/// non-critical class.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const int> critical_classes);

/// First 1-based round whose accuracy reaches `target`.
std::optional<int> rta(std::span<const double> accuracy, double target);

struct PairLog {
  int client_i = 0;
  int client_j = 0;
  double gain = 0.0;
  std::vector<double> rho;
  std::size_t moved_i = 0;
  std::size_t moved_j = 0;
};

struct RoundReport {
  int round = 0;
  std::vector<int> selected;
  std::vector<int> active;       ///< selected clients that hold data
  std::vector<double> weights;   ///< one slot per registered client, 0 when absent
  bool uniform_fallback = false;
  double task_loss = 0.0;
  double kd_c = 0.0;
  double kd_g = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double critical_rate = 0.0;
  bool critical_empty = false;
  double aux_accuracy = 0.0;
  std::vector<int> biased;       ///< from the last local step
  std::vector<PairLog> pairs;    ///< from the last local step
  bool bcc_fallback = false;     ///< BCC on but no pair formed in some step
  std::size_t transferred = 0;   ///< samples routed to a partner, whole round
  double delta_before = 0.0;     ///< step mean of sum_k w_k |P_k - P_g|_1 (g_max = 1)
  double delta_after = 0.0;
  double wall_ms = 0.0;          ///< not written to the deterministic outputs
};

struct ExperimentState {
  ExperimentConfig config;
  data::Dataset train;
  data::Dataset test;
  data::Partition partition;
  nn::SplitModel global;
  std::map<int, dtd::AuxiliaryModel> auxiliary;
  csr::CsrStore store{0.9, std::nullopt};
  std::map<int, double> last_weights;
  bool has_global_snapshot = false;
  int round = 0;
};

nn::SplitArchitecture architecture(const ExperimentConfig& config);
ExperimentState init_state(const ExperimentConfig& config);

/// Rows of client `client` used at local step `step` of `round`.
std::vector<std::size_t> batch_indices(const ExperimentState& state, int client, int round, std::size_t step);

RoundReport run_round(ExperimentState& state);

/// Uniform-averaging split round with no evidence bookkeeping, coded
/// directly. Returns the next global model; `state` is not modified.
nn::SplitModel reference_plain_round(const ExperimentState& state);

struct ExperimentResult {
  std::vector<RoundReport> reports;
  ExperimentState state;
};

ExperimentResult run_rounds(const ExperimentConfig& config);

std::string metrics_csv(const ExperimentConfig& config, std::span<const RoundReport> reports);
nlohmann::json summary_json(const ExperimentConfig& config, std::span<const RoundReport> reports);
nlohmann::json timing_json(const ExperimentConfig& config, std::span<const RoundReport> reports);

/// Writes metrics.csv, summary.json, partition.json, csr_checkpoint.json
/// and timing.json under config.output_dir.
void write_outputs(const ExperimentResult& result);

/// run_rounds + write_outputs.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct AblationVariant {
  std::string name;
  ExperimentConfig config;
};

/// full, no_ea, no_ale, no_epi, no_E, no_bcc and optionally baseline.
std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base, bool include_baseline);

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<double>> final_accuracy;  ///< per variant, per seed
  nlohmann::json to_json() const;
  double mean(const std::string& variant) const;
};

/// Runs every variant for every seed. When `write_runs` is set each run's
/// files go to <output_dir>/<variant>/seed_<s>.
AblationReport run_ablation(const ExperimentConfig& base, std::span<const std::uint64_t> seeds, bool include_baseline,
                            bool write_runs);

void write_ablation(const ExperimentConfig& base, const AblationReport& report);

}  // namespace evsplit::engine
