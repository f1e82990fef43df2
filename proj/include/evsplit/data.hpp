// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"

#include "evsplit/matrix.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::data {

struct BlobSpec {
  std::size_t num_classes = 3;
  std::size_t dim = 8;
  std::size_t samples_per_class = 200;
  double separation = 3.0;  ///< scale of the class means
  double noise = 1.0;       ///< per-coordinate standard deviation
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// Mean of class n: separation * (1 + n / d) * e_{n mod d}. Distinct for
/// every n, including n >= d.
std::vector<double> class_mean(const BlobSpec& spec, std::size_t n);

/// Gaussian blobs, samples ordered by class then index.
Dataset synth_dataset(const BlobSpec& spec);

/// Rows and labels at `indices`, in the given order.
nn::Batch subset(const Dataset& data, std::span<const std::size_t> indices);

struct Partition {
  std::map<int, std::vector<std::size_t>> assignment;
  std::map<int, std::vector<std::size_t>> class_counts;
  std::size_t num_classes = 0;

  std::size_t num_clients() const { return assignment.size(); }
};

/// Per class, client shares ~ Dirichlet(kappa * 1_K) from normalized Gamma
/// draws; floor counts plus the residual to the largest fractional parts
/// (ties to the lower client id).
Partition dirichlet_partition(std::span<const int> labels, std::size_t num_classes, std::size_t clients,
                              double kappa, std::uint64_t seed);

/// Shuffled equal split, remainder to the lowest client ids.
Partition iid_partition(std::span<const int> labels, std::size_t num_classes, std::size_t clients,
                        std::uint64_t seed);

/// Throws InternalError if indices overlap, miss a sample or counts disagree.
void check_partition(const Partition& partition, std::span<const int> labels);

/// Label histogram of the whole dataset, normalized.
std::vector<double> label_distribution(std::span<const int> labels, std::size_t num_classes);

nlohmann::json to_json(const Partition& partition);
Partition partition_from_json(const nlohmann::json& j);

}  // namespace evsplit::data
