// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <span>
#include <vector>

#include "evsplit/csr.hpp"
#include "evsplit/matrix.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::ea {

inline constexpr double kDefaultEpsilon = 1e-8;

/// Mean over classes of E_bar(i,i) / (sum_j E_bar(i,j) + eps).
double evidence_concentration(const Matrix& normalized_evidence, double eps = kDefaultEpsilon);

struct UncertaintyRatios {
  std::vector<double> aleatoric;
  std::vector<double> epistemic;
};

/// R_k = (sum over the pool of per-client totals) / (total_k + eps),
/// computed separately for the aleatoric and epistemic vectors. The pool is
/// the clients passed in.
UncertaintyRatios uncertainty_ratios(std::span<const std::vector<double>> aleatoric,
                                     std::span<const std::vector<double>> epistemic, double eps = kDefaultEpsilon);

/// Same, with the numerators supplied (e.g. summed over every registered
/// client instead of this round's participants).
UncertaintyRatios uncertainty_ratios(std::span<const std::vector<double>> aleatoric,
                                     std::span<const std::vector<double>> epistemic, double pool_aleatoric,
                                     double pool_epistemic, double eps = kDefaultEpsilon);

/// Which factors enter the score; a disabled factor is fixed to 1.
struct FactorToggles {
  bool evidence = true;
  bool aleatoric = true;
  bool epistemic = true;
};

struct ClientWeighting {
  std::vector<double> concentration;
  std::vector<double> ratio_aleatoric;
  std::vector<double> ratio_epistemic;
  std::vector<double> score;
  std::vector<double> weight;
  bool uniform_fallback = false;
};

/// s = Q * R_ale * R_epi, w = s / sum(s). Falls back to uniform weights
/// when every score is zero.
ClientWeighting client_weights(std::span<const double> concentration, std::span<const double> ratio_aleatoric,
                               std::span<const double> ratio_epistemic, FactorToggles toggles = {});

/// Full pipeline from normalized records of the participating clients.
ClientWeighting evidential_weights(std::span<const csr::NormalizedRecord> records, double eps = kDefaultEpsilon,
                                   FactorToggles toggles = {});

std::vector<double> uniform_weights(std::size_t k);

/// Elementwise sum_k w_k * theta_k over identically shaped stacks.
nn::LayerStack aggregate_params(std::span<const nn::LayerStack> stacks, std::span<const double> weights);

std::vector<double> aggregate_flat(std::span<const std::vector<double>> params, std::span<const double> weights);

}  // namespace evsplit::ea
