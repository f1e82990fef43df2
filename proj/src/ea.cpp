// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/ea.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evsplit/error.hpp"

namespace evsplit::ea {

namespace {

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_weights(std::span<const double> w, std::size_t k) {
  if (w.size() != k) throw ConfigError("aggregate: weight count differs from client count");
  for (double v : w) {
    if (!(v >= 0.0)) throw ConfigError("aggregate: weights must be non-negative");
  }
}

}  // namespace

double evidence_concentration(const Matrix& normalized_evidence, double eps) {
  const std::size_t n = normalized_evidence.rows();
  if (n == 0 || normalized_evidence.cols() != n) throw ConfigError("evidence_concentration: E_bar must be square");
  if (!(eps > 0.0)) throw ConfigError("evidence_concentration: eps must be positive");
  double q_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = normalized_evidence.row(i);
    double row_sum = 0.0;
    for (double v : row) row_sum += v;
    q_sum += row[i] / (row_sum + eps);
  }
  return q_sum / static_cast<double>(n);
}

UncertaintyRatios uncertainty_ratios(std::span<const std::vector<double>> aleatoric,
                                     std::span<const std::vector<double>> epistemic, double eps) {
  double pool_ale = 0.0;
  double pool_epi = 0.0;
  for (const auto& v : aleatoric) pool_ale += total(v);
  for (const auto& v : epistemic) pool_epi += total(v);
  return uncertainty_ratios(aleatoric, epistemic, pool_ale, pool_epi, eps);
}

UncertaintyRatios uncertainty_ratios(std::span<const std::vector<double>> aleatoric,
                                     std::span<const std::vector<double>> epistemic, double pool_aleatoric,
                                     double pool_epistemic, double eps) {
  if (aleatoric.empty()) throw DomainError("uncertainty_ratios: need at least one client");
  if (aleatoric.size() != epistemic.size()) throw ConfigError("uncertainty_ratios: client count mismatch");
  if (!(eps > 0.0)) throw ConfigError("uncertainty_ratios: eps must be positive");
  UncertaintyRatios out;
  for (std::size_t k = 0; k < aleatoric.size(); ++k) {
    out.aleatoric.push_back(pool_aleatoric / (total(aleatoric[k]) + eps));
    out.epistemic.push_back(pool_epistemic / (total(epistemic[k]) + eps));
  }
  return out;
}

ClientWeighting client_weights(std::span<const double> concentration, std::span<const double> ratio_aleatoric,
                               std::span<const double> ratio_epistemic, FactorToggles toggles) {
  const std::size_t k = concentration.size();
  if (k == 0) throw DomainError("client_weights: need at least one client");
  if (ratio_aleatoric.size() != k || ratio_epistemic.size() != k)
    throw ConfigError("client_weights: factor vectors differ in length");
  ClientWeighting w;
  w.concentration.assign(concentration.begin(), concentration.end());
  w.ratio_aleatoric.assign(ratio_aleatoric.begin(), ratio_aleatoric.end());
  w.ratio_epistemic.assign(ratio_epistemic.begin(), ratio_epistemic.end());
  w.score.resize(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double q = toggles.evidence ? concentration[i] : 1.0;
    const double ra = toggles.aleatoric ? ratio_aleatoric[i] : 1.0;
    const double re = toggles.epistemic ? ratio_epistemic[i] : 1.0;
    if (!std::isfinite(q) || !std::isfinite(ra) || !std::isfinite(re))
      throw DomainError("client_weights: factors must be finite");
    // Negative products only arise from sign-mixed uncertainty totals; such
    // a client contributes nothing.
    w.score[i] = std::max(0.0, q * ra * re);
    sum += w.score[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    w.weight = uniform_weights(k);
    w.uniform_fallback = true;
    return w;
  }
  w.weight.resize(k);
  for (std::size_t i = 0; i < k; ++i) w.weight[i] = w.score[i] / sum;
  return w;
}

ClientWeighting evidential_weights(std::span<const csr::NormalizedRecord> records, double eps,
                                   FactorToggles toggles) {
  std::vector<double> q;
  std::vector<std::vector<double>> ale;
  std::vector<std::vector<double>> epi;
  for (const auto& r : records) {
    q.push_back(evidence_concentration(r.evidence, eps));
    ale.push_back(r.aleatoric);
    epi.push_back(r.epistemic);
  }
  const auto ratios = uncertainty_ratios(ale, epi, eps);
  return client_weights(q, ratios.aleatoric, ratios.epistemic, toggles);
}

std::vector<double> uniform_weights(std::size_t k) {
  if (k == 0) throw DomainError("uniform_weights: need at least one client");
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

nn::LayerStack aggregate_params(std::span<const nn::LayerStack> stacks, std::span<const double> weights) {
  if (stacks.empty()) throw ConfigError("aggregate_params: no parameter sets");
  check_weights(weights, stacks.size());
  nn::LayerStack out = stacks.front();
  for (std::size_t l = 0; l < out.size(); ++l) {
    for (double& v : out[l].params.weight.values()) v = 0.0;
    for (double& v : out[l].params.bias) v = 0.0;
  }
  for (std::size_t k = 0; k < stacks.size(); ++k) {
    const auto& s = stacks[k];
    if (s.size() != out.size()) throw ConfigError("aggregate_params: stack depth mismatch");
    for (std::size_t l = 0; l < out.size(); ++l) {
      const auto& src = s[l].params;
      auto& dst = out[l].params;
      if (src.weight.rows() != dst.weight.rows() || src.weight.cols() != dst.weight.cols() ||
          src.bias.size() != dst.bias.size())
        throw ConfigError("aggregate_params: layer shape mismatch");
      auto dw = dst.weight.values();
      auto sw = src.weight.values();
      for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += weights[k] * sw[i];
      for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += weights[k] * src.bias[i];
    }
  }
  return out;
}

std::vector<double> aggregate_flat(std::span<const std::vector<double>> params, std::span<const double> weights) {
  if (params.empty()) throw ConfigError("aggregate_flat: no parameter sets");
  check_weights(weights, params.size());
  std::vector<double> out(params.front().size(), 0.0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != out.size()) throw ConfigError("aggregate_flat: parameter length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * params[k][i];
  }
  return out;
}

}  // namespace evsplit::ea
