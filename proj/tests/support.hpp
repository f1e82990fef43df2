// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.
//
// Shared helpers for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "evsplit/matrix.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = g(rng);
  return m;
}

inline std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) {
    v = e(rng);
    s += v;
  }
  for (auto& v : p) v /= s;
  return p;
}

inline nn::LayerStack random_stack(std::vector<std::size_t> widths, std::mt19937_64& rng,
                                   nn::Activation last = nn::Activation::kIdentity) {
  auto s = nn::make_stack(widths, nn::Activation::kRelu, last, rng);
  // Non-zero biases so every code path sees them.
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& layer : s) {
    for (double& b : layer.params.bias) b = g(rng);
  }
  return s;
}

/// Max over entries of |a - n| / max(1e-8, |a| + |n|) style relative error,
/// with an absolute floor so entries near zero do not blow up.
inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Central differences of f over every entry of `x`.
inline std::vector<double> numeric_grad(std::vector<double>& x, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> flatten_grad(const nn::StackGradient& g) {
  std::vector<double> out;
  for (const auto& p : g) {
    out.insert(out.end(), p.weight.values().begin(), p.weight.values().end());
    out.insert(out.end(), p.bias.begin(), p.bias.end());
  }
  return out;
}

/// True when no ReLU pre-activation sits within `margin` of zero, so finite
/// differences do not straddle a kink.
inline bool clear_of_kinks(const nn::ForwardCache& cache, double margin = 1e-4) {
  for (const auto& pre : cache.pre_activations) {
    for (double v : pre.values()) {
      if (std::abs(v) < margin) return false;
    }
  }
  return true;
}

}  // namespace evsplit::testing
