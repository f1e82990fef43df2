// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evsplit/error.hpp"

namespace evsplit::theory {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
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

}  // namespace

double delta_bcc_estimate(std::span<const double> weights, std::span<const std::vector<double>> dists,
                          std::span<const double> global, double g_max) {
  if (weights.size() != dists.size()) throw ConfigError("delta_bcc_estimate: weights and distributions differ in count");
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (dists[k].size() != global.size()) throw ConfigError("delta_bcc_estimate: distribution length mismatch");
    double l1 = 0.0;
    for (std::size_t n = 0; n < global.size(); ++n) l1 += std::abs(dists[k][n] - global[n]);
    s += weights[k] * l1;
  }
  return g_max * s;
}

double convergence_bound(double l0, double l_star, double eta, int rounds, double delta, double l_smooth,
                         double sigma, BoundConstants constants) {
  if (!(l_smooth > 0.0)) throw DomainError("convergence_bound: smoothness must be > 0");
  if (!(eta > 0.0) || eta > 1.0 / (4.0 * l_smooth)) throw DomainError("convergence_bound: requires 0 < eta <= 1/(4L)");
  if (rounds < 1) throw DomainError("convergence_bound: rounds must be >= 1");
  const double decay = 4.0 * (l0 - l_star) / (eta * static_cast<double>(rounds));
  if (constants == BoundConstants::kProof) return decay + 3.0 * delta * delta + 2.0 * l_smooth * eta * sigma * sigma;
  return decay + 4.0 * delta * delta + 4.0 * l_smooth * eta * sigma * sigma;
}

LinearInstance random_linear_instance(std::size_t num_classes, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  LinearInstance inst;
  inst.weight = Matrix(num_classes, dim);
  for (double& v : inst.weight.values()) v = g(rng);
  inst.class_inputs.assign(num_classes, std::vector<double>(dim));
  for (auto& x : inst.class_inputs) {
    for (double& v : x) v = g(rng);
  }
  return inst;
}

std::vector<std::vector<double>> class_gradients(const LinearInstance& instance) {
  const std::size_t n_cls = instance.weight.rows();
  const std::size_t dim = instance.weight.cols();
  std::vector<std::vector<double>> grads;
  for (std::size_t n = 0; n < n_cls; ++n) {
    const auto& x = instance.class_inputs[n];
    std::vector<double> z(n_cls, 0.0);
    for (std::size_t c = 0; c < n_cls; ++c) {
      for (std::size_t k = 0; k < dim; ++k) z[c] += instance.weight(c, k) * x[k];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
      v = std::exp(v - mx);
      sum += v;
    }
    // dCE/dW = (softmax - onehot) x^T
    std::vector<double> g(n_cls * dim);
    for (std::size_t c = 0; c < n_cls; ++c) {
      const double r = z[c] / sum - (c == n ? 1.0 : 0.0);
      for (std::size_t k = 0; k < dim; ++k) g[c * dim + k] = r * x[k];
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double gradient_bias_norm(std::span<const double> weights, std::span<const std::vector<double>> dists,
                          std::span<const double> global, std::span<const std::vector<double>> grads) {
  if (grads.empty()) return 0.0;
  std::vector<double> b(grads[0].size(), 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (std::size_t n = 0; n < global.size(); ++n) {
      const double c = weights[k] * (dists[k][n] - global[n]);
      for (std::size_t i = 0; i < b.size(); ++i) b[i] += c * grads[n][i];
    }
  }
  return norm2(b);
}

double max_gradient_norm(std::span<const std::vector<double>> grads) {
  double m = 0.0;
  for (const auto& g : grads) m = std::max(m, norm2(g));
  return m;
}

double QuadraticToy::smoothness() const { return *std::max_element(curvature.begin(), curvature.end()); }

double QuadraticToy::objective(std::span<const double> x) const {
  double f = 0.0;
  for (std::size_t n = 0; n < centers.size(); ++n) {
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - centers[n][i];
      q += curvature[i] * d * d;
    }
    f += global[n] * 0.5 * q;
  }
  return f;
}

namespace {

std::vector<double> mixed_gradient(const QuadraticToy& toy, std::span<const double> mix, std::span<const double> x) {
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t n = 0; n < toy.centers.size(); ++n) {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += mix[n] * toy.curvature[i] * (x[i] - toy.centers[n][i]);
  }
  return g;
}

}  // namespace

std::vector<double> QuadraticToy::gradient(std::span<const double> x) const { return mixed_gradient(*this, global, x); }

std::vector<double> QuadraticToy::biased_gradient(std::span<const double> x) const {
  return mixed_gradient(*this, biased, x);
}

double QuadraticToy::optimum() const {
  std::vector<double> x(curvature.size(), 0.0);
  for (std::size_t n = 0; n < centers.size(); ++n) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += global[n] * centers[n][i];
  }
  return objective(x);
}

QuadraticToy random_quadratic_toy(std::size_t num_classes, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> h(0.5, 4.0);
  std::normal_distribution<double> g(0.0, 1.0);
  QuadraticToy toy;
  toy.curvature.resize(dim);
  for (double& v : toy.curvature) v = h(rng);
  toy.centers.assign(num_classes, std::vector<double>(dim));
  for (auto& c : toy.centers) {
    for (double& v : c) v = g(rng);
  }
  toy.global = random_simplex(num_classes, rng);
  toy.biased = random_simplex(num_classes, rng);
  toy.start.resize(dim);
  for (double& v : toy.start) v = 3.0 * g(rng);
  return toy;
}

ToyRun run_quadratic_toy(const QuadraticToy& toy, double eta, int rounds) {
  ToyRun r;
  r.l_smooth = toy.smoothness();
  r.l0 = toy.objective(toy.start);
  r.l_star = toy.optimum();
  r.min_grad_sq = std::numeric_limits<double>::infinity();
  std::vector<double> x = toy.start;
  for (int t = 0; t < rounds; ++t) {
    const auto g = toy.gradient(x);
    const auto gb = toy.biased_gradient(x);
    double gsq = 0.0;
    double bsq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      gsq += g[i] * g[i];
      bsq += (gb[i] - g[i]) * (gb[i] - g[i]);
    }
    r.min_grad_sq = std::min(r.min_grad_sq, gsq);
    r.delta = std::max(r.delta, std::sqrt(bsq));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= eta * gb[i];
  }
  return r;
}

}  // namespace evsplit::theory
