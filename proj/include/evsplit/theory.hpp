// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "evsplit/matrix.hpp"

namespace evsplit::theory {

/// g_max * sum_k w_k |P_k - P_g|_1.
double delta_bcc_estimate(std::span<const double> weights, std::span<const std::vector<double>> dists,
                          std::span<const double> global, double g_max);

enum class BoundConstants {
  kProof,      ///< 4 (L0 - L*) / (eta T) + 3 delta^2 + 2 L eta sigma^2
  kStatement,  ///< 4 (L0 - L*) / (eta T) + 4 delta^2 + 4 L eta sigma^2
};

/// Throws DomainError unless eta <= 1 / (4 L).
double convergence_bound(double l0, double l_star, double eta, int rounds, double delta, double l_smooth,
                         double sigma, BoundConstants constants = BoundConstants::kProof);

/// Linear softmax model with one representative input per class; the class
/// gradient is that of the cross-entropy at (x_n, n).
struct LinearInstance {
  Matrix weight;                 ///< N x d
  std::vector<std::vector<double>> class_inputs;  ///< N vectors of length d
};

LinearInstance random_linear_instance(std::size_t num_classes, std::size_t dim, std::mt19937_64& rng);

/// Flattened d L_n / d W for every class n.
std::vector<std::vector<double>> class_gradients(const LinearInstance& instance);

/// |sum_k w_k sum_n (P_kn - P_gn) grad_n|_2.
double gradient_bias_norm(std::span<const double> weights, std::span<const std::vector<double>> dists,
                          std::span<const double> global, std::span<const std::vector<double>> grads);

/// max_n |grad_n|_2.
double max_gradient_norm(std::span<const std::vector<double>> grads);

/// Class-conditional quadratics f_n(x) = 1/2 (x - c_n)^T diag(h) (x - c_n).
/// The objective weights classes by P_g; the descent direction by a biased
/// mixture P_b, so the gradient bias is sum_n (P_b,n - P_g,n) grad f_n.
struct QuadraticToy {
  std::vector<double> curvature;              ///< diag(h), all > 0
  std::vector<std::vector<double>> centers;   ///< one per class
  std::vector<double> global;                 ///< P_g
  std::vector<double> biased;                 ///< P_b
  std::vector<double> start;

  double smoothness() const;                  ///< max h
  double objective(std::span<const double> x) const;
  std::vector<double> gradient(std::span<const double> x) const;
  std::vector<double> biased_gradient(std::span<const double> x) const;
  double optimum() const;
};

QuadraticToy random_quadratic_toy(std::size_t num_classes, std::size_t dim, std::mt19937_64& rng);

struct ToyRun {
  double l0 = 0.0;
  double l_star = 0.0;
  double min_grad_sq = 0.0;
  double delta = 0.0;  ///< max_t |bias_t| along the trajectory
  double l_smooth = 0.0;
};

/// T steps x <- x - eta * biased_gradient(x); sigma = 0.
ToyRun run_quadratic_toy(const QuadraticToy& toy, double eta, int rounds);

}  // namespace evsplit::theory
