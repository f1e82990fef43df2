// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evsplit/matrix.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::edl {

/// Dirichlet opinion built from a non-negative evidence vector.
///
/// alpha = e + 1, S = sum(alpha), belief = e / S, vacuity = N / S and
/// expected_prob = alpha / S, so sum(belief) + vacuity = 1.
struct DirichletEvidence {
  std::vector<double> evidence;
  std::vector<double> alpha;
  double strength = 0.0;
  std::vector<double> belief;
  double vacuity = 0.0;
  std::vector<double> expected_prob;

  bool operator==(const DirichletEvidence&) const = default;
};

/// Throws DomainError on negative or non-finite evidence.
DirichletEvidence alpha_from_evidence(std::span<const double> evidence);

/// KL-term annealing: lambda_t = min(1, t / T).
struct AnnealingSchedule {
  int round = 0;
  int horizon = 1;

  double lambda() const;
  void validate() const;
};

/// Expected categorical entropy under Dir(alpha):
/// sum_i (alpha_i / S) [psi(S + 1) - psi(alpha_i + 1)].
double aleatoric_uncertainty(std::span<const double> alpha);

enum class EntropyForm {
  /// sum_i [ln(Gamma(alpha_i) / Gamma(S)) - (alpha_i - 1)(psi(alpha_i) - psi(S))].
  /// Note ln Gamma(S) sits inside the per-class sum. This is what the
  /// aggregation weights consume.
  kPerClass,
  /// Textbook Dirichlet differential entropy, kept for comparison only.
  kStandard,
};

double epistemic_uncertainty(std::span<const double> alpha, EntropyForm form = EntropyForm::kPerClass);

/// KL[Dir(alpha) || Dir(1)] in closed form.
double kl_to_uniform_dirichlet(std::span<const double> alpha);

/// sum_i y_i [psi(S) - psi(alpha_i)] + lambda_t KL[Dir(alpha~) || Dir(1)],
/// alpha~ = y + (1 - y) * alpha. `one_hot` must be exactly one-hot.
double evidential_loss(std::span<const double> alpha, std::span<const double> one_hot,
                       const AnnealingSchedule& schedule);

/// d loss / d alpha.
std::vector<double> evidential_loss_grad_alpha(std::span<const double> alpha, std::span<const double> one_hot,
                                               const AnnealingSchedule& schedule);

/// d loss / d logits, where alpha = softplus(logits) + 1.
std::vector<double> evidential_loss_grad(std::span<const double> logits, std::span<const double> one_hot,
                                         const AnnealingSchedule& schedule);

std::vector<double> one_hot(int label, std::size_t num_classes);

/// Loss and logit gradient over a batch with per-sample weights; the total
/// is sum_r weight_r * loss_r.
struct BatchLoss {
  double loss = 0.0;
  std::vector<double> row_loss;  ///< weight_r * loss_r
  Matrix logit_grad;
  Matrix evidence;
};

BatchLoss evidential_batch(const Matrix& logits, std::span<const int> labels, std::span<const double> weights,
                           const AnnealingSchedule& schedule);

/// Uniform 1/B weights.
BatchLoss evidential_batch(const Matrix& logits, std::span<const int> labels, const AnnealingSchedule& schedule);

/// One SGD step of plain evidential training on a single un-split stack.
/// Returns the pre-step mean loss.
double train_step(nn::LayerStack& model, const nn::Batch& batch, const AnnealingSchedule& schedule,
                  double learning_rate);

}  // namespace evsplit::edl
