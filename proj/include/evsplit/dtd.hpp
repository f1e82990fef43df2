// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <span>
#include <vector>

#include "evsplit/edl.hpp"
#include "evsplit/matrix.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::dtd {

/// Which distribution is the KL reference in the global-teacher term.
enum class KdDirection {
  kTeacherReference,  ///< sum p_g (log p_g - log p_a)
  kStudentReference,  ///< sum p_a (log p_a - log p_g)
};

/// How relational matrices enter the row softmax.
enum class RelationMode { kDistance, kNegatedDistance };

/// What the temperature softmax is applied to.
enum class StudentScores {
  kExpectedProb,  ///< log(alpha / S) of the evidential head
  kLogits,
};

struct DistillConfig {
  double temperature = 5.0;
  double lambda_c = 0.2;
  double lambda_g = 0.3;
  KdDirection direction = KdDirection::kTeacherReference;
  RelationMode relation = RelationMode::kDistance;
  StudentScores scores = StudentScores::kExpectedProb;

  void validate() const;
};

/// softmax(scores / tau).
std::vector<double> temperature_probs(std::span<const double> scores, double tau);

/// tau^2 * sum_n p_g^n (log p_g^n - log p_a^n) on already tempered
/// distributions. A student probability of zero is clamped to 1e-12 inside
/// the log.
double kd_global_loss(std::span<const double> p_a, std::span<const double> p_g, double tau,
                      KdDirection direction = KdDirection::kTeacherReference);

/// M(a, b) = |z_a - z_b|^2.
Matrix pairwise_distance_matrix(const Matrix& features);

/// tau^2 * mean over rows of KL(rowsoftmax(M_C / tau) || rowsoftmax(M_Ae / tau)).
double kd_feature_loss(const Matrix& teacher_relations, const Matrix& student_relations, double tau);

double dtd_total_loss(double evidential, double kd_c, double kd_g, const DistillConfig& config);

/// Loss value with the gradient with respect to one input.
struct Term {
  double loss = 0.0;
  Matrix grad;
};

/// Per-row scores fed to the temperature softmax.
Matrix scores_from_logits(const Matrix& logits, StudentScores mode);

/// Pulls a score gradient back to the logits.
Matrix score_grad_to_logits(const Matrix& logits, const Matrix& score_grad, StudentScores mode);

/// Row-averaged global-teacher term; grad is with respect to student scores.
Term kd_global_term(const Matrix& student_scores, const Matrix& teacher_scores, double tau, KdDirection direction);

/// Relational term; grad is with respect to the student features.
Term kd_feature_term(const Matrix& teacher_features, const Matrix& student_features, double tau, RelationMode mode);

struct AuxiliaryModel {
  nn::LayerStack extractor;
  nn::LayerStack head;
  bool operator==(const AuxiliaryModel&) const = default;
};

/// Frozen teacher snapshots. `global` may be null before the first
/// aggregation; the global term is then skipped.
struct Teachers {
  const nn::LayerStack* client_side = nullptr;
  const nn::SplitModel* global = nullptr;
};

struct LossBreakdown {
  double evidential = 0.0;
  double kd_c = 0.0;
  double kd_g = 0.0;
  double total = 0.0;
  bool kd_c_active = false;
  bool kd_g_active = false;
};

struct DtdGradient {
  LossBreakdown loss;
  nn::StackGradient extractor;
  nn::StackGradient head;
};

LossBreakdown dtd_loss(const AuxiliaryModel& aux, const Teachers& teachers, const nn::Batch& batch,
                       const DistillConfig& config, const edl::AnnealingSchedule& schedule);

DtdGradient dtd_gradient(const AuxiliaryModel& aux, const Teachers& teachers, const nn::Batch& batch,
                         const DistillConfig& config, const edl::AnnealingSchedule& schedule);

/// One SGD step on the auxiliary parameters only. Returns the pre-step losses.
LossBreakdown dtd_step(AuxiliaryModel& aux, const Teachers& teachers, const nn::Batch& batch,
                       const DistillConfig& config, const edl::AnnealingSchedule& schedule, double learning_rate);

}  // namespace evsplit::dtd
