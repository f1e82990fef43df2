// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/edl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "evsplit/error.hpp"
#include "evsplit/special.hpp"

namespace evsplit::edl {

using special::digamma;
using special::log_gamma;
using special::trigamma;

namespace {

double validate_alpha(std::span<const double> alpha, const char* fn) {
  if (alpha.empty()) throw DomainError(std::string(fn) + ": empty alpha");
  double s = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError(std::string(fn) + ": alpha entries must be finite and > 0");
    s += a;
  }
  return s;
}

void validate_one_hot(std::span<const double> y, std::size_t n) {
  if (y.size() != n) throw DomainError("label vector length differs from alpha");
  std::size_t ones = 0;
  for (double v : y) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw DomainError("label vector is not one-hot");
    }
  }
  if (ones != 1) throw DomainError("label vector is not one-hot");
}

std::vector<double> adjusted_alpha(std::span<const double> alpha, std::span<const double> y) {
  std::vector<double> out(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = y[i] + (1.0 - y[i]) * alpha[i];
  return out;
}

}  // namespace

DirichletEvidence alpha_from_evidence(std::span<const double> evidence) {
  if (evidence.empty()) throw DomainError("alpha_from_evidence: empty evidence");
  DirichletEvidence d;
  d.evidence.assign(evidence.begin(), evidence.end());
  d.alpha.resize(evidence.size());
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    if (!(evidence[i] >= 0.0) || !std::isfinite(evidence[i]))
      throw DomainError("alpha_from_evidence: evidence must be finite and non-negative");
    d.alpha[i] = evidence[i] + 1.0;
  }
  d.strength = std::accumulate(d.alpha.begin(), d.alpha.end(), 0.0);
  d.belief.resize(evidence.size());
  d.expected_prob.resize(evidence.size());
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    d.belief[i] = d.evidence[i] / d.strength;
    d.expected_prob[i] = d.alpha[i] / d.strength;
  }
  d.vacuity = static_cast<double>(evidence.size()) / d.strength;
  return d;
}

double AnnealingSchedule::lambda() const {
  validate();
  return std::min(1.0, static_cast<double>(round) / static_cast<double>(horizon));
}

void AnnealingSchedule::validate() const {
  if (horizon <= 0) throw ConfigError("annealing horizon must be positive");
  if (round < 0) throw ConfigError("annealing round must be non-negative");
}

double aleatoric_uncertainty(std::span<const double> alpha) {
  const double s = validate_alpha(alpha, "aleatoric_uncertainty");
  const double psi_s1 = digamma(s + 1.0);
  double u = 0.0;
  for (double a : alpha) u += (a / s) * (psi_s1 - digamma(a + 1.0));
  return u;
}

double epistemic_uncertainty(std::span<const double> alpha, EntropyForm form) {
  const double s = validate_alpha(alpha, "epistemic_uncertainty");
  const double psi_s = digamma(s);
  const double lg_s = log_gamma(s);
  if (form == EntropyForm::kPerClass) {
    double u = 0.0;
    for (double a : alpha) u += (log_gamma(a) - lg_s) - (a - 1.0) * (digamma(a) - psi_s);
    return u;
  }
  // ln B(alpha) + (S - N) psi(S) - sum (alpha_i - 1) psi(alpha_i)
  const double n = static_cast<double>(alpha.size());
  double u = -lg_s + (s - n) * psi_s;
  for (double a : alpha) u += log_gamma(a) - (a - 1.0) * digamma(a);
  return u;
}

double kl_to_uniform_dirichlet(std::span<const double> alpha) {
  const double s = validate_alpha(alpha, "kl_to_uniform_dirichlet");
  const double n = static_cast<double>(alpha.size());
  const double psi_s = digamma(s);
  double kl = log_gamma(s) - log_gamma(n);
  for (double a : alpha) kl += -log_gamma(a) + (a - 1.0) * (digamma(a) - psi_s);
  return kl;
}

double evidential_loss(std::span<const double> alpha, std::span<const double> one_hot,
                       const AnnealingSchedule& schedule) {
  const double s = validate_alpha(alpha, "evidential_loss");
  validate_one_hot(one_hot, alpha.size());
  const double lambda = schedule.lambda();
  const double psi_s = digamma(s);
  double data = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (one_hot[i] != 0.0) data += one_hot[i] * (psi_s - digamma(alpha[i]));
  }
  if (lambda == 0.0) return data;
  const auto tilde = adjusted_alpha(alpha, one_hot);
  return data + lambda * kl_to_uniform_dirichlet(tilde);
}

std::vector<double> evidential_loss_grad_alpha(std::span<const double> alpha, std::span<const double> one_hot,
                                               const AnnealingSchedule& schedule) {
  const double s = validate_alpha(alpha, "evidential_loss_grad_alpha");
  validate_one_hot(one_hot, alpha.size());
  const double lambda = schedule.lambda();
  const std::size_t n = alpha.size();
  std::vector<double> g(n);
  // d/d alpha_k of sum_i y_i [psi(S) - psi(alpha_i)], with sum y = 1.
  const double tri_s = trigamma(s);
  for (std::size_t k = 0; k < n; ++k) g[k] = tri_s - one_hot[k] * trigamma(alpha[k]);
  if (lambda == 0.0) return g;
  // d KL / d alpha~_k = (alpha~_k - 1) psi'(alpha~_k) - (S~ - N) psi'(S~); d alpha~_k / d alpha_k = 1 - y_k.
  const auto tilde = adjusted_alpha(alpha, one_hot);
  const double s_tilde = std::accumulate(tilde.begin(), tilde.end(), 0.0);
  const double tri_st = trigamma(s_tilde);
  const double excess = s_tilde - static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (one_hot[k] != 0.0) continue;
    g[k] += lambda * ((tilde[k] - 1.0) * trigamma(tilde[k]) - excess * tri_st);
  }
  return g;
}

std::vector<double> evidential_loss_grad(std::span<const double> logits, std::span<const double> one_hot,
                                         const AnnealingSchedule& schedule) {
  std::vector<double> alpha(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) alpha[i] = nn::softplus(logits[i]) + 1.0;
  auto g = evidential_loss_grad_alpha(alpha, one_hot, schedule);
  for (std::size_t i = 0; i < logits.size(); ++i) g[i] *= nn::sigmoid(logits[i]);
  return g;
}

std::vector<double> one_hot(int label, std::size_t num_classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) throw DomainError("one_hot: label out of range");
  std::vector<double> y(num_classes, 0.0);
  y[static_cast<std::size_t>(label)] = 1.0;
  return y;
}

BatchLoss evidential_batch(const Matrix& logits, std::span<const int> labels, std::span<const double> weights,
                           const AnnealingSchedule& schedule) {
  if (labels.size() != logits.rows() || weights.size() != logits.rows())
    throw ConfigError("evidential_batch: labels/weights length differs from batch");
  const std::size_t n = logits.cols();
  BatchLoss out;
  out.evidence = nn::softplus_evidence(logits);
  out.logit_grad = Matrix(logits.rows(), n);
  std::vector<double> alpha(n);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto e = out.evidence.row(r);
    for (std::size_t i = 0; i < n; ++i) alpha[i] = e[i] + 1.0;
    const auto y = one_hot(labels[r], n);
    out.row_loss.push_back(weights[r] * evidential_loss(alpha, y, schedule));
    out.loss += out.row_loss.back();
    const auto g = evidential_loss_grad_alpha(alpha, y, schedule);
    const auto z = logits.row(r);
    auto gr = out.logit_grad.row(r);
    for (std::size_t i = 0; i < n; ++i) gr[i] = weights[r] * g[i] * nn::sigmoid(z[i]);
  }
  return out;
}

BatchLoss evidential_batch(const Matrix& logits, std::span<const int> labels, const AnnealingSchedule& schedule) {
  const std::vector<double> w(logits.rows(), 1.0 / static_cast<double>(logits.rows()));
  return evidential_batch(logits, labels, w, schedule);
}

double train_step(nn::LayerStack& model, const nn::Batch& batch, const AnnealingSchedule& schedule,
                  double learning_rate) {
  nn::validate_batch(batch, nn::output_dim(model));
  const auto cache = nn::forward(model, batch.inputs);
  const auto loss = evidential_batch(cache.output, batch.labels, schedule);
  const auto back = nn::backward(model, cache, loss.logit_grad);
  nn::sgd_update(model, back.params, learning_rate);
  return loss.loss;
}

}  // namespace evsplit::edl
