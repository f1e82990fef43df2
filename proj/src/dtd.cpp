// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/dtd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsplit/error.hpp"

namespace evsplit::dtd {

namespace {

constexpr double kLogClamp = 1e-12;

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("temperature must be > 0");
}

/// log softmax(x / tau) of one row.
std::vector<double> log_softmax(std::span<const double> x, double tau) {
  double mx = x[0] / tau;
  for (double v : x) mx = std::max(mx, v / tau);
  double z = 0.0;
  for (double v : x) z += std::exp(v / tau - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / tau - lz;
  return out;
}

/// KL(p || q) from log-probabilities, and d/d(logits of the row whose
/// softmax is `log_var`) scaled by tau.
struct RowKl {
  double kl = 0.0;
  std::vector<double> grad;
};

/// Gradient of tau^2 KL with respect to the raw (pre-division) scores that
/// produced `log_student`.
RowKl row_kl(std::span<const double> log_teacher, std::span<const double> log_student, double tau,
             KdDirection direction) {
  const std::size_t n = log_teacher.size();
  RowKl r;
  r.grad.resize(n);
  if (direction == KdDirection::kTeacherReference) {
    for (std::size_t i = 0; i < n; ++i) {
      const double pt = std::exp(log_teacher[i]);
      if (pt > 0.0) r.kl += pt * (log_teacher[i] - log_student[i]);
    }
    for (std::size_t i = 0; i < n; ++i) r.grad[i] = tau * (std::exp(log_student[i]) - std::exp(log_teacher[i]));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double ps = std::exp(log_student[i]);
      if (ps > 0.0) r.kl += ps * (log_student[i] - log_teacher[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double ps = std::exp(log_student[i]);
      r.grad[i] = tau * ps * (log_student[i] - log_teacher[i] - r.kl);
    }
  }
  r.kl *= tau * tau;
  return r;
}

struct StudentForward {
  nn::ForwardCache extractor;
  nn::ForwardCache head;
};

StudentForward student_forward(const AuxiliaryModel& aux, const Matrix& inputs) {
  StudentForward f;
  f.extractor = nn::forward(aux.extractor, inputs);
  f.head = nn::forward(aux.head, f.extractor.output);
  return f;
}

Matrix teacher_scores(const nn::SplitModel& global, const Matrix& inputs, StudentScores mode) {
  const auto z = nn::forward(global.client_side, inputs);
  const auto s = nn::forward_server(global.server_processor, global.server_head, z.output);
  return scores_from_logits(s.logits(), mode);
}

bool use_kd_c(const DistillConfig& c, const Teachers& t, const nn::Batch& b) {
  return c.lambda_c != 0.0 && t.client_side != nullptr && b.size() >= 2;
}

bool use_kd_g(const DistillConfig& c, const Teachers& t) { return c.lambda_g != 0.0 && t.global != nullptr; }

void check_inputs(const AuxiliaryModel& aux, const nn::Batch& batch, const DistillConfig& config) {
  config.validate();
  nn::validate_batch(batch, nn::output_dim(aux.head));
}

}  // namespace

void DistillConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("distillation temperature must be > 0");
  if (!(lambda_c >= 0.0) || !(lambda_g >= 0.0)) throw ConfigError("distillation weights must be >= 0");
}

std::vector<double> temperature_probs(std::span<const double> scores, double tau) {
  require_tau(tau);
  if (scores.empty()) throw DomainError("temperature_probs: empty scores");
  auto lp = log_softmax(scores, tau);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double kd_global_loss(std::span<const double> p_a, std::span<const double> p_g, double tau, KdDirection direction) {
  require_tau(tau);
  if (p_a.size() != p_g.size() || p_a.empty()) throw DomainError("kd_global_loss: distribution length mismatch");
  const auto& ref = direction == KdDirection::kTeacherReference ? p_g : p_a;
  const auto& other = direction == KdDirection::kTeacherReference ? p_a : p_g;
  double kl = 0.0;
  for (std::size_t n = 0; n < ref.size(); ++n) {
    if (ref[n] > 0.0) kl += ref[n] * (std::log(ref[n]) - std::log(std::max(other[n], kLogClamp)));
  }
  return tau * tau * kl;
}

Matrix pairwise_distance_matrix(const Matrix& features) {
  const std::size_t b = features.rows();
  Matrix m(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double d = 0.0;
      const auto zi = features.row(i);
      const auto zj = features.row(j);
      for (std::size_t k = 0; k < features.cols(); ++k) {
        const double diff = zi[k] - zj[k];
        d += diff * diff;
      }
      m(i, j) = d;
      m(j, i) = d;
    }
  }
  return m;
}

double kd_feature_loss(const Matrix& teacher_relations, const Matrix& student_relations, double tau) {
  require_tau(tau);
  if (teacher_relations.rows() != student_relations.rows() || teacher_relations.cols() != student_relations.cols() ||
      teacher_relations.rows() != teacher_relations.cols())
    throw ConfigError("kd_feature_loss: relational matrices must be square and equally sized");
  const std::size_t b = teacher_relations.rows();
  if (b == 0) return 0.0;
  double total = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    const auto lt = log_softmax(teacher_relations.row(a), tau);
    const auto ls = log_softmax(student_relations.row(a), tau);
    total += row_kl(lt, ls, tau, KdDirection::kTeacherReference).kl;
  }
  return total / static_cast<double>(b);
}

double dtd_total_loss(double evidential, double kd_c, double kd_g, const DistillConfig& config) {
  config.validate();
  return evidential + config.lambda_c * kd_c + config.lambda_g * kd_g;
}

Matrix scores_from_logits(const Matrix& logits, StudentScores mode) {
  if (mode == StudentScores::kLogits) return logits;
  Matrix s(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto l = logits.row(r);
    auto out = s.row(r);
    double strength = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      out[i] = nn::softplus(l[i]) + 1.0;
      strength += out[i];
    }
    const double log_s = std::log(strength);
    for (double& v : out) v = std::log(v) - log_s;
  }
  return s;
}

Matrix score_grad_to_logits(const Matrix& logits, const Matrix& score_grad, StudentScores mode) {
  if (mode == StudentScores::kLogits) return score_grad;
  // s_k = log alpha_k - log S, alpha = softplus(l) + 1.
  Matrix g(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto l = logits.row(r);
    const auto gs = score_grad.row(r);
    std::vector<double> alpha(l.size());
    double strength = 0.0;
    double gsum = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      alpha[i] = nn::softplus(l[i]) + 1.0;
      strength += alpha[i];
      gsum += gs[i];
    }
    auto out = g.row(r);
    for (std::size_t m = 0; m < l.size(); ++m) out[m] = nn::sigmoid(l[m]) * (gs[m] / alpha[m] - gsum / strength);
  }
  return g;
}

Term kd_global_term(const Matrix& student_scores, const Matrix& teacher_scores, double tau, KdDirection direction) {
  require_tau(tau);
  if (student_scores.rows() != teacher_scores.rows() || student_scores.cols() != teacher_scores.cols())
    throw ConfigError("kd_global_term: score shapes differ");
  const std::size_t b = student_scores.rows();
  Term t;
  t.grad = Matrix(b, student_scores.cols());
  if (b == 0) return t;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto lt = log_softmax(teacher_scores.row(r), tau);
    const auto ls = log_softmax(student_scores.row(r), tau);
    const auto kl = row_kl(lt, ls, tau, direction);
    t.loss += kl.kl * inv_b;
    auto g = t.grad.row(r);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = kl.grad[i] * inv_b;
  }
  return t;
}

Term kd_feature_term(const Matrix& teacher_features, const Matrix& student_features, double tau, RelationMode mode) {
  require_tau(tau);
  const std::size_t b = student_features.rows();
  if (teacher_features.rows() != b) throw ConfigError("kd_feature_term: batch sizes differ");
  Term t;
  t.grad = Matrix(b, student_features.cols());
  if (b < 2) return t;
  const double sign = mode == RelationMode::kDistance ? 1.0 : -1.0;
  Matrix mc = pairwise_distance_matrix(teacher_features);
  Matrix ma = pairwise_distance_matrix(student_features);
  if (sign < 0.0) {
    for (double& v : mc.values()) v = -v;
    for (double& v : ma.values()) v = -v;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  // relation_grad(a, c) = d loss / d M_Ae(a, c), before the sign flip.
  Matrix relation_grad(b, b);
  for (std::size_t a = 0; a < b; ++a) {
    const auto lt = log_softmax(mc.row(a), tau);
    const auto ls = log_softmax(ma.row(a), tau);
    const auto kl = row_kl(lt, ls, tau, KdDirection::kTeacherReference);
    t.loss += kl.kl * inv_b;
    for (std::size_t c = 0; c < b; ++c) relation_grad(a, c) = sign * kl.grad[c] * inv_b;
  }
  const std::size_t d = student_features.cols();
  for (std::size_t a = 0; a < b; ++a) {
    auto ga = t.grad.row(a);
    const auto za = student_features.row(a);
    for (std::size_t c = 0; c < b; ++c) {
      if (c == a) continue;
      const double coeff = 2.0 * (relation_grad(a, c) + relation_grad(c, a));
      const auto zc = student_features.row(c);
      for (std::size_t k = 0; k < d; ++k) ga[k] += coeff * (za[k] - zc[k]);
    }
  }
  return t;
}

LossBreakdown dtd_loss(const AuxiliaryModel& aux, const Teachers& teachers, const nn::Batch& batch,
                       const DistillConfig& config, const edl::AnnealingSchedule& schedule) {
  check_inputs(aux, batch, config);
  const auto f = student_forward(aux, batch.inputs);
  LossBreakdown out;
  out.evidential = edl::evidential_batch(f.head.output, batch.labels, schedule).loss;
  if (use_kd_g(config, teachers)) {
    out.kd_g_active = true;
    out.kd_g = kd_global_term(scores_from_logits(f.head.output, config.scores),
                              teacher_scores(*teachers.global, batch.inputs, config.scores), config.temperature,
                              config.direction)
                   .loss;
  }
  if (use_kd_c(config, teachers, batch)) {
    out.kd_c_active = true;
    const auto zc = nn::forward(*teachers.client_side, batch.inputs);
    out.kd_c = kd_feature_term(zc.output, f.extractor.output, config.temperature, config.relation).loss;
  }
  out.total = dtd_total_loss(out.evidential, out.kd_c, out.kd_g, config);
  return out;
}

DtdGradient dtd_gradient(const AuxiliaryModel& aux, const Teachers& teachers, const nn::Batch& batch,
                         const DistillConfig& config, const edl::AnnealingSchedule& schedule) {
  check_inputs(aux, batch, config);
  const auto f = student_forward(aux, batch.inputs);
  DtdGradient g;
  auto evid = edl::evidential_batch(f.head.output, batch.labels, schedule);
  g.loss.evidential = evid.loss;
  Matrix logit_grad = std::move(evid.logit_grad);

  if (use_kd_g(config, teachers)) {
    g.loss.kd_g_active = true;
    const auto student = scores_from_logits(f.head.output, config.scores);
    const auto teacher = teacher_scores(*teachers.global, batch.inputs, config.scores);
    auto term = kd_global_term(student, teacher, config.temperature, config.direction);
    g.loss.kd_g = term.loss;
    const auto extra = score_grad_to_logits(f.head.output, term.grad, config.scores);
    auto lg = logit_grad.values();
    auto eg = extra.values();
    for (std::size_t i = 0; i < lg.size(); ++i) lg[i] += config.lambda_g * eg[i];
  }

  auto head_back = nn::backward(aux.head, f.head, logit_grad);
  Matrix feature_grad = std::move(head_back.input_grad);

  if (use_kd_c(config, teachers, batch)) {
    g.loss.kd_c_active = true;
    const auto zc = nn::forward(*teachers.client_side, batch.inputs);
    auto term = kd_feature_term(zc.output, f.extractor.output, config.temperature, config.relation);
    g.loss.kd_c = term.loss;
    auto fg = feature_grad.values();
    auto tg = term.grad.values();
    for (std::size_t i = 0; i < fg.size(); ++i) fg[i] += config.lambda_c * tg[i];
  }

  auto extractor_back = nn::backward(aux.extractor, f.extractor, feature_grad);
  g.head = std::move(head_back.params);
  g.extractor = std::move(extractor_back.params);
  g.loss.total = dtd_total_loss(g.loss.evidential, g.loss.kd_c, g.loss.kd_g, config);
  return g;
}

LossBreakdown dtd_step(AuxiliaryModel& aux, const Teachers& teachers, const nn::Batch& batch,
                       const DistillConfig& config, const edl::AnnealingSchedule& schedule, double learning_rate) {
  auto g = dtd_gradient(aux, teachers, batch, config, schedule);
  // Same per-layer update order as edl::train_step over the concatenated stack.
  nn::sgd_update(aux.extractor, g.extractor, learning_rate);
  nn::sgd_update(aux.head, g.head, learning_rate);
  return g.loss;
}

}  // namespace evsplit::dtd
