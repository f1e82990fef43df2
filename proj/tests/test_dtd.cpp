// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "checks.hpp"
#include "evsplit/dtd.hpp"
#include "evsplit/error.hpp"

using namespace evsplit;

TEST_CASE("temperature_probs") {
  const auto p = dtd::temperature_probs(std::vector<double>{2.0, 0.0}, 10.0);
  CHECK(std::abs(p[0] - 0.549833997312478) < 1e-15);
  CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-15);
  const auto flat = dtd::temperature_probs(std::vector<double>{3.0, 3.0, 3.0}, 0.5);
  for (double v : flat) CHECK(v == doctest::Approx(1.0 / 3.0));
  // Large scores stay finite.
  const auto big = dtd::temperature_probs(std::vector<double>{1000.0, 0.0}, 1.0);
  CHECK(big[0] == 1.0);
  CHECK_THROWS_AS(dtd::temperature_probs(std::vector<double>{1.0}, 0.0), DomainError);
}

TEST_CASE("kd_global_loss golden values") {
  const std::vector<double> pa{0.6, 0.4};
  const std::vector<double> pg{0.7, 0.3};
  CHECK(std::abs(dtd::kd_global_loss(pa, pg, 1.0) - 0.02160085414354654) < 1e-15);
  CHECK(std::abs(dtd::kd_global_loss(pa, pg, 2.0) - 0.08640341657418615) < 1e-15);
  CHECK(dtd::kd_global_loss(pg, pg, 3.0) == 0.0);
  // Zero student mass is clamped rather than producing infinity.
  CHECK(std::isfinite(dtd::kd_global_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}, 1.0)));
}

TEST_CASE("pairwise distances and the relational term") {
  const auto student = Matrix::from_rows({{0, 0}, {3, 4}});
  const auto teacher = Matrix::from_rows({{0, 0}, {1, 0}});
  const auto m = dtd::pairwise_distance_matrix(student);
  CHECK(m == Matrix::from_rows({{0, 25}, {25, 0}}));
  const double l = dtd::kd_feature_loss(dtd::pairwise_distance_matrix(teacher), m, 5.0);
  CHECK(std::abs(l - 39.23433230019081) < 1e-10);
  const auto term = dtd::kd_feature_term(teacher, student, 5.0, dtd::RelationMode::kDistance);
  CHECK(std::abs(term.loss - l) < 1e-12);
  // Equal relations, zero loss, zero gradient.
  const auto same = dtd::kd_feature_term(student, student, 2.0, dtd::RelationMode::kDistance);
  CHECK(same.loss == doctest::Approx(0.0));
  for (double v : same.grad.values()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("relational term is invariant to translating the features") {
  std::mt19937_64 rng(1);
  const auto t = evsplit::testing::random_matrix(6, 4, rng);
  const auto s = evsplit::testing::random_matrix(6, 3, rng);
  auto shifted = s;
  for (std::size_t r = 0; r < 6; ++r) {
    shifted(r, 0) += 2.5;
    shifted(r, 2) -= 1.0;
  }
  const double a = dtd::kd_feature_term(t, s, 3.0, dtd::RelationMode::kDistance).loss;
  const double b = dtd::kd_feature_term(t, shifted, 3.0, dtd::RelationMode::kDistance).loss;
  CHECK(std::abs(a - b) < 1e-10);
}

TEST_CASE("dtd_total_loss") {
  dtd::DistillConfig c;
  CHECK(dtd::dtd_total_loss(1.0, 0.5, 0.2, c) == doctest::Approx(1.16).epsilon(1e-15));
  c.temperature = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda_c = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(2);
  double worst_e = 0.0;
  double worst_g = 0.0;
  double worst_c = 0.0;
  double worst_full = 0.0;
  int full = 0;
  for (int t = 0; t < 100; ++t) {
    worst_e = std::max(worst_e, evsplit::testing::evidential_fd_error(rng));
    worst_g = std::max(worst_g, evsplit::testing::kd_global_fd_error(rng));
    worst_c = std::max(worst_c, evsplit::testing::kd_feature_fd_error(rng));
  }
  while (full < 100) {
    const double e = evsplit::testing::dtd_fd_error(rng);
    if (e < 0.0) continue;
    worst_full = std::max(worst_full, e);
    ++full;
  }
  CHECK(worst_e < 1e-4);
  CHECK(worst_g < 1e-4);
  CHECK(worst_c < 1e-4);
  CHECK(worst_full < 1e-4);
}

TEST_CASE("logit scores mode and student-reference direction have their own gradients") {
  std::mt19937_64 rng(3);
  const auto logits = evsplit::testing::random_matrix(3, 4, rng);
  for (auto mode : {dtd::StudentScores::kExpectedProb, dtd::StudentScores::kLogits}) {
    Matrix probe = logits;
    const auto w = evsplit::testing::random_matrix(3, 4, rng);
    auto f = [&] {
      const auto s = dtd::scores_from_logits(probe, mode);
      double v = 0.0;
      for (std::size_t i = 0; i < s.values().size(); ++i) v += w.values()[i] * s.values()[i];
      return v;
    };
    const auto analytic = dtd::score_grad_to_logits(logits, w, mode);
    std::vector<double> x(probe.values().begin(), probe.values().end());
    const auto numeric = evsplit::testing::numeric_grad(x, [&] {
      std::ranges::copy(x, probe.values().begin());
      return f();
    });
    CHECK(evsplit::testing::max_rel_error(analytic.values(), numeric) < 1e-6);
  }
}

TEST_CASE("dtd_step touches only the auxiliary model") {
  std::mt19937_64 rng(4);
  auto d = evsplit::testing::random_dtd_instance(rng);
  const auto teacher = d.client_teacher;
  const auto global = d.global;
  const auto before = d.aux;
  dtd::dtd_step(d.aux, d.teachers(), d.batch, d.config, d.schedule, 0.05);
  CHECK(d.client_teacher == teacher);
  CHECK(d.global == global);
  CHECK_FALSE(d.aux == before);
}

TEST_CASE("terms switch off without a teacher, a weight or a pair") {
  std::mt19937_64 rng(5);
  auto d = evsplit::testing::random_dtd_instance(rng);
  auto l = dtd::dtd_loss(d.aux, {&d.client_teacher, nullptr}, d.batch, d.config, d.schedule);
  CHECK_FALSE(l.kd_g_active);
  CHECK(l.kd_c_active);
  d.config.lambda_c = 0.0;
  l = dtd::dtd_loss(d.aux, d.teachers(), d.batch, d.config, d.schedule);
  CHECK_FALSE(l.kd_c_active);
  CHECK(l.kd_g_active);
  d.config.lambda_c = 0.5;
  nn::Batch one{evsplit::testing::random_matrix(1, 4, rng), {1}};
  l = dtd::dtd_loss(d.aux, d.teachers(), one, d.config, d.schedule);
  CHECK_FALSE(l.kd_c_active);
  CHECK(l.total == doctest::Approx(l.evidential + d.config.lambda_g * l.kd_g));
}

TEST_CASE("zero distillation weights reduce to plain evidential training, bitwise") {
  std::mt19937_64 rng(6);
  auto d = evsplit::testing::random_dtd_instance(rng);
  d.config.lambda_c = 0.0;
  d.config.lambda_g = 0.0;
  auto plain = nn::concat({&d.aux.extractor, &d.aux.head});
  for (int step = 0; step < 50; ++step) {
    const edl::AnnealingSchedule sched{step, 20};
    const auto a = dtd::dtd_step(d.aux, d.teachers(), d.batch, d.config, sched, 0.1);
    const double b = edl::train_step(plain, d.batch, sched, 0.1);
    CHECK(a.total == b);
  }
  CHECK(nn::concat({&d.aux.extractor, &d.aux.head}) == plain);
}

TEST_CASE("repeated steps on a linear auxiliary model lower the loss") {
  std::mt19937_64 rng(7);
  auto d = evsplit::testing::random_dtd_instance(rng);
  d.aux.extractor = evsplit::testing::random_stack({4, 5}, rng);
  d.config.direction = dtd::KdDirection::kTeacherReference;
  const edl::AnnealingSchedule sched{5, 10};
  const double start = dtd::dtd_loss(d.aux, d.teachers(), d.batch, d.config, sched).total;
  for (int i = 0; i < 200; ++i) dtd::dtd_step(d.aux, d.teachers(), d.batch, d.config, sched, 0.01);
  CHECK(dtd::dtd_loss(d.aux, d.teachers(), d.batch, d.config, sched).total < start);
}

TEST_CASE("KL pair, relational oracle, shifts") {
  CHECK(std::abs(dtd::kd_global_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{0.7, 0.3}, 1.0) -
                 (0.7 * std::log(1.4) + 0.3 * std::log(0.6))) < 1e-15);

  std::mt19937_64 rng(8);
  const auto z = evsplit::testing::random_matrix(7, 4, rng);
  const auto m = dtd::pairwise_distance_matrix(z);
  for (std::size_t a = 0; a < 7; ++a) {
    for (std::size_t b = 0; b < 7; ++b) {
      double d = 0.0;
      for (std::size_t c = 0; c < 4; ++c) d += (z(a, c) - z(b, c)) * (z(a, c) - z(b, c));
      CHECK(std::abs(m(a, b) - d) < 1e-12);
    }
  }

  const auto mc = Matrix::from_rows({{0, 25}, {25, 0}});
  const auto ma = Matrix::from_rows({{0, 16}, {16, 0}});
  const double l = dtd::kd_feature_loss(mc, ma, 5.0);
  CHECK(l > 0.0);
  auto mc2 = mc;
  auto ma2 = ma;
  for (double& v : mc2.values()) v += 3.0;
  for (double& v : ma2.values()) v += 3.0;
  CHECK(std::abs(dtd::kd_feature_loss(mc2, ma2, 5.0) - l) < 1e-12);
  CHECK(dtd::kd_feature_loss(mc, mc, 5.0) == doctest::Approx(0.0));
}

TEST_CASE("zero learning rate and the self-distillation fixpoint") {
  std::mt19937_64 rng(9);
  auto d = evsplit::testing::random_dtd_instance(rng);
  const auto before = d.aux;
  dtd::dtd_step(d.aux, d.teachers(), d.batch, d.config, d.schedule, 0.0);
  CHECK(d.aux == before);

  // Teachers that reproduce the student exactly: the distillation terms
  // contribute no gradient.
  nn::SplitModel self;
  self.client_side = d.aux.extractor;
  nn::DenseLayer pass;
  pass.params.weight = Matrix::identity(nn::output_dim(d.aux.extractor));
  pass.params.bias.assign(nn::output_dim(d.aux.extractor), 0.0);
  pass.activation = nn::Activation::kIdentity;
  self.server_processor = {pass};
  self.server_head = d.aux.head;
  self.auxiliary_extractor = d.aux.extractor;
  self.auxiliary_head = d.aux.head;
  const dtd::Teachers t{&d.aux.extractor, &self};
  auto with = dtd::dtd_gradient(d.aux, t, d.batch, d.config, d.schedule);
  auto cfg = d.config;
  cfg.lambda_c = 0.0;
  cfg.lambda_g = 0.0;
  const auto without = dtd::dtd_gradient(d.aux, t, d.batch, cfg, d.schedule);
  CHECK(with.loss.kd_c == doctest::Approx(0.0));
  CHECK(with.loss.kd_g == doctest::Approx(0.0));
  const auto a = evsplit::testing::flatten_grad(with.extractor);
  const auto b = evsplit::testing::flatten_grad(without.extractor);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}
