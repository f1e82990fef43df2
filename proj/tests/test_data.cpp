// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "evsplit/data.hpp"
#include "evsplit/error.hpp"

using namespace evsplit;

TEST_CASE("synth_dataset: zero noise puts every sample on its mean") {
  data::BlobSpec spec;
  spec.noise = 0.0;
  spec.samples_per_class = 5;
  spec.num_classes = 10;  // more classes than dims
  const auto d = data::synth_dataset(spec);
  CHECK(d.size() == 50);
  for (std::size_t r = 0; r < d.size(); ++r) {
    const auto mean = data::class_mean(spec, static_cast<std::size_t>(d.labels[r]));
    for (std::size_t c = 0; c < spec.dim; ++c) CHECK(d.inputs(r, c) == mean[c]);
  }
  CHECK(data::class_mean(spec, 1) != data::class_mean(spec, 9));
}

TEST_CASE("synth_dataset: determinism and seed sensitivity") {
  data::BlobSpec spec;
  spec.seed = 11;
  const auto a = data::synth_dataset(spec);
  const auto b = data::synth_dataset(spec);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  spec.seed = 12;
  CHECK_FALSE(data::synth_dataset(spec).inputs == a.inputs);
  spec.noise = -1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("synth_dataset: well separated blobs are nearly linearly separable") {
  data::BlobSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 500;
  spec.noise = 1.0;
  spec.separation = 10.0;
  spec.seed = 3;
  const auto d = data::synth_dataset(spec);
  std::size_t right = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    double best = 1e300;
    int arg = -1;
    for (int n = 0; n < 2; ++n) {
      const auto m = data::class_mean(spec, static_cast<std::size_t>(n));
      double dist = 0.0;
      for (std::size_t c = 0; c < spec.dim; ++c) dist += (d.inputs(r, c) - m[c]) * (d.inputs(r, c) - m[c]);
      if (dist < best) {
        best = dist;
        arg = n;
      }
    }
    right += arg == d.labels[r];
  }
  CHECK(static_cast<double>(right) / static_cast<double>(d.size()) > 0.99);
}

TEST_CASE("subset keeps the requested order") {
  data::BlobSpec spec;
  spec.samples_per_class = 3;
  const auto d = data::synth_dataset(spec);
  const std::vector<std::size_t> idx{8, 0, 4};
  const auto b = data::subset(d, idx);
  CHECK(b.labels == std::vector<int>{2, 0, 1});
  for (std::size_t c = 0; c < spec.dim; ++c) CHECK(b.inputs(0, c) == d.inputs(8, c));
}

TEST_CASE("dirichlet_partition: conservation and concentration") {
  std::vector<int> labels;
  for (int n = 0; n < 2; ++n) labels.insert(labels.end(), 1000, n);
  const auto flat = data::dirichlet_partition(labels, 2, 4, 1e6, 5);
  data::check_partition(flat, labels);
  for (std::size_t n = 0; n < 2; ++n) {
    for (const auto& [k, counts] : flat.class_counts) {
      CHECK(std::abs(static_cast<double>(counts[n]) / 1000.0 - 0.25) < 0.05);
    }
  }
  const auto skew = data::dirichlet_partition(labels, 2, 4, 0.1, 5);
  data::check_partition(skew, labels);
  double best = 0.0;
  for (const auto& [k, counts] : skew.class_counts) {
    const double tot = static_cast<double>(counts[0] + counts[1]);
    if (tot > 0) best = std::max(best, static_cast<double>(std::max(counts[0], counts[1])) / tot);
  }
  CHECK(best > 0.9);
  CHECK_THROWS_AS(data::dirichlet_partition(labels, 2, 4, -1.0, 5), DomainError);
  CHECK_THROWS_AS(data::dirichlet_partition(labels, 2, 0, 1.0, 5), ConfigError);
}

TEST_CASE("partitions are disjoint and covering for random settings") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> k_d(1, 12);
  std::uniform_real_distribution<double> logk(-3.0, 3.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n_classes = 1 + static_cast<std::size_t>(t % 4);
    std::vector<int> labels;
    for (std::size_t n = 0; n < n_classes; ++n) labels.insert(labels.end(), 20 + t % 7, static_cast<int>(n));
    const auto k = k_d(rng);
    const auto p = data::dirichlet_partition(labels, n_classes, k, std::pow(10.0, logk(rng)), rng());
    CHECK(p.num_clients() == k);
    CHECK_NOTHROW(data::check_partition(p, labels));
    // Count-weighted mixture of the client histograms is the global histogram.
    std::vector<double> mix(n_classes, 0.0);
    for (const auto& [c, counts] : p.class_counts) {
      for (std::size_t n = 0; n < n_classes; ++n) mix[n] += static_cast<double>(counts[n]);
    }
    for (double& v : mix) v /= static_cast<double>(labels.size());
    CHECK(mix == data::label_distribution(labels, n_classes));
  }
}

TEST_CASE("check_partition catches overlap and gaps") {
  const std::vector<int> labels{0, 1, 0, 1};
  auto p = data::iid_partition(labels, 2, 2, 1);
  data::check_partition(p, labels);
  auto overlap = p;
  overlap.assignment[1].push_back(overlap.assignment[0].front());
  CHECK_THROWS_AS(data::check_partition(overlap, labels), InternalError);
  auto missing = p;
  missing.assignment[0].pop_back();
  CHECK_THROWS_AS(data::check_partition(missing, labels), InternalError);
}

TEST_CASE("iid_partition") {
  std::vector<int> labels(103, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  const auto one = data::iid_partition(labels, 3, 1, 9);
  CHECK(one.assignment.at(0).size() == 103);
  const auto p = data::iid_partition(labels, 3, 5, 9);
  data::check_partition(p, labels);
  std::size_t lo = 1000, hi = 0;
  for (const auto& [k, idx] : p.assignment) {
    lo = std::min(lo, idx.size());
    hi = std::max(hi, idx.size());
  }
  CHECK(hi - lo <= 1);
  CHECK(data::iid_partition(labels, 3, 5, 9).assignment == p.assignment);
}

TEST_CASE("partition JSON round trip") {
  std::vector<int> labels;
  for (int n = 0; n < 3; ++n) labels.insert(labels.end(), 30, n);
  const auto p = data::dirichlet_partition(labels, 3, 5, 0.5, 2);
  const auto back = data::partition_from_json(nlohmann::json::parse(data::to_json(p).dump()));
  CHECK(back.assignment == p.assignment);
  CHECK(back.class_counts == p.class_counts);
  CHECK(back.num_classes == 3);
}
