// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "evsplit/error.hpp"

namespace evsplit::data {

namespace {

Partition finish(std::map<int, std::vector<std::size_t>> assignment, std::span<const int> labels,
                 std::size_t num_classes) {
  Partition p;
  p.num_classes = num_classes;
  for (auto& [client, idx] : assignment) {
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i : idx) ++counts[static_cast<std::size_t>(labels[i])];
    p.class_counts[client] = std::move(counts);
  }
  p.assignment = std::move(assignment);
  return p;
}

void check_labels(std::span<const int> labels, std::size_t num_classes) {
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ConfigError("label out of range");
  }
}

}  // namespace

void BlobSpec::validate() const {
  if (num_classes == 0 || dim == 0 || samples_per_class == 0)
    throw ConfigError("dataset: classes, dim and samples_per_class must be positive");
  if (!(separation > 0.0) || !std::isfinite(separation)) throw ConfigError("dataset: separation must be > 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("dataset: noise must be >= 0");
}

std::vector<double> class_mean(const BlobSpec& spec, std::size_t n) {
  std::vector<double> mu(spec.dim, 0.0);
  const double ring = static_cast<double>(n / spec.dim);
  mu[n % spec.dim] = spec.separation * (1.0 + ring);
  return mu;
}

Dataset synth_dataset(const BlobSpec& spec) {
  spec.validate();
  Dataset d;
  d.num_classes = spec.num_classes;
  d.inputs = Matrix(spec.num_classes * spec.samples_per_class, spec.dim);
  d.labels.reserve(d.inputs.rows());
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t r = 0;
  for (std::size_t n = 0; n < spec.num_classes; ++n) {
    const auto mu = class_mean(spec, n);
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++r) {
      auto row = d.inputs.row(r);
      for (std::size_t k = 0; k < spec.dim; ++k) {
        const double z = gauss(rng);
        row[k] = mu[k] + spec.noise * z;
      }
      d.labels.push_back(static_cast<int>(n));
    }
  }
  return d;
}

nn::Batch subset(const Dataset& data, std::span<const std::size_t> indices) {
  nn::Batch b;
  b.inputs = gather_rows(data.inputs, indices);
  b.labels.reserve(indices.size());
  for (std::size_t i : indices) b.labels.push_back(data.labels.at(i));
  return b;
}

Partition dirichlet_partition(std::span<const int> labels, std::size_t num_classes, std::size_t clients,
                              double kappa, std::uint64_t seed) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("dirichlet_partition: kappa must be > 0");
  if (clients == 0) throw ConfigError("dirichlet_partition: need at least one client");
  check_labels(labels, num_classes);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(kappa, 1.0);

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  std::map<int, std::vector<std::size_t>> assignment;
  for (std::size_t k = 0; k < clients; ++k) assignment[static_cast<int>(k)];

  for (std::size_t n = 0; n < num_classes; ++n) {
    auto& idx = by_class[n];
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> share(clients);
    double total = 0.0;
    for (auto& s : share) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) {
      // Every draw underflowed (tiny kappa); all mass to one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const double count = static_cast<double>(idx.size());
    std::vector<std::size_t> take(clients);
    std::vector<double> frac(clients);
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      const double exact = count * share[k] / total;
      take[k] = static_cast<std::size_t>(std::floor(exact));
      frac[k] = exact - std::floor(exact);
      assigned += take[k];
    }
    std::vector<std::size_t> order(clients);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; assigned < idx.size(); ++r, ++assigned) ++take[order[r % clients]];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      auto& dst = assignment[static_cast<int>(k)];
      dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                 idx.begin() + static_cast<std::ptrdiff_t>(pos + take[k]));
      pos += take[k];
    }
  }
  return finish(std::move(assignment), labels, num_classes);
}

Partition iid_partition(std::span<const int> labels, std::size_t num_classes, std::size_t clients,
                        std::uint64_t seed) {
  if (clients == 0) throw ConfigError("iid_partition: need at least one client");
  check_labels(labels, num_classes);
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t base = idx.size() / clients;
  const std::size_t extra = idx.size() % clients;
  std::map<int, std::vector<std::size_t>> assignment;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < clients; ++k) {
    const std::size_t n = base + (k < extra ? 1 : 0);
    assignment[static_cast<int>(k)].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                           idx.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return finish(std::move(assignment), labels, num_classes);
}

void check_partition(const Partition& partition, std::span<const int> labels) {
  std::vector<char> seen(labels.size(), 0);
  for (const auto& [client, idx] : partition.assignment) {
    std::vector<std::size_t> counts(partition.num_classes, 0);
    for (std::size_t i : idx) {
      if (i >= labels.size()) throw InternalError("partition index out of range");
      if (seen[i]) throw InternalError("partition assigns sample " + std::to_string(i) + " twice");
      seen[i] = 1;
      ++counts.at(static_cast<std::size_t>(labels[i]));
    }
    const auto it = partition.class_counts.find(client);
    if (it == partition.class_counts.end() || it->second != counts)
      throw InternalError("partition class counts disagree for client " + std::to_string(client));
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw InternalError("partition misses a sample");
}

std::vector<double> label_distribution(std::span<const int> labels, std::size_t num_classes) {
  check_labels(labels, num_classes);
  std::vector<double> p(num_classes, 0.0);
  if (labels.empty()) return p;
  for (int y : labels) p[static_cast<std::size_t>(y)] += 1.0;
  for (double& v : p) v /= static_cast<double>(labels.size());
  return p;
}

nlohmann::json to_json(const Partition& partition) {
  nlohmann::json j;
  j["num_classes"] = partition.num_classes;
  auto& clients = j["clients"];
  clients = nlohmann::json::object();
  for (const auto& [client, idx] : partition.assignment) {
    clients[std::to_string(client)] = {{"indices", idx}, {"class_counts", partition.class_counts.at(client)}};
  }
  return j;
}

Partition partition_from_json(const nlohmann::json& j) {
  Partition p;
  try {
    p.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& [key, value] : j.at("clients").items()) {
      const int client = std::stoi(key);
      p.assignment[client] = value.at("indices").get<std::vector<std::size_t>>();
      p.class_counts[client] = value.at("class_counts").get<std::vector<std::size_t>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("partition json: ") + e.what());
  }
  return p;
}

}  // namespace evsplit::data
