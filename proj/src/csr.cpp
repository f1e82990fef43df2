// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/csr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsplit/error.hpp"

namespace evsplit::csr {

namespace {

void check_same_shape(const ClientStateRecord& a, const ClientStateRecord& b) {
  const std::size_t n = a.num_classes();
  if (b.num_classes() != n || a.evidence.rows() != n || b.evidence.rows() != n || a.evidence.cols() != n ||
      b.evidence.cols() != n)
    throw ConfigError("client state records have different class counts");
}

void blend(std::span<double> out, std::span<const double> stored, std::span<const double> current, double decay) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decay * stored[i] + (1.0 - decay) * current[i];
}

std::vector<double> per_class_average(const std::vector<double>& sums, const std::vector<double>& counts) {
  std::vector<double> out(sums.size(), 0.0);
  for (std::size_t n = 0; n < sums.size(); ++n) {
    if (counts[n] > 0.0) out[n] = sums[n] / counts[n];
  }
  return out;
}

}  // namespace

ClientStateRecord ClientStateRecord::empty(std::size_t num_classes, int round) {
  ClientStateRecord r;
  r.evidence = Matrix(num_classes, num_classes);
  r.counts.assign(num_classes, 0.0);
  r.aleatoric.assign(num_classes, 0.0);
  r.epistemic.assign(num_classes, 0.0);
  r.last_round = round;
  return r;
}

void record_sample(ClientStateRecord& record, int label, std::span<const double> evidence, double aleatoric,
                   double epistemic) {
  const std::size_t n = record.num_classes();
  if (label < 0 || static_cast<std::size_t>(label) >= n)
    throw DomainError("record_sample: label " + std::to_string(label) + " out of range");
  if (evidence.size() != n) throw DomainError("record_sample: evidence length differs from class count");
  for (double e : evidence) {
    if (!(e >= 0.0)) throw DomainError("record_sample: evidence must be non-negative");
  }
  auto row = record.evidence.row(static_cast<std::size_t>(label));
  for (std::size_t j = 0; j < n; ++j) row[j] += evidence[j];
  const auto y = static_cast<std::size_t>(label);
  record.counts[y] += 1.0;
  record.aleatoric[y] += aleatoric;
  record.epistemic[y] += epistemic;
}

ClientStateRecord record_batch(ClientStateRecord fresh, std::span<const SampleStats> samples) {
  for (const auto& s : samples) record_sample(fresh, s.label, s.evidence, s.aleatoric, s.epistemic);
  return fresh;
}

double decay_factor(double beta, int current_round, int stored_round) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("EMA beta must lie in (0, 1)");
  if (current_round < stored_round)
    throw OrderingError("EMA update from round " + std::to_string(current_round) + " precedes stored round " +
                        std::to_string(stored_round));
  return std::pow(beta, std::max(1, current_round - stored_round));
}

ClientStateRecord ema_update(const ClientStateRecord& stored, const ClientStateRecord& current, double beta,
                             int current_round) {
  check_same_shape(stored, current);
  const double decay = decay_factor(beta, current_round, stored.last_round);
  ClientStateRecord out = ClientStateRecord::empty(stored.num_classes(), current_round);
  blend(out.evidence.values(), stored.evidence.values(), current.evidence.values(), decay);
  blend(out.counts, stored.counts, current.counts, decay);
  blend(out.aleatoric, stored.aleatoric, current.aleatoric, decay);
  blend(out.epistemic, stored.epistemic, current.epistemic, decay);
  return out;
}

NormalizedRecord normalize(const ClientStateRecord& record) {
  const std::size_t n = record.num_classes();
  NormalizedRecord out;
  out.evidence = Matrix(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!(record.counts[r] > 0.0)) continue;
    const auto src = record.evidence.row(r);
    auto dst = out.evidence.row(r);
    for (std::size_t c = 0; c < n; ++c) dst[c] = src[c] / record.counts[r];
  }
  out.counts = record.counts;
  out.aleatoric = per_class_average(record.aleatoric, record.counts);
  out.epistemic = per_class_average(record.epistemic, record.counts);
  return out;
}

CsrStore::CsrStore(double beta, std::optional<int> ttl_rounds) : beta_(beta), ttl_(ttl_rounds) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("EMA beta must lie in (0, 1)");
  if (ttl_ && *ttl_ < 0) throw ConfigError("ttl_rounds must be non-negative");
}

ClientStateRecord CsrStore::preview(int client, const ClientStateRecord& current, int current_round) const {
  const auto it = records_.find(client);
  if (it == records_.end()) {
    ClientStateRecord first = current;
    first.last_round = current_round;
    return first;
  }
  return ema_update(it->second, current, beta_, current_round);
}

const ClientStateRecord& CsrStore::merge(int client, const ClientStateRecord& current, int current_round) {
  auto merged = preview(client, current, current_round);
  auto& slot = records_[client];
  slot = std::move(merged);
  return slot;
}

const ClientStateRecord* CsrStore::find(int client) const {
  const auto it = records_.find(client);
  return it == records_.end() ? nullptr : &it->second;
}

std::size_t CsrStore::evict_stale(int current_round) {
  if (!ttl_) return 0;
  return std::erase_if(records_, [&](const auto& kv) { return current_round - kv.second.last_round > *ttl_; });
}

nlohmann::json to_json(const CsrStore& store) {
  nlohmann::json clients = nlohmann::json::object();
  for (const auto& [id, r] : store.records()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < r.evidence.rows(); ++i) {
      const auto row = r.evidence.row(i);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    clients[std::to_string(id)] = {
        {"E", rows}, {"M", r.counts}, {"U_ale", r.aleatoric}, {"U_epi", r.epistemic}, {"t_k", r.last_round}};
  }
  nlohmann::json j = {{"beta", store.beta()}, {"clients", clients}};
  j["ttl"] = store.ttl_rounds() ? nlohmann::json(*store.ttl_rounds()) : nlohmann::json(nullptr);
  return j;
}

CsrStore store_from_json(const nlohmann::json& j) {
  std::optional<int> ttl;
  if (!j.at("ttl").is_null()) ttl = j.at("ttl").get<int>();
  CsrStore store(j.at("beta").get<double>(), ttl);
  for (const auto& [key, v] : j.at("clients").items()) {
    const auto counts = v.at("M").get<std::vector<double>>();
    auto r = ClientStateRecord::empty(counts.size(), v.at("t_k").get<int>());
    r.counts = counts;
    r.aleatoric = v.at("U_ale").get<std::vector<double>>();
    r.epistemic = v.at("U_epi").get<std::vector<double>>();
    const auto rows = v.at("E").get<std::vector<std::vector<double>>>();
    if (rows.size() != counts.size() || r.aleatoric.size() != counts.size() || r.epistemic.size() != counts.size())
      throw ConfigError("CSR snapshot for client " + key + " has inconsistent class counts");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != counts.size()) throw ConfigError("CSR snapshot for client " + key + " has ragged E");
      std::ranges::copy(rows[i], r.evidence.row(i).begin());
    }
    store.merge(std::stoi(key), r, r.last_round);
  }
  return store;
}

}  // namespace evsplit::csr
