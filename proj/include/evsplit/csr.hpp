// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "evsplit/matrix.hpp"

namespace evsplit::csr {

/// Server-held per-class evidential statistics of one client.
///
/// evidence(n, j) sums the class-j evidence over samples whose true label
/// is n; counts, aleatoric and epistemic are per true class.
struct ClientStateRecord {
  Matrix evidence;
  std::vector<double> counts;
  std::vector<double> aleatoric;
  std::vector<double> epistemic;
  int last_round = 0;

  static ClientStateRecord empty(std::size_t num_classes, int round = 0);
  std::size_t num_classes() const { return counts.size(); }
  bool operator==(const ClientStateRecord&) const = default;
};

struct SampleStats {
  int label = 0;
  std::vector<double> evidence;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

void record_sample(ClientStateRecord& record, int label, std::span<const double> evidence, double aleatoric,
                   double epistemic);

ClientStateRecord record_batch(ClientStateRecord fresh, std::span<const SampleStats> samples);

/// beta^max(1, current_round - stored_round).
double decay_factor(double beta, int current_round, int stored_round);

/// Staleness-aware EMA: decay * stored + (1 - decay) * current, fieldwise
/// (counts included). The result carries last_round = current_round.
ClientStateRecord ema_update(const ClientStateRecord& stored, const ClientStateRecord& current, double beta,
                             int current_round);

struct NormalizedRecord {
  Matrix evidence;
  std::vector<double> counts;
  std::vector<double> aleatoric;
  std::vector<double> epistemic;
};

/// Per-class averages; classes with zero count normalize to zeros.
NormalizedRecord normalize(const ClientStateRecord& record);

class CsrStore {
 public:
  /// `ttl_rounds` empty disables eviction.
  CsrStore(double beta, std::optional<int> ttl_rounds);

  /// Folds this round's statistics into the stored record. A client seen
  /// for the first time takes `current` as is.
  const ClientStateRecord& merge(int client, const ClientStateRecord& current, int current_round);

  /// Read-only EMA view of what merge() would store, without storing it.
  ClientStateRecord preview(int client, const ClientStateRecord& current, int current_round) const;

  const ClientStateRecord* find(int client) const;

  /// Drops records with current_round - last_round > ttl.
  std::size_t evict_stale(int current_round);

  double beta() const { return beta_; }
  std::optional<int> ttl_rounds() const { return ttl_; }
  std::size_t size() const { return records_.size(); }
  const std::map<int, ClientStateRecord>& records() const { return records_; }

 private:
  double beta_;
  std::optional<int> ttl_;
  std::map<int, ClientStateRecord> records_;
};

/// {"beta", "ttl", "clients": {"<id>": {"E", "M", "U_ale", "U_epi", "t_k"}}}
nlohmann::json to_json(const CsrStore& store);
CsrStore store_from_json(const nlohmann::json& j);

}  // namespace evsplit::csr
