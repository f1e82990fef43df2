// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "evsplit/csr.hpp"
#include "evsplit/matrix.hpp"
#include "evsplit/nn.hpp"

namespace evsplit::bcc {

/// Label distribution over N classes; non-negative, sums to one.
using Distribution = std::vector<double>;

/// Throws DomainError unless `p` is on the simplex within `tol`.
void validate_distribution(std::span<const double> p, double tol = 1e-9);

/// M / sum(M); empty when the record holds no samples (client sits out BCC).
std::optional<Distribution> label_distribution_from_csr(const csr::ClientStateRecord& record);

/// Mass-weighted mixture of distributions.
Distribution mixture(std::span<const Distribution> dists, std::span<const double> masses);

/// Jensen-Shannon divergence in nats; 0 log 0 = 0.
double js_divergence(std::span<const double> p, std::span<const double> q);

double l1_distance(std::span<const double> p, std::span<const double> q);

/// Positions (into `divergences`) of clients above the largest-gap threshold.
/// Sort ascending, take the first largest consecutive gap (smallest index
/// on ties) and keep everything strictly above its lower end. Fewer than two
/// clients yields an empty set.
std::vector<std::size_t> biased_set(std::span<const double> divergences);

/// |P_i - P_g|_1 + |P_j - P_g|_1 - |(P_i - P_g) + (P_j - P_g)|_1 >= 0.
double edge_weight(std::span<const double> p_i, std::span<const double> p_j, std::span<const double> p_g);

struct Edge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

struct ComplementarityGraph {
  std::vector<int> nodes;
  std::vector<Edge> edges;
};

/// Complete graph over `clients` with edge_weight() weights; zero edges are kept
/// but never matched.
ComplementarityGraph build_graph(std::span<const int> clients, std::span<const Distribution> dists,
                                 std::span<const double> global);

using Matching = std::vector<std::pair<int, int>>;

/// Repeatedly takes the heaviest remaining positive edge with both ends free.
/// Ties go to the lexicographically smallest (min, max) endpoint pair.
Matching greedy_match(const ComplementarityGraph& graph);

struct ClassSplit {
  std::vector<int> i_to_j;  ///< classes with p_i > p_j
  std::vector<int> j_to_i;  ///< classes with p_j > p_i
};

ClassSplit overrepresented_classes(std::span<const double> p_i, std::span<const double> p_j);

enum class TransferCase { kSourceFavored, kDestinationFavored, kTied, kNoMass };

/// Weights closer than this count as tied.
inline constexpr double kWeightTieBand = 1e-12;

struct TransferRatio {
  double rho = 0.0;      ///< clamped to [0, 1]
  double raw = 0.0;      ///< before clamping
  TransferCase which = TransferCase::kNoMass;
};

/// Fraction of the source's class-n mass to move to the destination.
/// Requires p_src >= p_dst. Source favored: (p_src - p_g) / p_src.
/// Destination favored: (p_g - p_dst) / p_src. Tied: midpoint of the two.
TransferRatio transfer_ratio_detail(double p_src, double p_dst, double p_g, double w_src, double w_dst);
double transfer_ratio(double p_src, double p_dst, double p_g, double w_src, double w_dst);

/// One matched pair's exchange for a single step.
///
/// `ratio[n]` is the clamped transfer fraction of class n in whichever
/// direction n belongs to (zero for classes in neither set). The selected
/// index sets point into each client's own batch.
struct TransferPlan {
  int client_i = 0;
  int client_j = 0;
  std::vector<int> classes_i_to_j;
  std::vector<int> classes_j_to_i;
  std::vector<double> ratio;
  std::vector<TransferCase> cases;
  std::vector<std::size_t> selected_i;
  std::vector<std::size_t> selected_j;

  bool empty() const { return selected_i.empty() && selected_j.empty(); }
};

struct PairInput {
  int client = 0;
  const Distribution* distribution = nullptr;
  double weight = 0.0;
  std::span<const int> batch_labels;
};

/// For each class n of a direction set, selects floor(rho_n * count_n) of the
/// source batch's class-n samples, lowest batch indices first.
TransferPlan build_transfer_plan(const PairInput& i, const PairInput& j, std::span<const double> global);

/// Distribution-level effect of a plan: rho_n * P_src,n of class-n mass moves
/// from source to destination.
std::pair<Distribution, Distribution> apply_mass_transfer(std::span<const double> p_i, std::span<const double> p_j,
                                                          const TransferPlan& plan);

/// Smashed mini-batch of one client as held by the server.
struct ClientBatch {
  int client = 0;
  Matrix smashed;
  std::vector<int> labels;
};

struct ServerReplica {
  nn::LayerStack processor;
  nn::LayerStack head;
};

/// Rows a replica processes this step, with their origin for gradient routing.
struct ServerJob {
  int replica = 0;
  Matrix smashed;
  std::vector<int> labels;
  std::vector<double> weights;
  std::vector<int> origin_client;
  std::vector<std::size_t> origin_row;
};

/// Each replica keeps its own rows minus those sent out, then appends rows
/// received from its partner. A row is weighted 1 / (origin batch size).
std::vector<ServerJob> build_jobs(std::span<const ClientBatch> batches, std::span<const TransferPlan> plans);

/// Weighted per-row losses and the logit gradient of their sum.
struct LossResult {
  std::vector<double> row_loss;
  Matrix logit_grad;
};

using LossFn =
    std::function<LossResult(const Matrix& logits, std::span<const int> labels, std::span<const double> weights)>;

using ReplicaLookup = std::function<const ServerReplica&(int replica)>;

struct ReplicaGradient {
  nn::StackGradient processor;
  nn::StackGradient head;
};

struct ServerPass {
  std::map<int, ReplicaGradient> replica_grads;
  /// Smashed-data gradient per originating client, shaped like its batch.
  std::map<int, Matrix> smashed_grads;
  std::map<int, double> loss_by_origin;
  double total_loss = 0.0;
};

/// Runs every job through its replica, forward and backward, and routes each
/// row's smashed gradient back to the client the row came from.
ServerPass apply_transfer(std::span<const ClientBatch> batches, std::span<const TransferPlan> plans,
                          const ReplicaLookup& replica, const LossFn& loss);

}  // namespace evsplit::bcc
