// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/bcc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "evsplit/error.hpp"

namespace evsplit::bcc {

namespace {

double kl_to_mid(std::span<const double> p, std::span<const double> m) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / m[i]);
  }
  return kl;
}

void check_lengths(std::size_t a, std::size_t b, const char* fn) {
  if (a != b) throw DomainError(std::string(fn) + ": distributions differ in length");
}

const ClientBatch& batch_for(std::span<const ClientBatch> batches, int client) {
  for (const auto& b : batches) {
    if (b.client == client) return b;
  }
  throw InternalError("transfer plan references client " + std::to_string(client) + " without a batch");
}

}  // namespace

void validate_distribution(std::span<const double> p, double tol) {
  if (p.empty()) throw DomainError("distribution is empty");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("distribution has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw DomainError("distribution does not sum to one");
}

std::optional<Distribution> label_distribution_from_csr(const csr::ClientStateRecord& record) {
  const double total = std::accumulate(record.counts.begin(), record.counts.end(), 0.0);
  if (!(total > 0.0)) return std::nullopt;
  Distribution p(record.counts.size());
  for (std::size_t n = 0; n < p.size(); ++n) p[n] = record.counts[n] / total;
  return p;
}

Distribution mixture(std::span<const Distribution> dists, std::span<const double> masses) {
  if (dists.empty() || dists.size() != masses.size()) throw ConfigError("mixture: need one mass per distribution");
  const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
  if (!(total > 0.0)) throw DomainError("mixture: total mass must be positive");
  Distribution out(dists.front().size(), 0.0);
  for (std::size_t k = 0; k < dists.size(); ++k) {
    check_lengths(dists[k].size(), out.size(), "mixture");
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += masses[k] / total * dists[k][n];
  }
  return out;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  check_lengths(p.size(), q.size(), "js_divergence");
  validate_distribution(p);
  validate_distribution(q);
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  const double js = 0.5 * kl_to_mid(p, m) + 0.5 * kl_to_mid(q, m);
  return std::max(0.0, js);
}

double l1_distance(std::span<const double> p, std::span<const double> q) {
  check_lengths(p.size(), q.size(), "l1_distance");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return d;
}

std::vector<std::size_t> biased_set(std::span<const double> divergences) {
  if (divergences.size() < 2) return {};
  std::vector<double> sorted(divergences.begin(), divergences.end());
  std::ranges::sort(sorted);
  std::size_t best = 0;
  double best_gap = sorted[1] - sorted[0];
  for (std::size_t i = 1; i + 1 < sorted.size(); ++i) {
    const double gap = sorted[i + 1] - sorted[i];
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  const double threshold = sorted[best];
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < divergences.size(); ++k) {
    if (divergences[k] > threshold) out.push_back(k);
  }
  return out;
}

double edge_weight(std::span<const double> p_i, std::span<const double> p_j, std::span<const double> p_g) {
  check_lengths(p_i.size(), p_g.size(), "edge_weight");
  check_lengths(p_j.size(), p_g.size(), "edge_weight");
  double g = 0.0;
  for (std::size_t n = 0; n < p_g.size(); ++n) {
    const double di = p_i[n] - p_g[n];
    const double dj = p_j[n] - p_g[n];
    g += std::abs(di) + std::abs(dj) - std::abs(di + dj);
  }
  return std::max(0.0, g);
}

ComplementarityGraph build_graph(std::span<const int> clients, std::span<const Distribution> dists,
                                 std::span<const double> global) {
  if (clients.size() != dists.size()) throw ConfigError("build_graph: one distribution per client required");
  ComplementarityGraph g;
  g.nodes.assign(clients.begin(), clients.end());
  for (std::size_t a = 0; a < clients.size(); ++a) {
    for (std::size_t b = a + 1; b < clients.size(); ++b) {
      g.edges.push_back({clients[a], clients[b], edge_weight(dists[a], dists[b], global)});
    }
  }
  return g;
}

Matching greedy_match(const ComplementarityGraph& graph) {
  std::vector<Edge> edges;
  for (const auto& e : graph.edges) {
    if (e.weight > 0.0 && e.a != e.b) edges.push_back({std::min(e.a, e.b), std::max(e.a, e.b), e.weight});
  }
  std::ranges::sort(edges, [](const Edge& x, const Edge& y) {
    if (x.weight != y.weight) return x.weight > y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  std::set<int> used;
  Matching m;
  for (const auto& e : edges) {
    if (used.contains(e.a) || used.contains(e.b)) continue;
    used.insert(e.a);
    used.insert(e.b);
    m.emplace_back(e.a, e.b);
  }
  return m;
}

ClassSplit overrepresented_classes(std::span<const double> p_i, std::span<const double> p_j) {
  check_lengths(p_i.size(), p_j.size(), "overrepresented_classes");
  ClassSplit s;
  for (std::size_t n = 0; n < p_i.size(); ++n) {
    if (p_i[n] > p_j[n]) s.i_to_j.push_back(static_cast<int>(n));
    if (p_j[n] > p_i[n]) s.j_to_i.push_back(static_cast<int>(n));
  }
  return s;
}

TransferRatio transfer_ratio_detail(double p_src, double p_dst, double p_g, double w_src, double w_dst) {
  if (p_src < p_dst) throw DomainError("transfer_ratio: source proportion must be >= destination proportion");
  TransferRatio r;
  if (!(p_src > 0.0)) return r;
  const double source_aligned = (p_src - p_g) / p_src;
  const double destination_aligned = (p_g - p_dst) / p_src;
  if (std::abs(w_src - w_dst) <= kWeightTieBand) {
    r.which = TransferCase::kTied;
    const double lo = std::min(source_aligned, destination_aligned);
    const double hi = std::max(source_aligned, destination_aligned);
    r.raw = 0.5 * (lo + hi);
  } else if (w_src > w_dst) {
    r.which = TransferCase::kSourceFavored;
    r.raw = source_aligned;
  } else {
    r.which = TransferCase::kDestinationFavored;
    r.raw = destination_aligned;
  }
  r.rho = std::clamp(r.raw, 0.0, 1.0);
  return r;
}

double transfer_ratio(double p_src, double p_dst, double p_g, double w_src, double w_dst) {
  return transfer_ratio_detail(p_src, p_dst, p_g, w_src, w_dst).rho;
}

TransferPlan build_transfer_plan(const PairInput& i, const PairInput& j, std::span<const double> global) {
  if (i.distribution == nullptr || j.distribution == nullptr) throw ConfigError("build_transfer_plan: missing distribution");
  const auto& p_i = *i.distribution;
  const auto& p_j = *j.distribution;
  check_lengths(p_i.size(), global.size(), "build_transfer_plan");
  check_lengths(p_j.size(), global.size(), "build_transfer_plan");
  if (i.client == j.client) throw ConfigError("build_transfer_plan: a client cannot pair with itself");

  TransferPlan plan;
  plan.client_i = i.client;
  plan.client_j = j.client;
  const auto split = overrepresented_classes(p_i, p_j);
  plan.classes_i_to_j = split.i_to_j;
  plan.classes_j_to_i = split.j_to_i;
  plan.ratio.assign(global.size(), 0.0);
  plan.cases.assign(global.size(), TransferCase::kNoMass);

  auto select = [](std::span<const int> labels, int cls, double rho, std::vector<std::size_t>& out) {
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] == cls) idx.push_back(r);
    }
    // The small slack keeps exact products such as 0.6 * 5 from flooring low.
    const auto take = static_cast<std::size_t>(std::floor(rho * static_cast<double>(idx.size()) + 1e-9));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(take, idx.size())));
  };

  for (int n : plan.classes_i_to_j) {
    const auto c = static_cast<std::size_t>(n);
    const auto r = transfer_ratio_detail(p_i[c], p_j[c], global[c], i.weight, j.weight);
    plan.ratio[c] = r.rho;
    plan.cases[c] = r.which;
    select(i.batch_labels, n, r.rho, plan.selected_i);
  }
  for (int n : plan.classes_j_to_i) {
    const auto c = static_cast<std::size_t>(n);
    const auto r = transfer_ratio_detail(p_j[c], p_i[c], global[c], j.weight, i.weight);
    plan.ratio[c] = r.rho;
    plan.cases[c] = r.which;
    select(j.batch_labels, n, r.rho, plan.selected_j);
  }
  std::ranges::sort(plan.selected_i);
  std::ranges::sort(plan.selected_j);
  return plan;
}

std::pair<Distribution, Distribution> apply_mass_transfer(std::span<const double> p_i, std::span<const double> p_j,
                                                          const TransferPlan& plan) {
  check_lengths(p_i.size(), p_j.size(), "apply_mass_transfer");
  if (plan.ratio.size() != p_i.size()) throw ConfigError("apply_mass_transfer: plan class count mismatch");
  Distribution hat_i(p_i.begin(), p_i.end());
  Distribution hat_j(p_j.begin(), p_j.end());
  for (int n : plan.classes_i_to_j) {
    const auto c = static_cast<std::size_t>(n);
    const double moved = plan.ratio[c] * p_i[c];
    hat_i[c] = p_i[c] - moved;
    hat_j[c] = p_j[c] + moved;
  }
  for (int n : plan.classes_j_to_i) {
    const auto c = static_cast<std::size_t>(n);
    const double moved = plan.ratio[c] * p_j[c];
    hat_j[c] = p_j[c] - moved;
    hat_i[c] = p_i[c] + moved;
  }
  return {hat_i, hat_j};
}

std::vector<ServerJob> build_jobs(std::span<const ClientBatch> batches, std::span<const TransferPlan> plans) {
  std::set<int> seen;
  for (const auto& b : batches) {
    if (b.labels.size() != b.smashed.rows()) throw ConfigError("client batch labels/rows mismatch");
    if (b.labels.empty()) throw ConfigError("client batch is empty");
    if (!seen.insert(b.client).second) throw ConfigError("duplicate client batch " + std::to_string(b.client));
  }
  // outgoing[client] = rows sent away; incoming[client] = (partner, rows) received.
  std::map<int, std::vector<std::size_t>> outgoing;
  std::map<int, std::pair<int, std::vector<std::size_t>>> incoming;
  std::set<int> paired;
  for (const auto& p : plans) {
    if (!paired.insert(p.client_i).second || !paired.insert(p.client_j).second)
      throw InternalError("client appears in more than one transfer plan");
    const auto& bi = batch_for(batches, p.client_i);
    const auto& bj = batch_for(batches, p.client_j);
    for (auto r : p.selected_i) {
      if (r >= bi.labels.size()) throw InternalError("transfer plan index out of batch range");
    }
    for (auto r : p.selected_j) {
      if (r >= bj.labels.size()) throw InternalError("transfer plan index out of batch range");
    }
    outgoing[p.client_i] = p.selected_i;
    outgoing[p.client_j] = p.selected_j;
    incoming[p.client_j] = {p.client_i, p.selected_i};
    incoming[p.client_i] = {p.client_j, p.selected_j};
  }

  std::vector<ServerJob> jobs;
  for (const auto& b : batches) {
    ServerJob job;
    job.replica = b.client;
    std::vector<std::pair<const ClientBatch*, std::size_t>> rows;
    const auto out_it = outgoing.find(b.client);
    for (std::size_t r = 0; r < b.labels.size(); ++r) {
      if (out_it != outgoing.end() && std::ranges::binary_search(out_it->second, r)) continue;
      rows.emplace_back(&b, r);
    }
    if (const auto in_it = incoming.find(b.client); in_it != incoming.end()) {
      const auto& partner = batch_for(batches, in_it->second.first);
      for (auto r : in_it->second.second) rows.emplace_back(&partner, r);
    }
    const std::size_t d = b.smashed.cols();
    job.smashed = Matrix(rows.size(), d);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& [src, r] = rows[k];
      if (src->smashed.cols() != d) throw ConfigError("smashed dimension differs between clients");
      std::ranges::copy(src->smashed.row(r), job.smashed.row(k).begin());
      job.labels.push_back(src->labels[r]);
      job.weights.push_back(1.0 / static_cast<double>(src->labels.size()));
      job.origin_client.push_back(src->client);
      job.origin_row.push_back(r);
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

ServerPass apply_transfer(std::span<const ClientBatch> batches, std::span<const TransferPlan> plans,
                          const ReplicaLookup& replica, const LossFn& loss) {
  const auto jobs = build_jobs(batches, plans);
  ServerPass pass;
  for (const auto& b : batches) {
    pass.smashed_grads[b.client] = Matrix(b.smashed.rows(), b.smashed.cols());
    pass.loss_by_origin[b.client] = 0.0;
  }
  for (const auto& job : jobs) {
    if (job.labels.empty()) {
      const auto& rep = replica(job.replica);
      pass.replica_grads[job.replica] = {nn::zero_gradient(rep.processor), nn::zero_gradient(rep.head)};
      continue;
    }
    const auto& rep = replica(job.replica);
    const auto cache = nn::forward_server(rep.processor, rep.head, job.smashed);
    auto result = loss(cache.logits(), job.labels, job.weights);
    if (result.row_loss.size() != job.labels.size()) throw InternalError("loss returned wrong row count");
    auto grad = nn::backward_server(rep.processor, rep.head, cache, result.logit_grad);
    pass.replica_grads[job.replica] = {std::move(grad.processor), std::move(grad.head)};
    for (std::size_t k = 0; k < job.labels.size(); ++k) {
      auto dst = pass.smashed_grads.at(job.origin_client[k]).row(job.origin_row[k]);
      const auto src = grad.smashed_grad.row(k);
      std::ranges::copy(src, dst.begin());
      pass.loss_by_origin[job.origin_client[k]] += result.row_loss[k];
      pass.total_loss += result.row_loss[k];
    }
  }
  return pass;
}

}  // namespace evsplit::bcc
