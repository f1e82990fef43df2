// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "evsplit/bcc.hpp"
#include "evsplit/ea.hpp"
#include "evsplit/edl.hpp"
#include "evsplit/error.hpp"
#include "evsplit/theory.hpp"

namespace evsplit::engine {

namespace {

enum StreamTag : std::uint64_t { kTrainData = 1, kTestData, kPartition, kBatches, kModel, kSampling };

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(std::span<const T> xs, char sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_floating_point_v<T>) {
      out += num(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

data::BlobSpec blob_spec(const ExperimentConfig& c, std::size_t per_class, std::uint64_t seed) {
  data::BlobSpec s;
  s.num_classes = c.num_classes;
  s.dim = c.input_dim;
  s.samples_per_class = per_class;
  s.separation = c.separation;
  s.noise = c.noise;
  s.seed = seed;
  return s;
}

std::uint64_t draw_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return derive_rng(seed, tags)();
}

Matrix predict_logits(const nn::LayerStack& client, const nn::LayerStack& processor, const nn::LayerStack& head,
                      const Matrix& inputs) {
  const auto z = nn::forward(client, inputs);
  return nn::forward_server(processor, head, z.output).logits();
}

double mean_test_loss(const Matrix& logits, std::span<const int> labels) {
  // lambda = 1 so the value is comparable across rounds.
  const edl::AnnealingSchedule full{1, 1};
  return edl::evidential_batch(logits, labels, full).loss;
}

/// Class-probability view of a committed or previewed record.
struct ClientDistribution {
  int client = 0;
  bcc::Distribution p;
  double mass = 0.0;
};

std::vector<ClientDistribution> distributions_for(const ExperimentState& s, std::span<const int> clients,
                                                  const std::map<int, csr::ClientStateRecord>& round_records) {
  std::vector<ClientDistribution> out;
  for (int k : clients) {
    const auto rec = s.store.preview(k, round_records.at(k), s.round);
    auto p = bcc::label_distribution_from_csr(rec);
    if (!p) continue;
    const double mass = std::accumulate(rec.counts.begin(), rec.counts.end(), 0.0);
    out.push_back({k, std::move(*p), mass});
  }
  return out;
}

struct StepBcc {
  std::vector<bcc::TransferPlan> plans;
  std::vector<int> biased;
  std::vector<PairLog> pairs;
  double delta_before = 0.0;
  double delta_after = 0.0;
  bool fallback = false;
};

StepBcc plan_step(const ExperimentState& s, std::span<const int> active,
                  const std::map<int, csr::ClientStateRecord>& round_records,
                  const std::map<int, std::vector<int>>& batch_labels) {
  StepBcc out;
  const auto dists = distributions_for(s, active, round_records);
  if (dists.size() < 2) {
    out.fallback = true;
    return out;
  }
  std::vector<bcc::Distribution> ps;
  std::vector<double> masses;
  for (const auto& d : dists) {
    ps.push_back(d.p);
    masses.push_back(d.mass);
  }
  const auto global = bcc::mixture(ps, masses);

  // Previous-round weights stand in for this round's; newcomers get 1/k.
  std::vector<double> w;
  for (const auto& d : dists) {
    const auto it = s.last_weights.find(d.client);
    w.push_back(it != s.last_weights.end() ? it->second : 1.0 / static_cast<double>(active.size()));
  }

  std::vector<double> divergences;
  for (const auto& p : ps) divergences.push_back(bcc::js_divergence(p, global));
  const auto biased_pos = bcc::biased_set(divergences);
  std::vector<int> biased_clients;
  std::vector<bcc::Distribution> biased_dists;
  for (auto pos : biased_pos) {
    out.biased.push_back(dists[pos].client);
    biased_clients.push_back(dists[pos].client);
    biased_dists.push_back(ps[pos]);
  }
  const auto graph = bcc::build_graph(biased_clients, biased_dists, global);
  const auto matching = bcc::greedy_match(graph);

  auto index_of = [&](int client) {
    for (std::size_t i = 0; i < dists.size(); ++i) {
      if (dists[i].client == client) return i;
    }
    throw InternalError("matched client without a distribution");
  };

  std::vector<bcc::Distribution> after = ps;
  for (const auto& [a, b] : matching) {
    const auto ia = index_of(a);
    const auto ib = index_of(b);
    bcc::PairInput in_a{a, &ps[ia], w[ia], batch_labels.at(a)};
    bcc::PairInput in_b{b, &ps[ib], w[ib], batch_labels.at(b)};
    auto plan = bcc::build_transfer_plan(in_a, in_b, global);
    auto [hat_a, hat_b] = bcc::apply_mass_transfer(ps[ia], ps[ib], plan);
    after[ia] = std::move(hat_a);
    after[ib] = std::move(hat_b);
    PairLog log;
    log.client_i = a;
    log.client_j = b;
    log.gain = bcc::edge_weight(ps[ia], ps[ib], global);
    log.rho = plan.ratio;
    log.moved_i = plan.selected_i.size();
    log.moved_j = plan.selected_j.size();
    out.pairs.push_back(std::move(log));
    if (!plan.empty()) out.plans.push_back(std::move(plan));
  }
  out.fallback = out.plans.empty();
  out.delta_before = theory::delta_bcc_estimate(w, ps, global, 1.0);
  out.delta_after = theory::delta_bcc_estimate(w, after, global, 1.0);
  return out;
}

ea::ClientWeighting round_weights(const ExperimentState& s, std::span<const int> active) {
  const auto& c = s.config;
  std::vector<csr::NormalizedRecord> norm;
  for (int k : active) norm.push_back(csr::normalize(*s.store.find(k)));
  const ea::FactorToggles toggles{c.ea_evidence, c.ea_aleatoric, c.ea_epistemic};
  if (c.ratio_scope == RatioScope::kParticipating) return ea::evidential_weights(norm, c.epsilon, toggles);

  double pool_ale = 0.0;
  double pool_epi = 0.0;
  for (const auto& [id, rec] : s.store.records()) {
    const auto n = csr::normalize(rec);
    pool_ale += std::accumulate(n.aleatoric.begin(), n.aleatoric.end(), 0.0);
    pool_epi += std::accumulate(n.epistemic.begin(), n.epistemic.end(), 0.0);
  }
  std::vector<double> q;
  std::vector<std::vector<double>> ale;
  std::vector<std::vector<double>> epi;
  for (const auto& n : norm) {
    q.push_back(ea::evidence_concentration(n.evidence, c.epsilon));
    ale.push_back(n.aleatoric);
    epi.push_back(n.epistemic);
  }
  const auto r = ea::uncertainty_ratios(ale, epi, pool_ale, pool_epi, c.epsilon);
  return ea::client_weights(q, r.aleatoric, r.epistemic, toggles);
}

void record_evidence(csr::ClientStateRecord& rec, const Matrix& logits, std::span<const int> labels,
                     edl::EntropyForm form) {
  const auto evidence = nn::softplus_evidence(logits);
  std::vector<double> alpha(evidence.cols());
  for (std::size_t r = 0; r < evidence.rows(); ++r) {
    const auto e = evidence.row(r);
    for (std::size_t i = 0; i < e.size(); ++i) alpha[i] = e[i] + 1.0;
    csr::record_sample(rec, labels[r], e, edl::aleatoric_uncertainty(alpha), edl::epistemic_uncertainty(alpha, form));
  }
}

std::vector<int> active_clients(const ExperimentState& s, std::span<const int> selected) {
  std::vector<int> out;
  for (int k : selected) {
    if (!s.partition.assignment.at(k).empty()) out.push_back(k);
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

std::vector<int> sample_clients(std::size_t total, std::size_t k, std::uint64_t seed, int round) {
  if (k < 1 || k > total) throw ConfigError("sample_clients: k must be in [1, K]");
  std::vector<int> ids(total);
  std::iota(ids.begin(), ids.end(), 0);
  if (k < total) {
    auto rng = derive_rng(seed, {kSampling, static_cast<std::uint64_t>(round)});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(k);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const int> critical_classes) {
  if (labels.empty()) throw DomainError("compute_metrics: empty evaluation set");
  if (predictions.size() != labels.size()) throw ConfigError("compute_metrics: prediction/label count mismatch");
  const std::set<int> critical(critical_classes.begin(), critical_classes.end());
  std::size_t correct = 0;
  std::size_t crit_total = 0;
  std::size_t crit_missed = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
    if (critical.contains(labels[i])) {
      ++crit_total;
      if (!critical.contains(predictions[i])) ++crit_missed;
    }
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  if (crit_total == 0) {
    m.critical_empty = true;
  } else {
    m.critical_rate = static_cast<double>(crit_missed) / static_cast<double>(crit_total);
  }
  return m;
}

std::optional<int> rta(std::span<const double> accuracy, double target) {
  for (std::size_t t = 0; t < accuracy.size(); ++t) {
    if (accuracy[t] >= target) return static_cast<int>(t + 1);
  }
  return std::nullopt;
}

nn::SplitArchitecture architecture(const ExperimentConfig& c) {
  nn::SplitArchitecture a;
  a.input_dim = c.input_dim;
  a.num_classes = c.num_classes;
  a.client_widths = c.client_widths;
  a.processor_widths = c.processor_widths;
  a.head_hidden = c.head_hidden;
  a.aux_extractor_widths = c.aux_extractor_widths;
  a.aux_head_hidden = c.aux_head_hidden;
  return a;
}

ExperimentState init_state(const ExperimentConfig& config) {
  config.validate();
  ExperimentState s;
  s.config = config;
  const auto seed = config.seed;
  s.train = data::synth_dataset(blob_spec(config, config.train_per_class, draw_seed(seed, {kTrainData})));
  s.test = data::synth_dataset(blob_spec(config, config.test_per_class, draw_seed(seed, {kTestData})));
  const auto part_seed = draw_seed(seed, {kPartition});
  s.partition = config.partition == PartitionKind::kDirichlet
                    ? data::dirichlet_partition(s.train.labels, config.num_classes, config.clients, config.kappa,
                                                part_seed)
                    : data::iid_partition(s.train.labels, config.num_classes, config.clients, part_seed);
  data::check_partition(s.partition, s.train.labels);
  s.global = nn::make_split_model(architecture(config), draw_seed(seed, {kModel}));
  for (std::size_t k = 0; k < config.clients; ++k) {
    s.auxiliary[static_cast<int>(k)] = {s.global.auxiliary_extractor, s.global.auxiliary_head};
  }
  s.store = csr::CsrStore(config.beta, config.ttl > 0 ? std::optional<int>(config.ttl) : std::nullopt);
  return s;
}

std::vector<std::size_t> batch_indices(const ExperimentState& state, int client, int round, std::size_t step) {
  const auto& own = state.partition.assignment.at(client);
  if (own.empty()) return {};
  auto perm = own;
  auto rng = derive_rng(state.config.seed,
                        {kBatches, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client)});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n = perm.size();
  const std::size_t b = std::min(state.config.batch_size, n);
  std::vector<std::size_t> out;
  out.reserve(b);
  const std::size_t start = (step * b) % n;
  for (std::size_t i = 0; i < b; ++i) out.push_back(perm[(start + i) % n]);
  return out;
}

RoundReport run_round(ExperimentState& s) {
  const auto started = std::chrono::steady_clock::now();
  const auto& c = s.config;
  ++s.round;
  const int t = s.round;
  const edl::AnnealingSchedule schedule{t, c.horizon()};

  RoundReport rep;
  rep.round = t;
  rep.selected = sample_clients(c.clients, c.clients_per_round, c.seed, t);
  rep.active = active_clients(s, rep.selected);
  rep.weights.assign(c.clients, 0.0);
  const auto& active = rep.active;

  // Local copies start from the global model.
  std::map<int, nn::LayerStack> client_side;
  std::map<int, bcc::ServerReplica> replicas;
  bcc::ServerReplica shared{s.global.server_processor, s.global.server_head};
  std::map<int, csr::ClientStateRecord> round_records;
  for (int k : active) {
    client_side[k] = s.global.client_side;
    if (!c.shared_replica) replicas[k] = {s.global.server_processor, s.global.server_head};
    round_records[k] = csr::ClientStateRecord::empty(c.num_classes, t);
  }
  auto replica_of = [&](int k) -> bcc::ServerReplica& { return c.shared_replica ? shared : replicas.at(k); };

  const nn::SplitModel global_snapshot = s.global;
  const dtd::DistillConfig distill = c.distill();
  const bcc::LossFn loss = [&](const Matrix& logits, std::span<const int> labels, std::span<const double> weights) {
    auto b = edl::evidential_batch(logits, labels, weights, schedule);
    return bcc::LossResult{std::move(b.row_loss), std::move(b.logit_grad)};
  };

  double task_loss = 0.0;
  double kd_c = 0.0;
  double kd_g = 0.0;
  std::size_t kd_terms = 0;
  std::size_t bcc_steps = 0;

  for (std::size_t step = 0; step < c.local_steps; ++step) {
    std::map<int, nn::Batch> batches;
    std::map<int, nn::ForwardCache> caches;
    std::vector<bcc::ClientBatch> smashed;
    std::map<int, std::vector<int>> labels;
    for (int k : active) {
      const auto idx = batch_indices(s, k, t, step);
      batches[k] = data::subset(s.train, idx);
      caches[k] = nn::forward_client(client_side.at(k), batches[k]);
      smashed.push_back({k, caches[k].output, batches[k].labels});
      labels[k] = batches[k].labels;
      // Evidence on the client's own replica feeds this round's record.
      const auto& rep_k = replica_of(k);
      const auto sc = nn::forward_server(rep_k.processor, rep_k.head, caches[k].output);
      record_evidence(round_records[k], sc.logits(), batches[k].labels, c.entropy);
    }

    std::vector<bcc::TransferPlan> plans;
    if (c.use_bcc) {
      if (active.size() >= 2) {
        auto step_bcc = plan_step(s, active, round_records, labels);
        plans = std::move(step_bcc.plans);
        rep.biased = std::move(step_bcc.biased);
        rep.pairs = std::move(step_bcc.pairs);
        rep.bcc_fallback = rep.bcc_fallback || step_bcc.fallback;
        rep.delta_before += step_bcc.delta_before;
        rep.delta_after += step_bcc.delta_after;
        ++bcc_steps;
        for (const auto& p : plans) rep.transferred += p.selected_i.size() + p.selected_j.size();
      } else {
        rep.bcc_fallback = true;
      }
    }

    const auto pass = bcc::apply_transfer(smashed, plans, [&](int k) -> const bcc::ServerReplica& { return replica_of(k); },
                                          loss);

    // Auxiliary training sees the pre-update client-side model.
    if (c.use_dtd) {
      for (int k : active) {
        const dtd::Teachers teachers{&client_side.at(k), s.has_global_snapshot ? &global_snapshot : nullptr};
        const auto l = dtd::dtd_step(s.auxiliary.at(k), teachers, batches.at(k), distill, schedule, c.learning_rate);
        kd_c += l.kd_c;
        kd_g += l.kd_g;
        ++kd_terms;
      }
    }

    for (int k : active) {
      const auto back = nn::backward(client_side.at(k), caches.at(k), pass.smashed_grads.at(k));
      nn::sgd_update(client_side.at(k), back.params, c.learning_rate);
      task_loss += pass.loss_by_origin.at(k);
    }
    if (c.shared_replica) {
      auto gp = nn::zero_gradient(shared.processor);
      auto gh = nn::zero_gradient(shared.head);
      for (const auto& [k, g] : pass.replica_grads) {
        nn::accumulate(gp, g.processor);
        nn::accumulate(gh, g.head);
      }
      nn::sgd_update(shared.processor, gp, c.learning_rate);
      nn::sgd_update(shared.head, gh, c.learning_rate);
    } else {
      for (const auto& [k, g] : pass.replica_grads) {
        nn::sgd_update(replicas.at(k).processor, g.processor, c.learning_rate);
        nn::sgd_update(replicas.at(k).head, g.head, c.learning_rate);
      }
    }
  }

  const double steps = static_cast<double>(c.local_steps);
  if (!active.empty()) rep.task_loss = task_loss / (steps * static_cast<double>(active.size()));
  if (kd_terms > 0) {
    rep.kd_c = kd_c / static_cast<double>(kd_terms);
    rep.kd_g = kd_g / static_cast<double>(kd_terms);
  }
  if (bcc_steps > 0) {
    rep.delta_before /= static_cast<double>(bcc_steps);
    rep.delta_after /= static_cast<double>(bcc_steps);
  }

  // Commit statistics in ascending client order, then weigh and aggregate.
  for (int k : active) s.store.merge(k, round_records.at(k), t);
  s.store.evict_stale(t);

  if (!active.empty()) {
    std::vector<double> w;
    if (c.use_ea) {
      const auto cw = round_weights(s, active);
      w = cw.weight;
      rep.uniform_fallback = cw.uniform_fallback;
    } else {
      w = ea::uniform_weights(active.size());
    }
    std::vector<nn::LayerStack> cs;
    std::vector<nn::LayerStack> sp;
    std::vector<nn::LayerStack> sh;
    for (int k : active) {
      cs.push_back(client_side.at(k));
      if (!c.shared_replica) {
        sp.push_back(replicas.at(k).processor);
        sh.push_back(replicas.at(k).head);
      }
    }
    s.global.client_side = ea::aggregate_params(cs, w);
    if (c.shared_replica) {
      s.global.server_processor = shared.processor;
      s.global.server_head = shared.head;
    } else {
      s.global.server_processor = ea::aggregate_params(sp, w);
      s.global.server_head = ea::aggregate_params(sh, w);
    }
    s.last_weights.clear();
    for (std::size_t i = 0; i < active.size(); ++i) {
      s.last_weights[active[i]] = w[i];
      rep.weights[static_cast<std::size_t>(active[i])] = w[i];
    }
    s.has_global_snapshot = true;
  }

  const auto logits = predict_logits(s.global.client_side, s.global.server_processor, s.global.server_head, s.test.inputs);
  const auto m = compute_metrics(nn::argmax_rows(logits), s.test.labels, c.critical_classes);
  rep.test_accuracy = m.accuracy;
  rep.critical_rate = m.critical_rate;
  rep.critical_empty = m.critical_empty;
  rep.test_loss = mean_test_loss(logits, s.test.labels);

  double aux_acc = 0.0;
  for (const auto& [k, aux] : s.auxiliary) {
    const auto z = nn::forward(aux.extractor, s.test.inputs);
    const auto out = nn::forward(aux.head, z.output);
    aux_acc += compute_metrics(nn::argmax_rows(out.output), s.test.labels, c.critical_classes).accuracy;
  }
  rep.aux_accuracy = aux_acc / static_cast<double>(s.auxiliary.size());

  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

nn::SplitModel reference_plain_round(const ExperimentState& state) {
  const auto& c = state.config;
  const int t = state.round + 1;
  const edl::AnnealingSchedule schedule{t, c.horizon()};
  const auto selected = sample_clients(c.clients, c.clients_per_round, c.seed, t);
  std::vector<nn::LayerStack> cs;
  std::vector<nn::LayerStack> sp;
  std::vector<nn::LayerStack> sh;
  for (int k : selected) {
    if (state.partition.assignment.at(k).empty()) continue;
    nn::LayerStack wc = state.global.client_side;
    nn::LayerStack wp = state.global.server_processor;
    nn::LayerStack wh = state.global.server_head;
    for (std::size_t step = 0; step < c.local_steps; ++step) {
      const auto batch = data::subset(state.train, batch_indices(state, k, t, step));
      const auto zc = nn::forward(wc, batch.inputs);
      const auto sc = nn::forward_server(wp, wh, zc.output);
      const auto l = edl::evidential_batch(sc.logits(), batch.labels, schedule);
      const auto gs = nn::backward_server(wp, wh, sc, l.logit_grad);
      const auto gc = nn::backward(wc, zc, gs.smashed_grad);
      nn::sgd_update(wc, gc.params, c.learning_rate);
      nn::sgd_update(wp, gs.processor, c.learning_rate);
      nn::sgd_update(wh, gs.head, c.learning_rate);
    }
    cs.push_back(std::move(wc));
    sp.push_back(std::move(wp));
    sh.push_back(std::move(wh));
  }
  nn::SplitModel out = state.global;
  if (cs.empty()) return out;
  const auto w = ea::uniform_weights(cs.size());
  out.client_side = ea::aggregate_params(cs, w);
  out.server_processor = ea::aggregate_params(sp, w);
  out.server_head = ea::aggregate_params(sh, w);
  return out;
}

ExperimentResult run_rounds(const ExperimentConfig& config) {
  ExperimentResult r{{}, init_state(config)};
  for (int t = 0; t < config.rounds; ++t) r.reports.push_back(run_round(r.state));
  return r;
}

std::string metrics_csv(const ExperimentConfig& config, std::span<const RoundReport> reports) {
  std::string out =
      "round,num_selected,num_active,task_loss,kd_c_loss,kd_g_loss,test_acc,test_loss,critical_rate,critical_empty,"
      "aux_acc,delta_bcc_before,delta_bcc_after,num_biased,num_pairs,transferred,uniform_fallback,bcc_fallback";
  for (std::size_t k = 0; k < config.clients; ++k) out += ",w_" + std::to_string(k);
  out += ",biased,bcc_log\n";
  for (const auto& r : reports) {
    out += std::to_string(r.round) + ',' + std::to_string(r.selected.size()) + ',' + std::to_string(r.active.size());
    for (double v : {r.task_loss, r.kd_c, r.kd_g, r.test_accuracy, r.test_loss, r.critical_rate}) out += ',' + num(v);
    out += r.critical_empty ? ",1" : ",0";
    for (double v : {r.aux_accuracy, r.delta_before, r.delta_after}) out += ',' + num(v);
    out += ',' + std::to_string(r.biased.size()) + ',' + std::to_string(r.pairs.size()) + ',' +
           std::to_string(r.transferred);
    out += r.uniform_fallback ? ",1" : ",0";
    out += r.bcc_fallback ? ",1" : ",0";
    for (double w : r.weights) out += ',' + num(w);
    out += ',' + join<int>(r.biased, ';') + ',';
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
      const auto& p = r.pairs[i];
      if (i) out += '|';
      out += std::to_string(p.client_i) + '-' + std::to_string(p.client_j) + ":G=" + num(p.gain) +
             ":rho=" + join<double>(p.rho, ';') + ":moved=" + std::to_string(p.moved_i) + ';' +
             std::to_string(p.moved_j);
    }
    out += '\n';
  }
  return out;
}

nlohmann::json summary_json(const ExperimentConfig& config, std::span<const RoundReport> reports) {
  if (reports.empty()) throw ConfigError("summary_json: no rounds to summarize");
  std::vector<double> acc;
  for (const auto& r : reports) acc.push_back(r.test_accuracy);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config"] = to_json(config);
  j["rounds"] = reports.size();
  const auto& last = reports.back();
  j["final_acc"] = last.test_accuracy;
  j["final_test_loss"] = last.test_loss;
  j["final_critical_rate"] = last.critical_rate;
  j["critical_empty"] = last.critical_empty;
  j["final_aux_acc"] = last.aux_accuracy;
  j["best_acc"] = *std::max_element(acc.begin(), acc.end());
  j["first_task_loss"] = reports.front().task_loss;
  j["final_task_loss"] = last.task_loss;
  auto& table = j["rta"];
  table = nlohmann::json::object();
  for (double target : config.rta_targets) {
    const auto r = rta(acc, target);
    table[num(target)] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
  }
  j["timing_file"] = "timing.json";
  return j;
}

nlohmann::json timing_json(const ExperimentConfig& config, std::span<const RoundReport> reports) {
  nlohmann::json j;
  std::vector<double> acc;
  std::vector<double> elapsed;
  double total = 0.0;
  for (const auto& r : reports) {
    total += r.wall_ms;
    elapsed.push_back(total);
    acc.push_back(r.test_accuracy);
  }
  j["total_ms"] = total;
  j["cumulative_ms"] = elapsed;
  auto& tta = j["tta_ms"];
  tta = nlohmann::json::object();
  for (double target : config.rta_targets) {
    const auto r = rta(acc, target);
    tta[num(target)] = r ? nlohmann::json(elapsed[static_cast<std::size_t>(*r - 1)]) : nlohmann::json(nullptr);
  }
  return j;
}

void write_outputs(const ExperimentResult& result) {
  const auto& c = result.state.config;
  ensure_dir(c.output_dir);
  const std::filesystem::path dir(c.output_dir);
  write_file(dir / "metrics.csv", metrics_csv(c, result.reports));
  write_file(dir / "summary.json", summary_json(c, result.reports).dump(2) + "\n");
  write_file(dir / "partition.json", data::to_json(result.state.partition).dump() + "\n");
  write_file(dir / "csr_checkpoint.json", csr::to_json(result.state.store).dump() + "\n");
  write_file(dir / "timing.json", timing_json(c, result.reports).dump(2) + "\n");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  auto result = run_rounds(config);
  write_outputs(result);
  return result;
}

std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base, bool include_baseline) {
  std::vector<AblationVariant> v;
  auto add = [&](const std::string& name, auto tweak) {
    ExperimentConfig c = base;
    c.use_ea = true;
    c.use_bcc = true;
    c.ea_evidence = c.ea_aleatoric = c.ea_epistemic = true;
    tweak(c);
    c.tag = name;
    v.push_back({name, c});
  };
  add("full", [](ExperimentConfig&) {});
  add("no_ea", [](ExperimentConfig& c) { c.use_ea = false; });
  add("no_ale", [](ExperimentConfig& c) { c.ea_aleatoric = false; });
  add("no_epi", [](ExperimentConfig& c) { c.ea_epistemic = false; });
  add("no_E", [](ExperimentConfig& c) { c.ea_evidence = false; });
  add("no_bcc", [](ExperimentConfig& c) { c.use_bcc = false; });
  if (include_baseline) {
    add("baseline", [](ExperimentConfig& c) {
      c.use_ea = false;
      c.use_bcc = false;
      c.use_dtd = false;
    });
  }
  return v;
}

double AblationReport::mean(const std::string& variant) const {
  const auto& xs = final_accuracy.at(variant);
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  auto& vars = j["variants"];
  vars = nlohmann::json::object();
  for (const auto& [name, accs] : final_accuracy) vars[name] = {{"final_acc", accs}, {"mean_final_acc", mean(name)}};
  if (final_accuracy.contains("full")) {
    const double full = mean("full");
    auto& drops = j["drop_vs_full"];
    drops = nlohmann::json::object();
    for (const auto& [name, accs] : final_accuracy) {
      if (name != "full") drops[name] = full - mean(name);
    }
    if (final_accuracy.contains("no_bcc") && final_accuracy.contains("no_ea")) {
      j["bcc_drop_at_least_ea_drop"] = (full - mean("no_bcc")) >= (full - mean("no_ea"));
    }
  }
  return j;
}

AblationReport run_ablation(const ExperimentConfig& base, std::span<const std::uint64_t> seeds, bool include_baseline,
                            bool write_runs) {
  AblationReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& variant : ablation_variants(base, include_baseline)) {
    auto& accs = report.final_accuracy[variant.name];
    for (auto seed : seeds) {
      auto c = variant.config;
      c.seed = seed;
      c.output_dir = (std::filesystem::path(base.output_dir) / variant.name / ("seed_" + std::to_string(seed))).string();
      auto result = run_rounds(c);
      if (write_runs) write_outputs(result);
      accs.push_back(result.reports.back().test_accuracy);
    }
  }
  return report;
}

void write_ablation(const ExperimentConfig& base, const AblationReport& report) {
  ensure_dir(base.output_dir);
  const std::filesystem::path dir(base.output_dir);
  write_file(dir / "ablation.json", report.to_json().dump(2) + "\n");
  std::string csv = "variant,seed,final_acc\n";
  for (const auto& [name, accs] : report.final_accuracy) {
    for (std::size_t i = 0; i < accs.size(); ++i) csv += name + ',' + std::to_string(report.seeds[i]) + ',' + num(accs[i]) + '\n';
  }
  write_file(dir / "ablation.csv", csv);
}

}  // namespace evsplit::engine
