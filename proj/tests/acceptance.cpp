// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "checks.hpp"
#include "evsplit/bcc.hpp"
#include "evsplit/csr.hpp"
#include "evsplit/ea.hpp"
#include "evsplit/edl.hpp"
#include "evsplit/engine.hpp"
#include "evsplit/theory.hpp"

using namespace evsplit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s (%.2fs): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), s, o.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The desk-scale setup: 3 Gaussian classes in 8 dims, 8 clients, kappa 0.1,
// a small split model, 60 rounds. The default learning rate is far too small
// for 60 rounds at this scale, so the experiments use 0.1.
ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.learning_rate = 0.1;
  return c;
}

Outcome formula_fidelity() {
  const std::vector<double> a{1.0, 1.0};
  const double ale = edl::aleatoric_uncertainty(a);
  const double epi = edl::epistemic_uncertainty(a);
  const double loss = edl::evidential_loss(a, std::vector<double>{1.0, 0.0}, edl::AnnealingSchedule{0, 10});
  const bool ok = std::abs(ale - 0.5) < 1e-10 && std::abs(epi) < 1e-10 && std::abs(loss - 1.0) < 1e-10;
  return {ok, fmt("aleatoric %.17g, epistemic %.3g, loss %.17g", ale, epi, loss)};
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double e = 0, g = 0, c = 0, full = 0;
  for (int t = 0; t < 100; ++t) {
    e = std::max(e, testing::evidential_fd_error(rng));
    g = std::max(g, testing::kd_global_fd_error(rng));
    c = std::max(c, testing::kd_feature_fd_error(rng));
  }
  int kept = 0;
  int skipped = 0;
  while (kept < 100) {
    const double v = testing::dtd_fd_error(rng);
    if (v < 0.0) {
      ++skipped;
      continue;
    }
    full = std::max(full, v);
    ++kept;
  }
  const double secs = seconds_since(t0);
  const bool ok = e < 1e-4 && g < 1e-4 && c < 1e-4 && full < 1e-4 && secs < 30.0;
  return {ok, fmt("max rel err evidential %.2e, kd_g %.2e, kd_c %.2e, dtd %.2e (%d near-kink draws redrawn)", e, g, c,
                  full, skipped)};
}

Outcome weight_simplex() {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> ex(1.0);
  double worst_sum = 0.0;
  double min_w = 1.0;
  double worst_sym = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t k = 1 + static_cast<std::size_t>(t % 10);
    const std::size_t n = 2 + static_cast<std::size_t>(t % 4);
    std::vector<csr::NormalizedRecord> recs;
    for (std::size_t i = 0; i < k; ++i) {
      csr::ClientStateRecord r = csr::ClientStateRecord::empty(n);
      for (int s = 0; s < 6; ++s) {
        std::vector<double> ev(n);
        for (double& v : ev) v = ex(rng);
        std::vector<double> alpha(n);
        for (std::size_t j = 0; j < n; ++j) alpha[j] = ev[j] + 1.0;
        const int label = static_cast<int>(rng() % n);
        csr::record_sample(r, label, ev, edl::aleatoric_uncertainty(alpha), edl::epistemic_uncertainty(alpha));
      }
      recs.push_back(csr::normalize(r));
    }
    const auto w = ea::evidential_weights(recs);
    double s = 0.0;
    for (double v : w.weight) {
      s += v;
      min_w = std::min(min_w, v);
    }
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    const std::vector<csr::NormalizedRecord> same(k, recs.front());
    for (double v : ea::evidential_weights(same).weight)
      worst_sym = std::max(worst_sym, std::abs(v - 1.0 / static_cast<double>(k)));
  }
  const bool ok = min_w >= 0.0 && worst_sum < 1e-12 && worst_sym < 1e-9;
  return {ok, fmt("min w %.3g, max |sum-1| %.2e, max identical-client |w-1/K| %.2e", min_w, worst_sum, worst_sym)};
}

Outcome ema_exactness() {
  int mismatches = 0;
  for (double beta : {0.5, 0.9, 0.99}) {
    for (int gap = 1; gap <= 20; ++gap) {
      const double expect = std::pow(beta, gap);
      if (csr::decay_factor(beta, 100 + gap, 100) != expect) ++mismatches;
      // Through the store: stored 1, current 0 leaves exactly the decay.
      auto stored = csr::ClientStateRecord::empty(1, 100);
      stored.counts[0] = 1.0;
      const auto m = csr::ema_update(stored, csr::ClientStateRecord::empty(1, 100 + gap), beta, 100 + gap);
      if (m.counts[0] != expect) ++mismatches;
    }
    if (csr::decay_factor(beta, 5, 5) != beta) ++mismatches;
  }
  return {mismatches == 0, fmt("%d mismatches over 3 betas x 20 gaps", mismatches)};
}

Outcome bias_reduction() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<int> none;
  int increases = 0;
  int not_strict = 0;
  int not_zeroed = 0;
  int strict_cases = 0;
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t % 4);
    const auto pi = testing::random_simplex(n, rng);
    const auto pj = testing::random_simplex(n, rng);
    const auto g = testing::random_simplex(n, rng);
    const double wi = u(rng);
    const double wj = t % 7 == 0 ? wi : u(rng);
    const auto plan = bcc::build_transfer_plan({0, &pi, wi, none}, {1, &pj, wj, none}, g);
    const auto [hi, hj] = bcc::apply_mass_transfer(pi, pj, plan);
    const double before = bcc::l1_distance(pi, g) + bcc::l1_distance(pj, g);
    const double after = bcc::l1_distance(hi, g) + bcc::l1_distance(hj, g);
    worst = std::max(worst, after - before);
    if (after > before + 1e-12) ++increases;
    if (bcc::edge_weight(pi, pj, g) > 1e-9) {
      ++strict_cases;
      if (!(after < before)) ++not_strict;
    }
    auto favored_zero = [&](int cls, bool src_is_i) {
      const auto c = static_cast<std::size_t>(cls);
      const auto which = plan.cases[c];
      const double raw = bcc::transfer_ratio_detail(src_is_i ? pi[c] : pj[c], src_is_i ? pj[c] : pi[c], g[c],
                                                    src_is_i ? wi : wj, src_is_i ? wj : wi)
                             .raw;
      if (raw < 0.0 || raw > 1.0) return;  // clamped
      double dev = 0.0;
      if (which == bcc::TransferCase::kSourceFavored) dev = (src_is_i ? hi[c] : hj[c]) - g[c];
      else if (which == bcc::TransferCase::kDestinationFavored) dev = (src_is_i ? hj[c] : hi[c]) - g[c];
      else return;
      if (std::abs(dev) > 1e-12) ++not_zeroed;
    };
    for (int cls : plan.classes_i_to_j) favored_zero(cls, true);
    for (int cls : plan.classes_j_to_i) favored_zero(cls, false);
  }
  const bool ok = increases == 0 && not_strict == 0 && not_zeroed == 0;
  return {ok, fmt("%d increases (worst %+.2e), %d/%d G>0 cases not strict, %d unclamped favored classes off target",
                  increases, worst, not_strict, strict_cases, not_zeroed)};
}

Outcome gradient_bias_bound() {
  std::mt19937_64 rng(13);
  std::exponential_distribution<double> ex(1.0);
  int violations = 0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto inst = theory::random_linear_instance(3, 5, rng);
    const auto grads = theory::class_gradients(inst);
    const std::size_t k = 2 + static_cast<std::size_t>(t % 7);
    std::vector<std::vector<double>> dists;
    std::vector<double> w(k);
    double ws = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      dists.push_back(testing::random_simplex(3, rng));
      ws += (w[i] = ex(rng));
    }
    for (double& v : w) v /= ws;
    // P_g is the sample-count mixture, which the aggregation weights do not
    // reproduce; with P_g equal to the w-mixture the bias would vanish.
    std::vector<double> mass(k);
    double ms = 0.0;
    for (double& m : mass) ms += (m = ex(rng));
    std::vector<double> gl(3, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t n = 0; n < 3; ++n) gl[n] += mass[i] / ms * dists[i][n];
    }
    const double b = theory::gradient_bias_norm(w, dists, gl, grads);
    const double d = theory::delta_bcc_estimate(w, dists, gl, theory::max_gradient_norm(grads));
    if (b > d + 1e-12) ++violations;
    if (d > 0) worst_ratio = std::max(worst_ratio, b / d);
  }
  return {violations == 0, fmt("%d violations in 100 instances, max |b|/delta %.4f", violations, worst_ratio)};
}

Outcome convergence_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(17);
  const auto toy = theory::random_quadratic_toy(3, 6, rng);
  const double l = toy.smoothness();
  const double eta = 1.0 / (8.0 * l);
  bool ok = true;
  std::string detail;
  for (int t : {10, 50, 200}) {
    const auto run = theory::run_quadratic_toy(toy, eta, t);
    const double bound = theory::convergence_bound(run.l0, run.l_star, eta, t, run.delta, l, 0.0);
    ok = ok && run.min_grad_sq <= bound;
    detail += fmt("T=%d min|g|^2 %.4g <= %.4g; ", t, run.min_grad_sq, bound);
  }
  return {ok && seconds_since(t0) < 5.0, detail};
}

engine::AblationReport desk_ablation() {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);
  auto c = desk_config();
  c.output_dir = (std::filesystem::temp_directory_path() / "evsplit_acceptance_ablation").string();
  return engine::run_ablation(c, seeds, true, false);
}

Outcome end_to_end(const engine::AblationReport& rep, double secs) {
  const auto& full = rep.final_accuracy.at("full");
  const auto& base = rep.final_accuracy.at("baseline");
  int wins = 0;
  for (std::size_t i = 0; i < full.size(); ++i) wins += full[i] >= base[i];
  const double gain = rep.mean("full") - rep.mean("baseline");
  const bool ok = wins >= 7 && gain > 0.0 && secs < 120.0;
  return {ok, fmt("EA+BCC >= uniform baseline in %d/10 seeds, mean acc %.4f vs %.4f (diff %+.4f), %.1fs for 7 variants",
                  wins, rep.mean("full"), rep.mean("baseline"), gain, secs)};
}

Outcome ablation_order(const engine::AblationReport& rep) {
  const double full = rep.mean("full");
  const double drop_bcc = full - rep.mean("no_bcc");
  const double drop_ea = full - rep.mean("no_ea");
  // The report must come from the same code path as the ablate subcommand.
  auto c = desk_config();
  const auto dir = std::filesystem::temp_directory_path() / "evsplit_acceptance_ablate";
  std::filesystem::remove_all(dir);
  c.output_dir = dir.string();
  engine::write_ablation(c, rep);
  const auto j = nlohmann::json::parse(slurp(dir / "ablation.json"));
  const bool flag = j.at("bcc_drop_at_least_ea_drop").get<bool>();
  std::filesystem::remove_all(dir);
  return {drop_bcc >= drop_ea && flag,
          fmt("drop without BCC %+.4f, without EA %+.4f; report flag %s", drop_bcc, drop_ea, flag ? "true" : "false")};
}

Outcome determinism() {
  std::vector<ExperimentConfig> configs;
  auto c = desk_config();
  c.rounds = 15;
  configs.push_back(c);
  auto iid = c;
  iid.partition = PartitionKind::kIid;
  iid.clients_per_round = 5;
  configs.push_back(iid);
  auto shared = c;
  shared.shared_replica = true;
  shared.local_steps = 3;
  shared.ratio_scope = RatioScope::kRegistered;
  configs.push_back(shared);
  auto other = c;
  other.student_scores = dtd::StudentScores::kLogits;
  other.kd_direction = dtd::KdDirection::kStudentReference;
  other.seed = 99;
  configs.push_back(other);

  const auto dir = std::filesystem::temp_directory_path() / "evsplit_acceptance_det";
  int differing = 0;
  int compared = 0;
  for (auto& cfg : configs) {
    std::filesystem::remove_all(dir);
    cfg.output_dir = dir.string();
    engine::run_experiment(cfg);
    std::map<std::string, std::string> first;
    for (const char* f : {"metrics.csv", "summary.json", "partition.json", "csr_checkpoint.json"}) first[f] = slurp(dir / f);
    engine::run_experiment(cfg);
    for (const auto& [f, body] : first) {
      ++compared;
      if (body.empty() || slurp(dir / f) != body) ++differing;
    }
  }
  std::filesystem::remove_all(dir);
  return {differing == 0, fmt("%d of %d output files differ across %zu configs", differing, compared, configs.size())};
}

Outcome matching_validity() {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad = 0;
  std::size_t pairs = 0;
  for (int t = 0; t < 10000; ++t) {
    const int n = 1 + static_cast<int>(rng() % 12);
    bcc::ComplementarityGraph g;
    std::map<std::pair<int, int>, double> weight;
    for (int a = 0; a < n; ++a) g.nodes.push_back(3 * a + 1);
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        const double r = u(rng);
        // Mix of zero edges, ties and continuous weights.
        const double w = r < 0.25 ? 0.0 : (r < 0.5 ? std::floor(u(rng) * 3) / 2 : u(rng));
        g.edges.push_back({g.nodes[a], g.nodes[b], w});
        weight[{g.nodes[a], g.nodes[b]}] = w;
      }
    }
    std::set<int> used;
    for (auto [a, b] : bcc::greedy_match(g)) {
      ++pairs;
      if (!used.insert(a).second || !used.insert(b).second) ++bad;
      const auto it = weight.find({std::min(a, b), std::max(a, b)});
      if (it == weight.end() || !(it->second > 0.0)) ++bad;
    }
  }
  return {bad == 0, fmt("%d invalid pairs among %zu matched over 10^4 graphs", bad, pairs)};
}

Outcome distillation_reduction() {
  // Engine level: auxiliary models trained with both weights zero against
  // standalone evidential training over the same batches.
  auto c = desk_config();
  c.lambda_c = 0.0;
  c.lambda_g = 0.0;
  c.rounds = 12;
  c.local_steps = 2;
  c.clients_per_round = 5;
  auto s = engine::init_state(c);
  const auto oracle_state = engine::init_state(c);
  for (int t = 0; t < c.rounds; ++t) engine::run_round(s);

  int differing = 0;
  for (const auto& [k, aux] : s.auxiliary) {
    auto plain = nn::concat({&oracle_state.global.auxiliary_extractor, &oracle_state.global.auxiliary_head});
    for (int t = 1; t <= c.rounds; ++t) {
      const auto sel = engine::sample_clients(c.clients, c.clients_per_round, c.seed, t);
      if (std::find(sel.begin(), sel.end(), k) == sel.end()) continue;
      if (oracle_state.partition.assignment.at(k).empty()) continue;
      for (std::size_t step = 0; step < c.local_steps; ++step) {
        const auto batch = data::subset(oracle_state.train, engine::batch_indices(oracle_state, k, t, step));
        edl::train_step(plain, batch, edl::AnnealingSchedule{t, c.horizon()}, c.learning_rate);
      }
    }
    if (!(nn::concat({&aux.extractor, &aux.head}) == plain)) ++differing;
  }

  // Unit level: 200 steps from a random start.
  std::mt19937_64 rng(23);
  auto d = testing::random_dtd_instance(rng);
  d.config.lambda_c = 0.0;
  d.config.lambda_g = 0.0;
  auto plain = nn::concat({&d.aux.extractor, &d.aux.head});
  int loss_diff = 0;
  for (int step = 0; step < 200; ++step) {
    const edl::AnnealingSchedule sched{step, 50};
    if (dtd::dtd_step(d.aux, d.teachers(), d.batch, d.config, sched, 0.05).total !=
        edl::train_step(plain, d.batch, sched, 0.05))
      ++loss_diff;
  }
  const bool same = nn::concat({&d.aux.extractor, &d.aux.head}) == plain;
  return {differing == 0 && loss_diff == 0 && same,
          fmt("%d of %zu engine auxiliary models differ; standalone 200-step run %s, %d loss mismatches", differing,
              s.auxiliary.size(), same ? "bitwise equal" : "differs", loss_diff)};
}

}  // namespace

int main() {
  report(1, "formula fidelity", formula_fidelity);
  report(2, "gradient correctness", gradient_correctness);
  report(3, "weight simplex and symmetry", weight_simplex);
  report(4, "EMA exactness", ema_exactness);
  report(5, "BCC bias reduction", bias_reduction);
  report(6, "gradient bias bound", gradient_bias_bound);
  report(7, "convergence bound sanity", convergence_sanity);

  const auto t0 = std::chrono::steady_clock::now();
  std::optional<engine::AblationReport> rep;
  std::string err;
  try {
    rep = desk_ablation();
  } catch (const std::exception& e) {
    err = e.what();
  }
  const double secs = seconds_since(t0);
  report(8, "desk-scale end-to-end", [&] { return rep ? end_to_end(*rep, secs) : Outcome{false, err}; });
  report(9, "ablation ordering", [&] { return rep ? ablation_order(*rep) : Outcome{false, err}; });

  report(10, "determinism", determinism);
  report(11, "matching validity", matching_validity);
  report(12, "distillation reduction", distillation_reduction);

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
