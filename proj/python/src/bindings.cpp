// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "evsplit/bcc.hpp"
#include "evsplit/config.hpp"
#include "evsplit/csr.hpp"
#include "evsplit/data.hpp"
#include "evsplit/ea.hpp"
#include "evsplit/edl.hpp"
#include "evsplit/engine.hpp"
#include "evsplit/error.hpp"

namespace py = pybind11;
using namespace evsplit;

namespace {

ExperimentConfig make_config(const std::vector<std::string>& overrides) {
  auto c = apply_overrides(ExperimentConfig{}, overrides);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Evidential split federated learning core (C++).";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<OrderingError>(m, "OrderingError", PyExc_RuntimeError);
  py::register_exception<InternalError>(m, "InternalError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // evidential
  m.def("alpha_from_evidence", [](const std::vector<double>& e) {
    const auto d = edl::alpha_from_evidence(e);
    py::dict out;
    out["alpha"] = d.alpha;
    out["strength"] = d.strength;
    out["belief"] = d.belief;
    out["vacuity"] = d.vacuity;
    out["expected_prob"] = d.expected_prob;
    return out;
  });
  m.def("aleatoric_uncertainty", [](const std::vector<double>& a) { return edl::aleatoric_uncertainty(a); });
  m.def(
      "epistemic_uncertainty",
      [](const std::vector<double>& a, bool standard) {
        return edl::epistemic_uncertainty(a, standard ? edl::EntropyForm::kStandard : edl::EntropyForm::kPerClass);
      },
      py::arg("alpha"), py::arg("standard") = false);
  m.def(
      "evidential_loss",
      [](const std::vector<double>& a, const std::vector<double>& y, int round, int horizon) {
        return edl::evidential_loss(a, y, edl::AnnealingSchedule{round, horizon});
      },
      py::arg("alpha"), py::arg("one_hot"), py::arg("round") = 0, py::arg("horizon") = 1);

  // client state records / weighting
  m.def("decay_factor", &csr::decay_factor, py::arg("beta"), py::arg("current_round"), py::arg("stored_round"));
  m.def("client_weights", [](const std::vector<double>& q, const std::vector<double>& ra, const std::vector<double>& re) {
    return ea::client_weights(q, ra, re).weight;
  });

  // bias compensation
  m.def("js_divergence", [](const std::vector<double>& p, const std::vector<double>& q) { return bcc::js_divergence(p, q); });
  m.def("biased_set", [](const std::vector<double>& d) { return bcc::biased_set(d); });
  m.def("edge_weight", [](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& g) {
    return bcc::edge_weight(a, b, g);
  });
  m.def("greedy_match", [](const std::vector<int>& nodes, const std::vector<std::tuple<int, int, double>>& edges) {
    bcc::ComplementarityGraph g{nodes, {}};
    for (const auto& [a, b, w] : edges) g.edges.push_back({a, b, w});
    return bcc::greedy_match(g);
  });
  m.def("transfer_ratio", &bcc::transfer_ratio, py::arg("p_src"), py::arg("p_dst"), py::arg("p_global"),
        py::arg("w_src"), py::arg("w_dst"));

  // data
  m.def(
      "dirichlet_partition",
      [](const std::vector<int>& labels, std::size_t num_classes, std::size_t clients, double kappa,
         std::uint64_t seed) { return data::to_json(data::dirichlet_partition(labels, num_classes, clients, kappa, seed)).dump(); },
      py::arg("labels"), py::arg("num_classes"), py::arg("clients"), py::arg("kappa"), py::arg("seed") = 0);

  // config and experiments; JSON crosses the boundary as text
  m.def("default_config", [] { return serialize_config(ExperimentConfig{}); });
  m.def("config_json", [](const std::vector<std::string>& overrides) { return to_json(make_config(overrides)).dump(); },
        py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run",
      [](const std::vector<std::string>& overrides, bool write) {
        const auto c = make_config(overrides);
        engine::ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = write ? engine::run_experiment(c) : engine::run_rounds(c);
        }
        return py::make_tuple(engine::summary_json(c, r.reports).dump(), engine::metrics_csv(c, r.reports));
      },
      py::arg("overrides") = std::vector<std::string>{}, py::arg("write_outputs") = false);
}
