# SPDX-License-Identifier: Apache-2.0
"""Python access to the evsplit C++ core."""

import json

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    aleatoric_uncertainty,
    alpha_from_evidence,
    biased_set,
    client_weights,
    decay_factor,
    edge_weight,
    epistemic_uncertainty,
    evidential_loss,
    greedy_match,
    js_divergence,
    transfer_ratio,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "aleatoric_uncertainty",
    "alpha_from_evidence",
    "biased_set",
    "client_weights",
    "config",
    "decay_factor",
    "dirichlet_partition",
    "edge_weight",
    "epistemic_uncertainty",
    "evidential_loss",
    "greedy_match",
    "js_divergence",
    "run",
    "transfer_ratio",
]


def _overrides(settings):
    return [f"{k}={v}" for k, v in (settings or {}).items()]


def config(**settings):
    """Validated configuration as a dict of strings."""
    return json.loads(_core.config_json(_overrides(settings)))


def dirichlet_partition(labels, num_classes, clients, kappa, seed=0):
    return json.loads(_core.dirichlet_partition(list(labels), num_classes, clients, kappa, seed))


def run(write_outputs=False, **settings):
    """Runs an experiment; returns (summary dict, metrics CSV text)."""
    summary, csv = _core.run(_overrides(settings), write_outputs)
    return json.loads(summary), csv
