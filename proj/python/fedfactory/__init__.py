"""Python front end for the fedfactory C++ core."""

import json

from ._core import (
    Error,
    InvalidInput,
    allocate_quotas,
    clipped_cross_entropy,
    kl_divergence,
    macro_ovr_auroc,
    poe_combine,
    tv_distance,
    verify_lemma1,
    verify_pinsker,
    verify_theorem1,
)
from . import _core

__all__ = [
    "Error",
    "InvalidInput",
    "allocate_quotas",
    "clipped_cross_entropy",
    "config_hash",
    "kl_divergence",
    "macro_ovr_auroc",
    "poe_combine",
    "run",
    "tv_distance",
    "verify_lemma1",
    "verify_pinsker",
    "verify_theorem1",
    "verify_theory",
]


def run(config, jobs=1):
    """Run one experiment from a config dict; returns its results line."""
    return json.loads(_core.run_json(json.dumps(config), jobs))


def config_hash(config):
    return _core.config_hash_json(json.dumps(config))


def verify_theory(pinsker=10000, lemma=1000, theorem=500, seed=1, kl_scale=1.0):
    """Run the theory sweeps; returns the report as a dict."""
    return json.loads(_core.verify_theory_json(pinsker, lemma, theorem, seed, kl_scale))
