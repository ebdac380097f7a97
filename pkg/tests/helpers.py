"""Shared builders for the test suite."""

from __future__ import annotations

import copy

import numpy as np

from ncmatch.harness import ExperimentConfig, config_from_document
from ncmatch.scm import DomainSpec, LatentScm, sample_scm

# Small instance for unit tests: fast, same structure as the full setup.
TINY_DIM_LATENT = 30
TINY_DIM_OBS = 30
TINY_NUM_SPURIOUS = 6


def tiny_domains(
    scales=(3.0, 4.0, 15.0), coupling: float = 3.0
) -> tuple[DomainSpec, ...]:
    a, b, t = scales
    return (
        DomainSpec("a", a, 0.5, coupling),
        DomainSpec("b", b, 0.5, coupling),
        DomainSpec("t", t, 0.0, coupling),
    )


def tiny_scm(seed: int = 11, **kwargs) -> LatentScm:
    params = {
        "dim_latent": TINY_DIM_LATENT,
        "dim_obs": TINY_DIM_OBS,
        "num_spurious": TINY_NUM_SPURIOUS,
        "domains": tiny_domains(),
        "seed": seed,
    }
    params.update(kwargs)
    return sample_scm(**params)


def fullsize_scm(seed: int = 11) -> LatentScm:
    """The mild-shift family at full dimensions (accuracy-sensitive tests)."""
    return sample_scm(
        dim_latent=100,
        dim_obs=100,
        num_spurious=20,
        domains=tiny_domains(),
        seed=seed,
    )


TINY_CONFIG_DOC = {
    "config_version": 1,
    "scm": {
        "dim_latent": TINY_DIM_LATENT,
        "dim_obs": TINY_DIM_OBS,
        "num_spurious": TINY_NUM_SPURIOUS,
        "test_domain": "t",
        "domains": [
            {"id": "a", "spurious_scale": 3.0, "weight": 0.5, "mean_coupling": 3.0},
            {"id": "b", "spurious_scale": 4.0, "weight": 0.5, "mean_coupling": 3.0},
            {"id": "t", "spurious_scale": 15.0, "weight": 0.0, "mean_coupling": 3.0},
        ],
    },
    "data": {"n_train": 300, "n_indomain_test": 200, "n_test": 200},
    "pairs": {"k": 12, "epsilons": [0.0, 1.0], "pairing": "oracle"},
    "model": {
        "loss_kind": "log_loss",
        "r": 6,
        "epochs": 40,
        "step_size": 0.01,
        "optimizer": "adam",
    },
    "sweep": {"axis": "none", "num_seeds": 2},
    "bounds": {"enabled": False, "mc_samples": 2000},
    "output": {"directory": "OVERRIDE_ME", "csv_basename": "rows"},
}


def tiny_config(out_dir, **overrides) -> ExperimentConfig:
    """TINY_CONFIG_DOC with dotted-path overrides, parsed and validated."""
    doc = copy.deepcopy(TINY_CONFIG_DOC)
    doc["output"]["directory"] = str(out_dir)
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = doc
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
    return config_from_document(doc)


def random_orthonormal(dim: int, cols: int, seed: int) -> np.ndarray:
    gen = np.random.default_rng(seed)
    q, r = np.linalg.qr(gen.standard_normal((dim, cols)))
    return q * np.where(np.diag(r) >= 0, 1.0, -1.0)
