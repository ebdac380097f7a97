"""Experiment orchestration: config parsing, seeded sweeps, baselines, CSV.

A sweep is a grid over one axis (number of pairs ``k``, removed directions
``r``, or pair-corruption level ``epsilon``) crossed with a fixed list of
corruption levels and a set of seed indices.  Every run is a pure function of
(config, master_seed): per seed index ``i`` the harness derives independent
sub-seeds for each purpose (SCM draw, training data, evaluation data, pairs,
pair corruption, training, the second-moment estimate) with a documented
mixing function, and the grid value enters only as an operation parameter —
the pair count is a prefix length, the removed-rank truncates one SVD, the
corruption level scales one shared noise draw.  Consequently curves across a
grid share their underlying data and differ only in the quantity under study,
and editing one grid point never perturbs another.

Within one run: the training set is stratified (``n_train`` rows from each
training domain); the in-domain evaluation set is a fresh mixture draw so its
mean loss is unbiased for the domain-weighted in-domain risk that the bounds
refer to; the test set is a fresh draw from the held-out test domain.
Counterfactual pairs never involve the test domain.

Outputs per sweep: a rows CSV with one line per (grid value, corruption
level, seed), a mean/std summary CSV, a verbatim echo of the config document,
and a small metadata document.  Rows are written in canonical order and all
numbers use shortest round-trip formatting, so output bytes are identical
regardless of worker count.  Missing metrics are empty cells, never sentinel
numbers.  Baselines (unconstrained training on the mixture, and the ceiling:
unconstrained training on labeled test-domain data of the same total size)
emit rows over the same seed set, enabling paired plots.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bounds import BoundReport, second_moment, verify_bound
from .errors import ConfigError, InvalidArgumentError
from .models import (
    LOSS_KINDS,
    OPTIMIZERS,
    WEIGHT_INITS,
    TrainConfig,
    evaluate,
    train,
)
from .pairs import corrupt_pairs, generate_cf_pairs, random_pairing
from .rng import fold64
from .scm import Dataset, DomainSpec, LatentScm, generate_dataset, generate_mixture, sample_scm
from .subspace import estimate_subspace

CONFIG_FORMAT_VERSION = 1
META_FORMAT_VERSION = 1

SWEEP_AXES = ("k", "r", "epsilon", "none")
PAIRING_MODES = ("oracle", "random")

ROW_COLUMNS = (
    "sweep_axis",
    "sweep_value",
    "seed",
    "k",
    "r",
    "epsilon",
    "pairing",
    "loss_kind",
    "train_loss",
    "indomain_test_acc",
    "test_acc",
    "test_loss",
    "term1",
    "term2",
    "bound_rhs",
    "bound_holds",
    "baseline",
)

SUMMARY_COLUMNS = (
    "sweep_axis",
    "sweep_value",
    "epsilon",
    "loss_kind",
    "baseline",
    "metric",
    "mean",
    "std",
    "n_seeds",
)

SUMMARY_METRICS = ("train_loss", "indomain_test_acc", "test_acc", "test_loss")


# --------------------------------------------------------------------------
# Configuration types


@dataclass(frozen=True)
class DomainConfig:
    id: str
    spurious_scale: float
    weight: float
    mean_coupling: float


@dataclass(frozen=True)
class ScmConfig:
    dim_latent: int
    dim_obs: int
    num_spurious: int
    label_weight_scale: float
    test_domain: str
    domains: tuple[DomainConfig, ...]


@dataclass(frozen=True)
class DataConfig:
    n_train: int  # per training domain
    n_indomain_test: int  # total, mixture-sampled
    n_test: int  # total, from the test domain


@dataclass(frozen=True)
class PairsConfig:
    k: int
    epsilons: tuple[float, ...]
    pairing: str
    source: str | None
    target: str | None


@dataclass(frozen=True)
class ModelConfig:
    loss_kind: str
    r: int
    epochs: int
    step_size: float
    batch_size: int  # 0 means full batch
    optimizer: str
    weight_init: str
    init_scale: float
    use_bias: bool


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple[float, ...] | tuple[int, ...]
    num_seeds: int


@dataclass(frozen=True)
class BoundsConfig:
    enabled: bool
    mc_samples: int


@dataclass(frozen=True)
class OutputConfig:
    directory: str
    csv_basename: str


@dataclass(frozen=True)
class ExperimentConfig:
    scm: ScmConfig
    data: DataConfig
    pairs: PairsConfig
    model: ModelConfig
    sweep: SweepConfig
    bounds: BoundsConfig
    output: OutputConfig
    raw_bytes: bytes | None = field(default=None, compare=False, repr=False)

    @property
    def training_domain_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.scm.domains if d.weight > 0.0)

    @property
    def pair_source(self) -> str:
        if self.pairs.source is not None:
            return self.pairs.source
        return self.training_domain_ids[0]

    @property
    def pair_target(self) -> str:
        if self.pairs.target is not None:
            return self.pairs.target
        return self.training_domain_ids[1]

    def to_document(self) -> dict:
        return {
            "config_version": CONFIG_FORMAT_VERSION,
            "scm": {
                "dim_latent": self.scm.dim_latent,
                "dim_obs": self.scm.dim_obs,
                "num_spurious": self.scm.num_spurious,
                "label_weight_scale": self.scm.label_weight_scale,
                "test_domain": self.scm.test_domain,
                "domains": [
                    {
                        "id": d.id,
                        "spurious_scale": d.spurious_scale,
                        "weight": d.weight,
                        "mean_coupling": d.mean_coupling,
                    }
                    for d in self.scm.domains
                ],
            },
            "data": {
                "n_train": self.data.n_train,
                "n_indomain_test": self.data.n_indomain_test,
                "n_test": self.data.n_test,
            },
            "pairs": {
                "k": self.pairs.k,
                "epsilons": list(self.pairs.epsilons),
                "pairing": self.pairs.pairing,
                **({"source": self.pairs.source} if self.pairs.source else {}),
                **({"target": self.pairs.target} if self.pairs.target else {}),
            },
            "model": {
                "loss_kind": self.model.loss_kind,
                "r": self.model.r,
                "epochs": self.model.epochs,
                "step_size": self.model.step_size,
                "batch_size": self.model.batch_size,
                "optimizer": self.model.optimizer,
                "weight_init": self.model.weight_init,
                "init_scale": self.model.init_scale,
                "use_bias": self.model.use_bias,
            },
            "sweep": {
                "axis": self.sweep.axis,
                "values": list(self.sweep.values),
                "num_seeds": self.sweep.num_seeds,
            },
            "bounds": {
                "enabled": self.bounds.enabled,
                "mc_samples": self.bounds.mc_samples,
            },
            "output": {
                "directory": self.output.directory,
                "csv_basename": self.output.csv_basename,
            },
        }


# --------------------------------------------------------------------------
# Config parsing (strict: unknown keys are hard errors)


def _require_table(doc: dict, key: str) -> dict:
    if key not in doc:
        raise ConfigError(f"missing required section [{key}]")
    value = doc[key]
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return dict(value)


def _no_leftovers(table: dict, where: str) -> None:
    if table:
        unknown = ", ".join(sorted(table))
        raise ConfigError(f"unknown key(s) in [{where}]: {unknown}")


def _take(table: dict, key: str, kind: type, where: str, default=None, required: bool = True):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key {where}.{key}")
        return default
    value = table.pop(key)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{key} must be a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}.{key} must be an integer")
        return int(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}.{key} must be a boolean")
        return bool(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}.{key} must be a string")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}.{key} must be a list")
        return list(value)
    raise AssertionError(f"unsupported kind {kind}")


def _number_list(values: list, where: str, minimum: float | None = None) -> tuple[float, ...]:
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}[{i}] must be a number")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{where}[{i}] must be finite")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{where}[{i}] must be >= {minimum}")
        out.append(v)
    return tuple(out)


def _int_list(values: list, where: str, minimum: int) -> tuple[int, ...]:
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}[{i}] must be an integer")
        if v < minimum:
            raise ConfigError(f"{where}[{i}] must be >= {minimum}")
        out.append(int(v))
    return tuple(out)


def config_from_document(doc: dict, raw_bytes: bytes | None = None) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed TOML document.

    Validation is front-loaded: unknown keys, malformed grids, and
    inconsistent domain declarations all fail here, before any computation.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a table")
    doc = dict(doc)
    version = _take(doc, "config_version", int, "(top level)")
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(
            f"config_version {version} is not supported "
            f"(expected {CONFIG_FORMAT_VERSION})"
        )

    # [scm]
    scm_tab = _require_table(doc, "scm")
    doc.pop("scm")
    dim_latent = _take(scm_tab, "dim_latent", int, "scm")
    dim_obs = _take(scm_tab, "dim_obs", int, "scm")
    num_spurious = _take(scm_tab, "num_spurious", int, "scm")
    label_weight_scale = _take(
        scm_tab, "label_weight_scale", float, "scm", required=False, default=1.0
    )
    test_domain = _take(scm_tab, "test_domain", str, "scm")
    raw_domains = _take(scm_tab, "domains", list, "scm")
    _no_leftovers(scm_tab, "scm")
    if not (0 < num_spurious < dim_latent <= dim_obs):
        raise ConfigError(
            "scm dimensions must satisfy 0 < num_spurious < dim_latent <= dim_obs"
        )
    domains = []
    for i, entry in enumerate(raw_domains):
        if not isinstance(entry, dict):
            raise ConfigError(f"scm.domains[{i}] must be a table")
        entry = dict(entry)
        where = f"scm.domains[{i}]"
        dom = DomainConfig(
            id=_take(entry, "id", str, where),
            spurious_scale=_take(entry, "spurious_scale", float, where),
            weight=_take(entry, "weight", float, where),
            mean_coupling=_take(entry, "mean_coupling", float, where),
        )
        _no_leftovers(entry, where)
        domains.append(dom)
    ids = [d.id for d in domains]
    if len(set(ids)) != len(ids):
        raise ConfigError("scm.domains ids must be unique")
    if test_domain not in ids:
        raise ConfigError(f"scm.test_domain {test_domain!r} is not a declared domain")
    test_weight = next(d.weight for d in domains if d.id == test_domain)
    if test_weight != 0.0:
        raise ConfigError("the test domain must have weight 0 (held out)")
    training_ids = [d.id for d in domains if d.weight > 0.0]
    if len(training_ids) < 2:
        raise ConfigError("at least two training domains (weight > 0) are required")
    weight_sum = sum(d.weight for d in domains)
    if abs(weight_sum - 1.0) > 1e-9:
        raise ConfigError(f"domain weights must sum to 1 (got {weight_sum!r})")
    scm_cfg = ScmConfig(
        dim_latent=dim_latent,
        dim_obs=dim_obs,
        num_spurious=num_spurious,
        label_weight_scale=label_weight_scale,
        test_domain=test_domain,
        domains=tuple(domains),
    )

    # [data]
    data_tab = _require_table(doc, "data")
    doc.pop("data")
    data_cfg = DataConfig(
        n_train=_take(data_tab, "n_train", int, "data"),
        n_indomain_test=_take(data_tab, "n_indomain_test", int, "data"),
        n_test=_take(data_tab, "n_test", int, "data"),
    )
    _no_leftovers(data_tab, "data")
    for name in ("n_train", "n_indomain_test", "n_test"):
        if getattr(data_cfg, name) < 1:
            raise ConfigError(f"data.{name} must be >= 1")

    # [pairs]
    pairs_tab = _require_table(doc, "pairs")
    doc.pop("pairs")
    k = _take(pairs_tab, "k", int, "pairs")
    raw_eps = _take(pairs_tab, "epsilons", list, "pairs", required=False, default=None)
    pairing = _take(pairs_tab, "pairing", str, "pairs")
    source = _take(pairs_tab, "source", str, "pairs", required=False, default=None)
    target = _take(pairs_tab, "target", str, "pairs", required=False, default=None)
    _no_leftovers(pairs_tab, "pairs")
    if k < 1:
        raise ConfigError("pairs.k must be >= 1")
    if pairing not in PAIRING_MODES:
        raise ConfigError(f"pairs.pairing must be one of {PAIRING_MODES}")
    epsilons = _number_list(raw_eps or [], "pairs.epsilons", minimum=0.0)
    for name, value in (("source", source), ("target", target)):
        if value is not None and value not in training_ids:
            raise ConfigError(
                f"pairs.{name} {value!r} must be a training domain "
                f"(the held-out test domain is forbidden)"
            )
    resolved_source = source if source is not None else training_ids[0]
    resolved_target = target if target is not None else training_ids[1]
    if resolved_source == resolved_target:
        raise ConfigError("pairs.source and pairs.target must differ")
    pairs_cfg = PairsConfig(
        k=k, epsilons=epsilons, pairing=pairing, source=source, target=target
    )

    # [model]
    model_tab = _require_table(doc, "model")
    doc.pop("model")
    model_cfg = ModelConfig(
        loss_kind=_take(model_tab, "loss_kind", str, "model"),
        r=_take(model_tab, "r", int, "model"),
        epochs=_take(model_tab, "epochs", int, "model"),
        step_size=_take(model_tab, "step_size", float, "model"),
        batch_size=_take(model_tab, "batch_size", int, "model", required=False, default=0),
        optimizer=_take(model_tab, "optimizer", str, "model", required=False, default="gd"),
        weight_init=_take(
            model_tab, "weight_init", str, "model", required=False, default="zeros"
        ),
        init_scale=_take(
            model_tab, "init_scale", float, "model", required=False, default=0.01
        ),
        use_bias=_take(model_tab, "use_bias", bool, "model", required=False, default=True),
    )
    _no_leftovers(model_tab, "model")
    if model_cfg.loss_kind not in LOSS_KINDS:
        raise ConfigError(f"model.loss_kind must be one of {LOSS_KINDS}")
    if model_cfg.optimizer not in OPTIMIZERS:
        raise ConfigError(f"model.optimizer must be one of {OPTIMIZERS}")
    if model_cfg.weight_init not in WEIGHT_INITS:
        raise ConfigError(f"model.weight_init must be one of {WEIGHT_INITS}")
    if model_cfg.r < 0:
        raise ConfigError("model.r must be >= 0")
    if model_cfg.epochs < 1:
        raise ConfigError("model.epochs must be >= 1")
    if model_cfg.step_size <= 0 or not math.isfinite(model_cfg.step_size):
        raise ConfigError("model.step_size must be finite and > 0")
    if model_cfg.batch_size < 0:
        raise ConfigError("model.batch_size must be >= 0 (0 means full batch)")
    if model_cfg.init_scale <= 0 or not math.isfinite(model_cfg.init_scale):
        raise ConfigError("model.init_scale must be finite and > 0")

    # [sweep]
    sweep_tab = _require_table(doc, "sweep")
    doc.pop("sweep")
    axis = _take(sweep_tab, "axis", str, "sweep")
    raw_values = _take(sweep_tab, "values", list, "sweep", required=False, default=None)
    num_seeds = _take(sweep_tab, "num_seeds", int, "sweep")
    _no_leftovers(sweep_tab, "sweep")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}")
    if num_seeds < 1:
        raise ConfigError("sweep.num_seeds must be >= 1")
    if axis == "none":
        if raw_values:
            raise ConfigError("sweep.values must be empty when sweep.axis = 'none'")
        values: tuple = ()
    elif axis == "k":
        if not raw_values:
            raise ConfigError("sweep.values is required for sweep.axis = 'k'")
        values = _int_list(raw_values, "sweep.values", minimum=1)
    elif axis == "r":
        if not raw_values:
            raise ConfigError("sweep.values is required for sweep.axis = 'r'")
        values = _int_list(raw_values, "sweep.values", minimum=0)
    else:  # epsilon
        if not raw_values:
            raise ConfigError("sweep.values is required for sweep.axis = 'epsilon'")
        values = _number_list(raw_values, "sweep.values", minimum=0.0)
        if epsilons:
            raise ConfigError(
                "pairs.epsilons must be omitted when sweep.axis = 'epsilon' "
                "(the sweep grid is the corruption grid)"
            )
    if axis != "epsilon" and not epsilons:
        raise ConfigError("pairs.epsilons must be a non-empty list")
    sweep_cfg = SweepConfig(axis=axis, values=values, num_seeds=num_seeds)

    # [bounds]
    bounds_tab = _require_table(doc, "bounds")
    doc.pop("bounds")
    bounds_cfg = BoundsConfig(
        enabled=_take(bounds_tab, "enabled", bool, "bounds"),
        mc_samples=_take(
            bounds_tab, "mc_samples", int, "bounds", required=False, default=20000
        ),
    )
    _no_leftovers(bounds_tab, "bounds")
    if bounds_cfg.mc_samples < 0:
        raise ConfigError("bounds.mc_samples must be >= 0 (0 means closed form)")

    # [output]
    out_tab = _require_table(doc, "output")
    doc.pop("output")
    output_cfg = OutputConfig(
        directory=_take(out_tab, "directory", str, "output"),
        csv_basename=_take(
            out_tab, "csv_basename", str, "output", required=False, default="rows"
        ),
    )
    _no_leftovers(out_tab, "output")

    _no_leftovers(doc, "(top level)")

    # Cross-section grid validation: fail before any work starts.
    max_r_requested = model_cfg.r
    if axis == "r":
        max_r_requested = max(values) if values else model_cfg.r
        if max(values) > min(dim_obs, k):
            raise ConfigError(
                f"sweep.values contains r > min(dim_obs, pairs.k) = {min(dim_obs, k)}"
            )
    if max_r_requested > dim_obs:
        raise ConfigError(f"model.r exceeds dim_obs = {dim_obs}")
    if axis in ("epsilon", "none") and model_cfg.r > k:
        raise ConfigError("model.r must be <= pairs.k")
    if pairing == "random":
        max_k = max(values) if axis == "k" else k
        if max_k > data_cfg.n_train:
            raise ConfigError(
                "random pairing draws k rows per domain without replacement; "
                f"k = {max_k} exceeds data.n_train = {data_cfg.n_train}"
            )

    return ExperimentConfig(
        scm=scm_cfg,
        data=data_cfg,
        pairs=pairs_cfg,
        model=model_cfg,
        sweep=sweep_cfg,
        bounds=bounds_cfg,
        output=output_cfg,
        raw_bytes=raw_bytes,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    raw = Path(path).read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_document(doc, raw_bytes=raw)


# --------------------------------------------------------------------------
# Minimal deterministic TOML emission (flat tables, scalar lists, one level
# of array-of-tables) — enough for config echoes and run metadata.


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidArgumentError("TOML floats must be finite")
        text = repr(value)
        return text if any(c in text for c in ".eE") else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise InvalidArgumentError(f"cannot emit TOML value of type {type(value).__name__}")


def dump_toml(doc: dict) -> str:
    """Emit a restricted TOML document (deterministic, insertion-ordered)."""
    lines: list[str] = []
    tables: list[tuple[str, dict]] = []
    for key, value in doc.items():
        if isinstance(value, dict):
            tables.append((key, value))
        else:
            lines.append(f"{key} = {_toml_value(value)}")
    for name, table in tables:
        arrays: list[tuple[str, list]] = []
        body: list[str] = []
        for key, value in table.items():
            if isinstance(value, list) and value and isinstance(value[0], dict):
                arrays.append((key, value))
            elif isinstance(value, dict):
                raise InvalidArgumentError("nested plain tables are not supported")
            else:
                body.append(f"{key} = {_toml_value(value)}")
        lines.append("")
        lines.append(f"[{name}]")
        lines.extend(body)
        for key, entries in arrays:
            for entry in entries:
                lines.append("")
                lines.append(f"[[{name}.{key}]]")
                for k2, v2 in entry.items():
                    if isinstance(v2, (dict, list)) and not isinstance(v2, list):
                        raise InvalidArgumentError("array-of-tables entries must be flat")
                    lines.append(f"{k2} = {_toml_value(v2)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Seed plumbing and single-run execution


def derive_seed(master_seed: int, purpose: str, seed_index: int) -> int:
    """Documented per-purpose sub-seed: mix(master, purpose, index)."""
    return fold64(master_seed, purpose, seed_index)


def build_scm(config: ExperimentConfig, scm_seed: int) -> LatentScm:
    domains = tuple(
        DomainSpec(
            domain_id=d.id,
            spurious_scale=d.spurious_scale,
            domain_weight=d.weight,
            spurious_mean_coupling=d.mean_coupling,
        )
        for d in config.scm.domains
    )
    return sample_scm(
        dim_latent=config.scm.dim_latent,
        dim_obs=config.scm.dim_obs,
        num_spurious=config.scm.num_spurious,
        domains=domains,
        seed=scm_seed,
        label_weight_scale=config.scm.label_weight_scale,
    )


def stratified_training_set(
    scm: LatentScm, n_per_domain: int, seed: int
) -> Dataset:
    """Concatenate ``n_per_domain`` fresh rows from every training domain."""
    parts = [
        generate_dataset(scm, spec.domain_id, n_per_domain, seed)
        for spec in scm.training_domains
    ]
    inputs = np.vstack([p.inputs for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    domain_ids = np.concatenate([p.domain_ids for p in parts])
    return Dataset(inputs=inputs, labels=labels, domain_ids=domain_ids)


@dataclass(frozen=True)
class RunTask:
    """One grid cell of a sweep, or one baseline fit, for one seed index."""

    kind: str  # "run" | "erm" | "oracle"
    config: ExperimentConfig
    master_seed: int
    seed_index: int
    sweep_value: int | float | None
    k: int | None
    r: int | None
    epsilon: float | None


def resolve_train_config(model_cfg: ModelConfig, n_rows: int, train_seed: int) -> TrainConfig:
    batch = model_cfg.batch_size if model_cfg.batch_size >= 1 else n_rows
    return TrainConfig(
        epochs=model_cfg.epochs,
        step_size=model_cfg.step_size,
        batch_size=batch,
        seed=train_seed,
        weight_init=model_cfg.weight_init,
        init_scale=model_cfg.init_scale,
        optimizer=model_cfg.optimizer,
        use_bias=model_cfg.use_bias,
    )


def execute_task(task: RunTask) -> dict:
    """Run one task to a row dict; pure function of the task fields."""
    cfg = task.config
    i = task.seed_index
    ms = task.master_seed
    scm = build_scm(cfg, derive_seed(ms, "scm", i))
    train_set = stratified_training_set(
        scm, cfg.data.n_train, derive_seed(ms, "train-data", i)
    )
    eval_in = generate_mixture(
        scm, cfg.data.n_indomain_test, derive_seed(ms, "indomain-eval", i)
    )
    eval_test = generate_dataset(
        scm, cfg.scm.test_domain, cfg.data.n_test, derive_seed(ms, "test-data", i)
    )

    row = {name: None for name in ROW_COLUMNS}
    row["sweep_axis"] = cfg.sweep.axis
    row["sweep_value"] = task.sweep_value
    row["seed"] = i
    row["loss_kind"] = cfg.model.loss_kind

    bound_report: BoundReport | None = None
    if task.kind == "run":
        row["k"] = task.k
        row["r"] = task.r
        row["epsilon"] = task.epsilon
        row["pairing"] = cfg.pairs.pairing
        if cfg.pairs.pairing == "oracle":
            clean = generate_cf_pairs(
                scm, cfg.pair_source, cfg.pair_target, task.k,
                derive_seed(ms, "pairs", i),
            )
        else:
            clean = random_pairing(train_set, task.k, derive_seed(ms, "pairs", i))
        noisy = corrupt_pairs(clean, task.epsilon, derive_seed(ms, "pair-noise", i))
        estimate = estimate_subspace(noisy.delta, task.r)
        model = train(
            train_set,
            estimate,
            resolve_train_config(cfg.model, train_set.n, derive_seed(ms, "train", i)),
            cfg.model.loss_kind,
        )
        if cfg.bounds.enabled:
            sm = second_moment(
                scm,
                cfg.scm.test_domain,
                cfg.bounds.mc_samples,
                derive_seed(ms, "second-moment", i),
            )
            is_oracle_pairing = cfg.pairs.pairing == "oracle"
            bound_report = verify_bound(
                model,
                estimate,
                sm,
                eval_in,
                eval_test,
                clean_pairs=clean if is_oracle_pairing else None,
                noisy_pairs=noisy if is_oracle_pairing else None,
            )
    elif task.kind == "erm":
        row["baseline"] = "erm"
        model = train(
            train_set,
            None,
            resolve_train_config(cfg.model, train_set.n, derive_seed(ms, "train", i)),
            cfg.model.loss_kind,
        )
    elif task.kind == "oracle":
        row["baseline"] = "oracle"
        n_total = cfg.data.n_train * len(scm.training_domains)
        oracle_set = generate_dataset(
            scm, cfg.scm.test_domain, n_total, derive_seed(ms, "oracle-data", i)
        )
        model = train(
            oracle_set,
            None,
            resolve_train_config(cfg.model, oracle_set.n, derive_seed(ms, "train", i)),
            cfg.model.loss_kind,
        )
    else:
        raise InvalidArgumentError(f"unknown task kind {task.kind!r}")

    rep_in = evaluate(model, eval_in)
    rep_test = evaluate(model, eval_test)
    row["train_loss"] = model.train_loss
    row["indomain_test_acc"] = rep_in.accuracy
    row["test_acc"] = rep_test.accuracy
    row["test_loss"] = rep_test.mean_loss
    if bound_report is not None:
        row["term1"] = bound_report.term1
        row["term2"] = bound_report.term2
        row["bound_rhs"] = bound_report.rhs
        row["bound_holds"] = bound_report.holds["theorem"]
    return row


# --------------------------------------------------------------------------
# Sweep and baseline drivers


def sweep_tasks(config: ExperimentConfig, master_seed: int) -> list[RunTask]:
    """Canonical task list: grid value x corruption level x seed index."""
    axis = config.sweep.axis
    cells: list[tuple[int | float | None, int, int, float]] = []
    if axis == "k":
        for k in config.sweep.values:
            r = min(int(k), config.model.r)
            for eps in config.pairs.epsilons:
                cells.append((int(k), int(k), r, eps))
    elif axis == "r":
        for r in config.sweep.values:
            for eps in config.pairs.epsilons:
                cells.append((int(r), config.pairs.k, int(r), eps))
    elif axis == "epsilon":
        for eps in config.sweep.values:
            cells.append((float(eps), config.pairs.k, config.model.r, float(eps)))
    else:  # none
        for eps in config.pairs.epsilons:
            cells.append((None, config.pairs.k, config.model.r, eps))
    tasks = []
    for sweep_value, k, r, eps in cells:
        for i in range(config.sweep.num_seeds):
            tasks.append(
                RunTask(
                    kind="run",
                    config=config,
                    master_seed=master_seed,
                    seed_index=i,
                    sweep_value=sweep_value,
                    k=k,
                    r=r,
                    epsilon=float(eps),
                )
            )
    return tasks


def baseline_tasks(config: ExperimentConfig, master_seed: int) -> list[RunTask]:
    tasks = []
    for kind in ("erm", "oracle"):
        for i in range(config.sweep.num_seeds):
            tasks.append(
                RunTask(
                    kind=kind,
                    config=config,
                    master_seed=master_seed,
                    seed_index=i,
                    sweep_value=None,
                    k=None,
                    r=None,
                    epsilon=None,
                )
            )
    return tasks


def _map_tasks(tasks: list[RunTask], jobs: int, verbose: bool) -> list[dict]:
    if jobs < 1:
        raise InvalidArgumentError("jobs must be >= 1")
    rows: list[dict] = []
    total = len(tasks)

    def _consume(iterator) -> None:
        for n, row in enumerate(iterator, start=1):
            rows.append(row)
            if verbose:
                print(f"  run {n}/{total} done", file=sys.stderr)

    if jobs == 1 or total <= 1:
        _consume(map(execute_task, tasks))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            _consume(pool.map(execute_task, tasks))
    return rows


def _cell(value) -> str:
    """Render one CSV cell; None and NaN become empty, floats round-trip."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def rows_to_csv_text(rows: list[dict], columns: tuple[str, ...] = ROW_COLUMNS) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(name)) for name in columns])
    return buffer.getvalue()


def summarize_rows(rows: list[dict]) -> list[dict]:
    """Per-(grid value, corruption level, baseline) mean/std of each metric.

    Groups preserve first-appearance order; std is the n-1 sample standard
    deviation and is left empty for single-seed groups.
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row.get("sweep_value"), row.get("epsilon"), row.get("baseline"))
        groups.setdefault(key, []).append(row)
    out = []
    for (sweep_value, epsilon, baseline), members in groups.items():
        for metric in SUMMARY_METRICS:
            values = [m[metric] for m in members if m.get(metric) is not None]
            values = [v for v in values if not (isinstance(v, float) and math.isnan(v))]
            if not values:
                continue
            arr = np.asarray(values, dtype=np.float64)
            out.append(
                {
                    "sweep_axis": members[0]["sweep_axis"],
                    "sweep_value": sweep_value,
                    "epsilon": epsilon,
                    "loss_kind": members[0]["loss_kind"],
                    "baseline": baseline,
                    "metric": metric,
                    "mean": float(arr.mean()),
                    "std": float(arr.std(ddof=1)) if arr.size > 1 else None,
                    "n_seeds": int(arr.size),
                }
            )
    return out


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[dict, ...]
    summary: tuple[dict, ...]
    rows_path: Path
    summary_path: Path


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _echo_config(config: ExperimentConfig, directory: Path) -> None:
    echo_path = directory / "config_echo.toml"
    if config.raw_bytes is not None:
        echo_path.write_bytes(config.raw_bytes)
    else:
        _write_text(echo_path, dump_toml(config.to_document()))


def _write_meta(
    path: Path, kind: str, config: ExperimentConfig, master_seed: int, num_rows: int
) -> None:
    meta = {
        "format_version": META_FORMAT_VERSION,
        "package_version": __version__,
        "kind": kind,
        "master_seed": master_seed,
        "sweep_axis": config.sweep.axis,
        "num_seeds": config.sweep.num_seeds,
        "num_rows": num_rows,
        "columns": list(ROW_COLUMNS),
    }
    _write_text(path, dump_toml(meta))


def run_sweep(
    config: ExperimentConfig,
    master_seed: int = 0,
    jobs: int = 1,
    out_dir: str | Path | None = None,
    verbose: bool = False,
) -> SweepResult:
    """Execute the configured sweep and write rows, summary, echo, metadata."""
    directory = Path(out_dir) if out_dir is not None else Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    tasks = sweep_tasks(config, master_seed)
    if verbose:
        print(f"sweep: {len(tasks)} runs (axis={config.sweep.axis})", file=sys.stderr)
    rows = _map_tasks(tasks, jobs, verbose)
    summary = summarize_rows(rows)
    base = config.output.csv_basename
    rows_path = directory / f"{base}.csv"
    summary_path = directory / f"{base}_summary.csv"
    _write_text(rows_path, rows_to_csv_text(rows))
    _write_text(summary_path, summary_to_csv_text(summary))
    _echo_config(config, directory)
    _write_meta(directory / "run_meta.toml", "sweep", config, master_seed, len(rows))
    return SweepResult(
        rows=tuple(rows),
        summary=tuple(summary),
        rows_path=rows_path,
        summary_path=summary_path,
    )


def run_baselines(
    config: ExperimentConfig,
    master_seed: int = 0,
    jobs: int = 1,
    out_dir: str | Path | None = None,
    verbose: bool = False,
) -> SweepResult:
    """Fit the unconstrained and ceiling baselines over the sweep's seed set."""
    directory = Path(out_dir) if out_dir is not None else Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    tasks = baseline_tasks(config, master_seed)
    if verbose:
        print(f"baselines: {len(tasks)} runs", file=sys.stderr)
    rows = _map_tasks(tasks, jobs, verbose)
    summary = summarize_rows(rows)
    base = config.output.csv_basename
    rows_path = directory / f"{base}_baselines.csv"
    summary_path = directory / f"{base}_baselines_summary.csv"
    _write_text(rows_path, rows_to_csv_text(rows))
    _write_text(summary_path, summary_to_csv_text(summary))
    _echo_config(config, directory)
    _write_meta(
        directory / "baselines_meta.toml", "baselines", config, master_seed, len(rows)
    )
    return SweepResult(
        rows=tuple(rows),
        summary=tuple(summary),
        rows_path=rows_path,
        summary_path=summary_path,
    )


def summary_to_csv_text(summary: list[dict] | tuple[dict, ...]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for entry in summary:
        writer.writerow([_cell(entry.get(name)) for name in SUMMARY_COLUMNS])
    return buffer.getvalue()
