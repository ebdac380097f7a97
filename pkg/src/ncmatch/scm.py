"""Linear-observation structural causal models with domain-indexed spurious mechanisms.

Latent space (dimension m) splits into an invariant block followed by a
spurious block:

- invariant latents ``z_inv`` (first ``m - num_spurious`` coordinates) are
  standard normal and shared by every domain;
- the label is ``y = sign(z_inv . label_weights)`` with ``sign(0) = +1``;
- spurious latents (last ``num_spurious`` coordinates) follow
  ``z_spu = coupling * y * 1 + scale * eta`` with ``eta ~ N(0, I)``, where
  ``(scale, coupling)`` are per-domain mechanism parameters;
- observations are ``x = obs_map @ [z_inv; z_spu]`` for a column-orthonormal
  ``obs_map`` (d x m), so ``|x| = |[z_inv; z_spu]|``.

Exogenous rows and counterfactuals
----------------------------------
Each sample is driven by one exogenous row ``u`` of length m: the invariant
block of ``u`` *is* ``z_inv``; the spurious block is raw entropy.  A domain's
spurious mechanism turns that entropy into ``eta`` through a counter-based
generator keyed on the entropy bits plus the mechanism parameters
(``rng.keyed_normals``).  Consequences:

- solving the same ``u`` in two domains shares the label and the invariant
  latents exactly (a counterfactual pair);
- two domains with bitwise-identical mechanism parameters produce identical
  samples from the same ``u`` (a null intervention changes nothing, pathwise);
- two domains with different mechanism parameters consume independent noise,
  so the per-coordinate variance of their spurious difference is the *sum*
  of the squared scales (plus the squared coupling difference from the mean
  shift).

Datasets optionally retain their exogenous rows; regenerating a row through
the same domain's mechanism reproduces the stored inputs bit for bit.

Domains with ``domain_weight > 0`` form the training mixture (weights sum to
one); zero-weight domains are held out (e.g. test domains).
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, InvalidArgumentError, NotFoundError
from .rng import fold64, keyed_normals, row_keys, substream

_ORTHONORMAL_TOL = 1e-10
_WEIGHT_TOL = 1e-9

SCM_FORMAT_VERSION = 1
DATASET_CSV_DIALECT = {"lineterminator": "\n"}


@dataclass(frozen=True)
class DomainSpec:
    """Mechanism parameters and mixture weight for one domain."""

    domain_id: str
    spurious_scale: float
    domain_weight: float
    spurious_mean_coupling: float

    def __post_init__(self) -> None:
        if not self.domain_id:
            raise InvalidArgumentError("domain_id must be a non-empty string")
        if not np.isfinite(self.spurious_scale) or self.spurious_scale <= 0.0:
            raise InvalidArgumentError(
                f"domain {self.domain_id!r}: spurious_scale must be finite and > 0"
            )
        if not np.isfinite(self.domain_weight) or not 0.0 <= self.domain_weight <= 1.0:
            raise InvalidArgumentError(
                f"domain {self.domain_id!r}: domain_weight must lie in [0, 1]"
            )
        if not np.isfinite(self.spurious_mean_coupling):
            raise InvalidArgumentError(
                f"domain {self.domain_id!r}: spurious_mean_coupling must be finite"
            )

    def mechanism_key(self) -> int:
        """Key identifying the spurious mechanism (ids do not participate)."""
        return fold64(
            "spurious-mechanism", self.spurious_scale, self.spurious_mean_coupling
        )


@dataclass(frozen=True)
class LatentScm:
    """A sampled model: dimensions, label weights, observation map, domains."""

    dim_latent: int
    dim_obs: int
    num_spurious: int
    label_weights: np.ndarray
    obs_map: np.ndarray
    domain_params: tuple[DomainSpec, ...]
    seed: int
    label_weight_scale: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.num_spurious < self.dim_latent:
            raise InvalidArgumentError("need 0 < num_spurious < dim_latent")
        if self.dim_latent > self.dim_obs:
            raise InvalidArgumentError("need dim_latent <= dim_obs")
        if self.label_weights.shape != (self.num_invariant,):
            raise InvalidArgumentError("label_weights has the wrong shape")
        if self.obs_map.shape != (self.dim_obs, self.dim_latent):
            raise InvalidArgumentError("obs_map has the wrong shape")
        gram_err = np.abs(self.obs_map.T @ self.obs_map - np.eye(self.dim_latent)).max()
        if gram_err > _ORTHONORMAL_TOL:
            raise InvalidArgumentError(
                f"obs_map columns are not orthonormal (max deviation {gram_err:.3e})"
            )
        if not self.domain_params:
            raise InvalidArgumentError("at least one domain is required")
        ids = [spec.domain_id for spec in self.domain_params]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("domain ids must be unique")
        total = sum(spec.domain_weight for spec in self.training_domains)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise InvalidArgumentError(
                f"training-domain weights must sum to 1 (got {total!r})"
            )
        self.label_weights.setflags(write=False)
        self.obs_map.setflags(write=False)

    @property
    def num_invariant(self) -> int:
        return self.dim_latent - self.num_spurious

    @property
    def training_domains(self) -> tuple[DomainSpec, ...]:
        return tuple(s for s in self.domain_params if s.domain_weight > 0.0)

    def domain(self, domain_id: str) -> DomainSpec:
        for spec in self.domain_params:
            if spec.domain_id == domain_id:
                return spec
        raise NotFoundError(f"unknown domain {domain_id!r}")

    def solve(self, exo: np.ndarray, domain_id: str) -> tuple[np.ndarray, np.ndarray]:
        """Run the mechanisms of one domain on exogenous rows.

        Returns ``(inputs, labels)`` with shapes (n, dim_obs) and (n,).
        The invariant latents and the label depend only on ``exo``, never on
        the domain, so solving the same rows in two domains yields
        counterfactual twins.
        """
        exo = np.asarray(exo, dtype=np.float64)
        if exo.ndim != 2 or exo.shape[1] != self.dim_latent:
            raise InvalidArgumentError(
                f"exogenous rows must have shape (n, {self.dim_latent})"
            )
        spec = self.domain(domain_id)
        z_inv = exo[:, : self.num_invariant]
        labels = np.where(z_inv @ self.label_weights >= 0.0, 1.0, -1.0)
        eta = self._mechanism_noise(exo[:, self.num_invariant :], spec)
        z_spu = spec.spurious_mean_coupling * labels[:, None] + spec.spurious_scale * eta
        inputs = np.hstack([z_inv, z_spu]) @ self.obs_map.T
        return inputs, labels

    def _mechanism_noise(self, entropy: np.ndarray, spec: DomainSpec) -> np.ndarray:
        keys = row_keys(entropy, spec.mechanism_key())
        return keyed_normals(keys, self.num_spurious)


@dataclass(frozen=True)
class Dataset:
    """Rows drawn from one or more domains of a single model."""

    inputs: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray
    exo_noise: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = self.inputs.shape[0]
        if self.inputs.ndim != 2:
            raise InvalidArgumentError("inputs must be two-dimensional")
        if self.labels.shape != (n,):
            raise InvalidArgumentError("labels length must match inputs")
        if self.domain_ids.shape != (n,):
            raise InvalidArgumentError("domain_ids length must match inputs")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise InvalidArgumentError("labels must be +1 or -1")
        if self.exo_noise is not None and (
            self.exo_noise.ndim != 2 or self.exo_noise.shape[0] != n
        ):
            raise InvalidArgumentError("exo_noise must have one row per example")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def domain_composition(self) -> dict[str, int]:
        ids, counts = np.unique(self.domain_ids, return_counts=True)
        return {str(d): int(c) for d, c in zip(ids, counts)}


def sample_scm(
    dim_latent: int,
    dim_obs: int,
    num_spurious: int,
    domains: tuple[DomainSpec, ...] | list[DomainSpec],
    seed: int,
    label_weight_scale: float = 1.0,
) -> LatentScm:
    """Draw a model: Gaussian label weights and a Haar-like orthonormal map.

    The observation map comes from the QR factorization of a Gaussian matrix
    with the R diagonal's signs folded in (sign(0) treated as +1), which
    fixes the factorization's sign ambiguity and makes square maps
    Haar-distributed.  Identical arguments reproduce the model bit for bit.
    """
    if not 0 < num_spurious < dim_latent:
        raise InvalidArgumentError("need 0 < num_spurious < dim_latent")
    if dim_latent > dim_obs:
        raise InvalidArgumentError("need dim_latent <= dim_obs")
    if not np.isfinite(label_weight_scale) or label_weight_scale <= 0.0:
        raise InvalidArgumentError("label_weight_scale must be finite and > 0")
    num_invariant = dim_latent - num_spurious
    weights = label_weight_scale * substream(seed, "label-weights").standard_normal(
        num_invariant
    )
    gaussian = substream(seed, "obs-map").standard_normal((dim_obs, dim_latent))
    q, r = np.linalg.qr(gaussian)
    signs = np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    obs_map = q * signs
    return LatentScm(
        dim_latent=dim_latent,
        dim_obs=dim_obs,
        num_spurious=num_spurious,
        label_weights=weights,
        obs_map=obs_map,
        domain_params=tuple(domains),
        seed=int(seed),
        label_weight_scale=float(label_weight_scale),
    )


def generate_dataset(
    scm: LatentScm,
    domain_id: str,
    n: int,
    seed: int,
    keep_exo: bool = False,
) -> Dataset:
    """Sample n rows from one domain; optionally retain the exogenous rows."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    scm.domain(domain_id)
    exo = substream(seed, "exogenous", domain_id).standard_normal((n, scm.dim_latent))
    inputs, labels = scm.solve(exo, domain_id)
    return Dataset(
        inputs=inputs,
        labels=labels,
        domain_ids=np.full(n, domain_id),
        exo_noise=exo if keep_exo else None,
    )


def generate_mixture(
    scm: LatentScm,
    n: int,
    seed: int,
    keep_exo: bool = False,
) -> Dataset:
    """Sample n rows from the training mixture, domains drawn by weight."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    specs = scm.training_domains
    weights = np.array([s.domain_weight for s in specs])
    weights = weights / weights.sum()
    choice = substream(seed, "mixture-domains").choice(len(specs), size=n, p=weights)
    inputs = np.empty((n, scm.dim_obs))
    labels = np.empty(n)
    domain_ids = np.empty(n, dtype=object)
    exo = np.empty((n, scm.dim_latent)) if keep_exo else None
    for k, spec in enumerate(specs):
        rows = np.flatnonzero(choice == k)
        if rows.size == 0:
            continue
        part = generate_dataset(
            scm,
            spec.domain_id,
            rows.size,
            fold64(seed, "mixture-member", spec.domain_id),
            keep_exo=keep_exo,
        )
        inputs[rows] = part.inputs
        labels[rows] = part.labels
        domain_ids[rows] = spec.domain_id
        if exo is not None:
            exo[rows] = part.exo_noise
    return Dataset(
        inputs=inputs,
        labels=labels,
        domain_ids=np.array([str(d) for d in domain_ids]),
        exo_noise=exo,
    )


# ---------------------------------------------------------------------------
# Serialization: model documents (TOML) and dataset tables (CSV)
# ---------------------------------------------------------------------------


def scm_to_document(scm: LatentScm) -> str:
    """Render the model as a versioned key-value document (TOML).

    Matrices are not stored; they are regenerated from the seed on load.
    """
    lines = [
        f"format_version = {SCM_FORMAT_VERSION}",
        f"dim_latent = {scm.dim_latent}",
        f"dim_obs = {scm.dim_obs}",
        f"num_spurious = {scm.num_spurious}",
        f"seed = {scm.seed}",
        f"label_weight_scale = {scm.label_weight_scale!r}",
    ]
    for spec in scm.domain_params:
        lines += [
            "",
            "[[domains]]",
            f'domain_id = "{spec.domain_id}"',
            f"spurious_scale = {spec.spurious_scale!r}",
            f"domain_weight = {spec.domain_weight!r}",
            f"spurious_mean_coupling = {spec.spurious_mean_coupling!r}",
        ]
    return "\n".join(lines) + "\n"


def scm_from_document(text: str) -> LatentScm:
    """Rebuild a model from its document; bit-identical to the original."""
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        doc = tomllib.loads(text)
    except Exception as exc:
        raise DataFormatError(f"model document is not valid TOML: {exc}") from exc
    known = {
        "format_version",
        "dim_latent",
        "dim_obs",
        "num_spurious",
        "seed",
        "label_weight_scale",
        "domains",
    }
    unknown = set(doc) - known
    if unknown:
        raise DataFormatError(f"model document has unknown keys: {sorted(unknown)}")
    if doc.get("format_version") != SCM_FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported model document version {doc.get('format_version')!r}"
        )
    missing = known - {"domains"} - set(doc)
    if missing:
        raise DataFormatError(f"model document is missing keys: {sorted(missing)}")
    domain_keys = {
        "domain_id",
        "spurious_scale",
        "domain_weight",
        "spurious_mean_coupling",
    }
    specs = []
    for entry in doc.get("domains", []):
        bad = set(entry) - domain_keys
        if bad:
            raise DataFormatError(f"domain entry has unknown keys: {sorted(bad)}")
        lost = domain_keys - set(entry)
        if lost:
            raise DataFormatError(f"domain entry is missing keys: {sorted(lost)}")
        specs.append(
            DomainSpec(
                domain_id=str(entry["domain_id"]),
                spurious_scale=float(entry["spurious_scale"]),
                domain_weight=float(entry["domain_weight"]),
                spurious_mean_coupling=float(entry["spurious_mean_coupling"]),
            )
        )
    return sample_scm(
        dim_latent=int(doc["dim_latent"]),
        dim_obs=int(doc["dim_obs"]),
        num_spurious=int(doc["num_spurious"]),
        domains=tuple(specs),
        seed=int(doc["seed"]),
        label_weight_scale=float(doc["label_weight_scale"]),
    )


def save_scm(scm: LatentScm, path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(scm_to_document(scm))


def load_scm(path: str | os.PathLike[str]) -> LatentScm:
    with open(path, "r", encoding="utf-8") as handle:
        return scm_from_document(handle.read())


def dataset_csv_header(dim: int) -> list[str]:
    return ["domain_id", "y"] + [f"x_{j}" for j in range(dim)]


def write_dataset_csv(dataset: Dataset, path: str | os.PathLike[str]) -> None:
    """One row per example: domain_id, y, x_0..x_{d-1}; floats via repr."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, **DATASET_CSV_DIALECT)
        writer.writerow(dataset_csv_header(dataset.dim))
        for i in range(dataset.n):
            writer.writerow(
                [str(dataset.domain_ids[i]), repr(float(dataset.labels[i]))]
                + [repr(float(v)) for v in dataset.inputs[i]]
            )


def read_dataset_csv(path: str | os.PathLike[str]) -> Dataset:
    """Inverse of ``write_dataset_csv`` (exogenous rows are not persisted)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty dataset file") from None
        if len(header) < 3 or header[:2] != ["domain_id", "y"]:
            raise DataFormatError(f"{path}: malformed dataset header")
        dim = len(header) - 2
        if header[2:] != [f"x_{j}" for j in range(dim)]:
            raise DataFormatError(f"{path}: malformed dataset header")
        domain_ids: list[str] = []
        labels: list[float] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: wrong number of fields")
            try:
                labels.append(float(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            domain_ids.append(row[0])
    if not rows:
        raise DataFormatError(f"{path}: dataset file has no rows")
    try:
        return Dataset(
            inputs=np.array(rows),
            labels=np.array(labels),
            domain_ids=np.array(domain_ids),
        )
    except InvalidArgumentError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def dataset_to_csv_text(dataset: Dataset) -> str:
    """CSV bytes as a string (used for byte-determinism checks)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, **DATASET_CSV_DIALECT)
    writer.writerow(dataset_csv_header(dataset.dim))
    for i in range(dataset.n):
        writer.writerow(
            [str(dataset.domain_ids[i]), repr(float(dataset.labels[i]))]
            + [repr(float(v)) for v in dataset.inputs[i]]
        )
    return buffer.getvalue()
