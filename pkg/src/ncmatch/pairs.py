"""Counterfactual pair sets: cross-domain twins, controlled corruption, baselines.

A pair set holds k left/right input pairs with the difference matrix
``delta`` (d x k, column j = left_j - right_j).  Oracle pairs come from
solving two domains of the same model on shared exogenous rows, so each
pair's invariant latents agree exactly and ``delta``'s columns lie (up to
rounding) in the observed image of the spurious latent block.

Corruption adds i.i.d. Gaussian entries to the right side only, which keeps
the left side identical to ordinary training samples.  The corruption draw
for a given seed is a fixed matrix scaled by the noise level, so sweeping
the level with one seed moves along a single noise direction.

Random pairing is the deliberately weak baseline: rows from two domains
matched by label where possible, with no shared exogenous noise.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, InvalidArgumentError
from .rng import substream
from .scm import Dataset, LatentScm

PAIRS_META_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CfPairSet:
    """k left/right pairs and their difference matrix."""

    left: np.ndarray
    right: np.ndarray
    pair_domains: tuple[tuple[str, str], ...]
    noise_scale: float

    def __post_init__(self) -> None:
        if self.left.ndim != 2 or self.left.shape[0] < 1:
            raise InvalidArgumentError("left must be a (k, d) matrix with k >= 1")
        if self.right.shape != self.left.shape:
            raise InvalidArgumentError("left and right must have the same shape")
        if len(self.pair_domains) != self.left.shape[0]:
            raise InvalidArgumentError("pair_domains must have one entry per pair")
        for src, dst in self.pair_domains:
            if src == dst:
                raise InvalidArgumentError(
                    f"pair joins domain {src!r} with itself; pairs must cross domains"
                )
        if not np.isfinite(self.noise_scale) or self.noise_scale < 0.0:
            raise InvalidArgumentError("noise_scale must be finite and >= 0")
        self.left.setflags(write=False)
        self.right.setflags(write=False)

    @property
    def k(self) -> int:
        return self.left.shape[0]

    @property
    def dim(self) -> int:
        return self.left.shape[1]

    @property
    def delta(self) -> np.ndarray:
        """d x k difference matrix, column j = left_j - right_j."""
        return (self.left - self.right).T


def generate_cf_pairs(
    scm: LatentScm,
    source_domain: str,
    target_domain: str,
    k: int,
    seed: int,
) -> CfPairSet:
    """Solve both domains on k shared exogenous rows (exact twins).

    Exogenous rows are drawn row-major from one stream, so the first k1
    pairs of a larger request with the same seed are exactly the k1-pair
    set (prefix property; sweeps over k extend rather than reshuffle).
    """
    if source_domain == target_domain:
        raise InvalidArgumentError("source and target domains must differ")
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    scm.domain(source_domain)
    scm.domain(target_domain)
    exo = substream(seed, "pair-exogenous").standard_normal((k, scm.dim_latent))
    left, _ = scm.solve(exo, source_domain)
    right, _ = scm.solve(exo, target_domain)
    return CfPairSet(
        left=left,
        right=right,
        pair_domains=tuple((source_domain, target_domain) for _ in range(k)),
        noise_scale=0.0,
    )


def corrupt_pairs(pairs: CfPairSet, noise_scale: float, seed: int) -> CfPairSet:
    """Add N(0, noise_scale^2) entries to the right side; zero scale is a copy.

    The underlying standard-normal draw depends only on the seed and the
    pair-set shape, so two corruptions of the same set with one seed differ
    only by the scale factor (the difference matrices are colinear).
    """
    if not np.isfinite(noise_scale) or noise_scale < 0.0:
        raise InvalidArgumentError("noise_scale must be finite and >= 0")
    if noise_scale == 0.0:
        return CfPairSet(
            left=pairs.left,
            right=pairs.right,
            pair_domains=pairs.pair_domains,
            noise_scale=0.0,
        )
    draw = substream(seed, "pair-corruption").standard_normal(pairs.right.shape)
    return CfPairSet(
        left=pairs.left,
        right=pairs.right + noise_scale * draw,
        pair_domains=pairs.pair_domains,
        noise_scale=float(noise_scale),
    )


def random_pairing(dataset: Dataset, k: int, seed: int) -> CfPairSet:
    """Weak baseline: k rows of one domain against k of another, no twins.

    Takes the two best-populated domains (ties broken by id), samples k
    rows from each without replacement, and orders each side by label so
    pairs share a label whenever both classes are deep enough.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    composition = dataset.domain_composition()
    if len(composition) < 2:
        raise InvalidArgumentError("random pairing needs rows from >= 2 domains")
    ranked = sorted(composition.items(), key=lambda item: (-item[1], item[0]))
    (dom_a, count_a), (dom_b, count_b) = ranked[0], ranked[1]
    if count_a < k or count_b < k:
        raise InvalidArgumentError(
            f"random pairing needs >= {k} rows in each of two domains "
            f"(have {count_a} in {dom_a!r}, {count_b} in {dom_b!r})"
        )
    gen = substream(seed, "random-pairing")
    sides: list[np.ndarray] = []
    for dom in (dom_a, dom_b):
        rows = np.flatnonzero(dataset.domain_ids == dom)
        picked = gen.choice(rows, size=k, replace=False)
        # Stable label-descending order: +1 rows first on both sides, so
        # pairs share a label wherever class counts allow.
        order = np.argsort(-dataset.labels[picked], kind="stable")
        sides.append(picked[order])
    idx_a, idx_b = sides
    return CfPairSet(
        left=dataset.inputs[idx_a].copy(),
        right=dataset.inputs[idx_b].copy(),
        pair_domains=tuple((dom_a, dom_b) for _ in range(k)),
        noise_scale=0.0,
    )


# ---------------------------------------------------------------------------
# Serialization: CSV rows plus a sidecar metadata document
# ---------------------------------------------------------------------------


def pairs_sidecar_path(csv_path: str | os.PathLike[str]) -> str:
    """Metadata path for a pair CSV: `<stem>.meta.toml` beside the file."""
    text = os.fspath(csv_path)
    stem = text[: -len(".csv")] if text.endswith(".csv") else text
    return stem + ".meta.toml"


def pairs_csv_header(dim: int) -> list[str]:
    return ["pair_id", "side", "domain_id"] + [f"x_{j}" for j in range(dim)]


def write_pairs_csv(pairs: CfPairSet, path: str | os.PathLike[str]) -> None:
    """Two rows per pair (side L then R); noise scale in the sidecar."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(pairs_csv_header(pairs.dim))
        for j in range(pairs.k):
            src, dst = pairs.pair_domains[j]
            writer.writerow(
                [str(j), "L", src] + [repr(float(v)) for v in pairs.left[j]]
            )
            writer.writerow(
                [str(j), "R", dst] + [repr(float(v)) for v in pairs.right[j]]
            )
    meta = (
        f"format_version = {PAIRS_META_FORMAT_VERSION}\n"
        f"noise_scale = {float(pairs.noise_scale)!r}\n"
        f"k = {pairs.k}\n"
        f"dim = {pairs.dim}\n"
    )
    with open(pairs_sidecar_path(path), "w", encoding="utf-8", newline="\n") as handle:
        handle.write(meta)


def read_pairs_csv(path: str | os.PathLike[str]) -> CfPairSet:
    """Inverse of ``write_pairs_csv``; requires the sidecar document."""
    sidecar = pairs_sidecar_path(path)
    try:
        with open(sidecar, "r", encoding="utf-8") as handle:
            meta_text = handle.read()
    except FileNotFoundError:
        raise DataFormatError(f"{path}: missing sidecar metadata {sidecar}") from None
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        meta = tomllib.loads(meta_text)
    except Exception as exc:
        raise DataFormatError(f"{sidecar}: not valid TOML: {exc}") from exc
    if meta.get("format_version") != PAIRS_META_FORMAT_VERSION:
        raise DataFormatError(
            f"{sidecar}: unsupported format_version {meta.get('format_version')!r}"
        )
    if "noise_scale" not in meta:
        raise DataFormatError(f"{sidecar}: missing noise_scale")
    noise_scale = float(meta["noise_scale"])

    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty pairs file") from None
        if len(header) < 4 or header[:3] != ["pair_id", "side", "domain_id"]:
            raise DataFormatError(f"{path}: malformed pairs header")
        dim = len(header) - 3
        if header[3:] != [f"x_{j}" for j in range(dim)]:
            raise DataFormatError(f"{path}: malformed pairs header")
        rows: dict[tuple[int, str], tuple[str, list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: wrong number of fields")
            try:
                pair_id = int(row[0])
                values = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if row[1] not in ("L", "R"):
                raise DataFormatError(f"{path}:{lineno}: side must be L or R")
            key = (pair_id, row[1])
            if key in rows:
                raise DataFormatError(f"{path}:{lineno}: duplicate {key}")
            rows[key] = (row[2], values)
    k = len(rows) // 2
    if k < 1 or len(rows) != 2 * k:
        raise DataFormatError(f"{path}: pairs file must hold L and R for each pair")
    left = np.empty((k, dim))
    right = np.empty((k, dim))
    pair_domains: list[tuple[str, str]] = []
    for j in range(k):
        if (j, "L") not in rows or (j, "R") not in rows:
            raise DataFormatError(f"{path}: pair ids must be 0..k-1 with both sides")
        src, lvals = rows[(j, "L")]
        dst, rvals = rows[(j, "R")]
        left[j] = lvals
        right[j] = rvals
        pair_domains.append((src, dst))
    try:
        return CfPairSet(
            left=left,
            right=right,
            pair_domains=tuple(pair_domains),
            noise_scale=noise_scale,
        )
    except InvalidArgumentError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
