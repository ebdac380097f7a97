"""Spurious-subspace estimation by truncated SVD, plus perturbation diagnostics.

``estimate_subspace`` keeps the top-r left singular vectors of a pair
difference matrix and exposes the removal projection P = I - Q Q^T.  The
rank-0 estimate has an empty basis and P exactly equal to the identity, so
downstream training degenerates to ordinary unconstrained fitting.

``subspace_distance`` is the spectral norm of the difference of orthogonal
projectors — sin of the largest principal angle, in [0, 1] for equal-rank
inputs, and invariant to basis rotations.

``wedin_check`` compares the top-s left singular subspaces of a clean and a
perturbed matrix against the classical sin-theta perturbation bound
2 * |noise| / (sigma_s - sigma_{s+1}), recording whether the regime condition
|noise| < (1 - 1/sqrt(2)) * gap holds.  All spectra are reported in full so
callers can inspect scree curves and boundary ties.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, InvalidArgumentError

_OUTPUT_TOL = 1e-10
_INPUT_ORTHONORMAL_TOL = 1e-8
_TIE_REL_TOL = 1e-12

WEDIN_CONDITION_FACTOR = 1.0 - 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class SubspaceEstimate:
    """Top-r left singular subspace of a difference matrix."""

    basis: np.ndarray
    singular_values: np.ndarray
    r: int
    projection: np.ndarray

    def __post_init__(self) -> None:
        d = self.basis.shape[0]
        if self.basis.shape != (d, self.r):
            raise InvalidArgumentError("basis must have shape (d, r)")
        if self.projection.shape != (d, d):
            raise InvalidArgumentError("projection must be d x d")
        if self.r > 0:
            gram_err = np.abs(
                self.basis.T @ self.basis - np.eye(self.r)
            ).max()
            if gram_err > _OUTPUT_TOL:
                raise InvalidArgumentError(
                    f"basis columns are not orthonormal (max deviation {gram_err:.3e})"
                )
        self.basis.setflags(write=False)
        self.singular_values.setflags(write=False)
        self.projection.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def boundary_tie(self) -> bool:
        """True when the r-th and (r+1)-th singular values coincide.

        A tie at the truncation boundary means the retained subspace is not
        unique; diagnostics report it so sweeps can flag the grid point.
        """
        sv = self.singular_values
        if self.r == 0 or self.r >= sv.shape[0] or sv.shape[0] == 0:
            return False
        scale = sv[0] if sv[0] > 0.0 else 1.0
        return bool(sv[self.r - 1] - sv[self.r] <= _TIE_REL_TOL * scale)

    def projected_energy(self, delta: np.ndarray) -> float:
        """Frobenius norm of P @ delta — the pair energy the estimate leaves."""
        return float(np.linalg.norm(self.projection @ delta, "fro"))


def estimate_subspace(delta: np.ndarray, r: int) -> SubspaceEstimate:
    """Keep the top-r left singular vectors of delta; r = 0 keeps none.

    The full singular spectrum is retained for scree and gap diagnostics.
    With r = 0 the projection is the exact identity matrix (no arithmetic is
    applied to inputs multiplied by it downstream).
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim != 2 or delta.shape[0] < 1 or delta.shape[1] < 1:
        raise InvalidArgumentError("delta must be a nonempty d x k matrix")
    if not np.all(np.isfinite(delta)):
        raise InvalidArgumentError("delta must be finite")
    d, k = delta.shape
    if not 0 <= r <= min(d, k):
        raise InvalidArgumentError(
            f"r must satisfy 0 <= r <= min(d, k) = {min(d, k)} (got {r})"
        )
    left, singular_values, _ = np.linalg.svd(delta, full_matrices=False)
    if r == 0:
        basis = np.zeros((d, 0))
        projection = np.eye(d)
    else:
        basis = left[:, :r].copy()
        projection = np.eye(d) - basis @ basis.T
        projection = 0.5 * (projection + projection.T)
    return SubspaceEstimate(
        basis=basis,
        singular_values=singular_values,
        r=int(r),
        projection=projection,
    )


def _check_orthonormal(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a d x j matrix")
    j = mat.shape[1]
    if j == 0:
        return mat
    gram_err = np.abs(mat.T @ mat - np.eye(j)).max()
    if gram_err > _INPUT_ORTHONORMAL_TOL:
        raise InvalidArgumentError(
            f"{name} columns are not orthonormal (max deviation {gram_err:.3e})"
        )
    return mat


def subspace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Spectral norm of a a^T - b b^T for equal-rank orthonormal bases.

    Equals the sine of the largest principal angle between the two spans;
    symmetric, rotation-invariant, and in [0, 1].  Two empty bases are at
    distance zero.
    """
    a = _check_orthonormal(a, "a")
    b = _check_orthonormal(b, "b")
    if a.shape != b.shape:
        raise InvalidArgumentError(
            f"bases must have identical shapes (got {a.shape} vs {b.shape})"
        )
    if a.shape[1] == 0:
        return 0.0
    diff = a @ a.T - b @ b.T
    value = float(np.linalg.norm(diff, 2))
    return min(value, 1.0) if value <= 1.0 + 1e-9 else value


@dataclass(frozen=True)
class WedinDiagnostics:
    """Measured vs. guaranteed top-s subspace perturbation for one instance."""

    s: int
    noise_norm: float
    singular_gap: float
    condition_ok: bool
    measured_dist: float
    wedin_bound: float

    def to_json_record(self) -> str:
        """One JSON-lines record; non-finite bound serializes as null."""
        payload = {
            "record": "wedin-check",
            "s": self.s,
            "noise_norm": self.noise_norm,
            "singular_gap": self.singular_gap,
            "condition_ok": self.condition_ok,
            "measured_dist": self.measured_dist,
            "wedin_bound": self.wedin_bound if math.isfinite(self.wedin_bound) else None,
        }
        return json.dumps(payload, sort_keys=True)


def wedin_check(
    clean_delta: np.ndarray, noisy_delta: np.ndarray, s: int
) -> WedinDiagnostics:
    """Compare top-s left subspaces of a clean matrix and its perturbation.

    The reported condition flag is |noise|_2 < (1 - 1/sqrt(2)) * gap, with
    gap the s-th singular gap of the *clean* matrix (the last gap is taken
    against zero).  A zero gap with nonzero noise yields an infinite bound
    and a false flag, never an error.
    """
    clean_delta = np.asarray(clean_delta, dtype=np.float64)
    noisy_delta = np.asarray(noisy_delta, dtype=np.float64)
    if clean_delta.shape != noisy_delta.shape:
        raise InvalidArgumentError("clean and noisy matrices must share a shape")
    if clean_delta.ndim != 2:
        raise InvalidArgumentError("matrices must be two-dimensional")
    d, k = clean_delta.shape
    if not 1 <= s <= min(d, k):
        raise InvalidArgumentError(
            f"s must satisfy 1 <= s <= min(d, k) = {min(d, k)} (got {s})"
        )
    noise_norm = float(np.linalg.norm(noisy_delta - clean_delta, 2))
    clean_sv = np.linalg.svd(clean_delta, compute_uv=False)
    sigma_s = float(clean_sv[s - 1])
    sigma_next = float(clean_sv[s]) if s < clean_sv.shape[0] else 0.0
    gap = sigma_s - sigma_next
    condition_ok = bool(noise_norm < WEDIN_CONDITION_FACTOR * gap)
    if noise_norm == 0.0:
        bound = 0.0
    elif gap > 0.0:
        bound = 2.0 * noise_norm / gap
    else:
        bound = math.inf
    measured = subspace_distance(
        estimate_subspace(noisy_delta, s).basis,
        estimate_subspace(clean_delta, s).basis,
    )
    return WedinDiagnostics(
        s=int(s),
        noise_norm=noise_norm,
        singular_gap=gap,
        condition_ok=condition_ok,
        measured_dist=measured,
        wedin_bound=bound,
    )


# ---------------------------------------------------------------------------
# Serialization: long-format CSV (kind, row, col, value)
# ---------------------------------------------------------------------------

_ESTIMATE_CSV_HEADER = ["kind", "row", "col", "value"]


def write_estimate_csv(
    estimate: SubspaceEstimate, path: str | os.PathLike[str]
) -> None:
    """Long-format table: scalar metadata, full spectrum, basis entries."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(_ESTIMATE_CSV_HEADER)
        writer.writerow(["dim", "0", "0", str(estimate.dim)])
        writer.writerow(["r", "0", "0", str(estimate.r)])
        for i, value in enumerate(estimate.singular_values):
            writer.writerow(["singular_value", str(i), "0", repr(float(value))])
        for j in range(estimate.r):
            for i in range(estimate.dim):
                writer.writerow(
                    ["basis", str(i), str(j), repr(float(estimate.basis[i, j]))]
                )


def read_estimate_csv(path: str | os.PathLike[str]) -> SubspaceEstimate:
    """Inverse of ``write_estimate_csv`` (projection rebuilt from the basis)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty estimate file") from None
        if header != _ESTIMATE_CSV_HEADER:
            raise DataFormatError(f"{path}: malformed estimate header")
        meta: dict[str, int] = {}
        spectrum: dict[int, float] = {}
        basis_entries: dict[tuple[int, int], float] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataFormatError(f"{path}:{lineno}: wrong number of fields")
            kind, i_text, j_text, value = row
            try:
                i, j = int(i_text), int(j_text)
                if kind in ("dim", "r"):
                    meta[kind] = int(value)
                elif kind == "singular_value":
                    spectrum[i] = float(value)
                elif kind == "basis":
                    basis_entries[(i, j)] = float(value)
                else:
                    raise DataFormatError(f"{path}:{lineno}: unknown kind {kind!r}")
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if "dim" not in meta or "r" not in meta:
        raise DataFormatError(f"{path}: missing dim/r metadata rows")
    d, r = meta["dim"], meta["r"]
    if sorted(spectrum) != list(range(len(spectrum))):
        raise DataFormatError(f"{path}: singular value indices are not contiguous")
    singular_values = np.array([spectrum[i] for i in range(len(spectrum))])
    basis = np.zeros((d, r))
    for (i, j), value in basis_entries.items():
        if not (0 <= i < d and 0 <= j < r):
            raise DataFormatError(f"{path}: basis entry ({i},{j}) out of range")
        basis[i, j] = value
    if len(basis_entries) != d * r:
        raise DataFormatError(f"{path}: basis entries are incomplete")
    if r == 0:
        projection = np.eye(d)
    else:
        projection = np.eye(d) - basis @ basis.T
        projection = 0.5 * (projection + projection.T)
    try:
        return SubspaceEstimate(
            basis=basis,
            singular_values=singular_values,
            r=r,
            projection=projection,
        )
    except InvalidArgumentError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
