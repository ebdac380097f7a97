"""Test-domain risk bounds for constrained linear models.

For a model whose weights avoid an estimated subspace, the test-domain risk
is bounded by the in-domain risk (Term I) plus a misalignment penalty
(Term II) built from the population second moment of test-vs-train
counterfactual differences:

- log loss:        test <= train + |theta| * |B^T Q L^{1/2}|
- squared error:   test <= 2 * train + 2 * |theta|^2 * |B^T Q L^{1/2}|^2

where Q L Q^T is the eigensystem of the second moment, and B spans the
orthocomplement of the estimate (|B^T A| is computed as |P A| with the
removal projection P, avoiding an explicit complement basis).

Two progressively looser forms are also evaluated: a *relaxed* penalty
lambda_1 * dist^2(top-s estimate, top-s eigenvectors) + lambda_{s+1} with
s = min(r, num_spurious) (s = 0 degenerates to lambda_1, the unconstrained-
baseline penalty), and a *wedin* penalty that replaces the measured subspace
distance by the sin-theta perturbation bound 2|noise|/gap when the gap
condition holds.  The chain  theorem <= relaxed <= wedin  is exact algebra
whenever all three are defined.

Bounds are population statements; empirical verification gives each
comparison a slack of 2 * (SE of the test mean + SE of the in-domain mean),
where both means should be measured on held-out samples.

The second moment is estimated by a faithful Monte-Carlo: shared exogenous
rows are pushed through the test-domain and each training-domain mechanism,
and the paired differences are averaged in the latent frame (an exact
algebraic reduction of the observed-space outer products, since differences
live in the observed image of the spurious block).  A closed form exists for
this model family — per-coordinate variance sigma_test^2 + sigma_e^2 plus a
rank-one coupling-difference term — and every Monte-Carlo estimate is
cross-checked against it on the trace within 3/sqrt(mc) relative error;
disagreement raises a numeric failure rather than returning silently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError
from .models import LinearModel, evaluate
from .pairs import CfPairSet
from .rng import substream
from .scm import Dataset, DomainSpec, LatentScm
from .subspace import SubspaceEstimate, WedinDiagnostics, subspace_distance, wedin_check

_SYMMETRY_TOL = 1e-10
_EIGVAL_CLIP = -1e-10
_RANK_REL_TOL = 1e-6
_CONSTRAINT_WARN_TOL = 1e-6

LOSS_KINDS = ("log_loss", "squared_error")


@dataclass(frozen=True)
class SecondMoment:
    """Population second moment of test-vs-train paired differences."""

    matrix: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    mc_samples: int

    def __post_init__(self) -> None:
        d = self.matrix.shape[0]
        if self.matrix.shape != (d, d):
            raise InvalidArgumentError("matrix must be square")
        if self.eigvals.shape != (d,) or self.eigvecs.shape != (d, d):
            raise InvalidArgumentError("eigensystem shapes must match the matrix")
        if np.abs(self.matrix - self.matrix.T).max() > _SYMMETRY_TOL:
            raise InvalidArgumentError("matrix must be symmetric")
        if np.any(np.diff(self.eigvals) > 0.0):
            raise InvalidArgumentError("eigvals must be nonincreasing")
        if self.eigvals.size and self.eigvals[-1] < 0.0:
            raise InvalidArgumentError("eigvals must be nonnegative (clipped)")
        self.matrix.setflags(write=False)
        self.eigvals.setflags(write=False)
        self.eigvecs.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def numerical_rank(self) -> int:
        """Eigenvalues above 1e-6 * lambda_1 (zero for an all-zero moment)."""
        if self.eigvals.size == 0 or self.eigvals[0] <= 0.0:
            return 0
        return int(np.sum(self.eigvals > _RANK_REL_TOL * self.eigvals[0]))


def _mechanisms_equal(a: DomainSpec, b: DomainSpec) -> bool:
    return (
        a.spurious_scale == b.spurious_scale
        and a.spurious_mean_coupling == b.spurious_mean_coupling
    )


def _closed_form_latent(scm: LatentScm, test_spec: DomainSpec) -> np.ndarray:
    """Latent-frame second moment: sum_e w_e [(dc)^2 J + (s_+^2 + s_e^2) I]."""
    n_spu = scm.num_spurious
    s = np.zeros((n_spu, n_spu))
    for spec in scm.training_domains:
        if _mechanisms_equal(spec, test_spec):
            continue
        dc = test_spec.spurious_mean_coupling - spec.spurious_mean_coupling
        var = test_spec.spurious_scale**2 + spec.spurious_scale**2
        s += spec.domain_weight * (dc**2 * np.ones((n_spu, n_spu)) + var * np.eye(n_spu))
    return s


def _monte_carlo_latent(
    scm: LatentScm, test_spec: DomainSpec, mc_samples: int, seed: int
) -> np.ndarray:
    """Latent-frame Monte-Carlo over shared exogenous rows.

    Uses the same mechanism evaluation as dataset generation, so identical
    mechanisms contribute exactly zero pathwise.
    """
    gen = substream(seed, "second-moment", test_spec.domain_id)
    exo = gen.standard_normal((mc_samples, scm.dim_latent))
    z_inv = exo[:, : scm.num_invariant]
    labels = np.where(z_inv @ scm.label_weights >= 0.0, 1.0, -1.0)
    entropy = exo[:, scm.num_invariant :]
    eta_test = scm._mechanism_noise(entropy, test_spec)
    z_test = (
        test_spec.spurious_mean_coupling * labels[:, None]
        + test_spec.spurious_scale * eta_test
    )
    n_spu = scm.num_spurious
    s = np.zeros((n_spu, n_spu))
    for spec in scm.training_domains:
        if _mechanisms_equal(spec, test_spec):
            continue
        eta_e = scm._mechanism_noise(entropy, spec)
        w = z_test - (
            spec.spurious_mean_coupling * labels[:, None]
            + spec.spurious_scale * eta_e
        )
        s += spec.domain_weight * (w.T @ w) / mc_samples
    return s


def second_moment(
    scm: LatentScm, test_domain: str, mc_samples: int, seed: int
) -> SecondMoment:
    """Estimate the second moment; cross-check against the closed form.

    ``mc_samples = 0`` returns the closed form directly (recorded as 0).
    Any Monte-Carlo estimate must agree with the closed form on the trace
    within 3/sqrt(mc_samples) relative error, else a numeric failure is
    raised — a silent mismatch would invalidate every downstream bound.
    """
    test_spec = scm.domain(test_domain)
    if mc_samples < 0:
        raise InvalidArgumentError("mc_samples must be >= 0")
    closed = _closed_form_latent(scm, test_spec)
    if mc_samples == 0:
        latent = closed
    else:
        latent = _monte_carlo_latent(scm, test_spec, mc_samples, seed)
        trace_closed = float(np.trace(closed))
        trace_mc = float(np.trace(latent))
        if trace_closed == 0.0:
            if trace_mc != 0.0:
                raise NumericFailureError(
                    "Monte-Carlo second moment is nonzero although every "
                    "training mechanism equals the test mechanism"
                )
        else:
            rel = abs(trace_mc - trace_closed) / trace_closed
            tol = 3.0 / math.sqrt(mc_samples)
            if rel > tol:
                raise NumericFailureError(
                    f"Monte-Carlo second moment diverges from the closed form: "
                    f"relative trace error {rel:.3e} > {tol:.3e} "
                    f"(mc_samples={mc_samples})"
                )
    spurious_map = scm.obs_map[:, scm.num_invariant :]
    matrix = spurious_map @ latent @ spurious_map.T
    matrix = 0.5 * (matrix + matrix.T)
    raw_vals, raw_vecs = np.linalg.eigh(matrix)
    eigvals = raw_vals[::-1].copy()
    eigvecs = raw_vecs[:, ::-1].copy()
    scale = max(1.0, float(eigvals[0])) if eigvals.size else 1.0
    if eigvals.size and float(eigvals[-1]) < _EIGVAL_CLIP * scale:
        raise NumericFailureError(
            f"second moment has a significantly negative eigenvalue "
            f"({float(eigvals[-1]):.3e})"
        )
    np.clip(eigvals, 0.0, None, out=eigvals)
    return SecondMoment(
        matrix=matrix,
        eigvals=eigvals,
        eigvecs=eigvecs,
        mc_samples=int(mc_samples),
    )


def _misalignment_norm(
    estimate: SubspaceEstimate, sm: SecondMoment, num_spurious: int
) -> float:
    """|B^T Q L^{1/2}| over the estimate's orthocomplement B, as |P A|."""
    scaled = sm.eigvecs[:, :num_spurious] * np.sqrt(sm.eigvals[:num_spurious])
    if estimate.r == 0:
        return float(np.linalg.norm(scaled, 2))
    return float(np.linalg.norm(estimate.projection @ scaled, 2))


def _resolve_num_spurious(sm: SecondMoment, num_spurious: int | None) -> int:
    rank = sm.numerical_rank
    if num_spurious is None:
        return rank
    if num_spurious < 0:
        raise InvalidArgumentError("num_spurious must be >= 0")
    if num_spurious > rank:
        raise InvalidArgumentError(
            f"requested {num_spurious} spurious directions but the second "
            f"moment has numerical rank {rank}"
        )
    return num_spurious


def term2(
    theta: np.ndarray,
    estimate: SubspaceEstimate,
    sm: SecondMoment,
    loss_kind: str,
    num_spurious: int | None = None,
) -> float:
    """Misalignment penalty as it enters the bound's right-hand side.

    Log loss: |theta| * |B^T Q L^{1/2}|.  Squared error: the doubled
    2 * |theta|^2 * |.|^2.  When ``num_spurious`` is omitted it defaults to
    the numerical rank of the second moment (and the value is 0 for an
    all-zero moment).
    """
    if loss_kind not in LOSS_KINDS:
        raise InvalidArgumentError(
            f"loss_kind must be one of {LOSS_KINDS} (got {loss_kind!r})"
        )
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != sm.dim:
        raise InvalidArgumentError("theta length must match the moment dimension")
    if estimate.dim != sm.dim:
        raise InvalidArgumentError("estimate dimension must match the moment")
    if sm.numerical_rank == 0:
        return 0.0
    if estimate.r > 0:
        violation = float(np.abs(estimate.basis.T @ theta).max())
        theta_norm = float(np.linalg.norm(theta))
        if violation > _CONSTRAINT_WARN_TOL * max(1.0, theta_norm):
            import warnings

            warnings.warn(
                f"theta violates the subspace constraint by {violation:.3e}",
                RuntimeWarning,
                stacklevel=2,
            )
    n_spu = _resolve_num_spurious(sm, num_spurious)
    norm = _misalignment_norm(estimate, sm, n_spu)
    theta_norm = float(np.linalg.norm(theta))
    if loss_kind == "log_loss":
        return theta_norm * norm
    return 2.0 * (theta_norm * norm) ** 2


@dataclass(frozen=True)
class BoundReport:
    """Measured risks against the three bound levels, with slack bookkeeping.

    ``term2`` stores the theorem-statement penalty (un-doubled for squared
    error); ``rhs`` composes term1 + term2 for log loss and
    2*term1 + 2*term2 for squared error.
    """

    loss_kind: str
    term1: float
    term2: float
    lhs: float
    rhs: float
    relaxed_rhs: float
    wedin_rhs: float | None
    holds: dict[str, bool | None]
    slack: float
    se_lhs: float
    se_term1: float
    theta_norm: float
    s: int
    num_spurious: int
    num_spurious_estimated: bool
    subspace_dist: float | None
    wedin: WedinDiagnostics | None

    def to_json_record(self) -> str:
        payload = {
            "record": "bound-check",
            "loss_kind": self.loss_kind,
            "term1": self.term1,
            "term2": self.term2,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relaxed_rhs": self.relaxed_rhs,
            "wedin_rhs": self.wedin_rhs,
            "holds_theorem": self.holds["theorem"],
            "holds_relaxed": self.holds["relaxed"],
            "holds_wedin": self.holds["wedin"],
            "slack": self.slack,
            "se_lhs": self.se_lhs,
            "se_term1": self.se_term1,
            "theta_norm": self.theta_norm,
            "s": self.s,
            "num_spurious": self.num_spurious,
            "num_spurious_estimated": self.num_spurious_estimated,
            "subspace_dist": self.subspace_dist,
            "wedin_condition_ok": None if self.wedin is None else self.wedin.condition_ok,
            "wedin_noise_norm": None if self.wedin is None else self.wedin.noise_norm,
            "wedin_singular_gap": None if self.wedin is None else self.wedin.singular_gap,
        }
        return json.dumps(payload, sort_keys=True)


def verify_bound(
    model: LinearModel,
    estimate: SubspaceEstimate,
    sm: SecondMoment,
    train: Dataset,
    test: Dataset,
    clean_pairs: CfPairSet | None = None,
    noisy_pairs: CfPairSet | None = None,
    num_spurious: int | None = None,
) -> BoundReport:
    """Measure both risks and fill every bound level that is defined.

    ``train`` should be a fresh in-domain sample (not the fitting set), so
    its mean is an unbiased estimate of the in-domain risk the bounds refer
    to.  The wedin level is filled only when both pair sets are supplied,
    s >= 1, and the gap condition holds.
    """
    if model.dim != sm.dim or estimate.dim != sm.dim:
        raise InvalidArgumentError("model, estimate and moment dimensions must agree")
    if train.dim != model.dim or test.dim != model.dim:
        raise InvalidArgumentError("dataset dimensions must match the model")
    train_report = evaluate(model, train)
    test_report = evaluate(model, test)
    term1 = train_report.mean_loss
    lhs = test_report.mean_loss
    slack = 2.0 * (test_report.loss_se + train_report.loss_se)
    theta_norm = float(np.linalg.norm(model.weights))

    rank = sm.numerical_rank
    n_spu = _resolve_num_spurious(sm, num_spurious)
    squared = model.loss_kind == "squared_error"

    # Theorem level.
    if rank == 0:
        misalignment = 0.0
    else:
        misalignment = _misalignment_norm(estimate, sm, n_spu)
    term2_field = (
        (theta_norm * misalignment) ** 2 if squared else theta_norm * misalignment
    )
    rhs = 2.0 * term1 + 2.0 * term2_field if squared else term1 + term2_field

    # Relaxed level: lambda_1 * dist^2 + lambda_{s+1}, s = min(r, num_spurious).
    s = min(estimate.r, n_spu)
    if rank == 0:
        relaxed_value = 0.0
        dist: float | None = None
    elif s == 0:
        relaxed_value = float(sm.eigvals[0])
        dist = None
    else:
        dist = subspace_distance(estimate.basis[:, :s], sm.eigvecs[:, :s])
        lam_next = float(sm.eigvals[s]) if s < sm.dim else 0.0
        relaxed_value = float(sm.eigvals[0]) * dist**2 + lam_next
    relaxed_rhs = (
        2.0 * term1 + 2.0 * theta_norm**2 * relaxed_value
        if squared
        else term1 + theta_norm * math.sqrt(relaxed_value)
    )

    # Wedin level: substitute the perturbation bound for the measured dist.
    wedin: WedinDiagnostics | None = None
    wedin_rhs: float | None = None
    if clean_pairs is not None and noisy_pairs is not None and s >= 1 and rank > 0:
        wedin = wedin_check(clean_pairs.delta, noisy_pairs.delta, s)
        if wedin.condition_ok:
            lam1 = float(sm.eigvals[0])
            lam_next = float(sm.eigvals[s]) if s < sm.dim else 0.0
            if squared:
                wedin_value = lam1 * wedin.wedin_bound**2 + lam_next
                wedin_rhs = 2.0 * term1 + 2.0 * theta_norm**2 * wedin_value
            else:
                wedin_rhs = term1 + theta_norm * (
                    math.sqrt(lam1) * wedin.wedin_bound + math.sqrt(lam_next)
                )

    holds: dict[str, bool | None] = {
        "theorem": bool(lhs <= rhs + slack),
        "relaxed": bool(lhs <= relaxed_rhs + slack),
        "wedin": None if wedin_rhs is None else bool(lhs <= wedin_rhs + slack),
    }
    return BoundReport(
        loss_kind=model.loss_kind,
        term1=term1,
        term2=term2_field,
        lhs=lhs,
        rhs=rhs,
        relaxed_rhs=relaxed_rhs,
        wedin_rhs=wedin_rhs,
        holds=holds,
        slack=slack,
        se_lhs=test_report.loss_se,
        se_term1=train_report.loss_se,
        theta_norm=theta_norm,
        s=s,
        num_spurious=n_spu,
        num_spurious_estimated=num_spurious is None,
        subspace_dist=dist,
        wedin=wedin,
    )


def format_verdict_table(reports: list[BoundReport]) -> str:
    """Fixed-width human-readable verdict table for a list of reports."""
    header = (
        f"{'#':>3} {'loss':<13} {'lhs':>12} {'term1':>12} {'term2':>12} "
        f"{'rhs':>12} {'relaxed':>12} {'wedin':>12} {'slack':>10} "
        f"{'thm':>4} {'rlx':>4} {'wdn':>4}"
    )
    lines = [header, "-" * len(header)]

    def fmt(value: float | None, width: int) -> str:
        if value is None:
            return " " * (width - 1) + "-"
        return f"{value:>{width}.5g}"

    def verdict(flag: bool | None) -> str:
        if flag is None:
            return "   -"
        return "  ok" if flag else "FAIL"

    for i, rep in enumerate(reports):
        lines.append(
            f"{i:>3} {rep.loss_kind:<13} {fmt(rep.lhs, 12)} {fmt(rep.term1, 12)} "
            f"{fmt(rep.term2, 12)} {fmt(rep.rhs, 12)} {fmt(rep.relaxed_rhs, 12)} "
            f"{fmt(rep.wedin_rhs, 12)} {fmt(rep.slack, 10)} "
            f"{verdict(rep.holds['theorem'])} {verdict(rep.holds['relaxed'])} "
            f"{verdict(rep.holds['wedin'])}"
        )
    return "\n".join(lines)
