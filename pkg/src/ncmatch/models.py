"""Linear classifiers trained on projection-filtered inputs.

Training minimizes the mean of a pointwise loss over scores s = theta . (P x)
(+ bias), where P removes an estimated spurious subspace; with no projection
— or a rank-0 one — the very same code path runs on the raw inputs, so the
unconstrained baseline is the exact special case, trajectory and all.

The reported weight vector is P @ theta_raw whenever a projection was used:
gradient steps on projected inputs keep theta essentially inside range(P),
and the final re-projection pins the constraint (theta . q = 0 for every
retained basis column q) down to rounding, whatever the optimizer did.

Losses: ``log_loss`` ln(1 + exp(-y s)) for labels in {-1, +1}, computed via
logaddexp so scores of any magnitude are safe, and ``squared_error``
(s - y)^2.  The bias (optional) is trained unprojected — a scalar offset
cannot encode a spurious direction — and can be disabled for strict
constraint-only runs.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataFormatError,
    InvalidArgumentError,
    NumericFailureError,
)
from .rng import substream
from .scm import Dataset
from .subspace import SubspaceEstimate

LOSS_KINDS = ("log_loss", "squared_error")
OPTIMIZERS = ("gd", "adam")
WEIGHT_INITS = ("zeros", "gaussian")

_CONSTRAINT_TOL = 1e-8

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


def _check_loss_kind(loss_kind: str) -> None:
    if loss_kind not in LOSS_KINDS:
        raise InvalidArgumentError(
            f"loss_kind must be one of {LOSS_KINDS} (got {loss_kind!r})"
        )


def loss_values(scores: np.ndarray, labels: np.ndarray, loss_kind: str) -> np.ndarray:
    """Vectorized pointwise loss; log loss requires labels in {-1, +1}."""
    _check_loss_kind(loss_kind)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if loss_kind == "log_loss":
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise InvalidArgumentError("log_loss labels must be -1 or +1")
        return np.logaddexp(0.0, -labels * scores)
    return (scores - labels) ** 2


def loss(score: float, label: float, loss_kind: str) -> float:
    """Pointwise loss at a single (score, label)."""
    return float(loss_values(np.array([score]), np.array([label]), loss_kind)[0])


def _score_grad(scores: np.ndarray, labels: np.ndarray, loss_kind: str) -> np.ndarray:
    """d loss / d score, elementwise, numerically stable for any score."""
    if loss_kind == "log_loss":
        # -y * sigmoid(-y s), with sigmoid(t) = (1 + tanh(t / 2)) / 2.
        return -labels * 0.5 * (1.0 + np.tanh(-0.5 * labels * scores))
    return 2.0 * (scores - labels)


def gradient(
    theta: np.ndarray,
    inputs: np.ndarray,
    labels: np.ndarray,
    loss_kind: str,
    projection: np.ndarray | None = None,
) -> np.ndarray:
    """Analytic mean-gradient of the projected objective w.r.t. theta.

    The objective is mean_i loss(theta . (P x_i), y_i); P = I when absent.
    """
    _check_loss_kind(loss_kind)
    theta = np.asarray(theta, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise InvalidArgumentError("batch must be a nonempty (n, d) matrix")
    if theta.shape != (inputs.shape[1],):
        raise InvalidArgumentError("theta length must match input dimension")
    filtered = inputs if projection is None else inputs @ projection
    scores = filtered @ theta
    return (_score_grad(scores, labels, loss_kind) @ filtered) / inputs.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; every run is fully determined by these + data."""

    epochs: int
    step_size: float
    batch_size: int
    seed: int
    weight_init: str = "zeros"
    init_scale: float = 0.01
    optimizer: str = "gd"
    use_bias: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if not np.isfinite(self.step_size) or self.step_size <= 0.0:
            raise InvalidArgumentError("step_size must be finite and > 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.weight_init not in WEIGHT_INITS:
            raise InvalidArgumentError(
                f"weight_init must be one of {WEIGHT_INITS} (got {self.weight_init!r})"
            )
        if not np.isfinite(self.init_scale) or self.init_scale <= 0.0:
            raise InvalidArgumentError("init_scale must be finite and > 0")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidArgumentError(
                f"optimizer must be one of {OPTIMIZERS} (got {self.optimizer!r})"
            )


@dataclass(frozen=True)
class LinearModel:
    """A trained scorer: score(x) = weights . x + bias."""

    weights: np.ndarray
    bias: float | None
    loss_kind: str
    projection_used: np.ndarray | None = None
    train_loss: float = float("nan")
    epoch_losses: tuple[float, ...] = ()
    seed: int | None = None
    r_used: int | None = None

    def __post_init__(self) -> None:
        if self.weights.ndim != 1:
            raise InvalidArgumentError("weights must be a vector")
        _check_loss_kind(self.loss_kind)
        self.weights.setflags(write=False)
        if self.projection_used is not None:
            self.projection_used.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def scores(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.dim:
            raise InvalidArgumentError(
                f"inputs must have shape (n, {self.dim})"
            )
        out = inputs @ self.weights
        if self.bias is not None:
            out = out + self.bias
        return out

    def predictions(self, inputs: np.ndarray) -> np.ndarray:
        """Hard labels from score signs; a zero score predicts +1."""
        return np.where(self.scores(inputs) >= 0.0, 1.0, -1.0)

    def constraint_violation(self, basis: np.ndarray) -> float:
        """max_q |weights . q| over the columns q of a subspace basis."""
        if basis.shape[1] == 0:
            return 0.0
        return float(np.abs(basis.T @ self.weights).max())


@dataclass(frozen=True)
class EvalReport:
    """Mean loss (with its standard error) and sign accuracy on one dataset."""

    mean_loss: float
    loss_se: float
    accuracy: float
    n: int
    loss_kind: str
    domain_composition: dict[str, int] = field(default_factory=dict)


def evaluate(model: LinearModel, dataset: Dataset) -> EvalReport:
    """Mean loss and 0/1 accuracy of a model on a dataset."""
    if dataset.dim != model.dim:
        raise InvalidArgumentError(
            f"dataset dimension {dataset.dim} does not match model dimension {model.dim}"
        )
    scores = model.scores(dataset.inputs)
    values = loss_values(scores, dataset.labels, model.loss_kind)
    predictions = np.where(scores >= 0.0, 1.0, -1.0)
    accuracy = float(np.mean(predictions == dataset.labels))
    mean_loss = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(values.shape[0])) if values.shape[0] > 1 else 0.0
    return EvalReport(
        mean_loss=mean_loss,
        loss_se=se,
        accuracy=accuracy,
        n=dataset.n,
        loss_kind=model.loss_kind,
        domain_composition=dataset.domain_composition(),
    )


def train(
    dataset: Dataset,
    projection: SubspaceEstimate | None,
    cfg: TrainConfig,
    loss_kind: str,
) -> LinearModel:
    """Mini-batch first-order training on projection-filtered inputs.

    Batch order is an epoch-level permutation drawn from the config seed.
    A rank-0 estimate takes the same no-filter path as ``projection=None``,
    so the two produce bitwise-identical trajectories.  Non-finite losses or
    gradients abort with epoch/batch context rather than propagating NaNs.
    """
    _check_loss_kind(loss_kind)
    if dataset.n < 1:
        raise InvalidArgumentError("dataset must be nonempty")
    d = dataset.dim
    use_projection = projection is not None and projection.r > 0
    if projection is not None and projection.dim != d:
        raise InvalidArgumentError(
            f"projection dimension {projection.dim} does not match data dimension {d}"
        )
    filtered = dataset.inputs @ projection.projection if use_projection else dataset.inputs
    labels = dataset.labels

    if cfg.weight_init == "zeros":
        theta = np.zeros(d)
    else:
        theta = cfg.init_scale * substream(cfg.seed, "weight-init").standard_normal(d)
    bias = 0.0

    order_gen = substream(cfg.seed, "batch-order")
    adam_m = np.zeros(d + 1)
    adam_v = np.zeros(d + 1)
    adam_t = 0
    epoch_losses: list[float] = []
    descent_warned = False

    for epoch in range(cfg.epochs):
        permutation = order_gen.permutation(dataset.n)
        for start in range(0, dataset.n, cfg.batch_size):
            rows = permutation[start : start + cfg.batch_size]
            batch_x = filtered[rows]
            batch_y = labels[rows]
            scores = batch_x @ theta
            if cfg.use_bias:
                scores = scores + bias
            score_grad = _score_grad(scores, batch_y, loss_kind)
            grad_theta = (score_grad @ batch_x) / rows.shape[0]
            grad_bias = float(score_grad.mean()) if cfg.use_bias else 0.0
            if not (np.all(np.isfinite(grad_theta)) and np.isfinite(grad_bias)):
                raise NumericFailureError(
                    f"non-finite gradient at epoch {epoch}, batch start {start}"
                )
            if cfg.optimizer == "gd":
                theta = theta - cfg.step_size * grad_theta
                if cfg.use_bias:
                    bias = bias - cfg.step_size * grad_bias
            else:
                adam_t += 1
                grad_full = np.concatenate([grad_theta, [grad_bias]])
                adam_m = _ADAM_BETA1 * adam_m + (1.0 - _ADAM_BETA1) * grad_full
                adam_v = _ADAM_BETA2 * adam_v + (1.0 - _ADAM_BETA2) * grad_full**2
                m_hat = adam_m / (1.0 - _ADAM_BETA1**adam_t)
                v_hat = adam_v / (1.0 - _ADAM_BETA2**adam_t)
                step = cfg.step_size * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
                theta = theta - step[:d]
                if cfg.use_bias:
                    bias = bias - float(step[d])
        epoch_scores = filtered @ theta + (bias if cfg.use_bias else 0.0)
        epoch_loss = float(loss_values(epoch_scores, labels, loss_kind).mean())
        if not np.isfinite(epoch_loss):
            raise NumericFailureError(f"non-finite training loss after epoch {epoch}")
        if (
            not descent_warned
            and epoch_losses
            and epoch_loss > epoch_losses[-1] + 1e-12
        ):
            warnings.warn(
                f"training loss increased at epoch {epoch} "
                f"({epoch_losses[-1]:.6g} -> {epoch_loss:.6g}); "
                "consider a smaller step size",
                RuntimeWarning,
                stacklevel=2,
            )
            descent_warned = True
        epoch_losses.append(epoch_loss)

    if use_projection:
        theta = projection.projection @ theta
    return LinearModel(
        weights=theta,
        bias=bias if cfg.use_bias else None,
        loss_kind=loss_kind,
        projection_used=projection.projection if use_projection else None,
        train_loss=epoch_losses[-1],
        epoch_losses=tuple(epoch_losses),
        seed=cfg.seed,
        r_used=projection.r if projection is not None else None,
    )


# ---------------------------------------------------------------------------
# Serialization: long-format CSV (field, index, value)
# ---------------------------------------------------------------------------

_MODEL_CSV_HEADER = ["field", "index", "value"]


def write_model_csv(model: LinearModel, path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(_MODEL_CSV_HEADER)
        writer.writerow(["loss_kind", "0", model.loss_kind])
        writer.writerow(["bias", "0", "" if model.bias is None else repr(model.bias)])
        writer.writerow(["r", "0", "" if model.r_used is None else str(model.r_used)])
        writer.writerow(["seed", "0", "" if model.seed is None else str(model.seed)])
        for i, w in enumerate(model.weights):
            writer.writerow(["weight", str(i), repr(float(w))])


def read_model_csv(path: str | os.PathLike[str]) -> LinearModel:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty model file") from None
        if header != _MODEL_CSV_HEADER:
            raise DataFormatError(f"{path}: malformed model header")
        scalars: dict[str, str] = {}
        weights: dict[int, float] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataFormatError(f"{path}:{lineno}: wrong number of fields")
            kind, index, value = row
            try:
                if kind == "weight":
                    weights[int(index)] = float(value)
                elif kind in ("loss_kind", "bias", "r", "seed"):
                    scalars[kind] = value
                else:
                    raise DataFormatError(f"{path}:{lineno}: unknown field {kind!r}")
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if "loss_kind" not in scalars:
        raise DataFormatError(f"{path}: missing loss_kind row")
    if sorted(weights) != list(range(len(weights))) or not weights:
        raise DataFormatError(f"{path}: weight indices are not contiguous")
    try:
        return LinearModel(
            weights=np.array([weights[i] for i in range(len(weights))]),
            bias=float(scalars["bias"]) if scalars.get("bias") else None,
            loss_kind=scalars["loss_kind"],
            seed=int(scalars["seed"]) if scalars.get("seed") else None,
            r_used=int(scalars["r"]) if scalars.get("r") else None,
        )
    except InvalidArgumentError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
