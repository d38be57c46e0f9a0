"""Classifiers with exact analytic gradients, and the adaptive-moment
optimizer used to train them.

Two architectures: plain logistic regression and a small relu feed-forward
network.  For two outcomes the output layer is a single logistic unit whose
probability is expanded to (1-p, p); for more outcomes it is a normalized
exponential over K units.  Parameters live in one flat vector laid out as
per-layer weight matrix (row-major) followed by its bias vector, layers in
order, so checkpoints and optimizer state are trivially alignable.

The penalized training objective is

    mean cross-entropy  +  lambda * max(0, metric_soft - target)

where ``metric_soft`` is the soft-count smoothed fairness metric of the
model's own predictions on the batch.  The gradient of the hinge flows
through the active branch (the witness outcome/cell pair for epsilon, the
worst indicator for gamma); at exact ties the lowest-index branch is used
and at the hinge kink the subgradient is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, TYPE_CHECKING

import numpy as np

from .groups import enumerate_subgroups
from .metrics import ProbTable, epsilon_df, gamma_sf

if TYPE_CHECKING:  # pragma: no cover
    from .data import Dataset, FeatureScaler
    from .train import PenaltySpec

LOG_CLAMP = 1e-12
CHECKPOINT_MAGIC = "difair-model v1"


@dataclass(frozen=True)
class Classifier:
    arch: str  # "logistic" | "mlp"
    n_features: int
    n_outcomes: int
    hidden_layers: int
    hidden_width: int
    weights: np.ndarray

    def __post_init__(self):
        if self.arch not in ("logistic", "mlp"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.arch == "logistic" and self.hidden_layers != 0:
            raise ValueError("logistic regression has no hidden layers")
        if self.arch == "mlp" and (self.hidden_layers < 1 or self.hidden_width < 1):
            raise ValueError("mlp needs at least one hidden layer and unit")
        if self.n_outcomes < 2:
            raise ValueError("need at least 2 outcomes")
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        expected = parameter_count(
            self.arch, self.n_features, self.n_outcomes,
            self.hidden_layers, self.hidden_width,
        )
        if w.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("parameters must be finite")

    @property
    def n_parameters(self) -> int:
        return int(self.weights.size)


def _layer_dims(arch, n_features, n_outcomes, hidden_layers, hidden_width):
    out = 1 if n_outcomes == 2 else n_outcomes
    hidden = [hidden_width] * (hidden_layers if arch == "mlp" else 0)
    return [n_features] + hidden + [out]


def parameter_count(arch, n_features, n_outcomes, hidden_layers, hidden_width) -> int:
    dims = _layer_dims(arch, n_features, n_outcomes, hidden_layers, hidden_width)
    return sum(d_in * d_out + d_out for d_in, d_out in zip(dims[:-1], dims[1:]))


def _unpack(model: Classifier) -> list[tuple[np.ndarray, np.ndarray]]:
    dims = _layer_dims(
        model.arch, model.n_features, model.n_outcomes,
        model.hidden_layers, model.hidden_width,
    )
    layers = []
    off = 0
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = model.weights[off: off + d_in * d_out].reshape(d_in, d_out)
        off += d_in * d_out
        b = model.weights[off: off + d_out]
        off += d_out
        layers.append((w, b))
    return layers


def init_classifier(
    arch: str,
    n_features: int,
    n_outcomes: int,
    hidden_layers: int = 0,
    hidden_width: int = 0,
    seed: int = 0,
) -> Classifier:
    """Seeded initialization: weight matrices uniform in
    +-sqrt(6 / (fan_in + fan_out)), biases zero."""
    rng = np.random.default_rng(seed)
    dims = _layer_dims(arch, n_features, n_outcomes, hidden_layers, hidden_width)
    chunks = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (d_in + d_out))
        chunks.append(rng.uniform(-bound, bound, size=d_in * d_out))
        chunks.append(np.zeros(d_out))
    return Classifier(
        arch=arch,
        n_features=n_features,
        n_outcomes=n_outcomes,
        hidden_layers=hidden_layers if arch == "mlp" else 0,
        hidden_width=hidden_width if arch == "mlp" else 0,
        weights=np.concatenate(chunks),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cached(model: Classifier, features: np.ndarray):
    x = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(
            f"model expects {model.n_features} features, got shape {x.shape}"
        )
    layers = _unpack(model)
    activations = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.maximum(a @ w + b, 0.0)
        activations.append(a)
    w_out, b_out = layers[-1]
    z = a @ w_out + b_out
    if model.n_outcomes == 2:
        p = _sigmoid(z[:, 0])
        probs = np.column_stack([1.0 - p, p])
        cache = (layers, activations, p)
    else:
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        cache = (layers, activations, probs)
    return probs, cache


def forward(model: Classifier, features: np.ndarray) -> np.ndarray:
    """Predicted class distributions, one row per input row (rows sum to 1)."""
    probs, _ = _forward_cached(model, features)
    return probs


def _backward(model: Classifier, cache, d_probs: np.ndarray) -> np.ndarray:
    layers, activations, out_cache = cache
    if model.n_outcomes == 2:
        p = out_cache
        dz = ((d_probs[:, 1] - d_probs[:, 0]) * p * (1.0 - p))[:, None]
    else:
        probs = out_cache
        dz = probs * (d_probs - (d_probs * probs).sum(axis=1, keepdims=True))
    grads: list[np.ndarray] = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_prev = activations[i]
        grads.append(dz.sum(axis=0))  # bias
        grads.append((a_prev.T @ dz).ravel())  # weight matrix, row-major
        if i > 0:
            dz = (dz @ w.T) * (activations[i] > 0.0)
    return np.concatenate(grads[::-1])


def _soft_table(probs: np.ndarray, group_index: np.ndarray, n_cells: int):
    counts = np.zeros((n_cells, probs.shape[1]))
    np.add.at(counts, group_index, probs)
    sizes = np.bincount(group_index, minlength=n_cells).astype(float)
    return counts, sizes


def penalty_forward(model: Classifier, data: "Dataset", penalty: "PenaltySpec"):
    """Value and gradient (with respect to the per-row predicted
    probabilities) of the hinge fairness penalty, before weighting by
    lambda.  Returns (value, d_probs-or-None, probs, cache)."""
    probs, cache = _forward_cached(model, data.features)
    if penalty is None or penalty.kind == "none":
        return 0.0, None, probs, cache
    space = data.space
    n_cells = space.n_cells
    k = model.n_outcomes
    alpha = penalty.alpha
    counts, sizes = _soft_table(probs, data.group_index, n_cells)
    support = sizes > 0
    if support.sum() < 2:
        raise ValueError(
            "fairness penalty needs at least 2 populated intersectional cells"
        )
    denom = sizes + k * alpha
    theta = np.zeros_like(counts)
    theta[support] = (counts[support] + alpha) / denom[support, None]
    grand = sizes.sum()
    weights = sizes / grand
    table = ProbTable(
        space=space,
        outcomes=data.schema.outcome_values,
        probs=theta,
        support=support,
        group_weights=weights,
    )

    if penalty.kind == "df":
        eps, witness = epsilon_df(table)
        value = max(0.0, eps - penalty.target)
        if value <= 0.0:
            return 0.0, None, probs, cache
        coef = np.zeros(n_cells)
        y = witness.outcome
        coef[witness.cell_max] = 1.0 / (
            max(theta[witness.cell_max, y], LOG_CLAMP) * denom[witness.cell_max]
        )
        coef[witness.cell_min] = -1.0 / (
            max(theta[witness.cell_min, y], LOG_CLAMP) * denom[witness.cell_min]
        )
        d_probs = np.zeros_like(probs)
        d_probs[:, y] = coef[data.group_index]
        return value, d_probs, probs, cache

    if penalty.kind == "sf":
        pos = penalty.positive_outcome
        collection = enumerate_subgroups(space, "all_levels")
        gamma, per = gamma_sf(table, collection, pos)
        value = max(0.0, gamma - penalty.target)
        if value <= 0.0:
            return 0.0, None, probs, cache
        worst = max(per, key=per.__getitem__)  # ties: first indicator wins
        member = np.zeros(n_cells, dtype=bool)
        member[worst.member_cells(space)] = True
        w = np.where(support, weights, 0.0)
        p_pos = float((theta[:, pos] * w).sum())
        wg = float(w[member].sum())
        p_pos_g = float((theta[member, pos] * w[member]).sum() / wg)
        sign = np.sign(p_pos - p_pos_g)
        if sign == 0.0:
            return value, None, probs, cache  # subgradient 0 at the tie
        d_theta = sign * (wg * w - np.where(member, w, 0.0))
        coef = np.zeros(n_cells)
        coef[support] = d_theta[support] / denom[support]
        d_probs = np.zeros_like(probs)
        d_probs[:, pos] = coef[data.group_index]
        return value, d_probs, probs, cache

    raise ValueError(f"unknown penalty kind {penalty.kind!r}")


def loss_and_grad(
    model: Classifier, data: "Dataset", penalty: Optional["PenaltySpec"] = None
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus the weighted fairness hinge, and its exact
    gradient with respect to the flat parameter vector (reverse accumulation
    through both terms, including the soft-count path)."""
    n = data.n_rows
    if n == 0:
        raise ValueError("data must be non-empty")
    pen_value, pen_d_probs, probs, cache = penalty_forward(model, data, penalty)
    y = data.outcome
    py = probs[np.arange(n), y]
    loss = float(-np.mean(np.log(np.maximum(py, LOG_CLAMP))))
    d_probs = np.zeros_like(probs)
    d_probs[np.arange(n), y] = np.where(py > LOG_CLAMP, -1.0 / (n * py), 0.0)
    if penalty is not None and penalty.kind != "none":
        loss += penalty.lam * pen_value
        if penalty.lam > 0 and pen_d_probs is not None:
            d_probs += penalty.lam * pen_d_probs
    return loss, _backward(model, cache, d_probs)


def accuracy(model: Classifier, data: "Dataset") -> float:
    probs = forward(model, data.features)
    return float(np.mean(np.argmax(probs, axis=1) == data.outcome))


@dataclass(frozen=True)
class OptimState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8

    @classmethod
    def init(cls, n_parameters: int, learning_rate: float = 0.01) -> "OptimState":
        return cls(
            first_moment=np.zeros(n_parameters),
            second_moment=np.zeros(n_parameters),
            learning_rate=learning_rate,
        )


def adam_step(
    model: Classifier, opt: OptimState, grad: np.ndarray
) -> tuple[Classifier, OptimState]:
    """One bias-corrected adaptive-moment update; deterministic."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != model.weights.shape:
        raise ValueError("gradient length must match the parameter vector")
    bad = np.nonzero(~np.isfinite(grad))[0]
    if bad.size:
        raise ValueError(f"non-finite gradient at index {int(bad[0])}")
    t = opt.step_count + 1
    m = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * grad
    v = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * grad * grad
    m_hat = m / (1.0 - opt.beta1 ** t)
    v_hat = v / (1.0 - opt.beta2 ** t)
    new_weights = model.weights - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps_stab)
    return (
        replace(model, weights=new_weights),
        replace(opt, first_moment=m, second_moment=v, step_count=t),
    )


# ---------------------------------------------------------------------------
# Checkpoints: flat text, round-trip exact via repr/float
# ---------------------------------------------------------------------------


def save_checkpoint(model: Classifier, path, scaler: Optional["FeatureScaler"] = None) -> None:
    lines = [
        CHECKPOINT_MAGIC,
        f"arch {model.arch}",
        f"hidden_layers {model.hidden_layers}",
        f"hidden_width {model.hidden_width}",
        f"n_features {model.n_features}",
        f"n_outcomes {model.n_outcomes}",
    ]
    if scaler is not None:
        lines.append("scaler_columns " + ",".join(str(c) for c in scaler.columns))
        lines.append("scaler_mean " + ",".join(repr(float(v)) for v in scaler.mean))
        lines.append("scaler_sd " + ",".join(repr(float(v)) for v in scaler.sd))
    lines.append(f"n_weights {model.n_parameters}")
    lines.extend(repr(float(w)) for w in model.weights)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[Classifier, Optional["FeatureScaler"]]:
    from .data import FeatureScaler

    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    fields: dict[str, str] = {}
    i = 1
    while i < len(text):
        key, _, value = text[i].partition(" ")
        fields[key] = value
        i += 1
        if key == "n_weights":
            break
    n = int(fields["n_weights"])
    weights = np.array([float(v) for v in text[i: i + n]])
    scaler = None
    if "scaler_columns" in fields:
        scaler = FeatureScaler(
            columns=tuple(int(c) for c in fields["scaler_columns"].split(",")),
            mean=np.array([float(v) for v in fields["scaler_mean"].split(",")]),
            sd=np.array([float(v) for v in fields["scaler_sd"].split(",")]),
        )
    model = Classifier(
        arch=fields["arch"],
        n_features=int(fields["n_features"]),
        n_outcomes=int(fields["n_outcomes"]),
        hidden_layers=int(fields["hidden_layers"]),
        hidden_width=int(fields["hidden_width"]),
        weights=weights,
    )
    return model, scaler
