"""Fairness-regularized training loop.

Full-batch gradient descent with the adaptive-moment optimizer on
cross-entropy plus a hinge penalty on the soft-count fairness metric
(epsilon or gamma) of the model's own predictions.  The penalty is disabled
for an initial burn-in phase, which in practice improves convergence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset
from .groups import build_table, enumerate_subgroups
from .metrics import EstimatorSpec, epsilon_df, gamma_sf, table_to_probs
from .model import (
    Classifier,
    OptimState,
    accuracy,
    adam_step,
    init_classifier,
    loss_and_grad,
    penalty_forward,
)

DEFAULT_ITERATIONS = 500
DEFAULT_BURN_IN = 50
DEFAULT_LEARNING_RATE = 0.01
DEFAULT_LAMBDA = {"none": 0.0, "df": 0.1, "sf": 1.0}


@dataclass(frozen=True)
class PenaltySpec:
    """Hinge fairness penalty max(0, metric_soft - target), weighted by
    lambda in the objective.  ``alpha`` smooths the soft-count table."""

    kind: str = "none"  # none | df | sf
    target: float = 0.0
    lam: float = 0.0
    alpha: float = 1.0
    positive_outcome: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "df", "sf"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.target < 0:
            raise ValueError("target must be non-negative")
        if self.kind != "none" and not self.alpha > 0:
            raise ValueError("soft-count smoothing requires alpha > 0")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = DEFAULT_ITERATIONS
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    learning_rate: float = DEFAULT_LEARNING_RATE
    eval_every: int = 10

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.eval_every <= 0:
            raise ValueError("eval_every must be positive")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    loss: float
    penalty: float
    epsilon: float
    gamma: float
    dev_accuracy: float


@dataclass(frozen=True)
class TrainTrace:
    records: tuple[TraceRecord, ...] = ()

    FIELDS = ("iteration", "loss", "penalty", "epsilon", "gamma", "dev_accuracy")

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.FIELDS)
            for r in self.records:
                writer.writerow(
                    [r.iteration]
                    + [repr(v) for v in (r.loss, r.penalty, r.epsilon, r.gamma, r.dev_accuracy)]
                )


def penalty_value(model: Classifier, data: Dataset, spec: PenaltySpec) -> float:
    """The hinge value max(0, metric_soft - target) at the current model
    (identical to the term used inside the training objective)."""
    value, _, _, _ = penalty_forward(model, data, spec)
    return value


def soft_metrics(model: Classifier, data: Dataset, alpha: float, positive: int):
    """Soft-count smoothed epsilon and gamma of the model's predictions."""
    table = build_table(data, "classifier_soft", model)
    probs = table_to_probs(table, EstimatorSpec("soft_smoothed", alpha))
    eps, _ = epsilon_df(probs)
    gamma, _ = gamma_sf(probs, enumerate_subgroups(data.space, "all_levels"), positive)
    return eps, gamma


def train(
    data: Dataset,
    dev: Dataset,
    arch: str = "mlp",
    spec: PenaltySpec = PenaltySpec(),
    cfg: TrainConfig = TrainConfig(),
    hidden_layers: int = 3,
    hidden_width: int = 16,
) -> tuple[Classifier, TrainTrace]:
    """Full-batch penalized training.  The penalty contributes zero loss and
    zero gradient for iterations < burn_in; metrics in the trace are
    measured on the training batch (accuracy on dev when it is non-empty);
    the whole run is deterministic given the seed."""
    model = init_classifier(
        arch,
        n_features=data.features.shape[1],
        n_outcomes=data.n_outcomes,
        hidden_layers=hidden_layers if arch == "mlp" else 0,
        hidden_width=hidden_width if arch == "mlp" else 0,
        seed=cfg.seed,
    )
    opt = OptimState.init(model.n_parameters, learning_rate=cfg.learning_rate)
    positive = spec.positive_outcome if spec.kind == "sf" else data.schema.positive_index
    records: list[TraceRecord] = []

    def record(iteration: int, loss: float, active: bool) -> None:
        pen = penalty_value(model, data, spec) if active and spec.kind != "none" else 0.0
        eps, gamma = soft_metrics(model, data, spec.alpha, positive)
        dev_acc = accuracy(model, dev) if dev.n_rows else float("nan")
        records.append(TraceRecord(iteration, loss, pen, eps, gamma, dev_acc))

    for it in range(cfg.iterations):
        active = it >= cfg.burn_in
        loss, grad = loss_and_grad(model, data, spec if active else None)
        if it % cfg.eval_every == 0:
            record(it, loss, active)
        model, opt = adam_step(model, opt, grad)
    final_loss, _ = loss_and_grad(model, data, spec)
    record(cfg.iterations, final_loss, True)
    return model, TrainTrace(records=tuple(records))
