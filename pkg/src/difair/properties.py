"""Randomized property suites.

Each suite draws random instances from a seeded generator and checks a
guarantee that must hold universally: the intersectionality bound, the
confounder pooling bound, the privacy and expected-utility bounds, mass
conservation under projection, equivalence of the epsilon implementation
with an exhaustive oracle, agreement of the 80%-rule verdict with its
epsilon formulation, and analytic-versus-finite-difference gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .groups import GroupSpace, OutcomeTable, project
from .metrics import (
    EstimatorSpec,
    ProbTable,
    check_confounder_theorem,
    check_intersectionality,
    check_privacy_bound,
    check_utility_bound,
    eighty_pct_rule,
    epsilon_df,
    epsilon_df_bruteforce,
    table_to_probs,
)

TOL = 1e-9
ORACLE_TOL = 1e-12
GRAD_TOL = 1e-5
FD_STEP = 1e-6

EIGHTY_PCT_EPSILON = -math.log(0.8)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    trials: int
    failures: int
    worst: float  # suite-specific: max violation / max abs diff / max rel err

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{self.name:<22} {self.trials - self.failures:>5}/{self.trials} "
            f"{status}  worst={self.worst:.3e}"
        )


def _random_space(rng: np.random.Generator, min_p=1, max_p=4, max_cells=24) -> GroupSpace:
    while True:
        p = int(rng.integers(min_p, max_p + 1))
        cards = rng.integers(2, 5, size=p)
        if np.prod(cards) <= max_cells:
            break
    return GroupSpace(
        names=tuple(f"a{i}" for i in range(p)),
        values=tuple(tuple(f"v{j}" for j in range(c)) for c in cards),
    )


def _random_prob_table(rng: np.random.Generator, space: GroupSpace, k: int) -> ProbTable:
    probs = rng.dirichlet(np.ones(k), size=space.n_cells)
    weights = rng.dirichlet(np.ones(space.n_cells))
    return ProbTable(
        space=space,
        outcomes=tuple(f"y{j}" for j in range(k)),
        probs=probs,
        support=np.ones(space.n_cells, dtype=bool),
        group_weights=weights,
    )


def _random_count_table(rng: np.random.Generator, space: GroupSpace, k: int) -> OutcomeTable:
    counts = rng.integers(1, 30, size=(space.n_cells, k)).astype(float)
    return OutcomeTable(
        space=space, outcomes=tuple(f"y{j}" for j in range(k)), counts=counts
    )


def _random_estimator(rng: np.random.Generator) -> EstimatorSpec:
    if rng.random() < 0.5:
        return EstimatorSpec("empirical")
    return EstimatorSpec("smoothed", alpha=float(rng.uniform(0.1, 2.0)))


def _run(name, trials, seed, one_trial: Callable[[np.random.Generator], float], tol: float) -> SuiteResult:
    """Run ``one_trial`` per trial; it returns a violation magnitude
    (<= tol means the trial passed)."""
    failures = 0
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        violation = one_trial(rng)
        worst = max(worst, violation)
        if violation > tol:
            failures += 1
    return SuiteResult(name, trials, failures, worst)


def suite_epsilon_oracle(trials: int, seed: int) -> SuiteResult:
    def one(rng):
        space = _random_space(rng)
        k = int(rng.integers(2, 5))
        probs = _random_prob_table(rng, space, k)
        fast, _ = epsilon_df(probs)
        slow = epsilon_df_bruteforce(probs)
        return abs(fast - slow)

    return _run("epsilon_oracle", trials, seed, one, ORACLE_TOL)


def suite_intersectionality(trials: int, seed: int) -> SuiteResult:
    def one(rng):
        space = _random_space(rng, min_p=2)
        table = _random_count_table(rng, space, int(rng.integers(2, 4)))
        audits = check_intersectionality(table, _random_estimator(rng), tol=TOL)
        probs = table_to_probs(table, EstimatorSpec("empirical"))
        eps_full, _ = epsilon_df(probs)
        worst = 0.0
        for audit in audits:
            if not audit.ok:
                worst = max(worst, audit.value - eps_full)
        return worst

    return _run("intersectionality", trials, seed, one, TOL)


def suite_confounder(trials: int, seed: int) -> SuiteResult:
    # the pooled bound is guaranteed when the stratum distribution is shared
    # across cells; with cell-dependent P(c|s) a Simpson's reversal breaks it
    # (that regime is what the stratified metric exists for)
    def one(rng):
        space = _random_space(rng, min_p=1, max_p=3, max_cells=16)
        k = int(rng.integers(2, 4))
        n_strata = int(rng.integers(2, 4))
        tables = {f"c{c}": _random_count_table(rng, space, k) for c in range(n_strata)}
        mix = rng.dirichlet(np.ones(n_strata))
        weights = {
            c: np.full(space.n_cells, mix[row]) for row, c in enumerate(tables)
        }
        result = check_confounder_theorem(tables, weights, tol=TOL)
        return max(0.0, result.pooled_epsilon - result.stratified_epsilon)

    return _run("confounder", trials, seed, one, TOL)


def suite_privacy(trials: int, seed: int) -> SuiteResult:
    def one(rng):
        space = _random_space(rng)
        probs = _random_prob_table(rng, space, int(rng.integers(2, 5)))
        prior = rng.dirichlet(np.ones(space.n_cells))
        result = check_privacy_bound(probs, prior, tol=TOL)
        return result.max_violation

    return _run("privacy_bound", trials, seed, one, TOL)


def suite_utility(trials: int, seed: int) -> SuiteResult:
    def one(rng):
        space = _random_space(rng)
        k = int(rng.integers(2, 5))
        probs = _random_prob_table(rng, space, k)
        utility = rng.uniform(0.0, 5.0, size=k)
        if not np.any(utility > 0):
            utility[0] = 1.0
        result = check_utility_bound(probs, utility, tol=TOL)
        eps, _ = epsilon_df(probs)
        return max(0.0, math.log(result.max_ratio) - eps)

    return _run("utility_bound", trials, seed, one, TOL)


def suite_projection_mass(trials: int, seed: int) -> SuiteResult:
    def one(rng):
        space = _random_space(rng, min_p=2)
        k = int(rng.integers(2, 4))
        counts = rng.uniform(0.0, 30.0, size=(space.n_cells, k))
        table = OutcomeTable(
            space=space, outcomes=tuple(f"y{j}" for j in range(k)), counts=counts
        )
        p = space.n_attributes
        size = int(rng.integers(1, p))
        keep = sorted(rng.choice(p, size=size, replace=False).tolist())
        projected = project(table, keep)
        total = table.counts.sum()
        return abs(projected.counts.sum() - total) / max(1.0, total)

    return _run("projection_mass", trials, seed, one, TOL)


def suite_eighty_pct(trials: int, seed: int) -> SuiteResult:
    def one(rng):
        space = _random_space(rng)
        probs = _random_prob_table(rng, space, 2)
        positive = 1
        passed, _ = eighty_pct_rule(probs, positive)
        col = probs.probs[probs.support, positive]
        eps_pos = float(np.log(col.max()) - np.log(col.min()))
        agrees = passed == (eps_pos <= EIGHTY_PCT_EPSILON + 1e-12)
        return 0.0 if agrees else 1.0

    return _run("eighty_pct_rule", trials, seed, one, 0.5)


def finite_difference_grad(fn: Callable[[np.ndarray], float], w: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(w)
    for i in range(w.size):
        up = w.copy()
        up[i] += step
        down = w.copy()
        down[i] -= step
        grad[i] = (fn(up) - fn(down)) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def _random_training_instance(rng: np.random.Generator):
    """A small dataset-shaped instance plus a model and penalty for gradient
    checking.  Constructed directly (no CSV round trip) for speed."""
    from dataclasses import replace as _replace

    from .data import Schema, SchemaColumn, _encode_rows
    from .model import init_classifier
    from .train import PenaltySpec

    p = int(rng.integers(1, 3))
    cards = rng.integers(2, 4, size=p)
    k = int(rng.integers(2, 4))
    n_feat = int(rng.integers(2, 5))
    n = int(rng.integers(30, 60))

    cols = [
        SchemaColumn(f"s{j}", "protected",
                     values=tuple(f"v{i}" for i in range(cards[j])),
                     in_features=False)
        for j in range(p)
    ]
    cols += [SchemaColumn(f"f{i}", "continuous") for i in range(n_feat)]
    cols.append(SchemaColumn("y", "outcome", values=tuple(str(i) for i in range(k))))
    schema = Schema(columns=tuple(cols), outcome_positive_label="1")

    rows = []
    for _ in range(n):
        prot = [f"v{rng.integers(0, cards[j])}" for j in range(p)]
        feats = [repr(float(v)) for v in rng.normal(0, 1, n_feat)]
        rows.append(prot + feats + [str(rng.integers(0, k))])
    data = _encode_rows(rows, schema, origin="gradient-check")

    arch = "logistic" if rng.random() < 0.5 else "mlp"
    model = init_classifier(
        arch,
        n_features=data.features.shape[1],
        n_outcomes=k,
        hidden_layers=2 if arch == "mlp" else 0,
        hidden_width=8 if arch == "mlp" else 0,
        seed=int(rng.integers(0, 2**31)),
    )
    # jitter every parameter (incl. the zero biases) so no relu sits exactly
    # on its kink, where a central difference straddles the subgradient
    model = _replace(
        model, weights=model.weights + rng.normal(0.0, 0.1, model.n_parameters)
    )
    kind = ("none", "df", "sf")[int(rng.integers(0, 3))]
    penalty = PenaltySpec(
        kind=kind,
        target=float(rng.choice([0.0, 0.1])),
        lam=float(rng.choice([0.1, 1.0])),
        alpha=1.0,
        positive_outcome=1,
    )
    return model, data, penalty


def suite_gradient(trials: int, seed: int) -> SuiteResult:
    from dataclasses import replace as _replace

    from .model import loss_and_grad

    def one(rng):
        model, data, penalty = _random_training_instance(rng)
        _, analytic = loss_and_grad(model, data, penalty)

        def fn(w):
            loss, _ = loss_and_grad(_replace(model, weights=w), data, penalty)
            return loss

        numeric = finite_difference_grad(fn, np.array(model.weights))
        err = max_relative_error(analytic, numeric)
        return err

    return _run("gradient_check", trials, seed, one, GRAD_TOL)


ALL_SUITES = {
    "epsilon_oracle": suite_epsilon_oracle,
    "intersectionality": suite_intersectionality,
    "confounder": suite_confounder,
    "privacy_bound": suite_privacy,
    "utility_bound": suite_utility,
    "projection_mass": suite_projection_mass,
    "eighty_pct_rule": suite_eighty_pct,
    "gradient_check": suite_gradient,
}

#: finite differences over every parameter are costly per trial; the
#: gradient suite caps its trials independently of the others
GRADIENT_TRIAL_CAP = 20


def run_all(trials: int, seed: int, grad_trials: Optional[int] = None) -> list[SuiteResult]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if grad_trials is None:
        grad_trials = min(trials, GRADIENT_TRIAL_CAP)
    results = []
    for name, fn in ALL_SUITES.items():
        n = grad_trials if name == "gradient_check" else trials
        results.append(fn(n, seed))
    return results
