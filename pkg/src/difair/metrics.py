"""Fairness metrics over per-group outcome tables.

Implements the ratio-bound fairness measure epsilon-DF with its empirical,
Dirichlet-smoothed, and soft-count estimators, the group-size-weighted parity
measure gamma-SF, bias amplification, the confounder-stratified variant
(DFC), the Gini coefficient of per-group metric values, the 80%-rule
verdict, and checks of the privacy / utility / intersectionality /
confounder bounds those metrics satisfy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .groups import (
    GroupSpace,
    OutcomeTable,
    Subgroup,
    SubgroupCollection,
    enumerate_subgroups,
    normalize_subset,
    project,
)

#: printed-value comparisons live in the tests; library equality tolerance
PROB_TOL = 1e-9

#: inclusive 80%-rule boundary, with float slack so a ratio that is exactly
#: 0.8 in real arithmetic still passes after rounding
EIGHTY_PCT_THRESHOLD = 0.8
_BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class EstimatorSpec:
    """How P(y|s) is estimated from a table.

    ``empirical``: raw count ratios N_{y,s}/N_s.
    ``smoothed``: Dirichlet-multinomial posterior predictive
    (N_{y,s}+alpha)/(N_s+K*alpha) on hard counts.
    ``soft_smoothed``: the same formula where N_{y,s} are soft counts summed
    from a classifier's predicted probabilities.
    """

    kind: str = "empirical"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("empirical", "smoothed", "soft_smoothed"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind != "empirical" and not self.alpha > 0:
            raise ValueError("smoothing requires alpha > 0")

    def describe(self) -> str:
        if self.kind == "empirical":
            return "empirical"
        return f"{self.kind}(alpha={self.alpha:g})"


@dataclass(frozen=True)
class ProbTable:
    """Per-cell outcome distributions P(y|s) with a support mask and
    (optionally) the group weights P(s)."""

    space: GroupSpace
    outcomes: tuple[str, ...]
    probs: np.ndarray
    support: np.ndarray
    group_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        support = np.array(self.support, dtype=bool)
        probs.setflags(write=False)
        support.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "support", support)
        if probs.shape != (self.space.n_cells, len(self.outcomes)):
            raise ValueError("probs must be (cells x outcomes)")
        if support.shape != (self.space.n_cells,):
            raise ValueError("support must have one flag per cell")
        sup = probs[support]
        if sup.size:
            if np.any(sup < -PROB_TOL) or np.any(sup > 1 + PROB_TOL):
                raise ValueError("probabilities must lie in [0, 1]")
            if np.any(np.abs(sup.sum(axis=1) - 1.0) > PROB_TOL):
                raise ValueError("supported rows must sum to 1")
        if self.group_weights is not None:
            w = np.array(self.group_weights, dtype=float)
            w.setflags(write=False)
            object.__setattr__(self, "group_weights", w)
            if w.shape != (self.space.n_cells,):
                raise ValueError("group_weights must have one entry per cell")
            if np.any(w < -PROB_TOL):
                raise ValueError("group_weights must be non-negative")
            if abs(w[support].sum() - 1.0) > PROB_TOL:
                raise ValueError("group_weights must sum to 1 over supported cells")

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    @property
    def supported_cells(self) -> np.ndarray:
        return np.nonzero(self.support)[0]


def table_to_probs(table: OutcomeTable, spec: EstimatorSpec) -> ProbTable:
    """Estimate P(y|s) from counts.  Empty cells stay unsupported under every
    estimator (the support condition P(s) > 0 is about the data, smoothing
    only regularizes the outcome distribution)."""
    totals = table.totals
    support = totals > 0
    k = table.n_outcomes
    probs = np.zeros_like(table.counts)
    if spec.kind == "empirical":
        probs[support] = table.counts[support] / totals[support, None]
    else:
        probs[support] = (table.counts[support] + spec.alpha) / (
            totals[support, None] + k * spec.alpha
        )
    grand = totals.sum()
    weights = totals / grand if grand > 0 else np.zeros_like(totals)
    return ProbTable(
        space=table.space,
        outcomes=table.outcomes,
        probs=probs,
        support=support,
        group_weights=weights,
    )


@dataclass(frozen=True)
class EpsilonWitness:
    """The binding outcome and cell pair behind an epsilon value."""

    outcome: int
    cell_max: int
    cell_min: int

    def describe(self, space: GroupSpace, outcomes: Sequence[str]) -> str:
        return (
            f"outcome={outcomes[self.outcome]!r} "
            f"max={space.cell_name(self.cell_max)} "
            f"min={space.cell_name(self.cell_min)}"
        )


def _require_two_cells(probs: ProbTable) -> np.ndarray:
    cells = probs.supported_cells
    if len(cells) < 2:
        raise ValueError(
            f"epsilon needs at least 2 supported cells, got {len(cells)}"
        )
    return cells


def epsilon_df(probs: ProbTable) -> tuple[float, EpsilonWitness]:
    """Smallest epsilon bounding every pairwise outcome-probability ratio
    between supported cells within [e^-eps, e^eps]; equivalently
    max_y [log max_s P(y|s) - log min_s P(y|s)].

    Returns +inf (with a witness) when some supported cell has P(y|s) = 0
    while another has P(y|s) > 0.  Outcomes never produced by any cell
    contribute nothing.  Ties resolve to the lowest outcome / cell index.
    """
    cells = _require_two_cells(probs)
    sub = probs.probs[cells]
    best = -1.0
    witness = None
    for y in range(probs.n_outcomes):
        col = sub[:, y]
        i_max = int(np.argmax(col))
        i_min = int(np.argmin(col))
        hi, lo = col[i_max], col[i_min]
        if hi <= 0.0:
            continue  # outcome unrealized everywhere: ratios are 0/0
        value = math.inf if lo <= 0.0 else math.log(hi) - math.log(lo)
        if value > best:
            best = value
            witness = EpsilonWitness(y, int(cells[i_max]), int(cells[i_min]))
    if witness is None:
        # all-zero columns only: distributions identical (degenerate)
        witness = EpsilonWitness(0, int(cells[0]), int(cells[1]))
        best = 0.0
    return max(best, 0.0), witness


def epsilon_df_bruteforce(probs: ProbTable) -> float:
    """Independent oracle: exhaustive loop over every (y, s_i, s_j) triple of
    |log P(y|s_i) - log P(y|s_j)|."""
    cells = _require_two_cells(probs)
    table = [[float(probs.probs[s, y]) for y in range(probs.n_outcomes)] for s in cells]
    best = 0.0
    for row_i in table:
        for row_j in table:
            for y in range(probs.n_outcomes):
                a, b = row_i[y], row_j[y]
                if a == 0.0 and b == 0.0:
                    continue
                if a == 0.0 or b == 0.0:
                    return math.inf
                d = abs(math.log(a) - math.log(b))
                if d > best:
                    best = d
    return best


def epsilon_per_group(probs: ProbTable) -> dict[int, float]:
    """Per-group epsilon: for each supported cell, the worst pairwise log
    ratio against any other supported cell, over all outcomes.  The max over
    groups equals the overall epsilon."""
    cells = _require_two_cells(probs)
    sub = probs.probs[cells]
    with np.errstate(divide="ignore"):
        logs = np.log(sub)  # -inf on zeros; handled below
    out: dict[int, float] = {}
    col_max = logs.max(axis=0)
    col_min = logs.min(axis=0)
    for pos, cell in enumerate(cells):
        worst = 0.0
        for y in range(probs.n_outcomes):
            if np.isinf(col_max[y]) and col_max[y] < 0:
                continue  # outcome unrealized in every cell
            own = logs[pos, y]
            if np.isinf(own) or np.isinf(col_min[y]):
                worst = math.inf
                break
            worst = max(worst, col_max[y] - own, own - col_min[y])
        out[int(cell)] = worst
    return out


def project_probs(probs: ProbTable, keep) -> ProbTable:
    """Marginalize a probability table onto an attribute subset via the
    probability mixture P(y|d) = sum_e P(y|e,d) P(e|d), with P(e|d) taken
    from the table's group weights.  For empirical estimates this coincides
    with aggregating counts."""
    if probs.group_weights is None:
        raise ValueError("projection needs group weights")
    keep_idx = normalize_subset(probs.space, keep)
    p = probs.space.n_attributes
    if not keep_idx:
        raise ValueError("subset must be non-empty")
    if len(keep_idx) == p:
        return probs
    sub_space = probs.space.subspace(keep_idx)
    grid = np.indices(probs.space.cardinalities).reshape(p, -1)
    parent = np.ravel_multi_index(
        tuple(grid[a] for a in keep_idx), sub_space.cardinalities
    )
    w = np.where(probs.support, probs.group_weights, 0.0)
    w_sub = np.zeros(sub_space.n_cells)
    np.add.at(w_sub, parent, w)
    mixed = np.zeros((sub_space.n_cells, probs.n_outcomes))
    np.add.at(mixed, parent, probs.probs * w[:, None])
    support = w_sub > 0
    mixed[support] /= w_sub[support, None]
    return ProbTable(
        space=sub_space,
        outcomes=probs.outcomes,
        probs=mixed,
        support=support,
        group_weights=w_sub,
    )


def subgroup_stats(probs: ProbTable, groups: SubgroupCollection, outcome: int):
    """Aggregate P(g), P(y=outcome | g) for each indicator from the bottom
    cells.  Zero-mass indicators get weight 0 and probability nan."""
    if probs.group_weights is None:
        raise ValueError("subgroup aggregation needs group weights")
    w = np.where(probs.support, probs.group_weights, 0.0)
    col = probs.probs[:, outcome]
    stats = {}
    for g in groups:
        cells = g.member_cells(probs.space)
        wg = float(w[cells].sum())
        pg = float((col[cells] * w[cells]).sum() / wg) if wg > 0 else math.nan
        stats[g] = (wg, pg)
    return stats


def gamma_sf(
    probs: ProbTable, groups: SubgroupCollection, positive: int
) -> tuple[float, dict[Subgroup, float]]:
    """Statistical-parity subgroup fairness: per indicator g,
    gamma_g = |P(y=pos) - P(y=pos | g)| * P(g); the overall gamma is the
    worst case over the collection.  Zero-mass indicators score 0."""
    if probs.group_weights is None:
        raise ValueError("gamma needs group weights")
    if not 0 <= positive < probs.n_outcomes:
        raise ValueError(f"positive outcome index {positive} out of range")
    w = np.where(probs.support, probs.group_weights, 0.0)
    p_pos = float((probs.probs[:, positive] * w).sum())
    per: dict[Subgroup, float] = {}
    for g, (wg, pg) in subgroup_stats(probs, groups, positive).items():
        per[g] = abs(p_pos - pg) * wg if wg > 0 else 0.0
    overall = max(per.values()) if per else 0.0
    return overall, per


def bias_amplification(eps_mechanism: float, eps_data: float) -> float:
    """Fairness cost a mechanism adds over the data it was trained on
    (may be negative when the classifier is fairer than the data)."""
    return eps_mechanism - eps_data


@dataclass(frozen=True)
class DfcResult:
    epsilon: float
    per_stratum: dict[str, float]
    witnesses: dict[str, EpsilonWitness]
    skipped: tuple[str, ...]


def epsilon_dfc(tables: Mapping[str, OutcomeTable], spec: EstimatorSpec) -> DfcResult:
    """Confounder-stratified epsilon: epsilon within each stratum, the most
    unfair stratum governing.  Strata with fewer than 2 supported cells are
    skipped and flagged."""
    if not tables:
        raise ValueError("need at least one stratum")
    per: dict[str, float] = {}
    wit: dict[str, EpsilonWitness] = {}
    skipped = []
    for c, table in tables.items():
        probs = table_to_probs(table, spec)
        if len(probs.supported_cells) < 2:
            skipped.append(str(c))
            continue
        eps, w = epsilon_df(probs)
        per[str(c)] = eps
        wit[str(c)] = w
    if not per:
        raise ValueError("every stratum has fewer than 2 supported cells")
    return DfcResult(
        epsilon=max(per.values()),
        per_stratum=per,
        witnesses=wit,
        skipped=tuple(skipped),
    )


@dataclass(frozen=True)
class ConfounderCheck:
    passed: bool
    pooled_epsilon: float
    stratified_epsilon: float


def check_confounder_theorem(
    tables: Mapping[str, OutcomeTable],
    stratum_weights: Mapping[str, np.ndarray],
    tol: float = 1e-9,
) -> ConfounderCheck:
    """Check whether pooling strata via P(y|s) = sum_c P(y|s,c) P(c|s) stays
    within the worst per-stratum epsilon.

    The bound is guaranteed whenever the stratum distribution is shared
    across cells (each pooled probability is then the same convex mixture,
    so pairwise ratios stay inside the per-stratum envelope).  When P(c|s)
    depends on the cell the pooled epsilon can exceed the stratified one —
    a Simpson's reversal is exactly such a case, and the reason to audit
    within strata in the first place."""
    if set(tables) != set(stratum_weights):
        raise ValueError("tables and stratum_weights must cover the same strata")
    keys = list(tables)
    first = tables[keys[0]]
    space, outcomes = first.space, first.outcomes
    weights = np.stack([np.asarray(stratum_weights[c], dtype=float) for c in keys])
    if weights.shape != (len(keys), space.n_cells):
        raise ValueError("stratum weights must have one row per stratum, one entry per cell")
    if np.any(weights < -PROB_TOL) or np.any(np.abs(weights.sum(axis=0) - 1.0) > PROB_TOL):
        raise ValueError("per-cell stratum weights must be non-negative and sum to 1")
    spec = EstimatorSpec("empirical")
    pooled = np.zeros((space.n_cells, len(outcomes)))
    support = np.ones(space.n_cells, dtype=bool)
    per_stratum = []
    for row, c in enumerate(keys):
        probs = table_to_probs(tables[c], spec)
        active = weights[row] > 0
        if np.any(active & ~probs.support):
            raise ValueError(
                f"stratum {c!r} has positive weight on a cell with no data"
            )
        support &= probs.support | ~active
        pooled += probs.probs * weights[row][:, None]
        eps, _ = epsilon_df(probs)
        per_stratum.append(eps)
    stratified = max(per_stratum)
    pooled_probs = ProbTable(
        space=space, outcomes=outcomes, probs=pooled, support=support
    )
    pooled_eps, _ = epsilon_df(pooled_probs)
    return ConfounderCheck(
        passed=bool(pooled_eps <= stratified + tol),
        pooled_epsilon=pooled_eps,
        stratified_epsilon=stratified,
    )


def gini(per_group: Mapping, weights: Mapping) -> float:
    """Population-weighted dispersion of per-group metric values:
    G = (1 / 2 mu) * sum_ij P(s_i) P(s_j) |F_i - F_j| with
    mu = sum_i F_i P(s_i).  All values zero defines G = 0."""
    keys = list(per_group)
    if set(keys) != set(weights):
        raise ValueError("per_group and weights must cover the same groups")
    f = np.array([per_group[k] for k in keys], dtype=float)
    w = np.array([weights[k] for k in keys], dtype=float)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("per-group values must be finite and non-negative")
    if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL:
        raise ValueError("weights must be non-negative and sum to 1")
    mu = float((f * w).sum())
    if mu <= 0.0:
        return 0.0
    spread = float(np.abs(f[:, None] - f[None, :]).__mul__(w[:, None] * w[None, :]).sum())
    return spread / (2.0 * mu)


def eighty_pct_rule(probs: ProbTable, positive: int) -> tuple[bool, float]:
    """Disparate-impact guideline: worst pairwise ratio of the favorable
    outcome's probability across supported cells; passes iff the ratio is at
    least 0.8 (boundary inclusive)."""
    cells = _require_two_cells(probs)
    if not 0 <= positive < probs.n_outcomes:
        raise ValueError(f"positive outcome index {positive} out of range")
    col = probs.probs[cells, positive]
    hi = float(col.max())
    lo = float(col.min())
    if hi <= 0.0:
        return True, 1.0  # nobody ever receives the outcome: no disparity
    worst = lo / hi
    return worst >= EIGHTY_PCT_THRESHOLD - _BOUNDARY_SLACK, worst


@dataclass(frozen=True)
class PrivacyCheck:
    passed: bool
    max_violation: float
    skipped_outcomes: tuple[int, ...]


def check_privacy_bound(probs: ProbTable, prior: np.ndarray, tol: float = 1e-9) -> PrivacyCheck:
    """Verify the adversary bound: for every outcome, the Bayes posterior
    ratio P(s_i|y)/P(s_j|y) stays within e^{+-eps} of the prior ratio
    P(s_i)/P(s_j)."""
    cells = _require_two_cells(probs)
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (probs.space.n_cells,):
        raise ValueError("prior must have one entry per cell")
    if np.any(prior[cells] <= 0):
        raise ValueError("prior must be positive on supported cells")
    eps, _ = epsilon_df(probs)
    if math.isinf(eps):
        return PrivacyCheck(True, 0.0, ())
    p = probs.probs[cells]
    pri = prior[cells]
    max_violation = 0.0
    skipped = []
    for y in range(probs.n_outcomes):
        mass = p[:, y] * pri
        z = mass.sum()
        if z <= 0.0:
            skipped.append(y)
            continue
        posterior = mass / z
        if np.any(posterior <= 0.0):
            skipped.append(y)
            continue
        shift = np.log(posterior) - np.log(pri)
        violation = float(shift.max() - shift.min()) - eps
        max_violation = max(max_violation, violation)
    return PrivacyCheck(max_violation <= tol, max_violation, tuple(skipped))


@dataclass(frozen=True)
class UtilityCheck:
    passed: bool
    max_ratio: float
    degenerate: bool


def check_utility_bound(probs: ProbTable, utility: np.ndarray, tol: float = 1e-9) -> UtilityCheck:
    """Verify that expected utility between any two supported cells differs
    by at most a factor of e^eps, for a non-negative utility function."""
    cells = _require_two_cells(probs)
    u = np.asarray(utility, dtype=float)
    if u.shape != (probs.n_outcomes,):
        raise ValueError("utility must assign one value per outcome")
    if np.any(u < 0) or not np.any(u > 0):
        raise ValueError("utilities must be non-negative and not all zero")
    eps, _ = epsilon_df(probs)
    expected = probs.probs[cells] @ u
    lo = float(expected.min())
    hi = float(expected.max())
    if lo <= 0.0:
        # only reachable when eps is infinite
        return UtilityCheck(math.isinf(eps), math.inf if hi > 0 else 1.0, True)
    ratio = hi / lo
    passed = math.log(ratio) <= eps + tol
    return UtilityCheck(passed, ratio, False)


@dataclass(frozen=True)
class SubsetAudit:
    attrs: tuple[int, ...]
    name: str
    value: float
    ok: bool


def _proper_subsets(p: int):
    for j in range(1, p):
        yield from itertools.combinations(range(p), j)


def check_intersectionality(
    table: OutcomeTable, spec: EstimatorSpec, tol: float = 1e-9
) -> list[SubsetAudit]:
    """For every non-empty proper attribute subset, epsilon of the
    probability-weighted marginal must not exceed the full-space epsilon."""
    p = table.space.n_attributes
    if p < 2:
        raise ValueError("intersectionality audit needs at least 2 attributes")
    probs = table_to_probs(table, spec)
    eps_full, _ = epsilon_df(probs)
    out = []
    for attrs in _proper_subsets(p):
        sub = project_probs(probs, attrs)
        eps_d, _ = epsilon_df(sub)
        name = "x".join(table.space.names[a] for a in attrs)
        out.append(SubsetAudit(attrs, name, eps_d, bool(eps_d <= eps_full + tol)))
    return out


def _subset_metric_audit(values: dict[tuple[int, ...], float], tol: float = 1e-12):
    """Flag every subset whose metric exceeds some superset's metric."""
    flags = {}
    for attrs, v in values.items():
        violated = any(
            v > values[other] + tol
            for other in values
            if set(attrs) < set(other)
        )
        flags[attrs] = violated
    return flags


def audit_gamma_monotonicity(
    table: OutcomeTable, positive: int, spec: Optional[EstimatorSpec] = None
) -> list[SubsetAudit]:
    """Gamma over each attribute subset's bottom cells, flagging subsets
    whose gamma exceeds a superset's gamma (the intersectionality property
    gamma does not enjoy)."""
    p = table.space.n_attributes
    if p < 2:
        raise ValueError("monotonicity audit needs at least 2 attributes")
    spec = spec or EstimatorSpec("empirical")
    probs = table_to_probs(table, spec)
    values: dict[tuple[int, ...], float] = {}
    subsets = list(_proper_subsets(p)) + [tuple(range(p))]
    for attrs in subsets:
        sub = project_probs(probs, attrs)
        bottom = enumerate_subgroups(sub.space, "bottom_only")
        g, _ = gamma_sf(sub, bottom, positive)
        values[attrs] = g
    flags = _subset_metric_audit(values)
    out = []
    for attrs in subsets:
        name = "x".join(table.space.names[a] for a in attrs)
        out.append(SubsetAudit(attrs, name, values[attrs], not flags[attrs]))
    return out


def audit_epsilon_monotonicity(
    table: OutcomeTable, spec: Optional[EstimatorSpec] = None
) -> list[SubsetAudit]:
    """Pairwise superset audit for epsilon (never violated)."""
    p = table.space.n_attributes
    if p < 2:
        raise ValueError("monotonicity audit needs at least 2 attributes")
    spec = spec or EstimatorSpec("empirical")
    probs = table_to_probs(table, spec)
    values: dict[tuple[int, ...], float] = {}
    subsets = list(_proper_subsets(p)) + [tuple(range(p))]
    for attrs in subsets:
        sub = project_probs(probs, attrs)
        values[attrs], _ = epsilon_df(sub)
    flags = _subset_metric_audit(values, tol=1e-9)
    return [
        SubsetAudit(
            attrs,
            "x".join(table.space.names[a] for a in attrs),
            values[attrs],
            not flags[attrs],
        )
        for attrs in subsets
    ]


@dataclass(frozen=True)
class GroupRow:
    """One per-group report row (for the flat CSV and the scatter plots)."""

    name: str
    level: int
    size: float
    weight: float
    epsilon: Optional[float]
    gamma: Optional[float]


@dataclass(frozen=True)
class FairnessReport:
    """Every computed fairness quantity for one outcome table, with the
    provenance of the estimator used."""

    epsilon_overall: Optional[float]
    epsilon_per_group: dict[str, float]
    gamma_overall: Optional[float]
    gamma_per_group: dict[str, float]
    bias_amplification_df: Optional[float]
    bias_amplification_sf: Optional[float]
    dfc_epsilon: Optional[float]
    gini_df: Optional[float]
    gini_sf: Optional[float]
    eighty_pct_pass: Optional[bool]
    estimator: EstimatorSpec
    empty_cells: tuple[str, ...]
    groups_detail: tuple[GroupRow, ...] = ()
    metadata: dict = field(default_factory=dict)


def per_group_epsilon_all_levels(
    probs: ProbTable, collection: SubgroupCollection
) -> dict[Subgroup, float]:
    """Per-group epsilon for every indicator: each indicator is scored
    within the marginal table over its own attribute subset, held fixed
    against all other cells of that subset."""
    by_subset: dict[tuple[int, ...], list[Subgroup]] = {}
    for g in collection:
        by_subset.setdefault(g.attrs, []).append(g)
    out: dict[Subgroup, float] = {}
    full = tuple(range(probs.space.n_attributes))
    for attrs, members in by_subset.items():
        sub = probs if attrs == full else project_probs(probs, attrs)
        vals = epsilon_per_group(sub)
        for g in members:
            cell = sub.space.cell_id(g.values)
            out[g] = vals.get(cell, math.nan)
    return out


def build_report(
    table: OutcomeTable,
    spec: EstimatorSpec,
    positive: int,
    *,
    collection: Optional[SubgroupCollection] = None,
    baseline: Optional[FairnessReport] = None,
    dfc: Optional[DfcResult] = None,
    compute_df: bool = True,
    compute_sf: bool = True,
    metadata: Optional[dict] = None,
) -> FairnessReport:
    """Assemble the full report for one table.

    The overall epsilon maximizes over the bottom-level cells (higher levels
    are covered automatically by the intersectionality property); the
    overall gamma maximizes over the whole indicator collection.  Gini
    coefficients weight the bottom-cell per-group values by the empirical
    group frequencies.  When a ``baseline`` report (normally the audited
    data) is supplied, bias amplification is the overall metric minus the
    baseline's.
    """
    space = table.space
    probs = table_to_probs(table, spec)
    if collection is None:
        collection = enumerate_subgroups(space, "all_levels")
    totals = table.totals
    grand = float(totals.sum())
    bottom = [g for g in collection if g.level == space.n_attributes]

    eps_overall = None
    eps_witness = None
    eps_by_group: dict[Subgroup, float] = {}
    if compute_df:
        eps_overall, eps_witness = epsilon_df(probs)
        eps_by_group = per_group_epsilon_all_levels(probs, collection)

    gamma_overall = None
    gamma_by_group: dict[Subgroup, float] = {}
    if compute_sf:
        gamma_overall, gamma_by_group = gamma_sf(probs, collection, positive)

    rows: list[GroupRow] = []
    for g in collection:
        cells = g.member_cells(space)
        size = float(totals[cells].sum())
        rows.append(
            GroupRow(
                name=g.name(space),
                level=g.level,
                size=size,
                weight=size / grand if grand > 0 else 0.0,
                epsilon=eps_by_group.get(g) if compute_df else None,
                gamma=gamma_by_group.get(g) if compute_sf else None,
            )
        )

    def _bottom_gini(values: dict[Subgroup, float]) -> Optional[float]:
        vals, weights = {}, {}
        for g in bottom:
            cell = space.cell_id(g.values)
            if totals[cell] <= 0:
                continue
            v = values.get(g)
            if v is None or not math.isfinite(v):
                return None
            vals[g] = v
            weights[g] = totals[cell] / grand
        if not vals:
            return None
        total_w = sum(weights.values())
        weights = {k: w / total_w for k, w in weights.items()}
        return gini(vals, weights)

    gini_df = _bottom_gini(eps_by_group) if compute_df else None
    gini_sf = _bottom_gini(gamma_by_group) if compute_sf else None

    eighty = eighty_pct_rule(probs, positive) if compute_df else None

    bias_df = None
    bias_sf = None
    if baseline is not None:
        if compute_df and baseline.epsilon_overall is not None:
            bias_df = bias_amplification(eps_overall, baseline.epsilon_overall)
        if compute_sf and baseline.gamma_overall is not None:
            bias_sf = bias_amplification(gamma_overall, baseline.gamma_overall)

    meta = dict(metadata or {})
    meta.setdefault("positive_outcome", table.outcomes[positive])
    if eps_witness is not None:
        meta["epsilon_witness"] = eps_witness.describe(space, table.outcomes)
    if eighty is not None:
        meta["eighty_pct_worst_ratio"] = eighty[1]
    if dfc is not None:
        meta["dfc_per_stratum"] = dict(dfc.per_stratum)
        if dfc.skipped:
            meta["dfc_skipped_strata"] = list(dfc.skipped)

    return FairnessReport(
        epsilon_overall=eps_overall,
        epsilon_per_group={g.name(space): v for g, v in eps_by_group.items()},
        gamma_overall=gamma_overall,
        gamma_per_group={g.name(space): v for g, v in gamma_by_group.items()},
        bias_amplification_df=bias_df,
        bias_amplification_sf=bias_sf,
        dfc_epsilon=dfc.epsilon if dfc is not None else None,
        gini_df=gini_df,
        gini_sf=gini_sf,
        eighty_pct_pass=eighty[0] if eighty is not None else None,
        estimator=spec,
        empty_cells=tuple(space.cell_name(c) for c in table.empty_cells),
        groups_detail=tuple(rows),
        metadata=meta,
    )
