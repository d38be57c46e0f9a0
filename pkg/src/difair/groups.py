"""Intersectional group spaces and per-group outcome statistics.

A :class:`GroupSpace` enumerates every cell of the Cartesian product of the
protected attributes.  An :class:`OutcomeTable` accumulates per-cell outcome
counts (hard counts from labels or predictions, or soft counts summed from a
classifier's predicted probabilities), and is the common input to every
fairness metric.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def _frozen_array(values, dtype=float) -> np.ndarray:
    a = np.array(values, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GroupSpace:
    """Enumeration of the intersectional cells of the protected attributes.

    Cell ids are assigned in lexicographic order of the value-index tuples,
    attributes in declaration order, so the mapping is a bijection and stable
    across runs.
    """

    names: tuple[str, ...]
    values: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.names or len(self.names) != len(self.values):
            raise ValueError("need one value alphabet per attribute name")
        if len(set(self.names)) != len(self.names):
            raise ValueError("attribute names must be unique")
        for name, vals in zip(self.names, self.values):
            if len(vals) < 2:
                raise ValueError(f"attribute {name!r} needs at least 2 values")
            if len(set(vals)) != len(vals):
                raise ValueError(f"attribute {name!r} has duplicate values")

    @property
    def n_attributes(self) -> int:
        return len(self.names)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.values)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cardinalities))

    def cell_id(self, value_indices: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(value_indices), self.cardinalities))

    def cell_ids(self, value_index_rows: np.ndarray) -> np.ndarray:
        """Vectorized cell ids for an (n x p) matrix of value indices."""
        rows = np.asarray(value_index_rows, dtype=int)
        return np.ravel_multi_index(tuple(rows.T), self.cardinalities)

    def cell_values(self, cell_id: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(cell_id, self.cardinalities))

    def cell_labels(self, cell_id: int) -> tuple[str, ...]:
        return tuple(
            self.values[a][v] for a, v in enumerate(self.cell_values(cell_id))
        )

    def cell_name(self, cell_id: int) -> str:
        parts = self.cell_labels(cell_id)
        return ",".join(f"{n}={v}" for n, v in zip(self.names, parts))

    def subspace(self, keep: Sequence[int]) -> "GroupSpace":
        keep = tuple(keep)
        return GroupSpace(
            names=tuple(self.names[a] for a in keep),
            values=tuple(self.values[a] for a in keep),
        )

    def attribute_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown protected attribute {name!r}") from None


@dataclass(frozen=True)
class Subgroup:
    """One protected-group indicator: rows whose listed attributes take the
    listed values.  ``attrs`` are attribute indices in ascending order."""

    attrs: tuple[int, ...]
    values: tuple[int, ...]

    def __post_init__(self):
        if not self.attrs or len(self.attrs) != len(self.values):
            raise ValueError("indicator needs a non-empty attribute subset")
        if tuple(sorted(set(self.attrs))) != self.attrs:
            raise ValueError("indicator attributes must be sorted and unique")

    @property
    def level(self) -> int:
        return len(self.attrs)

    def name(self, space: GroupSpace) -> str:
        return ",".join(
            f"{space.names[a]}={space.values[a][v]}"
            for a, v in zip(self.attrs, self.values)
        )

    def member_cells(self, space: GroupSpace) -> np.ndarray:
        """Ids of all bottom-level cells consistent with this indicator."""
        grid = np.indices(space.cardinalities).reshape(space.n_attributes, -1)
        mask = np.ones(space.n_cells, dtype=bool)
        for a, v in zip(self.attrs, self.values):
            mask &= grid[a] == v
        return np.nonzero(mask)[0]


@dataclass(frozen=True)
class SubgroupCollection:
    space: GroupSpace
    indicators: tuple[Subgroup, ...]

    def __post_init__(self):
        if len(set(self.indicators)) != len(self.indicators):
            raise ValueError("duplicate indicators")

    def __len__(self) -> int:
        return len(self.indicators)

    def __iter__(self):
        return iter(self.indicators)


def enumerate_subgroups(space: GroupSpace, mode: str = "all_levels") -> SubgroupCollection:
    """Enumerate protected-group indicators over *space*.

    ``bottom_only`` yields one indicator per intersectional cell.
    ``all_levels`` yields one indicator per value assignment of every
    non-empty attribute subset (top-level groups, every intermediate
    intersection, and the bottom cells), levels in ascending order.
    """
    if mode not in ("bottom_only", "all_levels"):
        raise ValueError(f"unknown mode {mode!r}")
    p = space.n_attributes
    out: list[Subgroup] = []
    if mode == "bottom_only":
        levels: Iterable[tuple[int, ...]] = [tuple(range(p))]
    else:
        levels = (
            attrs
            for j in range(1, p + 1)
            for attrs in itertools.combinations(range(p), j)
        )
    for attrs in levels:
        for values in itertools.product(*(range(len(space.values[a])) for a in attrs)):
            out.append(Subgroup(attrs=attrs, values=values))
    return SubgroupCollection(space=space, indicators=tuple(out))


@dataclass(frozen=True)
class OutcomeTable:
    """Per-cell outcome counts: ``counts[s, y]`` rows by cell id, columns by
    outcome index.  Integer-valued for hard counts, real-valued for soft
    counts.  Cells with zero total are flagged empty and excluded from every
    metric maximum."""

    space: GroupSpace
    outcomes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = _frozen_array(self.counts)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 2 or counts.shape != (self.space.n_cells, len(self.outcomes)):
            raise ValueError(
                f"counts must be (cells x outcomes) = "
                f"({self.space.n_cells} x {len(self.outcomes)}), got {counts.shape}"
            )
        if len(self.outcomes) < 2:
            raise ValueError("need at least 2 outcomes")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise ValueError("counts must be finite and non-negative")

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def supported(self) -> np.ndarray:
        return self.totals > 0

    @property
    def empty_cells(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.nonzero(~self.supported)[0])

    def to_text(self) -> str:
        """Plain text rendering: cell tuple, per-outcome counts, total."""
        header = ["cell"] + [f"n[{y}]" for y in self.outcomes] + ["total"]
        rows = [header]
        totals = self.totals
        for s in range(self.space.n_cells):
            cells = "(" + ", ".join(self.space.cell_labels(s)) + ")"
            rows.append(
                [cells]
                + [format(c, "g") for c in self.counts[s]]
                + [format(totals[s], "g")]
            )
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = [
            "  ".join(f"{v:<{w}}" for v, w in zip(r, widths)).rstrip() for r in rows
        ]
        return "\n".join(lines)


def build_table(data, source: str = "labels", model=None) -> OutcomeTable:
    """Accumulate an OutcomeTable from a dataset.

    ``labels``: integer counts of the observed outcomes per cell.
    ``classifier_hard``: counts of predicted argmax classes (ties broken
    toward the lowest class index).
    ``classifier_soft``: counts[s, y] = sum of predicted P(y|x) over the rows
    of cell s.
    """
    if source not in ("labels", "classifier_hard", "classifier_soft"):
        raise ValueError(f"unknown source {source!r}")
    space = data.space
    outcomes = data.schema.outcome_values
    n_cells, n_out = space.n_cells, len(outcomes)
    counts = np.zeros((n_cells, n_out))
    if source == "labels":
        np.add.at(counts, (data.group_index, data.outcome), 1.0)
    else:
        if model is None:
            raise ValueError(f"source {source!r} requires a classifier")
        from .model import forward

        if model.n_features != data.features.shape[1]:
            raise ValueError(
                f"model expects {model.n_features} features, "
                f"data has {data.features.shape[1]}"
            )
        if model.n_outcomes != n_out:
            raise ValueError(
                f"model predicts {model.n_outcomes} outcomes, data defines {n_out}"
            )
        probs = forward(model, data.features)
        if source == "classifier_hard":
            np.add.at(counts, (data.group_index, np.argmax(probs, axis=1)), 1.0)
        else:
            np.add.at(counts, data.group_index, probs)
    return OutcomeTable(space=space, outcomes=outcomes, counts=counts)


def normalize_subset(space: GroupSpace, keep) -> tuple[int, ...]:
    """Resolve a subset given as names or indices into sorted attribute
    indices (original attribute order is always preserved)."""
    idx = []
    for k in keep:
        idx.append(space.attribute_index(k) if isinstance(k, str) else int(k))
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate attributes in subset")
    for a in idx:
        if not 0 <= a < space.n_attributes:
            raise ValueError(f"attribute index {a} out of range")
    return tuple(sorted(idx))


def project(table: OutcomeTable, keep) -> OutcomeTable:
    """Marginalize an OutcomeTable onto a non-empty proper attribute subset
    by summing counts across the dropped attributes."""
    keep_idx = normalize_subset(table.space, keep)
    p = table.space.n_attributes
    if not keep_idx:
        raise ValueError("subset must be non-empty")
    if len(keep_idx) == p:
        raise ValueError("subset must be a proper subset of the attributes")
    cards = table.space.cardinalities
    cube = table.counts.reshape(*cards, table.n_outcomes)
    drop = tuple(a for a in range(p) if a not in keep_idx)
    reduced = cube.sum(axis=drop)
    sub = table.space.subspace(keep_idx)
    return OutcomeTable(
        space=sub,
        outcomes=table.outcomes,
        counts=reduced.reshape(sub.n_cells, table.n_outcomes),
    )
