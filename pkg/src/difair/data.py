"""Tabular data ingestion under a declarative schema, splits, and the
built-in synthetic scenarios.

A schema is a JSON document listing the columns (categorical, continuous,
outcome, protected), the outcome's positive label, and the missing-value
policy.  Protected and categorical columns may carry a ``map`` that collapses
raw labels onto the declared alphabet (``"*"`` catches everything else),
which is how the shipped census/recidivism schemas binarize their protected
attributes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .groups import GroupSpace, OutcomeTable
from .metrics import ProbTable

COLUMN_KINDS = ("categorical", "continuous", "outcome", "protected")
MISSING_TOKENS = ("", "?")


class SchemaError(ValueError):
    """The schema is malformed or the data contradicts it."""


class DataFormatError(ValueError):
    """The CSV file itself is malformed."""


@dataclass(frozen=True)
class SchemaColumn:
    name: str
    kind: str
    values: Optional[tuple[str, ...]] = None
    value_map: Optional[dict[str, str]] = None
    in_features: bool = True

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "continuous":
            if self.values is not None:
                raise SchemaError(f"column {self.name!r}: continuous columns take no alphabet")
        else:
            if not self.values:
                raise SchemaError(f"column {self.name!r}: {self.kind} columns must list their value alphabet")
            if len(set(self.values)) != len(self.values):
                raise SchemaError(f"column {self.name!r}: duplicate values in alphabet")
        if self.value_map:
            for target in self.value_map.values():
                if self.values and target not in self.values:
                    raise SchemaError(
                        f"column {self.name!r}: map target {target!r} not in the alphabet"
                    )

    def resolve(self, raw: str) -> str:
        """Collapse a raw label onto the alphabet via the optional map."""
        if self.value_map:
            if raw in self.value_map:
                return self.value_map[raw]
            if raw not in (self.values or ()) and "*" in self.value_map:
                return self.value_map["*"]
        return raw


@dataclass(frozen=True)
class Schema:
    columns: tuple[SchemaColumn, ...]
    outcome_positive_label: str
    missing_policy: str = "drop_row"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if self.missing_policy not in ("drop_row", "error"):
            raise SchemaError(f"unknown missing_policy {self.missing_policy!r}")
        outcomes = [c for c in self.columns if c.kind == "outcome"]
        if len(outcomes) != 1:
            raise SchemaError(f"schema must declare exactly one outcome column, found {len(outcomes)}")
        if not any(c.kind == "protected" for c in self.columns):
            raise SchemaError("schema must declare at least one protected column")
        if self.outcome_positive_label not in outcomes[0].values:
            raise SchemaError(
                f"outcome_positive_label {self.outcome_positive_label!r} "
                f"is not in the outcome alphabet"
            )

    @property
    def outcome_column(self) -> SchemaColumn:
        return next(c for c in self.columns if c.kind == "outcome")

    @property
    def outcome_values(self) -> tuple[str, ...]:
        return self.outcome_column.values

    @property
    def positive_index(self) -> int:
        return self.outcome_values.index(self.outcome_positive_label)

    @property
    def protected_columns(self) -> tuple[SchemaColumn, ...]:
        return tuple(c for c in self.columns if c.kind == "protected")

    def group_space(self) -> GroupSpace:
        return GroupSpace(
            names=tuple(c.name for c in self.protected_columns),
            values=tuple(c.values for c in self.protected_columns),
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        try:
            cols = []
            for c in doc["columns"]:
                cols.append(
                    SchemaColumn(
                        name=c["name"],
                        kind=c["kind"],
                        values=tuple(c["values"]) if c.get("values") is not None else None,
                        value_map=dict(c["map"]) if c.get("map") else None,
                        in_features=bool(c.get("in_features", True)),
                    )
                )
            return cls(
                columns=tuple(cols),
                outcome_positive_label=doc["outcome_positive_label"],
                missing_policy=doc.get("missing_policy", "drop_row"),
            )
        except KeyError as exc:
            raise SchemaError(f"schema is missing required field {exc}") from None

    @classmethod
    def from_json(cls, path) -> "Schema":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry: dict = {"name": c.name, "kind": c.kind}
            if c.values is not None:
                entry["values"] = list(c.values)
            if c.value_map:
                entry["map"] = dict(c.value_map)
            if not c.in_features:
                entry["in_features"] = False
            cols.append(entry)
        return {
            "columns": cols,
            "outcome_positive_label": self.outcome_positive_label,
            "missing_policy": self.missing_policy,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class FeatureScaler:
    """Standardization fitted on a training split, kept with the model so
    later audits reproduce training-time inputs."""

    columns: tuple[int, ...]
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        out = np.array(features, dtype=float)
        cols = list(self.columns)
        out[:, cols] = (out[:, cols] - self.mean) / self.sd
        return out


@dataclass(frozen=True)
class Dataset:
    """Encoded tabular data: features after one-hot/standardization, outcome
    class indices, protected value indices, and each row's intersectional
    cell id."""

    schema: Schema
    features: np.ndarray
    feature_names: tuple[str, ...]
    outcome: np.ndarray
    protected: np.ndarray
    group_index: np.ndarray
    continuous_columns: tuple[int, ...]
    categorical_codes: dict[str, np.ndarray] = None
    scaler: Optional[FeatureScaler] = None

    def __post_init__(self):
        for name in ("features", "outcome", "protected", "group_index"):
            a = np.asarray(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.categorical_codes is None:
            object.__setattr__(self, "categorical_codes", {})
        for a in self.categorical_codes.values():
            a.setflags(write=False)
        n = self.features.shape[0]
        if not (len(self.outcome) == len(self.protected) == len(self.group_index) == n):
            raise ValueError("all index vectors must share the row count")
        if self.features.shape[1] != len(self.feature_names):
            raise ValueError("feature_names must align with the feature matrix")

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def space(self) -> GroupSpace:
        return self.schema.group_space()

    @property
    def n_outcomes(self) -> int:
        return len(self.schema.outcome_values)

    def decode_protected(self, row: int) -> tuple[str, ...]:
        cols = self.schema.protected_columns
        return tuple(cols[j].values[v] for j, v in enumerate(self.protected[row]))

    def take(self, rows: np.ndarray) -> "Dataset":
        return replace(
            self,
            features=self.features[rows],
            outcome=self.outcome[rows],
            protected=self.protected[rows],
            group_index=self.group_index[rows],
            categorical_codes={k: v[rows] for k, v in self.categorical_codes.items()},
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    dev_fraction: float
    test_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.dev_fraction, self.test_fraction)
        if any(f < 0 or f > 1 for f in fracs):
            raise ValueError("fractions must lie in [0, 1]")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(fracs)!r}")


def _is_missing(raw: str) -> bool:
    return raw in MISSING_TOKENS


def _encode_rows(rows: list[list[str]], schema: Schema, origin: str) -> Dataset:
    """Shared encoder behind load_csv and the synthetic generators.  ``rows``
    hold raw string cells in schema column order; row i corresponds to data
    line numbers carried separately by the caller via exceptions."""
    space = schema.group_space()
    prot_names = [c.name for c in schema.protected_columns]
    n = len(rows)
    feature_cols: list[np.ndarray] = []
    feature_names: list[str] = []
    continuous: list[int] = []
    outcome = np.zeros(n, dtype=int)
    protected = np.zeros((n, len(prot_names)), dtype=int)
    categorical_codes: dict[str, np.ndarray] = {}

    by_name = {c.name: j for j, c in enumerate(schema.columns)}
    prot_pos = {c.name: k for k, c in enumerate(schema.protected_columns)}

    for col in schema.columns:
        j = by_name[col.name]
        raw = [r[j] for r in rows]
        if col.kind == "continuous":
            vals = np.empty(n)
            for i, v in enumerate(raw):
                try:
                    vals[i] = float(v)
                except ValueError:
                    raise DataFormatError(
                        f"{origin}: column {col.name!r}: cannot parse {v!r} as a number (row {i + 1})"
                    ) from None
            continuous.append(len(feature_names))
            feature_names.append(col.name)
            feature_cols.append(vals)
            continue
        index = {label: k for k, label in enumerate(col.values)}
        codes = np.empty(n, dtype=int)
        for i, v in enumerate(raw):
            label = col.resolve(v)
            if label not in index:
                raise SchemaError(
                    f"{origin}: column {col.name!r}: unknown label {v!r} (row {i + 1})"
                )
            codes[i] = index[label]
        if col.kind == "outcome":
            outcome = codes
            continue
        if col.kind == "protected":
            protected[:, prot_pos[col.name]] = codes
        else:
            categorical_codes[col.name] = codes
        if col.in_features:
            onehot = np.zeros((n, len(col.values)))
            onehot[np.arange(n), codes] = 1.0
            for k, label in enumerate(col.values):
                feature_names.append(f"{col.name}={label}")
                feature_cols.append(onehot[:, k])

    features = (
        np.column_stack(feature_cols) if feature_cols else np.zeros((n, 0))
    )
    group_index = space.cell_ids(protected) if n else np.zeros(0, dtype=int)
    return Dataset(
        schema=schema,
        features=features,
        feature_names=tuple(feature_names),
        outcome=outcome,
        protected=protected,
        group_index=group_index,
        continuous_columns=tuple(continuous),
        categorical_codes=categorical_codes,
    )


def load_csv(path, schema: Schema) -> Dataset:
    """Load and encode a headered CSV under *schema*.  Cells are
    whitespace-stripped; extra columns not named by the schema are ignored;
    rows with missing values ("" or "?") follow the schema's missing
    policy."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        positions = []
        for col in schema.columns:
            if col.name not in header:
                raise SchemaError(f"{path}: header is missing schema column {col.name!r}")
            positions.append(header.index(col.name))
        rows: list[list[str]] = []
        keep_lines: list[int] = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DataFormatError(
                    f"{path}: expected {len(header)} columns, got {len(record)} (line {lineno})"
                )
            cells = [record[p].strip() for p in positions]
            if any(_is_missing(c) for c in cells):
                if schema.missing_policy == "error":
                    missing = schema.columns[
                        [_is_missing(c) for c in cells].index(True)
                    ].name
                    raise DataFormatError(
                        f"{path}: missing value in column {missing!r} (line {lineno})"
                    )
                continue
            rows.append(cells)
            keep_lines.append(lineno)
    try:
        return _encode_rows(rows, schema, origin=str(path))
    except (SchemaError, DataFormatError) as exc:
        # rewrite the row index in the message as the original line number
        msg = str(exc)
        if "(row " in msg:
            prefix, _, tail = msg.rpartition("(row ")
            row_i = int(tail.rstrip(")"))
            msg = f"{prefix}(line {keep_lines[row_i - 1]})"
        raise type(exc)(msg) from None


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic disjoint train/dev/test partition.  Sizes follow the
    largest-remainder rule so they always sum to n.  Continuous feature
    columns are standardized with statistics computed on the training split
    only, and the fitted scaler is attached to every split."""
    n = data.n_rows
    fracs = np.array([spec.train_fraction, spec.dev_fraction, spec.test_fraction])
    base = np.floor(fracs * n).astype(int)
    remainder = n - base.sum()
    if remainder:
        order = np.argsort(-(fracs * n - base), kind="stable")
        for k in order[:remainder]:
            base[k] += 1
    perm = np.random.default_rng(spec.seed).permutation(n)
    bounds = np.cumsum(base)
    parts = [perm[: bounds[0]], perm[bounds[0]: bounds[1]], perm[bounds[1]:]]
    datasets = [data.take(np.sort(idx)) for idx in parts]

    cols = data.continuous_columns
    if cols and datasets[0].n_rows:
        train_feats = datasets[0].features[:, list(cols)]
        mean = train_feats.mean(axis=0)
        sd = train_feats.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        scaler = FeatureScaler(columns=cols, mean=mean, sd=sd)
        datasets = [
            replace(d, features=scaler.apply(d.features), scaler=scaler)
            for d in datasets
        ]
    return tuple(datasets)


# ---------------------------------------------------------------------------
# Synthetic scenarios
# ---------------------------------------------------------------------------


def _norm_sf(x: float) -> float:
    """Standard normal survival function via the stdlib erf."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _gaussian_schema() -> Schema:
    return Schema(
        columns=(
            SchemaColumn("group", "protected", values=("1", "2")),
            SchemaColumn("score", "continuous"),
            SchemaColumn("hired", "outcome", values=("no", "yes")),
        ),
        outcome_positive_label="yes",
    )


def _gaussian_rows(
    mu1: float, mu2: float, sigma: float, threshold: float, n: int, seed: int
) -> list[list[str]]:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    group = rng.integers(0, 2, size=n)
    score = rng.normal(np.where(group == 0, mu1, mu2), sigma)
    hired = score >= threshold
    return [
        [("1", "2")[g], repr(float(x)), ("no", "yes")[int(h)]]
        for g, x, h in zip(group, score, hired)
    ]


def synth_gaussian_hiring(
    mu1: float, mu2: float, sigma: float, threshold: float, n: int, seed: int
) -> Dataset:
    """Two equiprobable groups with normally distributed test scores; the
    outcome is a hard threshold on the score."""
    rows = _gaussian_rows(mu1, mu2, sigma, threshold, n, seed)
    return _encode_rows(rows, _gaussian_schema(), origin="synth_gaussian_hiring")


def gaussian_hiring_population(
    mu1: float, mu2: float, sigma: float, threshold: float
) -> ProbTable:
    """Closed-form population outcome probabilities of the threshold-hiring
    scenario (normal tail masses), as a two-cell probability table."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    schema = _gaussian_schema()
    space = schema.group_space()
    p_yes = [_norm_sf((threshold - mu) / sigma) for mu in (mu1, mu2)]
    probs = np.array([[1.0 - p, p] for p in p_yes])
    return ProbTable(
        space=space,
        outcomes=schema.outcome_values,
        probs=probs,
        support=np.array([True, True]),
        group_weights=np.array([0.5, 0.5]),
    )


SIMPSONS_CELLS = {
    # (gender, race) -> (admitted, total)
    ("A", "1"): (81, 87),
    ("A", "2"): (192, 263),
    ("B", "1"): (234, 270),
    ("B", "2"): (55, 80),
}


def _simpsons_schema() -> Schema:
    return Schema(
        columns=(
            SchemaColumn("gender", "protected", values=("A", "B")),
            SchemaColumn("race", "protected", values=("1", "2")),
            SchemaColumn("admitted", "outcome", values=("no", "yes")),
        ),
        outcome_positive_label="yes",
    )


def synth_simpsons() -> OutcomeTable:
    """The built-in 700-individual admissions table exhibiting a Simpson's
    reversal across two binary protected attributes."""
    schema = _simpsons_schema()
    space = schema.group_space()
    counts = np.zeros((space.n_cells, 2))
    for (g, r), (admitted, total) in SIMPSONS_CELLS.items():
        cell = space.cell_id((("A", "B").index(g), ("1", "2").index(r)))
        counts[cell] = (total - admitted, admitted)
    return OutcomeTable(space=space, outcomes=schema.outcome_values, counts=counts)


def _simpsons_rows() -> list[list[str]]:
    rows = []
    for (g, r), (admitted, total) in SIMPSONS_CELLS.items():
        rows.extend([[g, r, "yes"]] * admitted)
        rows.extend([[g, r, "no"]] * (total - admitted))
    return rows


def synth_simpsons_dataset() -> Dataset:
    return _encode_rows(_simpsons_rows(), _simpsons_schema(), origin="synth_simpsons")


def _biased_schema(n_features: int) -> Schema:
    cols = [SchemaColumn("group", "protected", values=("maj", "min"))]
    cols += [SchemaColumn(f"f{i}", "continuous") for i in range(n_features)]
    cols.append(SchemaColumn("label", "outcome", values=("0", "1")))
    return Schema(columns=tuple(cols), outcome_positive_label="1")


def _biased_rows(
    p_minority: float,
    p_pos_majority: float,
    p_pos_minority: float,
    n_features: int,
    n: int,
    seed: int,
) -> list[list[str]]:
    for name, p in (
        ("p_minority", p_minority),
        ("p_pos_majority", p_pos_majority),
        ("p_pos_minority", p_pos_minority),
    ):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    minority = rng.random(n) < p_minority
    pos_rate = np.where(minority, p_pos_minority, p_pos_majority)
    label = rng.random(n) < pos_rate
    # feature means: +-1 by outcome, +-0.5 by group, unit noise
    mean = np.where(label, 1.0, -1.0) + np.where(minority, -0.5, 0.5)
    feats = rng.normal(mean[:, None], 1.0, size=(n, n_features))
    rows = []
    for i in range(n):
        rows.append(
            [("maj", "min")[int(minority[i])]]
            + [repr(float(v)) for v in feats[i]]
            + [("0", "1")[int(label[i])]]
        )
    return rows


def synth_biased(
    p_minority: float,
    p_pos_majority: float,
    p_pos_minority: float,
    n_features: int,
    n: int,
    seed: int,
) -> Dataset:
    """Two-group data with group-dependent positive rates and continuous
    features informative of both the outcome and the group, so a classifier
    can learn (and a fairness penalty must unlearn) the bias."""
    rows = _biased_rows(p_minority, p_pos_majority, p_pos_minority, n_features, n, seed)
    return _encode_rows(rows, _biased_schema(n_features), origin="synth_biased")


def biased_population(
    p_minority: float, p_pos_majority: float, p_pos_minority: float
) -> ProbTable:
    """Exact two-group label table of the biased scenario."""
    schema = _biased_schema(0)
    return ProbTable(
        space=schema.group_space(),
        outcomes=schema.outcome_values,
        probs=np.array(
            [
                [1.0 - p_pos_majority, p_pos_majority],
                [1.0 - p_pos_minority, p_pos_minority],
            ]
        ),
        support=np.array([True, True]),
        group_weights=np.array([1.0 - p_minority, p_minority]),
    )


def write_scenario_csv(kind: str, params: dict, out_path) -> tuple[Path, Path]:
    """Write a synthetic scenario as a loadable CSV plus its schema file
    (``<out>.schema.json``).  Returns both paths."""
    out_path = Path(out_path)
    if kind == "gaussian":
        schema = _gaussian_schema()
        rows = _gaussian_rows(
            params["mu1"], params["mu2"], params["sigma"],
            params["threshold"], params["n"], params["seed"],
        )
    elif kind == "simpsons":
        schema = _simpsons_schema()
        rows = _simpsons_rows()
    elif kind == "biased":
        schema = _biased_schema(params["n_features"])
        rows = _biased_rows(
            params["p_minority"], params["p_pos_majority"], params["p_pos_minority"],
            params["n_features"], params["n"], params["seed"],
        )
    else:
        raise ValueError(f"unknown scenario {kind!r}")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in schema.columns])
        writer.writerows(rows)
    schema_path = out_path.with_suffix(out_path.suffix + ".schema.json")
    schema.to_json(schema_path)
    return out_path, schema_path


def example_schema_path(name: str) -> Path:
    """Path to a schema shipped with the package (``adult`` or ``compas``)."""
    ref = resources.files("difair") / "schemas" / f"{name}.schema.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no shipped schema named {name!r}")
    return Path(str(ref))
