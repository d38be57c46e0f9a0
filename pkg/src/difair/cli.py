"""Command-line surface: audits, training runs, synthetic scenarios, and the
randomized property harness.

Exit codes: 0 success, 1 property failure, 2 input error.  Report files are
a pure function of the inputs and seeds, so identical invocations produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataFormatError,
    Dataset,
    Schema,
    SchemaColumn,
    SchemaError,
    SplitSpec,
    example_schema_path,
    load_csv,
    split,
    write_scenario_csv,
)
from .groups import build_table
from .metrics import (
    EstimatorSpec,
    FairnessReport,
    audit_epsilon_monotonicity,
    audit_gamma_monotonicity,
    build_report,
    epsilon_df,
    epsilon_dfc,
    gamma_sf,
    table_to_probs,
)
from .model import load_checkpoint, save_checkpoint
from .properties import GRADIENT_TRIAL_CAP, run_all
from .report import (
    format_subset_audit,
    format_summary,
    write_per_group_csv,
    write_report_json,
    write_subset_audit_csv,
)
from .train import DEFAULT_LAMBDA, PenaltySpec, TrainConfig, train as run_training


def _resolve_schema(value: str) -> Schema:
    path = Path(value)
    if not path.exists() and "/" not in value and "\\" not in value:
        try:
            path = example_schema_path(value)
        except FileNotFoundError:
            pass
    if not path.exists():
        raise SchemaError(f"schema file not found: {value}")
    return Schema.from_json(path)


def _apply_overrides(schema: Schema, protected: str | None, outcome: str | None,
                     positive: str | None) -> Schema:
    cols = {c.name: c for c in schema.columns}
    if outcome:
        if outcome not in cols:
            raise SchemaError(f"--outcome column {outcome!r} is not in the schema")
        if cols[outcome].values is None:
            raise SchemaError(f"--outcome column {outcome!r} has no value alphabet")
        for name, c in cols.items():
            if c.kind == "outcome":
                cols[name] = replace(c, kind="categorical")
        cols[outcome] = replace(cols[outcome], kind="outcome")
    if protected:
        names = [p.strip() for p in protected.split(",") if p.strip()]
        for name in names:
            if name not in cols:
                raise SchemaError(f"--protected column {name!r} is not in the schema")
            if cols[name].values is None:
                raise SchemaError(
                    f"--protected column {name!r} is continuous; "
                    "continuous protected attributes are unsupported"
                )
            if cols[name].kind == "outcome":
                raise SchemaError(f"--protected column {name!r} is the outcome")
        for name, c in cols.items():
            if c.kind == "protected" and name not in names:
                cols[name] = replace(c, kind="categorical")
        for name in names:
            cols[name] = replace(cols[name], kind="protected")
    positive_label = positive if positive else schema.outcome_positive_label
    out_col = next(c for c in cols.values() if c.kind == "outcome")
    if positive_label not in out_col.values:
        raise SchemaError(
            f"positive label {positive_label!r} is not in the outcome alphabet"
        )
    return Schema(
        columns=tuple(cols[c.name] for c in schema.columns),
        outcome_positive_label=positive_label,
        missing_policy=schema.missing_policy,
    )


def _label_estimator(kind: str, alpha: float) -> EstimatorSpec:
    # label/hard-count tables have no soft counts; "soft" falls back to the
    # smoothed hard-count estimator with the same alpha
    if kind == "empirical":
        return EstimatorSpec("empirical")
    return EstimatorSpec("smoothed", alpha)


def _confounder_tables(data: Dataset, column: str):
    cols = {c.name: c for c in data.schema.columns}
    if column not in cols:
        raise SchemaError(f"--confounder column {column!r} is not in the schema")
    if cols[column].kind == "protected":
        raise SchemaError("--confounder must not be a protected attribute")
    if column not in data.categorical_codes:
        raise SchemaError(f"--confounder column {column!r} must be categorical")
    codes = data.categorical_codes[column]
    tables = {}
    for v, label in enumerate(cols[column].values):
        rows = np.nonzero(codes == v)[0]
        if len(rows):
            tables[label] = build_table(data.take(rows), "labels")
    return tables


def _emit_report(report: FairnessReport, base: Path, suffix: str, table,
                 positive: int, figures: bool, label: str) -> None:
    stem = base if not suffix else Path(f"{base}.{suffix}")
    json_path = write_report_json(report, Path(f"{stem}.json"))
    csv_path = write_per_group_csv(report, Path(f"{stem}.per_group.csv"))
    written = [json_path, csv_path]
    space = table.space
    if space.n_attributes >= 2:
        est = report.estimator
        eps_audit = audit_epsilon_monotonicity(table, est)
        gamma_audit = audit_gamma_monotonicity(table, positive, est)
        written.append(
            write_subset_audit_csv(eps_audit, gamma_audit, Path(f"{stem}.intersectionality.csv"))
        )
        print(format_subset_audit(eps_audit, gamma_audit))
    if figures:
        from .plots import per_group_figure

        written.append(
            per_group_figure(
                report.groups_detail, space.n_attributes,
                Path(f"{stem}.per_group.png"), title=label,
            )
        )
    print("wrote: " + ", ".join(str(p) for p in written))


def cmd_audit(args) -> int:
    schema = _resolve_schema(args.schema)
    schema = _apply_overrides(schema, args.protected, args.outcome, args.positive)
    data = load_csv(args.data, schema)
    positive = schema.positive_index
    est = _label_estimator(args.estimator, args.alpha)
    compute_df = args.metric in ("df", "both")
    compute_sf = args.metric in ("sf", "both")

    table = build_table(data, "labels")
    dfc = None
    if args.confounder:
        strata = _confounder_tables(data, args.confounder)
        dfc = epsilon_dfc(strata, est)
    meta = {
        "artifact_version": __version__,
        "data": str(args.data),
        "n_rows": data.n_rows,
        "alpha": args.alpha,
        "seed": None,
        "source": "labels",
    }
    report = build_report(
        table, est, positive,
        dfc=dfc, compute_df=compute_df, compute_sf=compute_sf, metadata=meta,
    )
    print(format_summary(report, label=f"data: {args.data}"))
    base = Path(args.out).with_suffix("") if Path(args.out).suffix == ".json" else Path(args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    _emit_report(report, base, "", table, positive, not args.no_figures, "data labels")

    if args.model:
        model, scaler = load_checkpoint(args.model)
        scored = replace(data, features=scaler.apply(data.features)) if scaler else data
        for source, est_c in (
            ("classifier_hard", est),
            ("classifier_soft", EstimatorSpec("soft_smoothed", args.alpha)),
        ):
            tbl = build_table(scored, source, model)
            meta_c = dict(meta, source=source, model=str(args.model))
            rep = build_report(
                tbl, est_c, positive,
                baseline=report, compute_df=compute_df, compute_sf=compute_sf,
                metadata=meta_c,
            )
            print()
            print(format_summary(rep, label=f"{source}: {args.model}"))
            _emit_report(rep, base, source, tbl, positive, not args.no_figures, source)
    return 0


def cmd_train(args) -> int:
    schema = _resolve_schema(args.schema)
    schema = _apply_overrides(schema, args.protected, args.outcome, args.positive)
    data = load_csv(args.data, schema)
    dev_fraction = args.dev_fraction
    train_ds, dev_ds, _ = split(
        data, SplitSpec(1.0 - dev_fraction, dev_fraction, 0.0, seed=args.seed)
    )
    positive = schema.positive_index
    est_data = EstimatorSpec("smoothed", args.alpha)

    labels_table = build_table(train_ds, "labels")
    label_probs = table_to_probs(labels_table, est_data)
    if args.target == "data":
        if args.penalty == "sf":
            from .groups import enumerate_subgroups

            target, _ = gamma_sf(
                label_probs, enumerate_subgroups(train_ds.space, "all_levels"), positive
            )
        else:
            target, _ = epsilon_df(label_probs)
    else:
        target = float(args.target)

    lam = DEFAULT_LAMBDA[args.penalty] if args.lam is None else args.lam
    spec = PenaltySpec(
        kind=args.penalty, target=target, lam=lam,
        alpha=args.alpha, positive_outcome=positive,
    )
    cfg = TrainConfig(
        iterations=args.iterations, burn_in=args.burn_in,
        seed=args.seed, learning_rate=args.lr, eval_every=args.eval_every,
    )
    model, trace = run_training(
        train_ds, dev_ds, arch=args.arch, spec=spec, cfg=cfg,
        hidden_layers=args.hidden_layers, hidden_width=args.hidden_width,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.txt", scaler=train_ds.scaler)
    trace.to_csv(out / "trace.csv")
    written = [out / "model.txt", out / "trace.csv"]

    meta = {
        "artifact_version": __version__,
        "data": str(args.data),
        "alpha": args.alpha,
        "seed": args.seed,
        "penalty": args.penalty,
        "target": target,
        "lambda": lam,
        "iterations": args.iterations,
        "burn_in": args.burn_in,
    }
    partitions = [("train", train_ds)]
    if dev_ds.n_rows:
        partitions.append(("dev", dev_ds))
    for part_name, part in partitions:
        data_report = build_report(
            build_table(part, "labels"), est_data, positive,
            metadata=dict(meta, source="labels", partition=part_name),
        )
        write_report_json(data_report, out / f"data_{part_name}.json")
        write_per_group_csv(data_report, out / f"data_{part_name}.per_group.csv")
        print(format_summary(data_report, label=f"{part_name} labels (before)"))
        print()
        for source, est_c in (
            ("classifier_soft", EstimatorSpec("soft_smoothed", args.alpha)),
            ("classifier_hard", est_data),
        ):
            tbl = build_table(part, source, model)
            rep = build_report(
                tbl, est_c, positive, baseline=data_report,
                metadata=dict(meta, source=source, partition=part_name),
            )
            stem = out / f"{part_name}_{source}"
            write_report_json(rep, Path(f"{stem}.json"))
            write_per_group_csv(rep, Path(f"{stem}.per_group.csv"))
            written.extend([Path(f"{stem}.json"), Path(f"{stem}.per_group.csv")])
            print(format_summary(rep, label=f"{part_name} {source} (after)"))
            print()
    if not args.no_figures:
        from .plots import trace_figure

        written.append(trace_figure(trace, out / "trace.png", title="training trace"))
    print("wrote outputs under: " + str(out))
    return 0


def cmd_synth(args) -> int:
    params = {}
    if args.kind == "gaussian":
        params = dict(mu1=args.mu1, mu2=args.mu2, sigma=args.sigma,
                      threshold=args.threshold, n=args.n, seed=args.seed)
    elif args.kind == "biased":
        params = dict(
            p_minority=args.p_minority, p_pos_majority=args.p_pos_majority,
            p_pos_minority=args.p_pos_minority, n_features=args.n_features,
            n=args.n, seed=args.seed,
        )
    csv_path, schema_path = write_scenario_csv(args.kind, params, args.out)
    print(f"wrote {csv_path} and {schema_path}")
    return 0


def cmd_check(args) -> int:
    results = run_all(args.trials, args.seed)
    for r in results:
        print(r.summary())
    ok = all(r.passed for r in results)
    print("OVERALL " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difair",
        description="Intersectional fairness audits and fairness-regularized training.",
    )
    parser.add_argument("--version", action="version", version=f"difair {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_data(p):
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--schema", required=True,
                       help="schema JSON path, or a shipped name (adult, compas)")
        p.add_argument("--protected", default=None,
                       help="comma-separated columns overriding the protected set")
        p.add_argument("--outcome", default=None, help="override the outcome column")
        p.add_argument("--positive", default=None, help="override the positive outcome label")
        p.add_argument("--alpha", type=float, default=1.0, help="smoothing pseudo-count")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    audit = sub.add_parser("audit", help="audit a dataset (and optionally a model)")
    add_common_data(audit)
    audit.add_argument("--out", required=True, help="report path (JSON)")
    audit.add_argument("--estimator", choices=("empirical", "smoothed", "soft"),
                       default="empirical")
    audit.add_argument("--confounder", default=None,
                       help="categorical column defining strata for the confounder-aware audit")
    audit.add_argument("--metric", choices=("df", "sf", "both"), default="both")
    audit.add_argument("--model", default=None, help="model checkpoint to audit")
    audit.set_defaults(fn=cmd_audit)

    tr = sub.add_parser("train", help="train a classifier under a fairness penalty")
    add_common_data(tr)
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--penalty", choices=("none", "df", "sf"), default="none")
    tr.add_argument("--target", default="0.0",
                    help="fairness target (a number, or 'data' for the data's level)")
    tr.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="penalty weight (default 0.1 for df, 1.0 for sf)")
    tr.add_argument("--iterations", type=_positive_int, default=500)
    tr.add_argument("--burn-in", type=int, default=50)
    tr.add_argument("--lr", type=float, default=0.01)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--eval-every", type=_positive_int, default=10)
    tr.add_argument("--dev-fraction", type=float, default=0.2)
    tr.add_argument("--arch", choices=("logistic", "mlp"), default="mlp")
    tr.add_argument("--hidden-layers", type=int, default=3)
    tr.add_argument("--hidden-width", type=int, default=16)
    tr.set_defaults(fn=cmd_train)

    synth = sub.add_parser("synth", help="generate a synthetic scenario CSV + schema")
    synth_sub = synth.add_subparsers(dest="kind", required=True)
    g = synth_sub.add_parser("gaussian", help="threshold hiring on normal scores")
    g.add_argument("--mu1", type=float, default=10.0)
    g.add_argument("--mu2", type=float, default=12.0)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--threshold", type=float, default=10.5)
    g.add_argument("--n", type=_positive_int, default=100000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_synth)
    s = synth_sub.add_parser("simpsons", help="the built-in admissions reversal table")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)
    b = synth_sub.add_parser("biased", help="two-group data with group-dependent rates")
    b.add_argument("--p-minority", type=float, default=0.5)
    b.add_argument("--p-pos-majority", type=float, default=0.8)
    b.add_argument("--p-pos-minority", type=float, default=0.1)
    b.add_argument("--n-features", type=_positive_int, default=4)
    b.add_argument("--n", type=_positive_int, default=20000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_synth)

    check = sub.add_parser("check", help="run the randomized property suites")
    check.add_argument("--trials", type=_positive_int, default=1000)
    check.add_argument("--seed", type=int, default=0)
    check.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SchemaError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
