"""Report serialization: the JSON fairness report, the flat per-group CSV,
the subset-audit CSV, and the optional figures rendered alongside them.

Outputs are a pure function of the inputs (no timestamps), so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

from .metrics import FairnessReport, SubsetAudit


def report_to_dict(report: FairnessReport) -> dict:
    return {
        "epsilon_overall": report.epsilon_overall,
        "epsilon_per_group": report.epsilon_per_group,
        "gamma_overall": report.gamma_overall,
        "gamma_per_group": report.gamma_per_group,
        "bias_amplification_df": report.bias_amplification_df,
        "bias_amplification_sf": report.bias_amplification_sf,
        "dfc_epsilon": report.dfc_epsilon,
        "gini_df": report.gini_df,
        "gini_sf": report.gini_sf,
        "eighty_pct_pass": report.eighty_pct_pass,
        "estimator": {"kind": report.estimator.kind, "alpha": report.estimator.alpha},
        "empty_cells": list(report.empty_cells),
        "metadata": report.metadata,
    }


def write_report_json(report: FairnessReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")
    return path


def write_per_group_csv(report: FairnessReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_tuple", "size", "weight", "epsilon", "gamma"])
        for row in report.groups_detail:
            writer.writerow(
                [
                    row.name,
                    format(row.size, "g"),
                    repr(row.weight),
                    "" if row.epsilon is None else repr(row.epsilon),
                    "" if row.gamma is None else repr(row.gamma),
                ]
            )
    return path


def write_subset_audit_csv(
    eps_audit: Sequence[SubsetAudit], gamma_audit: Sequence[SubsetAudit], path
) -> Path:
    """Intersectionality audit table: per attribute subset, the epsilon and
    gamma values with their violation flags (epsilon never violates; gamma
    may)."""
    by_attrs = {a.attrs: a for a in gamma_audit}
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subset", "epsilon", "epsilon_ok", "gamma", "gamma_violated"])
        for audit in eps_audit:
            g = by_attrs.get(audit.attrs)
            writer.writerow(
                [
                    audit.name,
                    repr(audit.value),
                    "yes" if audit.ok else "no",
                    "" if g is None else repr(g.value),
                    "" if g is None else ("yes" if not g.ok else "no"),
                ]
            )
    return path


def format_summary(report: FairnessReport, label: str = "") -> str:
    """Human-readable block for standard output."""

    def fmt(v, digits=6):
        if v is None:
            return "n/a"
        if isinstance(v, bool):
            return "PASS" if v else "FAIL"
        return f"{v:.{digits}g}"

    lines = []
    if label:
        lines.append(f"== {label} ==")
    lines.append(f"estimator:            {report.estimator.describe()}")
    lines.append(f"epsilon-DF overall:   {fmt(report.epsilon_overall)}")
    if "epsilon_witness" in report.metadata:
        lines.append(f"  witness:            {report.metadata['epsilon_witness']}")
    lines.append(f"gamma-SF overall:     {fmt(report.gamma_overall)}")
    ratio = report.metadata.get("eighty_pct_worst_ratio")
    verdict = fmt(report.eighty_pct_pass)
    if ratio is not None:
        verdict += f" (worst ratio {ratio:.4f})"
    lines.append(f"80% rule:             {verdict}")
    lines.append(f"Gini (epsilon):       {fmt(report.gini_df)}")
    lines.append(f"Gini (gamma):         {fmt(report.gini_sf)}")
    if report.bias_amplification_df is not None:
        lines.append(f"bias amplification (epsilon): {fmt(report.bias_amplification_df)}")
    if report.bias_amplification_sf is not None:
        lines.append(f"bias amplification (gamma):   {fmt(report.bias_amplification_sf)}")
    if report.dfc_epsilon is not None:
        lines.append(f"confounder-stratified epsilon: {fmt(report.dfc_epsilon)}")
        per = report.metadata.get("dfc_per_stratum", {})
        for c, v in per.items():
            lines.append(f"  stratum {c}: {fmt(v)}")
    if report.empty_cells:
        lines.append(f"empty cells (excluded from maxima): {', '.join(report.empty_cells)}")
    return "\n".join(lines)


def format_subset_audit(
    eps_audit: Sequence[SubsetAudit], gamma_audit: Optional[Sequence[SubsetAudit]]
) -> str:
    by_attrs = {a.attrs: a for a in (gamma_audit or ())}
    width = max(len(a.name) for a in eps_audit)
    lines = [f"{'subset':<{width}}  {'epsilon':>10}  ok   {'gamma':>10}  violated"]
    for audit in eps_audit:
        g = by_attrs.get(audit.attrs)
        gamma_txt = f"{g.value:>10.6f}" if g else " " * 10
        flag = ("yes" if not g.ok else "no") if g else ""
        lines.append(
            f"{audit.name:<{width}}  {audit.value:>10.6f}  "
            f"{'yes' if audit.ok else 'NO!':<4} {gamma_txt}  {flag}"
        )
    return "\n".join(lines)
