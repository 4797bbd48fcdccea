"""Report tables written as aligned text, CSV and JSON."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .estimate import EstimationResult, ScoreTestResult
from .netpanel import WaveSummary
from .nonparam import InfluenceTable


def _cell(v: Any, digits: int) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return "n/a" if math.isnan(v) else f"{v:.{digits}f}"
    return str(v)


def _machine(v: Any):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class Table:
    title: str
    columns: list[str]
    rows: list[list[Any]]
    digits: int = 3
    notes: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        cells = [self.columns] + [[_cell(v, self.digits) for v in r] for r in self.rows]
        widths = [max(len(r[c]) for r in cells) for c in range(len(self.columns))]
        fmt = lambda r: "  ".join(s.ljust(w) if c == 0 else s.rjust(w)
                                  for c, (s, w) in enumerate(zip(r, widths))).rstrip()
        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        lines = [self.title, rule, fmt(cells[0]), rule] + [fmt(r) for r in cells[1:]] + [rule]
        return "\n".join(lines + self.notes) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow(["" if _machine(v) is None else repr(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue()

    def to_records(self) -> list[dict]:
        return [{c: _machine(v) for c, v in zip(self.columns, r)} for r in self.rows]

    def to_json(self) -> str:
        return json.dumps({"title": self.title, "rows": self.to_records()}, indent=2) + "\n"

    def write(self, directory, stem: str) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{stem}.txt").write_text(self.to_text())
        (d / f"{stem}.csv").write_text(self.to_csv())
        (d / f"{stem}.json").write_text(self.to_json())


def describe_table(summaries: Sequence[WaveSummary]) -> Table:
    return Table("Network descriptives by wave",
                 ["wave", "ties", "max_outdegree", "outdegree_1", "outdegree_0"],
                 [[s.label, s.ties, s.max_outdegree, s.n_outdegree_one, s.n_outdegree_zero]
                  for s in summaries])


def influence_tables(t: InfluenceTable) -> tuple[Table, Table]:
    cats = Table("Common history by tie category",
                 ["category", "n", "mean_total_years", "mean_duration", "mean_count"],
                 [[c.category, c.n, c.mean_total_years, c.mean_duration, c.mean_count]
                  for c in t.categories])
    comps = Table("Two-sample KS comparisons",
                  ["comparison", "measure", "D", "p"],
                  [[f"{a} vs {b}", c.measure, c.statistic, c.p_value]
                   for c in t.comparisons for a, b in [c.groups]], digits=4,
                  notes=[f"p-values: {t.metadata.get('p_method')}, "
                         f"{t.metadata.get('resamples')} resamples, seed {t.metadata.get('seed')}"])
    return cats, comps


def estimate_table(r: EstimationResult) -> Table:
    rows = [[x["effect"], x["parametrization"] or "rate", x["estimate"], x["se"], x["t_convergence"]]
            for x in r.table()]
    status = "converged" if r.converged else "NOT converged"
    return Table("Parameter estimates", ["effect", "parametrization", "estimate", "se", "t_conv"], rows,
                 notes=[f"{status}; max |t| = {r.max_abs_t:.3f}"])


def score_table(s: ScoreTestResult) -> Table:
    return Table("Score test", ["effect", "statistic", "df", "p"], [[s.tested_effect, s.statistic, s.df, s.p_value]],
                 digits=4)


def magnitude_table(grid: list[dict]) -> Table:
    ks = [k for k in grid[0] if k not in ("distance", "ln_distance")]
    return Table("Odds multipliers by distance and common influences",
                 ["distance", "ln_distance"] + ks,
                 [[g["distance"], g["ln_distance"]] + [g[k] for k in ks] for g in grid], digits=2)


def sweep_table(rows: list[dict], effect: str) -> Table:
    return Table(f"Threshold sweep: {effect}", ["threshold", "estimate", "se", "converged", "max_abs_t", "note"],
                 [[r["threshold"], r.get("estimate"), r.get("se"), r.get("converged"), r.get("max_abs_t"),
                   r.get("note", "")] for r in rows])


def simulation_table(effect_names: Sequence[str], mean, sd, observed=None) -> Table:
    cols = ["period", "statistic", "mean", "sd"] + (["observed"] if observed is not None else [])
    rows = []
    for t in range(len(mean)):
        for k, name in enumerate(effect_names):
            row = [t + 1, name, float(mean[t][k]), float(sd[t][k])]
            if observed is not None:
                row.append(float(observed[t][k]))
            rows.append(row)
    return Table("Simulated period statistics", cols, rows)
