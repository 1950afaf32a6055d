"""Quantile-score evaluation: pinball loss, score tables, QS ratios.

A forecast made at origin t for horizon h is scored against the
realization dated t+h. Date-window conditioning (evaluation windows,
event episodes) selects records by that realization date; ``by_origin``
switches to the origin date instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeriesPanel, month_index, month_label
from .forecast import QuantileForecastSet


class EvaluationError(ValueError):
    pass


def pinball(u, q: float):
    """Check-function loss rho_q(u) = u (q - 1{u < 0}).

    An error of -x at level q costs (1-q)x while +x costs qx; at q = 0.1
    undershoots are penalized nine times as heavily as overshoots.
    """
    if not 0.0 < q < 1.0:
        raise EvaluationError(f"quantile must lie in (0, 1), got {q}")
    u = np.asarray(u, dtype=float)
    out = u * (q - (u < 0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EventWindow:
    """A labeled date range, e.g. a price collapse or boom episode."""

    label: str
    start: str  # ISO month, inclusive
    end: str  # ISO month, inclusive

    def __post_init__(self):
        if month_index(self.start) >= month_index(self.end):
            raise EvaluationError(f"event window {self.label!r}: start must precede end")

    def contains(self, date: str) -> bool:
        return month_index(self.start) <= month_index(date) <= month_index(self.end)


def realization_date(origin: str, horizon: int) -> str:
    return month_label(month_index(origin) + horizon)


def realized_value(panel: TimeSeriesPanel, variable: str, origin: str, horizon: int):
    """Observed value at origin+h months, or None when not yet observed."""
    target = month_index(origin) + horizon
    last = month_index(panel.dates[-1])
    first = month_index(panel.dates[0])
    if target > last:
        return None
    if target < first:
        raise EvaluationError(f"realization date {month_label(target)} precedes the sample")
    return float(panel.values[target - first, panel.names.index(variable)])


def score_records(
    fset: QuantileForecastSet, panel: TimeSeriesPanel, variable: str
) -> dict:
    """Per-record pinball scores: (model, origin, h, q) -> (error, score).

    Records whose realization lies beyond the sample end are skipped
    (they are not yet observable); everything else must resolve.
    """
    col = fset.variable_names.index(variable)
    out = {}
    for (model_id, origin, h, q), values in fset.records.items():
        y = realized_value(panel, variable, origin, h)
        if y is None:
            continue
        u = y - float(values[col])
        out[(model_id, origin, h, q)] = (u, pinball(u, q))
    return out


@dataclass
class ScoreTable:
    """Average quantile scores per (model, q, h) over an evaluation window."""

    variable: str
    window_label: str
    entries: dict = field(default_factory=dict)  # (model, q, h) -> mean score
    counts: dict = field(default_factory=dict)  # (model, q, h) -> evaluated origins

    def score(self, model: str, q: float, h: int) -> float:
        return self.entries[(model, round(float(q), 10), int(h))]

    def count(self, model: str, q: float, h: int) -> int:
        return self.counts[(model, round(float(q), 10), int(h))]

    def models(self) -> list[str]:
        return sorted({k[0] for k in self.entries})

    def quantiles(self) -> list[float]:
        return sorted({k[1] for k in self.entries})

    def horizons(self) -> list[int]:
        return sorted({k[2] for k in self.entries})


def average_qs(
    forecasts,
    panel: TimeSeriesPanel,
    variable: str,
    window: EventWindow | None = None,
    by_origin: bool = False,
    window_label: str | None = None,
) -> ScoreTable:
    """Mean pinball loss per (model, q, h), optionally within a date window.

    ``forecasts`` is a QuantileForecastSet or a sequence of them. Window
    membership is decided by the realization date t+h unless ``by_origin``.
    """
    if isinstance(forecasts, QuantileForecastSet):
        sets = [forecasts]
    else:
        sets = list(forecasts)
    sums: dict = {}
    counts: dict = {}
    any_scored = False
    for fset in sets:
        for (model_id, origin, h, q), (_, score) in score_records(fset, panel, variable).items():
            any_scored = True
            if window is not None:
                member_date = origin if by_origin else realization_date(origin, h)
                if not window.contains(member_date):
                    continue
            key = (model_id, q, h)
            sums[key] = sums.get(key, 0.0) + score
            counts[key] = counts.get(key, 0) + 1
    if window is not None and not any_scored:
        raise EvaluationError("no scorable forecasts (all realizations unobserved)")
    label = window_label or (window.label if window is not None else "full")
    table = ScoreTable(variable=variable, window_label=label)
    for key, total in sums.items():
        table.entries[key] = total / counts[key]
        table.counts[key] = counts[key]
    return table


@dataclass
class RatioTable:
    """Cellwise QS(numerator)/QS(benchmark); values below 1 favor the numerator."""

    variable: str
    window_label: str
    numerator: str
    benchmark: str
    entries: dict = field(default_factory=dict)  # (q, h) -> ratio (NaN if flagged)
    flagged: set = field(default_factory=set)  # benchmark-zero cells

    def ratio(self, q: float, h: int) -> float:
        return self.entries[(round(float(q), 10), int(h))]

    def quantiles(self) -> list[float]:
        return sorted({k[0] for k in self.entries})

    def horizons(self) -> list[int]:
        return sorted({k[1] for k in self.entries})


def qs_ratio(table: ScoreTable, numerator: str, benchmark: str) -> RatioTable:
    """Ratio view of a score table relative to a named benchmark model."""
    num_cells = {(q, h) for (m, q, h) in table.entries if m == numerator}
    ben_cells = {(q, h) for (m, q, h) in table.entries if m == benchmark}
    if not num_cells:
        raise EvaluationError(f"model {numerator!r} absent from score table")
    if num_cells != ben_cells:
        raise EvaluationError(
            f"coverage mismatch between {numerator!r} and {benchmark!r}"
        )
    out = RatioTable(
        variable=table.variable,
        window_label=table.window_label,
        numerator=numerator,
        benchmark=benchmark,
    )
    for q, h in sorted(num_cells):
        if table.count(numerator, q, h) != table.count(benchmark, q, h):
            raise EvaluationError(f"evaluated-origin counts differ at (q={q}, h={h})")
        num = table.score(numerator, q, h)
        den = table.score(benchmark, q, h)
        if den == 0.0:
            out.entries[(q, h)] = float("nan")
            out.flagged.add((q, h))
        else:
            out.entries[(q, h)] = num / den
    return out


# ---------------------------------------------------------------------------
# Rendering: aligned text (rows h, one column per quantile) and flat CSV.


def _fmt_q(q: float) -> str:
    return f"QS{round(q * 100):02d}"


def render_score_table(table: ScoreTable) -> str:
    models = table.models()
    qs = table.quantiles()
    hs = table.horizons()
    lines = [f"Average quantile scores — {table.variable} — window: {table.window_label}"]
    for m in models:
        lines.append(f"\n[{m}]")
        header = "  h  " + "".join(f"{_fmt_q(q):>10}" for q in qs) + "       P"
        lines.append(header)
        for h in hs:
            cells = []
            for q in qs:
                try:
                    cells.append(f"{table.score(m, q, h):>10.4f}")
                except KeyError:
                    cells.append(f"{'n/a':>10}")
            counts = {table.counts.get((m, round(float(q), 10), h)) for q in qs}
            counts.discard(None)
            p = str(counts.pop()) if len(counts) == 1 else "mixed"
            lines.append(f"{h:>4} " + "".join(cells) + f"{p:>8}")
    return "\n".join(lines) + "\n"


def render_ratio_table(table: RatioTable) -> str:
    qs = table.quantiles()
    hs = table.horizons()
    lines = [
        f"QS ratios {table.numerator} / {table.benchmark} — {table.variable} — "
        f"window: {table.window_label} (values < 1.00 favor {table.numerator})"
    ]
    lines.append("  h  " + "".join(f"{_fmt_q(q):>10}" for q in qs) + "   <1.00")
    for h in hs:
        cells = []
        better = []
        for q in qs:
            key = (round(float(q), 10), h)
            if key not in table.entries:
                cells.append(f"{'n/a':>10}")
                continue
            v = table.entries[key]
            if key in table.flagged or not np.isfinite(v):
                cells.append(f"{'n/a':>10}")
            else:
                cells.append(f"{v:>10.3f}")
                if v < 1.0:
                    better.append(_fmt_q(q))
        lines.append(f"{h:>4} " + "".join(cells) + "   " + (",".join(better) if better else "-"))
    return "\n".join(lines) + "\n"


def score_table_rows(table: ScoreTable) -> list[list]:
    """Flat rows (model, quantile, horizon, score, count) for CSV export."""
    rows = [["model", "quantile", "horizon", "score", "n_origins"]]
    for (m, q, h) in sorted(table.entries):
        rows.append([m, f"{q:.10g}", h, f"{table.entries[(m, q, h)]:.17g}", table.counts[(m, q, h)]])
    return rows


def ratio_table_rows(table: RatioTable) -> list[list]:
    rows = [["numerator", "benchmark", "quantile", "horizon", "ratio", "flagged"]]
    for (q, h) in sorted(table.entries):
        v = table.entries[(q, h)]
        rows.append(
            [
                table.numerator,
                table.benchmark,
                f"{q:.10g}",
                h,
                "n/a" if (q, h) in table.flagged else f"{v:.17g}",
                int((q, h) in table.flagged),
            ]
        )
    return rows
