"""Experiment driver and command-line entry point.

``run`` performs the recursive out-of-sample exercise: for every forecast
origin in the configured range it re-estimates each model on the expanding
window of data up to that origin, produces quantile forecasts for horizons
1..H, scores everything against later realizations, builds forecast
combinations, and writes score/ratio tables, weight series, weight-vs-lambda
curves and a hash manifest. The other subcommands expose the individual
stages for piecemeal use.

Deterministic by construction: per-(origin, model, quantile, stage) RNG
streams derived from the master seed, canonical JSON, fixed float
formatting, no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bvar import BvarConfig, run_bvar_chain
from .combine import (
    CombinationWeightSeries,
    combination_objective,
    combine_fixed,
    combine_weighted,
    optimal_weight,
    performance_weight,
    weight_curve,
)
from .data import (
    PanelError,
    TimeSeriesPanel,
    build_lag_design,
    deflate,
    month_index,
    read_panel,
    splice_by_growth,
    transform_panel,
    write_panel,
)
from .dist import derive_rng
from .evaluation import (
    EvaluationError,
    EventWindow,
    average_qs,
    pinball,
    qs_ratio,
    ratio_table_rows,
    realized_value,
    render_ratio_table,
    render_score_table,
    score_table_rows,
)
from .forecast import (
    ForecastError,
    QuantileForecastSet,
    predictive_quantiles,
    quantile_forecast,
    random_walk_forecast,
    read_forecasts,
    write_forecasts,
)
from .qbvar import McmcSchedule, PosteriorDrawSet, QbvarConfig, run_chain

# model indices for seed derivation (stable across runs)
_MODEL_SEED_INDEX = {"qbvar": 0, "bvar": 1, "rw": 2}
_STAGE_CHAIN, _STAGE_FORECAST = 0, 1

_DEFAULT_EVAL_WINDOWS = [
    {"label": "main", "start": "2008-01", "end": "2025-02"},
    {"label": "recent", "start": "2013-01", "end": "2025-02"},
]


class ConfigError(ValueError):
    pass


class RunFailure(RuntimeError):
    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.detail = detail or {}


@dataclass(frozen=True)
class QbvarModelSpec:
    p: int
    r: int
    quantiles: tuple


@dataclass(frozen=True)
class BvarModelSpec:
    p: int
    r: int


@dataclass
class ExperimentConfig:
    """Everything a recursive run needs, parsed from a JSON file."""

    data_file: str
    tcode_file: str
    target: str
    companions: list[str]
    qbvar: QbvarModelSpec | None
    bvar: BvarModelSpec | None
    include_rw: bool
    schedule: McmcSchedule
    a_sigma: float
    b_sigma: float
    horizons: list[int]
    origins_start: str
    origins_end: str
    evaluation_windows: list[EventWindow]
    event_windows: list[EventWindow]
    combinations: list[dict]
    benchmark: str
    seed: int
    output_dir: str

    @property
    def variables(self) -> list[str]:
        return [self.target] + list(self.companions)

    @property
    def quantile_set(self) -> list[float]:
        if self.qbvar is not None:
            return sorted(self.qbvar.quantiles)
        return [0.1, 0.5, 0.9]

    def model_ids(self) -> list[str]:
        ids = []
        if self.qbvar is not None:
            ids.append("qbvar")
        if self.bvar is not None:
            ids.append("bvar")
        if self.include_rw:
            ids.append("rw")
        return ids


def _parse_window(d: dict) -> EventWindow:
    try:
        return EventWindow(label=d["label"], start=d["start"], end=d["end"])
    except KeyError as exc:
        raise ConfigError(f"window entry missing field {exc}") from exc


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Parse and validate a config file; returns (config, raw dict)."""
    with open(path) as fh:
        raw = json.load(fh)
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path))), raw


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    def _path(p):
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    try:
        data_file = _path(raw["data_file"])
        tcode_file = _path(raw["tcode_file"])
        target = raw["target"]
        seed = int(raw["seed"])
        output_dir = _path(raw["output_dir"])
    except KeyError as exc:
        raise ConfigError(f"config missing required field {exc}") from exc
    companions = list(raw.get("companions", []))
    if target in companions:
        raise ConfigError("target listed among companions; exactly one target")

    models = raw.get("models", {})
    qspec = None
    if "qbvar" in models:
        m = models["qbvar"]
        qspec = QbvarModelSpec(
            p=int(m["p"]), r=int(m.get("r", 0)), quantiles=tuple(float(q) for q in m["quantiles"])
        )
        if len(set(qspec.quantiles)) != len(qspec.quantiles):
            raise ConfigError("duplicate quantiles in qbvar spec")
    bspec = None
    if "bvar" in models:
        m = models["bvar"]
        bspec = BvarModelSpec(p=int(m["p"]), r=int(m.get("r", 0)))
    include_rw = bool(models.get("rw", False))
    if qspec is None and bspec is None and not include_rw:
        raise ConfigError("no models configured")

    mc = raw.get("mcmc", {})
    schedule = McmcSchedule(
        iterations=int(mc.get("iterations", 3000)),
        burn_in=int(mc.get("burn_in", 1000)),
        thin=int(mc.get("thin", 5)),
    )
    horizons = [int(h) for h in raw.get("horizons", list(range(1, 13)))]
    if not horizons or sorted(set(horizons)) != sorted(horizons) or min(horizons) < 1:
        raise ConfigError("horizons must be distinct positive integers")

    eval_windows = [_parse_window(w) for w in raw.get("evaluation_windows", _DEFAULT_EVAL_WINDOWS)]
    if not eval_windows:
        raise ConfigError("at least one evaluation window required")
    event_windows = [_parse_window(w) for w in raw.get("event_windows", [])]
    origins = raw.get("origins", {})
    origins_start = origins.get("start", eval_windows[0].start)
    origins_end = origins.get("end", eval_windows[0].end)
    if month_index(origins_start) > month_index(origins_end):
        raise ConfigError("empty origin range")

    combos = []
    for c in raw.get("combinations", []):
        strategy = c.get("strategy")
        if strategy == "fixed":
            lam = float(c.get("lambda", 0.5))
            if not 0.0 <= lam <= 1.0:
                raise ConfigError("fixed combination weight must lie in [0, 1]")
            combos.append({"strategy": "fixed", "lambda": lam})
        elif strategy in ("performance", "optimal"):
            window = int(c.get("window", 50 if strategy == "performance" else 75))
            if window < 1:
                raise ConfigError("combination window must be >= 1")
            combos.append({"strategy": strategy, "window": window})
        else:
            raise ConfigError(f"unknown combination strategy {strategy!r}")

    benchmark = raw.get("benchmark", "bvar" if bspec is not None else "rw")
    cfg = ExperimentConfig(
        data_file=data_file,
        tcode_file=tcode_file,
        target=target,
        companions=companions,
        qbvar=qspec,
        bvar=bspec,
        include_rw=include_rw,
        schedule=schedule,
        a_sigma=float(raw.get("a_sigma", 3.0)),
        b_sigma=float(raw.get("b_sigma", 1.0)),
        horizons=sorted(horizons),
        origins_start=origins_start,
        origins_end=origins_end,
        evaluation_windows=eval_windows,
        event_windows=event_windows,
        combinations=combos,
        benchmark=benchmark,
        seed=seed,
        output_dir=output_dir,
    )
    if cfg.benchmark not in cfg.model_ids():
        raise ConfigError(f"benchmark {cfg.benchmark!r} is not a configured model")
    if combos and "qbvar" not in cfg.model_ids():
        raise ConfigError("combinations require the qbvar model")
    if combos and cfg.benchmark == "qbvar":
        raise ConfigError("combinations pair qbvar against a distinct benchmark")
    return cfg


def config_digest(raw: dict) -> str:
    return hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


# ---------------------------------------------------------------------------
# Per-origin work. Top-level so process pools can pickle it.


def _forecast_one_origin(payload):
    """Estimate every model on data through one origin and forecast ahead.

    payload: (origin, origin_idx, dates, values, names, cfg).
    Returns (origin, records, error) where records maps
    (model_id, horizon, quantile) -> value vector.
    """
    origin, origin_idx, dates, values, names, cfg = payload
    try:
        cut = dates.index(origin)
        est = values[: cut + 1]
        H = max(cfg.horizons)
        records: dict = {}
        quantiles = cfg.quantile_set

        if cfg.qbvar is not None:
            for qi, q in enumerate(quantiles):
                design = build_lag_design(est, cfg.qbvar.p, names)
                model_cfg = QbvarConfig(
                    p=cfg.qbvar.p,
                    r=cfg.qbvar.r,
                    quantile=q,
                    schedule=cfg.schedule,
                    a_sigma=cfg.a_sigma,
                    b_sigma=cfg.b_sigma,
                )
                rng = derive_rng(cfg.seed, origin_idx, _MODEL_SEED_INDEX["qbvar"], qi, _STAGE_CHAIN)
                draws, _ = run_chain(design, model_cfg, rng)
                rng_fc = derive_rng(
                    cfg.seed, origin_idx, _MODEL_SEED_INDEX["qbvar"], qi, _STAGE_FORECAST
                )
                block = quantile_forecast(draws, est, H, rng_fc)
                for h in cfg.horizons:
                    records[("qbvar", h, q)] = block[h - 1]

        if cfg.bvar is not None:
            design = build_lag_design(est, cfg.bvar.p, names)
            model_cfg = BvarConfig(
                p=cfg.bvar.p,
                r=cfg.bvar.r,
                schedule=cfg.schedule,
                a_sigma=cfg.a_sigma,
                b_sigma=cfg.b_sigma,
            )
            rng = derive_rng(cfg.seed, origin_idx, _MODEL_SEED_INDEX["bvar"], 0, _STAGE_CHAIN)
            draws, _ = run_bvar_chain(design, model_cfg, rng)
            rng_fc = derive_rng(cfg.seed, origin_idx, _MODEL_SEED_INDEX["bvar"], 0, _STAGE_FORECAST)
            by_q = predictive_quantiles(draws, est, H, quantiles, rng_fc)
            for q, block in by_q.items():
                for h in cfg.horizons:
                    records[("bvar", h, q)] = block[h - 1]

        if cfg.include_rw:
            block = random_walk_forecast(H, len(names))
            for q in quantiles:
                for h in cfg.horizons:
                    records[("rw", h, q)] = block[h - 1]
        return origin, records, None
    except Exception as exc:  # the origin aborts; the run decides whether to fail
        return origin, None, f"{type(exc).__name__}: {exc}"


def _combination_series(
    cfg: ExperimentConfig,
    fc_q: QuantileForecastSet,
    fc_b: QuantileForecastSet,
    tpanel: TimeSeriesPanel,
    spec: dict,
) -> CombinationWeightSeries:
    """Adaptive weight series over all origins for one strategy."""
    strategy, S = spec["strategy"], spec["window"]
    series = CombinationWeightSeries(strategy=strategy, window=S)
    col = fc_q.variable_names.index(cfg.target)
    origins = fc_q.origins("qbvar")
    bench = cfg.benchmark
    for q in fc_q.quantiles():
        for h in fc_q.horizons():
            # per-origin target forecasts and realizations, ordered by origin
            hist = []
            for o in origins:
                y = realized_value(tpanel, cfg.target, o, h)
                if y is None:
                    continue
                hist.append(
                    (o, float(fc_q.get("qbvar", o, h, q)[col]), float(fc_b.get(bench, o, h, q)[col]), y)
                )
            for t in origins:
                t_idx = month_index(t)
                usable = [rec for rec in hist if month_index(rec[0]) + h <= t_idx]
                fq = np.array([rec[1] for rec in usable])
                fb = np.array([rec[2] for rec in usable])
                ys = np.array([rec[3] for rec in usable])
                if strategy == "performance":
                    lam, warm = performance_weight(pinball(ys - fq, q), pinball(ys - fb, q), S)
                else:
                    lam, warm = optimal_weight(fq, fb, ys, q, S)
                series.set_weight(t, q, h, lam, warm)
    return series


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _safe_label(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


def run_recursive(cfg: ExperimentConfig, raw_config: dict) -> dict:
    """Execute the full recursive experiment; returns the manifest dict."""
    panel = read_panel(cfg.data_file, cfg.tcode_file)
    missing = [v for v in cfg.variables if v not in panel.names]
    if missing:
        raise ConfigError(f"series not in panel: {missing}")
    tpanel = transform_panel(panel.select(cfg.variables))
    dates = list(tpanel.dates)
    date_idx = {d: i for i, d in enumerate(dates)}
    last = month_index(dates[-1])
    max_h = max(cfg.horizons)
    for w in cfg.evaluation_windows:
        if month_index(w.start) < month_index(dates[0]) or month_index(w.end) > last:
            raise ConfigError(f"evaluation window {w.label!r} outside the transformed sample")
    if cfg.origins_start not in date_idx or cfg.origins_end not in date_idx:
        raise ConfigError("origin range outside the transformed sample")
    if month_index(cfg.origins_end) + max_h > last:
        raise ConfigError(
            "origin range leaves no realizations for the longest horizon; "
            f"last origin must be {max_h} months before {dates[-1]}"
        )
    p_max = max([s.p for s in (cfg.qbvar, cfg.bvar) if s is not None], default=1)
    min_rows = p_max + 20
    if date_idx[cfg.origins_start] + 1 < min_rows:
        raise ConfigError(f"first origin leaves under {min_rows} estimation rows")

    origins = [d for d in dates if month_index(cfg.origins_start) <= month_index(d) <= month_index(cfg.origins_end)]

    values = tpanel.values
    names = list(cfg.variables)
    payloads = [
        (origin, oi, dates, values, names, cfg) for oi, origin in enumerate(origins)
    ]
    threads = int(os.environ.get("QUANTVAR_THREADS", "1"))
    results = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_forecast_one_origin, payloads))
    else:
        results = [_forecast_one_origin(p) for p in payloads]

    aborted = {o: err for o, _, err in results if err is not None}
    if len(aborted) > 0.01 * len(origins):
        raise RunFailure(
            f"{len(aborted)} of {len(origins)} origins aborted (limit 1%)",
            detail={"aborted_origins": aborted},
        )

    fsets: dict[str, QuantileForecastSet] = {
        m: QuantileForecastSet(variable_names=names) for m in cfg.model_ids()
    }
    for origin, records, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            continue
        for (model_id, h, q), vals in records.items():
            fsets[model_id].add(model_id, origin, h, q, vals)

    out = cfg.output_dir
    os.makedirs(os.path.join(out, "forecasts"), exist_ok=True)
    os.makedirs(os.path.join(out, "tables"), exist_ok=True)
    os.makedirs(os.path.join(out, "combination"), exist_ok=True)

    # combinations: qbvar against the configured benchmark
    weight_files = []
    if cfg.combinations:
        fc_q, fc_b = fsets["qbvar"], fsets[cfg.benchmark]
        for spec in cfg.combinations:
            if spec["strategy"] == "fixed":
                lam = spec["lambda"]
                model_id = f"comb_fixed_{lam:g}"
                fsets[model_id] = combine_fixed(fc_q, fc_b, lam, model_id)
                series = CombinationWeightSeries(strategy="fixed", window=None)
                for o, h, q in sorted({k[1:] for k in fc_q.records}):
                    series.set_weight(o, q, h, lam, False)
            else:
                series = _combination_series(cfg, fc_q, fc_b, tpanel, spec)
                model_id = "comb_perf" if spec["strategy"] == "performance" else "comb_opt"
                fsets[model_id] = combine_weighted(fc_q, fc_b, series, model_id)
            wpath = os.path.join(out, "combination", f"weights_{model_id}.csv")
            _write_csv(wpath, series.rows())
            weight_files.append(wpath)

        # weight-vs-lambda curves for the plain qbvar/benchmark pair
        col = fc_q.variable_names.index(cfg.target)
        curve_rows = [["quantile", "horizon", "lambda", "avg_qs", "ratio_to_benchmark", "optimal"]]
        for q in fc_q.quantiles():
            for h in fc_q.horizons():
                fq, fb, ys = [], [], []
                for o in fc_q.origins("qbvar"):
                    y = realized_value(tpanel, cfg.target, o, h)
                    if y is None:
                        continue
                    fq.append(float(fc_q.get("qbvar", o, h, q)[col]))
                    fb.append(float(fc_b.get(cfg.benchmark, o, h, q)[col]))
                    ys.append(y)
                if not ys:
                    continue
                grid, vals, ratios = weight_curve(fq, fb, ys, q, n_points=101)
                for g, v, rr in zip(grid, vals, ratios):
                    curve_rows.append(
                        [f"{q:.10g}", h, f"{g:.4f}", f"{v:.17g}", f"{rr:.17g}", 0]
                    )
                lam_star, _ = optimal_weight(fq, fb, ys, q, S=len(ys))
                v_star = combination_objective(lam_star, fq, fb, ys, q)
                base = combination_objective(0.0, fq, fb, ys, q)
                rr = v_star / base if base > 0 else float("nan")
                curve_rows.append(
                    [f"{q:.10g}", h, f"{lam_star:.17g}", f"{v_star:.17g}", f"{rr:.17g}", 1]
                )
        _write_csv(os.path.join(out, "combination", "weight_curves.csv"), curve_rows)

    # forecast files
    for model_id in sorted(fsets):
        write_forecasts(fsets[model_id], os.path.join(out, "forecasts", f"{model_id}.csv"))

    # score and ratio tables per window (evaluation windows, then event windows)
    all_sets = [fsets[m] for m in sorted(fsets)]
    table_files = _emit_tables(cfg, all_sets, tpanel, out)

    # canonical config copy (data paths resolved so `report` works from
    # anywhere), errors, manifest
    cfg_copy = dict(raw_config)
    cfg_copy["data_file"] = os.path.abspath(cfg.data_file)
    cfg_copy["tcode_file"] = os.path.abspath(cfg.tcode_file)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(cfg_copy, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "errors.json"), "w") as fh:
        json.dump(
            {"aborted_origins": {k: aborted[k] for k in sorted(aborted)}},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    manifest = {
        "version": f"quantvar-{__version__}",
        "seed": cfg.seed,
        "config_sha256": config_digest(raw_config),
        "n_origins": len(origins),
        "n_aborted": len(aborted),
        "files": {},
    }
    for root, _, files in sorted(os.walk(out)):
        for name in sorted(files):
            if name == "manifest.json":
                continue
            fpath = os.path.join(root, name)
            rel = os.path.relpath(fpath, out)
            manifest["files"][rel] = _sha256_file(fpath)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _emit_tables(cfg: ExperimentConfig, all_sets, tpanel, out) -> list:
    """Score + ratio tables for every evaluation and event window."""
    files = []
    windows: list[tuple[EventWindow | None, str]] = [(w, w.label) for w in cfg.evaluation_windows]
    windows += [(w, f"event_{w.label}") for w in cfg.event_windows]
    fset_models = sorted({k[0] for fs in all_sets for k in fs.records})
    for window, label in windows:
        slug = _safe_label(label)
        try:
            table = average_qs(all_sets, tpanel, cfg.target, window=window, window_label=label)
        except EvaluationError:
            continue  # nothing scorable at all
        if not table.entries:
            # window covers no realizations: leave an explicit n/a marker
            with open(os.path.join(out, "tables", f"scores__{slug}.txt"), "w") as fh:
                fh.write(f"window {label}: no covered realizations (n/a)\n")
            continue
        spath = os.path.join(out, "tables", f"scores__{slug}.csv")
        _write_csv(spath, score_table_rows(table))
        with open(os.path.join(out, "tables", f"scores__{slug}.txt"), "w") as fh:
            fh.write(render_score_table(table))
        files.append(spath)
        present = table.models()
        if cfg.benchmark not in present:
            continue
        for model_id in fset_models:
            if model_id == cfg.benchmark or model_id not in present:
                continue
            try:
                ratios = qs_ratio(table, model_id, cfg.benchmark)
            except EvaluationError:
                continue  # partial coverage inside this window
            rslug = f"ratios__{slug}__{_safe_label(model_id)}_vs_{_safe_label(cfg.benchmark)}"
            rpath = os.path.join(out, "tables", f"{rslug}.csv")
            _write_csv(rpath, ratio_table_rows(ratios))
            with open(os.path.join(out, "tables", f"{rslug}.txt"), "w") as fh:
                fh.write(render_ratio_table(ratios))
            files.append(rpath)
    return files


def report(run_dir: str, output_path: str | None = None) -> str:
    """Re-render every table from a completed run's forecast files."""
    cfg_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise RunFailure(f"{run_dir!r} has no config.json; not a completed run")
    cfg, _ = load_config(cfg_path)
    fdir = os.path.join(run_dir, "forecasts")
    if not os.path.isdir(fdir):
        raise RunFailure("run directory has no forecasts/")
    fsets = [read_forecasts(os.path.join(fdir, f)) for f in sorted(os.listdir(fdir))]
    panel = read_panel(cfg.data_file, cfg.tcode_file)
    tpanel = transform_panel(panel.select(cfg.variables))
    chunks = []
    windows = [(w, w.label) for w in cfg.evaluation_windows]
    windows += [(w, f"event_{w.label}") for w in cfg.event_windows]
    model_ids = sorted({k[0] for fs in fsets for k in fs.records})
    for window, label in windows:
        try:
            table = average_qs(fsets, tpanel, cfg.target, window=window, window_label=label)
        except EvaluationError:
            chunks.append(f"window {label}: no scorable forecasts (n/a)\n")
            continue
        if not table.entries:
            chunks.append(f"window {label}: no covered realizations (n/a)\n")
            continue
        chunks.append(render_score_table(table))
        for model_id in model_ids:
            if model_id == cfg.benchmark or model_id not in table.models():
                continue
            try:
                ratios = qs_ratio(table, model_id, cfg.benchmark)
            except EvaluationError:
                continue
            chunks.append(render_ratio_table(ratios))
    text = "\n".join(chunks)
    if output_path:
        with open(output_path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Subcommand handlers.


def _cmd_ingest(args) -> int:
    panel = read_panel(args.input, args.tcodes)
    for pair in args.deflate or []:
        nominal, cpi = pair.split(":")
        j = panel.names.index(nominal)
        panel.values[:, j] = deflate(panel.values[:, j], panel.column(cpi))
    for pair in args.splice or []:
        target, donor = pair.split(":")
        j = panel.names.index(target)
        panel.values[:, j] = splice_by_growth(panel.values[:, j], panel.column(donor))
    out_panel = panel
    if args.transform:
        out_panel = transform_panel(panel)
    write_panel(out_panel, args.output, args.output_tcodes)
    print(f"wrote {args.output} ({len(out_panel.dates)} rows, {out_panel.n_series} series)")
    return 0


def _load_system(args) -> tuple[TimeSeriesPanel, list[str]]:
    panel = read_panel(args.data, args.tcodes)
    variables = args.variables.split(",") if args.variables else list(panel.names)
    return transform_panel(panel.select(variables)), variables


def _cmd_estimate(args) -> int:
    tpanel, variables = _load_system(args)
    est = tpanel.through(args.origin) if args.origin else tpanel
    design = build_lag_design(est.values, args.p, variables)
    schedule = McmcSchedule(iterations=args.iterations, burn_in=args.burn_in, thin=args.thin)
    rng = derive_rng(args.seed, 0, _MODEL_SEED_INDEX[args.model], args.quantile_index, _STAGE_CHAIN)
    if args.model == "qbvar":
        if args.quantile is None:
            raise ConfigError("--quantile is required for the qbvar model")
        cfg = QbvarConfig(
            p=args.p, r=args.r, quantile=args.quantile, schedule=schedule,
            a_sigma=args.a_sigma, b_sigma=args.b_sigma,
        )
        draws, diag = run_chain(design, cfg, rng)
    else:
        cfg = BvarConfig(
            p=args.p, r=args.r, schedule=schedule, a_sigma=args.a_sigma, b_sigma=args.b_sigma
        )
        draws, diag = run_bvar_chain(design, cfg, rng)
    draws.save(args.output)
    drift = float(np.max(np.abs(diag.phi_first_half_mean - diag.phi_second_half_mean)))
    print(
        f"wrote {args.output}: {draws.n_draws} draws, {draws.n_vars} variables, "
        f"residual rms {diag.residual_rms.mean():.4g}, split-half coefficient drift {drift:.4g}"
    )
    return 0


def _cmd_forecast(args) -> int:
    draws = PosteriorDrawSet.load(args.draws)
    tpanel, _ = _load_system(args)
    est = tpanel.through(args.origin) if args.origin else tpanel
    origin = est.dates[-1]
    rng = derive_rng(args.seed, 0, _MODEL_SEED_INDEX.get(draws.kind, 0), 0, _STAGE_FORECAST)
    fset = QuantileForecastSet(variable_names=list(draws.variable_names))
    if draws.kind == "qbvar":
        block = quantile_forecast(draws, est.values, args.max_horizon, rng)
        fset.add_block(args.model_id or "qbvar", origin, draws.quantile, block)
    else:
        quantiles = [float(q) for q in args.quantiles.split(",")]
        by_q = predictive_quantiles(draws, est.values, args.max_horizon, quantiles, rng)
        for q in quantiles:
            fset.add_block(args.model_id or "bvar", origin, q, by_q[q])
    write_forecasts(fset, args.output)
    print(f"wrote {args.output} ({len(fset.records)} records from origin {origin})")
    return 0


def _parse_window_arg(spec: str) -> EventWindow:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"window spec must be LABEL:START:END, got {spec!r}")
    return EventWindow(label=parts[0], start=parts[1], end=parts[2])


def _cmd_evaluate(args) -> int:
    tpanel, _ = _load_system(args)
    fsets = [read_forecasts(p) for p in args.forecasts]
    windows = [(None, "full")] + [
        (w, w.label) for w in (_parse_window_arg(s) for s in args.window or [])
    ]
    os.makedirs(args.output_dir, exist_ok=True)
    for window, label in windows:
        table = average_qs(
            fsets, tpanel, args.target, window=window, by_origin=args.by_origin, window_label=label
        )
        slug = _safe_label(label)
        _write_csv(os.path.join(args.output_dir, f"scores__{slug}.csv"), score_table_rows(table))
        text = render_score_table(table)
        if args.benchmark:
            for model_id in table.models():
                if model_id == args.benchmark:
                    continue
                ratios = qs_ratio(table, model_id, args.benchmark)
                _write_csv(
                    os.path.join(
                        args.output_dir,
                        f"ratios__{slug}__{_safe_label(model_id)}_vs_{_safe_label(args.benchmark)}.csv",
                    ),
                    ratio_table_rows(ratios),
                )
                text += "\n" + render_ratio_table(ratios)
        with open(os.path.join(args.output_dir, f"tables__{slug}.txt"), "w") as fh:
            fh.write(text)
        print(text)
    return 0


def _cmd_combine(args) -> int:
    fc_a = read_forecasts(args.forecasts_a)
    fc_b = read_forecasts(args.forecasts_b)
    if args.strategy == "fixed":
        out = combine_fixed(fc_a, fc_b, args.lam, args.model_id)
        series = CombinationWeightSeries(strategy="fixed", window=None)
        for o, h, q in sorted({k[1:] for k in fc_a.records}):
            series.set_weight(o, q, h, args.lam, False)
    else:
        if not (args.data and args.tcodes and args.target):
            raise ConfigError("adaptive strategies need --data, --tcodes and --target")
        tpanel, _ = _load_system(args)
        a_id = fc_a.model_ids()[0]
        col = fc_a.variable_names.index(args.target)
        series = CombinationWeightSeries(strategy=args.strategy, window=args.window)
        b_id = fc_b.model_ids()[0]
        for q in fc_a.quantiles():
            for h in fc_a.horizons():
                hist = []
                for o in fc_a.origins(a_id):
                    y = realized_value(tpanel, args.target, o, h)
                    if y is None:
                        continue
                    hist.append(
                        (o, float(fc_a.get(a_id, o, h, q)[col]), float(fc_b.get(b_id, o, h, q)[col]), y)
                    )
                for t in fc_a.origins(a_id):
                    usable = [r for r in hist if month_index(r[0]) + h <= month_index(t)]
                    fq = np.array([r[1] for r in usable])
                    fb = np.array([r[2] for r in usable])
                    ys = np.array([r[3] for r in usable])
                    if args.strategy == "performance":
                        lam, warm = performance_weight(
                            pinball(ys - fq, q), pinball(ys - fb, q), args.window
                        )
                    else:
                        lam, warm = optimal_weight(fq, fb, ys, q, args.window)
                    series.set_weight(t, q, h, lam, warm)
        out = combine_weighted(fc_a, fc_b, series, args.model_id)
    write_forecasts(out, args.output)
    if args.weights_output:
        _write_csv(args.weights_output, series.rows())
    print(f"wrote {args.output} ({len(out.records)} combined records)")
    return 0


def _cmd_run(args) -> int:
    cfg, raw = load_config(args.config)
    override = args.output_dir or os.environ.get("QUANTVAR_OUTPUT")
    if override:
        cfg.output_dir = override
    os.makedirs(cfg.output_dir, exist_ok=True)
    manifest = run_recursive(cfg, raw)
    print(
        f"run complete: {manifest['n_origins']} origins "
        f"({manifest['n_aborted']} aborted), {len(manifest['files'])} files in {cfg.output_dir}"
    )
    return 0


def _cmd_report(args) -> int:
    text = report(args.run_dir, args.output)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="quantvar",
        description="Quantile Bayesian VAR estimation, forecasting, scoring and combination",
    )
    ap.add_argument("--version", action="version", version=f"quantvar {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("ingest", help="validate a raw panel; optional deflation/splicing")
    g.add_argument("--input", required=True)
    g.add_argument("--tcodes", required=True)
    g.add_argument("--output", required=True)
    g.add_argument("--output-tcodes", required=True)
    g.add_argument("--deflate", action="append", metavar="NOMINAL:CPI")
    g.add_argument("--splice", action="append", metavar="TARGET:DONOR")
    g.add_argument("--transform", action="store_true", help="emit the transformed panel")
    g.set_defaults(func=_cmd_ingest)

    def _data_args(p):
        p.add_argument("--data", required=True)
        p.add_argument("--tcodes", required=True)
        p.add_argument("--variables", help="comma-separated system variables in order")

    g = sub.add_parser("estimate", help="estimate one model on data through an origin")
    _data_args(g)
    g.add_argument("--model", choices=["qbvar", "bvar"], required=True)
    g.add_argument("--origin", help="last estimation month (default: sample end)")
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--r", type=int, default=0)
    g.add_argument("--quantile", type=float)
    g.add_argument("--quantile-index", type=int, default=0, help="seed-stream index")
    g.add_argument("--iterations", type=int, default=3000)
    g.add_argument("--burn-in", type=int, default=1000)
    g.add_argument("--thin", type=int, default=5)
    g.add_argument("--a-sigma", type=float, default=3.0)
    g.add_argument("--b-sigma", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=True)
    g.set_defaults(func=_cmd_estimate)

    g = sub.add_parser("forecast", help="iterated quantile forecasts from saved draws")
    _data_args(g)
    g.add_argument("--draws", required=True)
    g.add_argument("--origin", help="forecast origin month (default: sample end)")
    g.add_argument("--max-horizon", type=int, default=12)
    g.add_argument("--quantiles", default="0.1,0.5,0.9", help="levels for a Gaussian draw set")
    g.add_argument("--model-id")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=True)
    g.set_defaults(func=_cmd_forecast)

    g = sub.add_parser("evaluate", help="score forecast files against realizations")
    _data_args(g)
    g.add_argument("--forecasts", nargs="+", required=True)
    g.add_argument("--target", required=True)
    g.add_argument("--window", action="append", metavar="LABEL:START:END")
    g.add_argument("--by-origin", action="store_true", help="window membership by origin date")
    g.add_argument("--benchmark")
    g.add_argument("--output-dir", required=True)
    g.set_defaults(func=_cmd_evaluate)

    g = sub.add_parser("combine", help="combine two forecast files")
    g.add_argument("--forecasts-a", required=True, help="the model receiving weight lambda")
    g.add_argument("--forecasts-b", required=True)
    g.add_argument("--strategy", choices=["fixed", "performance", "optimal"], required=True)
    g.add_argument("--lambda", dest="lam", type=float, default=0.5)
    g.add_argument("--window", type=int, default=50)
    g.add_argument("--data")
    g.add_argument("--tcodes")
    g.add_argument("--variables")
    g.add_argument("--target")
    g.add_argument("--model-id", default="comb")
    g.add_argument("--output", required=True)
    g.add_argument("--weights-output")
    g.set_defaults(func=_cmd_combine)

    g = sub.add_parser("run", help="full recursive out-of-sample experiment")
    g.add_argument("--config", required=True)
    g.add_argument("--output-dir", help="override the configured output directory")
    g.set_defaults(func=_cmd_run)

    g = sub.add_parser("report", help="re-render tables from a completed run")
    g.add_argument("--run-dir", required=True)
    g.add_argument("--output")
    g.set_defaults(func=_cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PanelError, EvaluationError, ForecastError, ValueError, OSError) as exc:
        print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(
            json.dumps(
                {"status": "error", "kind": "RunFailure", "message": str(exc), "detail": exc.detail},
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
