"""Shared builders: synthetic raw panels and experiment configs."""

import json

import numpy as np
import pytest

from quantvar.data import month_index, month_label


def make_raw_panel(dir_path, T=64, start="2015-01", seed=42, n_companions=1):
    """Write a raw panel CSV + tcode sidecar; returns (csv_path, tcode_path).

    The target is a log-level series (tcode 5) whose growth rate follows a
    stationary AR(1); companions alternate between already-stationary
    series (tcode 2) and cumulated ones (tcode 1).
    """
    rng = np.random.default_rng(seed)
    dates = [month_label(month_index(start) + j) for j in range(T)]
    g = np.zeros(T)
    for t in range(1, T):
        g[t] = 0.3 * g[t - 1] + 0.05 * rng.standard_normal()
    cols = {"tgt": 100.0 * np.exp(np.cumsum(g))}
    tcodes = {"tgt": 5}
    for j in range(n_companions):
        name = f"c{j + 1}"
        x = np.zeros(T)
        for t in range(1, T):
            x[t] = 0.5 * x[t - 1] + 0.2 * rng.standard_normal()
        if j % 2 == 0:
            cols[name] = x
            tcodes[name] = 2
        else:
            cols[name] = np.cumsum(x)
            tcodes[name] = 1
    csv_path = dir_path / "panel.csv"
    tcode_path = dir_path / "tcodes.json"
    names = list(cols)
    with open(csv_path, "w") as fh:
        fh.write("date," + ",".join(names) + "\n")
        for i, d in enumerate(dates):
            fh.write(d + "," + ",".join(f"{cols[n][i]:.17g}" for n in names) + "\n")
    tcode_path.write_text(json.dumps(tcodes, sort_keys=True))
    return csv_path, tcode_path


def make_config_dict(
    *,
    quantiles=(0.25, 0.5),
    horizons=(1, 2),
    origins=("2017-08", "2018-03"),
    iterations=120,
    burn_in=40,
    thin=4,
    seed=20240817,
    companions=("c1",),
    combinations=None,
    p=1,
    r=0,
    eval_windows=None,
    event_windows=(),
    output_dir="out",
):
    if combinations is None:
        combinations = [
            {"strategy": "fixed", "lambda": 0.5},
            {"strategy": "performance", "window": 2},
            {"strategy": "optimal", "window": 3},
        ]
    if eval_windows is None:
        eval_windows = [{"label": "all", "start": "2015-03", "end": "2020-04"}]
    return {
        "data_file": "panel.csv",
        "tcode_file": "tcodes.json",
        "target": "tgt",
        "companions": list(companions),
        "models": {
            "qbvar": {"p": p, "r": r, "quantiles": list(quantiles)},
            "bvar": {"p": p, "r": r},
            "rw": True,
        },
        "mcmc": {"iterations": iterations, "burn_in": burn_in, "thin": thin},
        "horizons": list(horizons),
        "origins": {"start": origins[0], "end": origins[1]},
        "evaluation_windows": list(eval_windows),
        "event_windows": list(event_windows),
        "combinations": combinations,
        "benchmark": "bvar",
        "seed": seed,
        "output_dir": output_dir,
    }


@pytest.fixture
def experiment_dir(tmp_path):
    """tmp dir holding panel.csv, tcodes.json and config.json for a light run."""
    make_raw_panel(tmp_path)
    cfg = make_config_dict()
    (tmp_path / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
    return tmp_path
