"""Iterated multi-step quantile forecasts from posterior draw sets.

Each retained draw defines a VAR whose future shocks are normal with
covariance Lam Lam' + diag(sigma); paths are simulated forward horizon by
horizon, feeding predictions back into the lag vector. A quantile model's
forecast at its own level is the pointwise median across draws; the
Gaussian benchmark's q-forecast is the empirical q-quantile of its
predictive draws. The random-walk benchmark for stationarity-transformed
series predicts zero change at every horizon and quantile.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .qbvar import PosteriorDrawSet

# an origin is abandoned when more than this share of simulated paths
# contains non-finite values (explosive draws)
MAX_BAD_FRACTION = 0.01


class ForecastError(RuntimeError):
    """Raised when a forecast origin cannot produce usable paths."""


def simulate_paths(
    draws: PosteriorDrawSet, history: np.ndarray, horizon: int, rng: np.random.Generator
) -> np.ndarray:
    """Simulate (S, horizon, n) future paths, one per posterior draw.

    history holds the observed series in time order; only its last p rows
    enter the lag vector. Non-finite paths are tolerated up to
    MAX_BAD_FRACTION and replaced by NaN; beyond that the origin fails.
    """
    history = np.asarray(history, dtype=float)
    if history.ndim != 2:
        raise ValueError("history must be (T, n)")
    S, n, k = draws.Phi.shape
    p = draws.p
    if history.shape[0] < p:
        raise ForecastError(f"need at least p={p} rows of history, got {history.shape[0]}")
    if history.shape[1] != n:
        raise ValueError("history width does not match the model")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    r = draws.n_factors
    lags = np.broadcast_to(history[-p:][::-1], (S, p, n)).copy()  # most recent first
    paths = np.empty((S, horizon, n))
    x = np.empty((S, k))
    x[:, 0] = 1.0
    for j in range(horizon):
        x[:, 1:] = lags.reshape(S, p * n)
        cond_mean = np.einsum("sik,sk->si", draws.Phi, x)
        eps = rng.standard_normal((S, n)) * np.sqrt(draws.sigma)
        if r:
            f = rng.standard_normal((S, r))
            eps = eps + np.einsum("sir,sr->si", draws.Lam, f)
        y_new = cond_mean + eps
        paths[:, j, :] = y_new
        if p > 1:
            lags[:, 1:, :] = lags[:, :-1, :]
        lags[:, 0, :] = y_new
    with np.errstate(invalid="ignore"):
        bad = ~np.isfinite(paths).all(axis=(1, 2))
    frac = float(bad.mean())
    if frac > MAX_BAD_FRACTION:
        raise ForecastError(
            f"{frac:.1%} of simulated paths are non-finite (limit {MAX_BAD_FRACTION:.0%})"
        )
    if frac > 0.0:
        paths[bad] = np.nan
    return paths


def quantile_forecast(
    draws: PosteriorDrawSet,
    history: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    quantile: float | None = None,
) -> np.ndarray:
    """(horizon, n) quantile forecast from a posterior draw set.

    For a quantile model the level is fixed at estimation time and the
    forecast is the median across draws; passing a conflicting ``quantile``
    is an error. The Gaussian model requires ``quantile`` and returns the
    empirical quantile of its predictive distribution.
    """
    paths = simulate_paths(draws, history, horizon, rng)
    if draws.kind == "qbvar":
        if quantile is not None and not np.isclose(quantile, draws.quantile):
            raise ValueError(
                f"draw set is for quantile {draws.quantile}, asked for {quantile}"
            )
        return np.nanmedian(paths, axis=0)
    if quantile is None:
        raise ValueError("the Gaussian model needs an explicit quantile level")
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    return np.nanquantile(paths, quantile, axis=0)


def predictive_quantiles(
    draws: PosteriorDrawSet,
    history: np.ndarray,
    horizon: int,
    quantiles,
    rng: np.random.Generator,
) -> dict:
    """Empirical predictive quantiles {q: (horizon, n)} from one simulation.

    All levels are read off the same set of simulated paths, so they are
    mutually consistent (monotone in q) up to sampling noise.
    """
    for q in quantiles:
        if not 0.0 < q < 1.0:
            raise ValueError("quantile must lie in (0, 1)")
    paths = simulate_paths(draws, history, horizon, rng)
    return {q: np.nanquantile(paths, q, axis=0) for q in quantiles}


def random_walk_forecast(horizon: int, n_vars: int) -> np.ndarray:
    """No-change benchmark on transformed (stationary) series: all zeros."""
    if horizon < 1 or n_vars < 1:
        raise ValueError("horizon and variable count must be >= 1")
    return np.zeros((horizon, n_vars))


@dataclass
class QuantileForecastSet:
    """Forecast values keyed by (model_id, origin, horizon, quantile).

    ``origin`` is the ISO month of the last observation used for
    estimation; ``horizon`` is months ahead; values are per target
    variable, stored as a vector in variable order.
    """

    variable_names: list[str]
    records: dict = field(default_factory=dict)

    @staticmethod
    def _key(model_id: str, origin: str, horizon: int, quantile: float):
        return (model_id, origin, int(horizon), round(float(quantile), 10))

    def add(self, model_id: str, origin: str, horizon: int, quantile: float, values) -> None:
        values = np.asarray(values, dtype=float).ravel()
        if values.size != len(self.variable_names):
            raise ValueError("value vector length does not match variables")
        key = self._key(model_id, origin, horizon, quantile)
        if key in self.records:
            raise ValueError(f"duplicate forecast record {key}")
        self.records[key] = values

    def add_block(self, model_id: str, origin: str, quantile: float, block) -> None:
        """Add an (H, n) block as horizons 1..H."""
        block = np.asarray(block, dtype=float)
        for h in range(block.shape[0]):
            self.add(model_id, origin, h + 1, quantile, block[h])

    def get(self, model_id: str, origin: str, horizon: int, quantile: float) -> np.ndarray:
        return self.records[self._key(model_id, origin, horizon, quantile)]

    def has(self, model_id: str, origin: str, horizon: int, quantile: float) -> bool:
        return self._key(model_id, origin, horizon, quantile) in self.records

    def model_ids(self) -> list[str]:
        return sorted({k[0] for k in self.records})

    def origins(self, model_id: str | None = None) -> list[str]:
        keys = self.records if model_id is None else {k: None for k in self.records if k[0] == model_id}
        return sorted({k[1] for k in keys})

    def horizons(self) -> list[int]:
        return sorted({k[2] for k in self.records})

    def quantiles(self) -> list[float]:
        return sorted({k[3] for k in self.records})

    def merge(self, other: "QuantileForecastSet") -> None:
        if other.variable_names != self.variable_names:
            raise ValueError("cannot merge forecast sets over different variables")
        for key, vals in other.records.items():
            if key in self.records:
                raise ValueError(f"duplicate forecast record {key}")
            self.records[key] = vals


def write_forecasts(fset: QuantileForecastSet, path) -> None:
    """Write one row per (model, origin, horizon, quantile, variable)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "origin", "horizon", "quantile", "variable", "value"])
        for key in sorted(fset.records):
            model_id, origin, horizon, quantile = key
            vals = fset.records[key]
            for name, v in zip(fset.variable_names, vals):
                writer.writerow([model_id, origin, horizon, f"{quantile:.10g}", name, f"{v:.17g}"])


def read_forecasts(path) -> QuantileForecastSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:6] != ["model_id", "origin", "horizon", "quantile", "variable", "value"]:
        raise ValueError("not a forecast file (bad header)")
    by_key: dict = {}
    var_order: list[str] = []
    for model_id, origin, horizon, quantile, variable, value in rows[1:]:
        if variable not in var_order:
            var_order.append(variable)
        by_key.setdefault((model_id, origin, int(horizon), round(float(quantile), 10)), {})[
            variable
        ] = float(value)
    fset = QuantileForecastSet(variable_names=var_order)
    for key, vals in by_key.items():
        if set(vals) != set(var_order):
            raise ValueError(f"incomplete variable set for record {key}")
        fset.records[key] = np.array([vals[n] for n in var_order])
    return fset
