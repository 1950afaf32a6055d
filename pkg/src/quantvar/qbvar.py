"""Quantile VAR with common factors, estimated by Gibbs sampling.

Model for quantile level q in (0, 1):

    y_t = Phi x_t + Lam f_t + v_t,   v_it ~ AL(0, sigma_i, q) independent,

where x_t = (1, y_{t-1}', ..., y_{t-p}')'. The asymmetric-Laplace errors are
handled through their exponential location-scale mixture

    y_it = Phi_i x_t + lam_i' f_t + theta z_it + sqrt(tau2 sigma_i z_it) u_it,

with z_it ~ Exp(1), u_it ~ N(0,1), theta = (1-2q)/(q(1-q)) and
tau2 = 2/(q(1-q)), which makes every full conditional a standard draw.
Coefficient rows carry a horseshoe prior with one global scale per model;
factor loadings have unit-variance normal priors and factors a standard
normal prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LagDesign
from .dist import (
    draw_from_precision_system,
    draw_gig_half,
    draw_inverse_gamma,
    update_horseshoe,
)

_Z_FLOOR = 1e-12
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class QuantileLevel:
    """A quantile level with its mixture constants."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"quantile must lie in (0, 1), got {self.q}")

    @property
    def theta(self) -> float:
        return (1.0 - 2.0 * self.q) / (self.q * (1.0 - self.q))

    @property
    def tau2(self) -> float:
        return 2.0 / (self.q * (1.0 - self.q))


@dataclass(frozen=True)
class McmcSchedule:
    iterations: int = 3000
    burn_in: int = 1000
    thin: int = 5

    def __post_init__(self):
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError("burn-in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thinning interval must be >= 1")
        if self.n_draws < 1:
            raise ValueError("schedule retains no draws")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class QbvarConfig:
    """Lag order, factor count, quantile level and prior hyperparameters."""

    p: int
    r: int
    quantile: float
    schedule: McmcSchedule = field(default_factory=McmcSchedule)
    a_sigma: float = 3.0
    b_sigma: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("lag order must be >= 1")
        if self.r < 0:
            raise ValueError("factor count must be >= 0")
        QuantileLevel(self.quantile)  # validates the range
        if self.a_sigma <= 0 or self.b_sigma <= 0:
            raise ValueError("inverse-gamma hyperparameters must be positive")

    @property
    def level(self) -> QuantileLevel:
        return QuantileLevel(self.quantile)


@dataclass
class QbvarState:
    """Current values of every block updated by the sampler."""

    Phi: np.ndarray  # (n, k) coefficient rows, intercept first
    Lam: np.ndarray  # (n, r) factor loadings
    F: np.ndarray  # (T, r) factors
    Z: np.ndarray  # (T, n) mixture variables
    sigma: np.ndarray  # (n,) scales
    psi: np.ndarray  # (n, k) horseshoe local scales
    kappa: float  # horseshoe global scale

    def copy(self) -> "QbvarState":
        return QbvarState(
            self.Phi.copy(),
            self.Lam.copy(),
            self.F.copy(),
            self.Z.copy(),
            self.sigma.copy(),
            self.psi.copy(),
            self.kappa,
        )


def weighted_system(X, y, weights, prior_prec_diag):
    """Precision and linear term of a heteroskedastic Bayes regression.

    Returns (P, rhs) with P = X' W X + diag(prior_prec_diag) and
    rhs = X' W y, so the conditional is N(P^-1 rhs, P^-1).
    """
    Xw = X * weights[:, None]
    P = X.T @ Xw
    P[np.diag_indices_from(P)] += prior_prec_diag
    rhs = Xw.T @ y
    return P, rhs


def residuals(design: LagDesign, state: QbvarState) -> np.ndarray:
    """Regression residuals before the mixture location shift, (T, n)."""
    E = design.Y - design.X @ state.Phi.T
    if state.Lam.shape[1]:
        E = E - state.F @ state.Lam.T
    return E


def step_coefficients(design, state, theta, tau2, rng) -> None:
    """Draw each coefficient row from its normal full conditional."""
    Y, X = design.Y, design.X
    n = Y.shape[1]
    FLt = state.F @ state.Lam.T if state.Lam.shape[1] else 0.0
    for i in range(n):
        w = 1.0 / (tau2 * state.sigma[i] * state.Z[:, i])
        ytil = Y[:, i] - theta * state.Z[:, i]
        if state.Lam.shape[1]:
            ytil = ytil - FLt[:, i]
        prior_prec = 1.0 / (state.psi[i] ** 2 * state.kappa**2)
        P, rhs = weighted_system(X, ytil, w, prior_prec)
        state.Phi[i], _ = draw_from_precision_system(P, rhs, rng)


def step_loadings(design, state, theta, tau2, rng) -> None:
    """Draw each loading row; prior is N(0, I) on every row."""
    r = state.Lam.shape[1]
    if r == 0:
        return
    Y, X = design.Y, design.X
    n = Y.shape[1]
    XPhit = X @ state.Phi.T
    for i in range(n):
        w = 1.0 / (tau2 * state.sigma[i] * state.Z[:, i])
        ytil = Y[:, i] - XPhit[:, i] - theta * state.Z[:, i]
        P, rhs = weighted_system(state.F, ytil, w, np.ones(r))
        state.Lam[i], _ = draw_from_precision_system(P, rhs, rng)


def factor_systems(design, state, theta, tau2):
    """Batched precision systems for the factor conditionals.

    Returns (P, rhs) with P of shape (T, r, r) and rhs (T, r); each f_t is
    N(P_t^-1 rhs_t, P_t^-1), combining loadings weighted by the observation
    variances tau2 sigma_i z_it with the standard-normal prior.
    """
    Y, X = design.Y, design.X
    r = state.Lam.shape[1]
    W = 1.0 / (tau2 * state.sigma[None, :] * state.Z)  # (T, n)
    R = Y - X @ state.Phi.T - theta * state.Z  # (T, n)
    P = np.einsum("ia,ti,ib->tab", state.Lam, W, state.Lam)
    P[:, np.arange(r), np.arange(r)] += 1.0
    rhs = np.einsum("ia,ti->ta", state.Lam, W * R)
    return P, rhs


def step_factors(design, state, theta, tau2, rng) -> None:
    """Draw all factor vectors jointly across t (batched r x r solves)."""
    r = state.Lam.shape[1]
    if r == 0:
        return
    T = design.Y.shape[0]
    P, rhs = factor_systems(design, state, theta, tau2)
    L = np.linalg.cholesky(P)
    mean = np.linalg.solve(P, rhs[..., None])[..., 0]
    z = rng.standard_normal((T, r))
    # solve L^T x = z per t for the zero-mean fluctuation
    fluct = np.linalg.solve(np.swapaxes(L, 1, 2), z[..., None])[..., 0]
    state.F = mean + fluct


def step_latent(design, state, theta, tau2, rng) -> None:
    """Draw mixture variables z_it ~ GIG(1/2, e^2/(tau2 s), theta^2/(tau2 s) + 2)."""
    E = residuals(design, state)
    s = tau2 * state.sigma[None, :]
    a = E**2 / s
    b = theta**2 / s + 2.0
    state.Z = np.maximum(draw_gig_half(a, b, rng), _Z_FLOOR)


def step_scales(design, state, theta, tau2, a_sigma, b_sigma, rng) -> None:
    """Draw sigma_i ~ IG(a + T/2, b + sum (e - theta z)^2 / (2 tau2 z)).

    Only the Gaussian part of the mixture involves sigma (the exponential
    mixing law is parameter-free), so the likelihood adds T/2 to the shape
    and the shift-adjusted squared residuals to the scale. Expanding the
    square gives e^2/(2 tau2 z) - e theta/tau2 + theta^2 z/(2 tau2); the
    cross term keeps the scale draw centered when theta != 0, which is what
    anchors intercepts away from the median.
    """
    E = residuals(design, state)
    T = E.shape[0]
    adj = E - theta * state.Z
    scale = b_sigma + np.sum(adj**2 / (2.0 * tau2 * state.Z), axis=0)
    for i in range(state.sigma.size):
        state.sigma[i] = draw_inverse_gamma(a_sigma + 0.5 * T, scale[i], rng)


def step_shrinkage(state, rng) -> None:
    """Slice-sample the horseshoe scales over all coefficients at once.

    The global scale is shared by the whole coefficient matrix, so the
    flattened vector goes through a single update.
    """
    psi_flat, state.kappa = update_horseshoe(
        state.Phi.ravel(), state.psi.ravel(), state.kappa, rng
    )
    state.psi = psi_flat.reshape(state.psi.shape)


def init_state(design: LagDesign, config: QbvarConfig) -> QbvarState:
    """Deterministic starting point: ridge coefficients, unit everything else."""
    Y, X = design.Y, design.X
    T, n = Y.shape
    k = X.shape[1]
    XtX = X.T @ X
    XtX[np.diag_indices_from(XtX)] += 1e-4
    Phi = np.linalg.solve(XtX, X.T @ Y).T
    E = Y - X @ Phi.T
    sigma = np.maximum(E.var(axis=0), 1e-8)
    return QbvarState(
        Phi=Phi,
        Lam=np.zeros((n, config.r)),
        F=np.zeros((T, config.r)),
        Z=np.ones((T, n)),
        sigma=sigma,
        psi=np.ones((n, k)),
        kappa=1.0,
    )


@dataclass
class ChainDiagnostics:
    """Per-retained-draw traces used by convergence checks."""

    residual_rms: np.ndarray  # (S,) rms of residuals at each retained draw
    kappa_trace: np.ndarray  # (S,) horseshoe global scale
    phi_first_half_mean: np.ndarray  # (n, k) mean over first half of draws
    phi_second_half_mean: np.ndarray  # (n, k) mean over second half


@dataclass
class PosteriorDrawSet:
    """Retained posterior draws of everything the forecaster needs."""

    kind: str  # "qbvar" or "bvar"
    quantile: float  # NaN for the Gaussian model
    p: int
    Phi: np.ndarray  # (S, n, k)
    Lam: np.ndarray  # (S, n, r)
    sigma: np.ndarray  # (S, n)
    variable_names: list[str]

    @property
    def n_draws(self) -> int:
        return self.Phi.shape[0]

    @property
    def n_vars(self) -> int:
        return self.Phi.shape[1]

    @property
    def n_factors(self) -> int:
        return self.Lam.shape[2]

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            format_version=_FORMAT_VERSION,
            kind=self.kind,
            quantile=self.quantile,
            p=self.p,
            Phi=self.Phi,
            Lam=self.Lam,
            sigma=self.sigma,
            variable_names=np.array(self.variable_names, dtype=str),
        )

    @classmethod
    def load(cls, path) -> "PosteriorDrawSet":
        with np.load(path, allow_pickle=False) as d:
            version = int(d["format_version"])
            if version != _FORMAT_VERSION:
                raise ValueError(f"unsupported draw-set format version {version}")
            return cls(
                kind=str(d["kind"]),
                quantile=float(d["quantile"]),
                p=int(d["p"]),
                Phi=d["Phi"],
                Lam=d["Lam"],
                sigma=d["sigma"],
                variable_names=[str(s) for s in d["variable_names"]],
            )


def run_chain(
    design: LagDesign, config: QbvarConfig, rng: np.random.Generator
) -> tuple[PosteriorDrawSet, ChainDiagnostics]:
    """Run the six-step Gibbs sampler and return thinned post-burn-in draws.

    Sweep order per iteration: coefficients, loadings, factors, mixture
    variables, scales, shrinkage.
    """
    level = config.level
    theta, tau2 = level.theta, level.tau2
    sched = config.schedule
    state = init_state(design, config)
    S = sched.n_draws
    T, n = design.Y.shape
    k = design.X.shape[1]
    Phi_draws = np.empty((S, n, k))
    Lam_draws = np.empty((S, n, config.r))
    sigma_draws = np.empty((S, n))
    rms = np.empty(S)
    kappa_trace = np.empty(S)
    s = 0
    for it in range(sched.iterations):
        step_coefficients(design, state, theta, tau2, rng)
        step_loadings(design, state, theta, tau2, rng)
        step_factors(design, state, theta, tau2, rng)
        step_latent(design, state, theta, tau2, rng)
        step_scales(design, state, theta, tau2, config.a_sigma, config.b_sigma, rng)
        step_shrinkage(state, rng)
        if it >= sched.burn_in and (it - sched.burn_in) % sched.thin == 0 and s < S:
            Phi_draws[s] = state.Phi
            Lam_draws[s] = state.Lam
            sigma_draws[s] = state.sigma
            E = residuals(design, state)
            rms[s] = float(np.sqrt(np.mean(E**2)))
            kappa_trace[s] = state.kappa
            s += 1
    half = S // 2
    diag = ChainDiagnostics(
        residual_rms=rms,
        kappa_trace=kappa_trace,
        phi_first_half_mean=Phi_draws[:half].mean(axis=0),
        phi_second_half_mean=Phi_draws[half:].mean(axis=0),
    )
    draws = PosteriorDrawSet(
        kind="qbvar",
        quantile=config.quantile,
        p=config.p,
        Phi=Phi_draws,
        Lam=Lam_draws,
        sigma=sigma_draws,
        variable_names=list(design.variable_names),
    )
    return draws, diag
