"""Random-variate kernels shared by the Gibbs samplers.

Everything takes an explicit ``numpy.random.Generator``; reproducibility
comes from :func:`derive_rng`, which spawns independent streams from a
master seed and a structured key (origin, model, quantile, ...).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special, stats

_TINY = 1e-300


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for a structured key under one master seed.

    Streams for distinct keys are statistically independent and
    reproducible regardless of the order they are created in.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class GigParams:
    """Parameters of the generalized inverse Gaussian GIG(p, a, b).

    Density proportional to x^(p-1) exp(-(a/x + b x)/2) on x > 0.
    """

    p: float
    a: float
    b: float

    def mean(self) -> float:
        if self.a <= 0:
            if self.p <= 0:
                raise ValueError("mean undefined for a=0, p<=0")
            return 2.0 * self.p / self.b  # Gamma(p, rate b/2) limit
        om = np.sqrt(self.a * self.b)
        r = np.sqrt(self.a / self.b)
        return r * special.kv(self.p + 1, om) / special.kv(self.p, om)


def _gig_half(a, b, rng: np.random.Generator) -> np.ndarray:
    """Vectorized exact GIG(1/2, a, b) draw.

    If X ~ GIG(1/2, a, b) then 1/X ~ IG(mu=sqrt(b/a), lam=b); we draw the
    inverse Gaussian by the squared-normal method, keeping the larger root
    in a cancellation-free form and selecting the smaller by its acceptance
    probability. a may be 0 (Gamma(1/2, b/2) limit, reached continuously).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    a_safe = np.maximum(a, _TINY)
    nu = rng.standard_normal(a.shape) ** 2
    om = np.sqrt(a_safe * b)
    x_plus = 1.0 + (nu + np.sqrt(nu * nu + 4.0 * om * nu)) / (2.0 * om)
    x_minus = 1.0 / x_plus
    take_minus = rng.random(a.shape) < 1.0 / (1.0 + x_minus)
    v = np.where(take_minus, x_minus, x_plus)
    # v is 1/X scaled by mu = sqrt(b/a) in the IG parameterization; invert back
    return np.sqrt(a_safe / b) / v


def draw_gig(params: GigParams, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from GIG(p, a, b); exact O(1) kernel at p=1/2, scipy otherwise."""
    if params.b <= 0:
        raise ValueError("GIG requires b > 0")
    if params.a < 0:
        raise ValueError("GIG requires a >= 0")
    shape = () if size is None else size
    if params.p == 0.5:
        a = np.broadcast_to(params.a, shape)
        b = np.broadcast_to(params.b, shape)
        out = _gig_half(a, b, rng)
        return float(out) if size is None else out
    if params.a == 0:
        if params.p <= 0:
            raise ValueError("GIG(p<=0, a=0, b) is not a distribution")
        return rng.gamma(params.p, 2.0 / params.b, size=size)
    om = np.sqrt(params.a * params.b)
    scale = np.sqrt(params.a / params.b)
    return stats.geninvgauss.rvs(params.p, om, scale=scale, size=size, random_state=rng)


def draw_gig_half(a, b, rng: np.random.Generator) -> np.ndarray:
    """Elementwise GIG(1/2, a, b) draws for arrays of parameters."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ValueError("GIG requires b > 0")
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("GIG requires a >= 0")
    return _gig_half(a, b, rng)


def draw_inverse_gamma(shape_param: float, scale: float, rng: np.random.Generator, size=None):
    """Inverse-gamma draw: X = 1/G with G ~ Gamma(shape, rate=scale)."""
    if shape_param <= 0 or scale <= 0:
        raise ValueError("inverse gamma requires positive shape and scale")
    g = rng.gamma(shape_param, 1.0 / scale, size=size)
    return 1.0 / g


def draw_mvn(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Multivariate normal draw via Cholesky with escalating jitter.

    Starts at 1e-10 * mean(diag) on a failed factorization and escalates
    tenfold up to 1e-6 * mean(diag) before giving up.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k = mean.size
    z = rng.standard_normal(k)
    base = float(np.mean(np.diag(cov)))
    if not np.isfinite(base) or base <= 0:
        base = 1.0
    jitter = 0.0
    for _ in range(6):
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(k))
            return mean + L @ z
        except np.linalg.LinAlgError:
            jitter = 1e-10 * base if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6 * base * 10.0:
                break
    raise np.linalg.LinAlgError("covariance not positive definite after jitter escalation")


def draw_from_precision_system(P: np.ndarray, rhs: np.ndarray, rng: np.random.Generator):
    """Draw x ~ N(P^-1 rhs, P^-1) from a precision matrix and linear term.

    Returns (draw, posterior_mean). Uses one Cholesky of P; the draw is
    mean + L^-T z. Falls back to jittered factorization like draw_mvn.
    """
    P = np.asarray(P, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    k = rhs.size
    base = float(np.mean(np.diag(P)))
    if not np.isfinite(base) or base <= 0:
        base = 1.0
    jitter = 0.0
    for _ in range(6):
        try:
            c, low = linalg.cho_factor(P + jitter * np.eye(k), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = 1e-10 * base if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6 * base * 10.0:
                raise
    mean = linalg.cho_solve((c, low), rhs)
    z = rng.standard_normal(k)
    draw = mean + linalg.solve_triangular(c, z, lower=low, trans="T" if low else "N")
    if not low:  # pragma: no cover - cho_factor(lower=True) returns lower
        draw = mean + linalg.solve_triangular(c, z, trans="T")
    return draw, mean


# ---------------------------------------------------------------------------
# Horseshoe slice-sampler updates. State is kept on the local scales psi
# (one per coefficient) and the global scale kappa; both updates work on
# eta = 1/psi^2 with a uniform slice auxiliary, which keeps every draw in
# closed form (truncated exponential / truncated gamma).


def _trunc_exp(rate, ub, u, rng_shape_src):
    """Exp(rate) truncated to (0, ub], via inverse cdf; rate may be ~0."""
    rate = np.asarray(rate, dtype=float)
    ub = np.asarray(ub, dtype=float)
    out = np.empty(np.broadcast(rate, ub).shape)
    r, ubb = np.broadcast_arrays(rate, ub)
    small = r * ubb < 1e-12
    # inverse cdf: -log(1 - U (1 - exp(-r*ub))) / r, in expm1/log1p form
    with np.errstate(over="ignore"):
        tail = -np.expm1(-r * ubb)
    safe_r = np.where(small, 1.0, r)
    out = -np.log1p(-u * tail) / safe_r
    out = np.where(small, u * ubb, out)
    return np.minimum(out, ubb)


def update_horseshoe(beta: np.ndarray, psi: np.ndarray, kappa: float, rng: np.random.Generator):
    """One slice-sampling sweep of horseshoe local and global scales.

    beta: current coefficients under the prior beta_j ~ N(0, psi_j^2 kappa^2).
    Returns (psi_new, kappa_new). Scales are floored away from zero so the
    conditionals for the coefficients stay proper.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    psi = np.asarray(psi, dtype=float).ravel()
    k = beta.size
    if psi.size != k:
        raise ValueError("psi length must match beta")

    # local scales: eta_j = 1/psi_j^2 | - ~ Exp(beta_j^2/(2 kappa^2)) on (0, (1-u_j)/u_j]
    eta = 1.0 / np.maximum(psi, _TINY) ** 2
    u = rng.random(k) * (1.0 / (1.0 + eta))
    u = np.maximum(u, _TINY)
    ub = (1.0 - u) / u
    rate = beta**2 / (2.0 * max(kappa, _TINY) ** 2)
    eta_new = _trunc_exp(rate, ub, rng.random(k), None)
    psi_new = 1.0 / np.sqrt(np.maximum(eta_new, _TINY))

    # global scale: eta_g = 1/kappa^2 | - ~ Gamma((k+1)/2, rate sum beta^2/(2 psi^2))
    # truncated to (0, (1-u)/u]
    eta_g = 1.0 / max(kappa, _TINY) ** 2
    ug = rng.uniform(0.0, 1.0 / (1.0 + eta_g))
    ug = max(ug, _TINY)
    ub_g = (1.0 - ug) / ug
    shape_g = (k + 1) / 2.0
    rate_g = float(np.sum(beta**2 / np.maximum(psi_new, _TINY) ** 2)) / 2.0
    v = rng.random()
    if rate_g * ub_g < 1e-12:
        # flat limit: density ~ x^(shape-1) on (0, ub]
        eta_g_new = ub_g * v ** (1.0 / shape_g)
    else:
        cdf_ub = special.gammainc(shape_g, rate_g * ub_g)
        eta_g_new = special.gammaincinv(shape_g, v * cdf_ub) / rate_g
        eta_g_new = min(eta_g_new, ub_g)
    kappa_new = 1.0 / np.sqrt(max(eta_g_new, _TINY))
    return psi_new, float(kappa_new)
