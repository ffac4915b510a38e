"""Marginal models: log-generalized-gamma (profile MLE) and Gaussian GARCH(1,1) (QMLE)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal
from scipy.special import gammainc, gammaln, ndtr

from .copula import EPS


class FitError(RuntimeError):
    """A marginal fit could not be produced."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


DEFAULT_K_GRID = np.geomspace(0.05, 20.0, 60)


@dataclass(frozen=True)
class LggdParams:
    k: float
    u: float
    b: float
    loglik: float = float("nan")
    n: int = 0

    model = "lggd"
    n_params = 3

    def __post_init__(self):
        if not (self.k > 0 and self.b > 0):
            raise ValueError("lggd requires k > 0 and b > 0")

    def to_dict(self) -> dict:
        return {"k": self.k, "u": self.u, "b": self.b}


@dataclass(frozen=True)
class GarchParams:
    mu: float
    alpha0: float
    alpha1: float
    beta1: float
    loglik: float
    n: int
    sigma2: np.ndarray = field(repr=False, compare=False)
    converged: bool = True

    model = "garch11"
    n_params = 4

    def to_dict(self) -> dict:
        return {"mu": self.mu, "alpha0": self.alpha0, "alpha1": self.alpha1, "beta1": self.beta1}


MarginalFit = LggdParams | GarchParams


def aic(loglik: float, n_params: int) -> float:
    return 2.0 * n_params - 2.0 * loglik


# ---------------------------------------------------------------------------
# log-generalized-gamma


def lggd_logpdf(y, params: LggdParams):
    z = (np.asarray(y, dtype=float) - params.u) / params.b
    return -np.log(params.b) - gammaln(params.k) + params.k * z - np.exp(z)


def lggd_density(y, params: LggdParams):
    return np.exp(lggd_logpdf(y, params))


def lggd_cdf(y, params: LggdParams):
    """Regularized lower incomplete gamma P(k, exp((y - u) / b))."""
    z = (np.asarray(y, dtype=float) - params.u) / params.b
    with np.errstate(over="ignore"):
        return gammainc(params.k, np.exp(z))


def lggd_sample(k: float, u: float, b: float, n: int, rng: np.random.Generator) -> np.ndarray:
    return u + b * np.log(rng.gamma(k, 1.0, n))


def _tilted_mean_gap(y, ybar, scale):
    # exp(y / scale)-weighted mean of y minus the plain mean; shifted by max(y) to avoid overflow
    w = np.exp((y - y.max()) / scale)
    return np.dot(w, y) / w.sum() - ybar


def _profile_point(y: np.ndarray, k: float, std: float) -> tuple[float, float]:
    """Solve the scale equation for sigma~ at fixed k; return (u, b)."""
    ybar = y.mean()
    sk = np.sqrt(k)

    def score(sig):
        return _tilted_mean_gap(y, ybar, sig * sk) - sig / sk

    lo, hi = 1e-6, 10.0 * std
    while score(lo) <= 0 and lo > 1e-300:
        lo *= 1e-3
    for _ in range(200):
        if score(hi) < 0:
            break
        hi *= 2.0
    else:
        raise FitError("scale root search failed to bracket", {"k": k, "lo": lo, "hi": hi})
    if score(lo) <= 0:
        raise FitError("scale root search failed to bracket", {"k": k, "lo": lo, "hi": hi})
    sig = optimize.brentq(score, lo, hi, xtol=1e-300, rtol=1e-10, maxiter=500)
    b = sig * sk
    # first profile equation: exp(mu~) = [mean exp(y / b)]^b
    ymax = y.max()
    mu = ymax + b * np.log(np.mean(np.exp((y - ymax) / b)))
    return mu - b * np.log(k), b


def lggd_profile_loglik(samples, k_grid=DEFAULT_K_GRID) -> np.ndarray:
    """Profile log-likelihood over a grid of shapes (NaN where the scale root is not found)."""
    y = _validate_samples(samples, 10)
    std = y.std()
    out = np.full(len(k_grid), np.nan)
    for i, k in enumerate(k_grid):
        try:
            u, b = _profile_point(y, float(k), std)
        except FitError:
            continue
        out[i] = lggd_logpdf(y, LggdParams(float(k), u, b)).sum()
    return out


def _validate_samples(samples, min_n: int) -> np.ndarray:
    y = np.asarray(samples, dtype=float).ravel()
    if y.size < min_n:
        raise FitError(f"need at least {min_n} samples, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise FitError("samples must be finite")
    if np.ptp(y) == 0:
        raise FitError("degenerate (constant) sample", {"value": float(y[0])})
    return y


def fit_lggd_profile(samples, k_grid=DEFAULT_K_GRID) -> LggdParams:
    """Profile-likelihood fit over a grid of ``k``; (u, b) solved in closed form per k."""
    y = _validate_samples(samples, 10)
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.size == 0 or np.any(k_grid <= 0):
        raise FitError("k_grid must be a non-empty grid of positive values")
    std = y.std()
    best = None
    failures = []
    for k in k_grid:
        try:
            u, b = _profile_point(y, float(k), std)
        except FitError as exc:
            failures.append(exc.diagnostic)
            continue
        p = LggdParams(float(k), u, b)
        ll = float(lggd_logpdf(y, p).sum())
        if np.isfinite(ll) and (best is None or ll > best.loglik):
            best = LggdParams(float(k), u, b, ll, y.size)
    if best is None:
        raise FitError("no grid point produced a finite profile likelihood", {"failures": failures})
    return best


# ---------------------------------------------------------------------------
# GARCH(1,1)

_STATIONARITY_MARGIN = 1e-6


def garch11_variance(eps: np.ndarray, alpha0: float, alpha1: float, beta1: float, sigma2_0: float) -> np.ndarray:
    """sigma2[t] = alpha0 + alpha1 * eps[t-1]**2 + beta1 * sigma2[t-1], sigma2[0] given."""
    sigma2 = np.empty_like(eps)
    sigma2[0] = sigma2_0
    for t in range(1, eps.size):
        sigma2[t] = alpha0 + alpha1 * eps[t - 1] ** 2 + beta1 * sigma2[t - 1]
    return sigma2


def _garch_variance_fast(eps, alpha0, alpha1, beta1, sigma2_0):
    drive = alpha0 + alpha1 * eps[:-1] ** 2
    tail, _ = signal.lfilter([1.0], [1.0, -beta1], drive, zi=[beta1 * sigma2_0])
    return np.concatenate([[sigma2_0], tail])


def _garch_nll(params, x, sigma2_0):
    mu, a0, a1, b1 = params
    eps = x - mu
    s2 = _garch_variance_fast(eps, a0, a1, b1, sigma2_0)
    if np.any(s2 <= 0):
        return 1e100
    return 0.5 * np.sum(np.log(2 * np.pi) + np.log(s2) + eps**2 / s2)


def fit_garch11(samples) -> GarchParams:
    """Gaussian quasi-MLE of (mu, alpha0, alpha1, beta1) subject to alpha1 + beta1 < 1."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 50:
        raise FitError(f"need at least 50 samples, got {x.size}")
    if np.ptp(x) == 0:
        raise FitError("degenerate (constant) sample")
    var = x.var()
    scale = np.sqrt(var)
    # fit on the standardized series, map back afterwards
    z = (x - x.mean()) / scale
    s0 = 1.0
    best = None
    for a1, b1 in ((0.05, 0.90), (0.10, 0.80), (0.20, 0.50)):
        x0 = np.array([0.0, 1.0 - a1 - b1, a1, b1])
        res = optimize.minimize(
            _garch_nll,
            x0,
            args=(z, s0),
            method="SLSQP",
            bounds=[(-10.0, 10.0), (1e-8, 10.0), (0.0, 1.0), (0.0, 1.0)],
            constraints=[{"type": "ineq", "fun": lambda p: 1.0 - _STATIONARITY_MARGIN - p[2] - p[3]}],
            options={"ftol": 1e-12, "maxiter": 500},
        )
        if best is None or res.fun < best.fun:
            best = res
    mu_z, a0_z, a1, b1 = best.x
    mu = x.mean() + scale * mu_z
    alpha0 = a0_z * var
    sigma2 = garch11_variance(x - mu, alpha0, a1, b1, var)
    eps = x - mu
    loglik = float(-0.5 * np.sum(np.log(2 * np.pi) + np.log(sigma2) + eps**2 / sigma2))
    converged = bool(best.success) and not _stuck_on_boundary(best, z, s0)
    return GarchParams(float(mu), float(alpha0), float(a1), float(b1), loglik, x.size, sigma2, converged)


def _stuck_on_boundary(res, z, s0, tol=1e-3) -> bool:
    """True when a coefficient sits on a bound while the gradient still points outward."""
    p = res.x
    h = 1e-6
    grad = np.array([
        (_garch_nll(p + h * e, z, s0) - _garch_nll(p - h * e, z, s0)) / (2 * h)
        for e in np.eye(4)
    ]) / z.size
    on_stat = 1.0 - p[2] - p[3] <= 2 * _STATIONARITY_MARGIN
    if on_stat and -(grad[2] + grad[3]) > tol:
        return True
    for i, lo in ((1, 1e-8), (2, 0.0), (3, 0.0)):
        if p[i] <= lo + 1e-10 and grad[i] < -tol:
            return True
    return False


def simulate_garch11(alpha0, alpha1, beta1, n, rng: np.random.Generator, mu=0.0, burn=500) -> np.ndarray:
    z = rng.standard_normal(n + burn)
    s2 = alpha0 / (1.0 - alpha1 - beta1)
    out = np.empty(n + burn)
    eps_prev = 0.0
    for t in range(n + burn):
        s2 = alpha0 + alpha1 * eps_prev**2 + beta1 * s2
        eps_prev = np.sqrt(s2) * z[t]
        out[t] = eps_prev
    return mu + out[burn:]


# ---------------------------------------------------------------------------
# probability integral transform


def marginal_cdf(x, fit: MarginalFit) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if isinstance(fit, LggdParams):
        return lggd_cdf(x, fit)
    if isinstance(fit, GarchParams):
        if x.shape != fit.sigma2.shape:
            raise ValueError("GARCH transform needs the series the model was fitted on")
        return ndtr((x - fit.mu) / np.sqrt(fit.sigma2))
    raise TypeError(f"unsupported marginal fit {type(fit).__name__}")


def pit_transform(samples, fits) -> np.ndarray:
    """Map each column through its fitted marginal; result clamped to [EPS, 1 - EPS]."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(fits) != x.shape[1]:
        raise ValueError(f"{x.shape[1]} columns but {len(fits)} fits")
    u = np.column_stack([marginal_cdf(x[:, j], f) for j, f in enumerate(fits)])
    return np.clip(u, EPS, 1.0 - EPS)


def fit_marginal(samples, model: str = "lggd", k_grid=DEFAULT_K_GRID) -> MarginalFit:
    if model == "lggd":
        return fit_lggd_profile(samples, k_grid)
    if model == "garch11":
        return fit_garch11(samples)
    raise ValueError(f"unknown marginal model {model!r}")


def fit_record(fit: MarginalFit, **meta) -> dict:
    return {**meta, "model": fit.model, "params": fit.to_dict(), "loglik": fit.loglik,
            "aic": aic(fit.loglik, fit.n_params)}
