"""Stage-2 maximum likelihood for mixture copulas on pseudo-observations.

Constraints are handled by a smooth reparameterization so the optimizer works
in an unconstrained space:

* positive dependence parameters via ``exp``;
* Gumbel theta and outer-power beta (both >= 1) via ``1 + exp``;
* mixture weights via the additive log-ratio transform against the last weight.

The optimizer is a quasi-Newton ascent (BFGS inverse-Hessian updates) with a
backtracking Armijo line search; gradients are central finite differences of
the mean per-row log-likelihood. Every trial point of a gradient or a line
search is evaluated in one batched numpy pass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .copula import EPS, Generator, MixtureCopula, _component_logpdf, log_copula_density

log = logging.getLogger(__name__)

GRAD_TOL = 1e-6
MAX_ITER = 500
FD_STEP = 1e-6
ARMIJO_C = 1e-4
BACKTRACK = 0.5
N_BACKTRACK = 30

# component families and which constraint map each dependence parameter uses
FAMILY_SPECS = {
    "CFG": (("clayton", "frank", "gumbel"), True),
    "CG": (("clayton", "gumbel"), True),
    "OPC": (("op_clayton",), False),
}
AIC_PARAMS = {"CFG": 6, "CG": 4, "OPC": 2}
AIC_PARAMS_FREE_WEIGHTS = {"CFG": 5, "CG": 3, "OPC": 2}
DEFAULT_THETA = {"clayton": 1.0, "frank": 1.0, "gumbel": 1.5, "op_clayton": 1.0}
DEFAULT_BETA = 1.1


class CopulaFitError(RuntimeError):
    pass


@dataclass
class FitResult:
    family: str
    model: MixtureCopula
    loglik_copula: float
    aic: float
    iterations: int
    converged: bool
    gradient_norm: float
    init_loglik: float = float("nan")
    n_params: int = 0
    restarts: list = field(default_factory=list)

    def params(self) -> dict:
        out = {}
        for g in self.model.components:
            out[f"theta_{g.family}"] = g.theta
            if g.family == "op_clayton":
                out["beta"] = g.beta
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params(),
            "weights": list(self.model.weights),
            "loglik": self.loglik_copula,
            "aic": self.aic,
            "converged": self.converged,
            "iterations": self.iterations,
        }


# ---------------------------------------------------------------------------
# reparameterization


def _lower_bound(family: str) -> float:
    return 1.0 if family == "gumbel" else 0.0


def to_unconstrained(model: MixtureCopula, family: str) -> np.ndarray:
    comps, mixed = FAMILY_SPECS[family]
    x = [math.log(g.theta - _lower_bound(g.family)) for g in model.components]
    if family == "OPC":
        x.append(math.log(model.components[0].beta - 1.0))
    if mixed:
        w = model.weights
        x.extend(math.log(wi / w[-1]) for wi in w[:-1])
    return np.array(x)


def _unpack(x: np.ndarray, family: str, dim: int):
    """Batched inverse map: x is (P, p); returns per-component (theta, beta) arrays and log-weights (P, m)."""
    comps, mixed = FAMILY_SPECS[family]
    m = len(comps)
    params = []
    for i, fam in enumerate(comps):
        theta = _lower_bound(fam) + np.exp(x[:, i])
        beta = 1.0 + np.exp(x[:, m]) if fam == "op_clayton" else np.ones_like(theta)
        params.append((theta, beta))
    if mixed:
        logits = np.concatenate([x[:, -(m - 1):], np.zeros((x.shape[0], 1))], axis=1)
        logw = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    else:
        logw = np.zeros((x.shape[0], 1))
    return comps, params, logw


def from_unconstrained(x, family: str, dim: int) -> MixtureCopula:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    comps, params, logw = _unpack(x, family, dim)
    gens = []
    for fam, (theta, beta) in zip(comps, params):
        gens.append(Generator(fam, float(theta[0]), float(beta[0]) if fam == "op_clayton" else 1.0))
    w = np.exp(logw[0])
    w = w / w.sum()
    return MixtureCopula(tuple(gens), tuple(float(v) for v in w), dim)


# ---------------------------------------------------------------------------
# likelihood


def _exact_mean(rows: np.ndarray) -> np.ndarray:
    # exactly rounded sums: row order of the sample cannot change the result
    return np.array([math.fsum(r) for r in rows]) / rows.shape[1]


def _batched_mean_loglik(x: np.ndarray, pseudo: np.ndarray, family: str) -> np.ndarray:
    comps, params, logw = _unpack(x, family, pseudo.shape[1])
    total = None
    with np.errstate(all="ignore"):
        for i, (fam, (theta, beta)) in enumerate(zip(comps, params)):
            part = _component_logpdf(fam, pseudo, theta, beta) + logw[:, i:i + 1]
            total = part if total is None else np.logaddexp(total, part)
        out = np.where(np.all(np.isfinite(total), axis=1), 0.0, -np.inf)
    finite = np.isfinite(out)
    if np.any(finite):
        out[finite] = _exact_mean(total[finite])
    return out


def copula_loglik(pseudo, model: MixtureCopula) -> float:
    """Sum of log copula densities over rows (the margin term is a stage-2 constant)."""
    u = np.asarray(pseudo, dtype=float)
    if u.ndim != 2 or u.shape[1] != model.dim:
        raise ValueError(f"pseudo sample must be (n, {model.dim})")
    with np.errstate(all="ignore"):
        lc = log_copula_density(model, u)
    bad = np.flatnonzero(~np.isfinite(lc))
    if bad.size:
        raise FloatingPointError(f"non-finite copula density at row {bad[0]}")
    return math.fsum(lc)


# ---------------------------------------------------------------------------
# optimizer


def _gradient(x: np.ndarray, f0: float, pseudo, family) -> np.ndarray:
    p = x.size
    h = FD_STEP * np.maximum(1.0, np.abs(x))
    pts = np.repeat(x[None, :], 2 * p, axis=0)
    idx = np.arange(p)
    pts[idx, idx] += h
    pts[p + idx, idx] -= h
    vals = _batched_mean_loglik(pts, pseudo, family)
    if not np.all(np.isfinite(vals)):
        # fall back to one-sided differences where a side is infeasible
        fwd, bwd = vals[:p], vals[p:]
        g = np.where(np.isfinite(fwd) & np.isfinite(bwd), (fwd - bwd) / (2 * h),
                     np.where(np.isfinite(fwd), (fwd - f0) / h, (f0 - bwd) / h))
        return np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)
    return (vals[:p] - vals[p:]) / (2 * h)


def _ascend(x0: np.ndarray, pseudo: np.ndarray, family: str, max_iter: int, tol: float):
    x = x0.copy()
    f = float(_batched_mean_loglik(x[None, :], pseudo, family)[0])
    if not np.isfinite(f):
        raise CopulaFitError("initial point has non-finite likelihood")
    g = _gradient(x, f, pseudo, family)
    p = x.size
    H = np.eye(p)
    steps = BACKTRACK ** np.arange(N_BACKTRACK)
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            return x, f, g, it - 1
        d = H @ g
        slope = float(g @ d)
        if slope <= 0:
            H = np.eye(p)
            d, slope = g.copy(), float(g @ g)
        # cap very long steps in the unconstrained space
        dn = np.linalg.norm(d)
        if dn > 5.0:
            d *= 5.0 / dn
            slope *= 5.0 / dn
        found = None
        for lo in range(0, N_BACKTRACK, 4):
            chunk = steps[lo:lo + 4]
            trials = x[None, :] + chunk[:, None] * d[None, :]
            vals = _batched_mean_loglik(trials, pseudo, family)
            ok = np.flatnonzero(vals >= f + ARMIJO_C * chunk * slope)
            if ok.size:
                found = trials[ok[0]], float(vals[ok[0]])
                break
        if found is None:
            if not np.allclose(H, np.eye(p)):
                H = np.eye(p)
                continue
            break
        x_new, f_new = found
        g_new = _gradient(x_new, f_new, pseudo, family)
        s, y = x_new - x, -(g_new - g)  # curvature of the negated objective
        sy = float(s @ y)
        if sy > 1e-12:
            rho = 1.0 / sy
            I = np.eye(p)
            H = (I - rho * np.outer(s, y)) @ H @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
    return x, f, g, it


def default_init(family: str, dim: int) -> MixtureCopula:
    comps, _ = FAMILY_SPECS[family]
    gens = tuple(
        Generator(fam, DEFAULT_THETA[fam], DEFAULT_BETA if fam == "op_clayton" else 1.0) for fam in comps
    )
    return MixtureCopula(gens, tuple([1.0 / len(comps)] * len(comps)), dim)


def n_free_params(family: str, free_weights: bool = False) -> int:
    return (AIC_PARAMS_FREE_WEIGHTS if free_weights else AIC_PARAMS)[family]


def fit_mixture_mle(
    pseudo,
    family: str,
    init: MixtureCopula | None = None,
    *,
    restarts: int = 2,
    seed: int | np.random.SeedSequence = 0,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
    aic_free_weights: bool = False,
) -> FitResult:
    """Maximize the copula log-likelihood of ``family`` ('CFG', 'CG' or 'OPC').

    The fit starts from ``init`` (or the default initialization) plus
    ``restarts`` seeded random perturbations of it and keeps the best.
    """
    if family not in FAMILY_SPECS:
        raise ValueError(f"unknown copula family {family!r}; expected one of {sorted(FAMILY_SPECS)}")
    u = np.asarray(pseudo, dtype=float)
    if u.ndim != 2:
        raise ValueError("pseudo sample must be a 2-d array")
    n, d = u.shape
    if n < 50:
        raise ValueError(f"need at least 50 rows, got {n}")
    if not 2 <= d <= 5:
        raise ValueError(f"dimension must be in 2..5, got {d}")
    u = np.clip(u, EPS, 1.0 - EPS)
    init = init or default_init(family, d)
    x0 = to_unconstrained(init, family)
    init_ll = float(_batched_mean_loglik(x0[None, :], u, family)[0]) * n

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence([seed, n, d])
    rng = np.random.default_rng(ss)
    starts = [x0] + [x0 + rng.normal(0.0, 1.0, x0.size) for _ in range(restarts)]
    best = None
    summary = []
    for x_start in starts:
        try:
            x, f, g, it = _ascend(x_start, u, family, max_iter, tol)
        except CopulaFitError:
            summary.append(None)
            continue
        summary.append(f * n)
        if best is None or f > best[1]:
            best = (x, f, g, it)
    if best is None:
        raise CopulaFitError("no start produced a finite likelihood")
    x, f, g, it = best
    model = from_unconstrained(x, family, d)
    ll = f * n
    gnorm = float(np.linalg.norm(g))
    k = n_free_params(family, aic_free_weights)
    return FitResult(
        family=family,
        model=model,
        loglik_copula=ll,
        aic=2.0 * k - 2.0 * ll,
        iterations=it,
        converged=gnorm < tol,
        gradient_norm=gnorm,
        init_loglik=init_ll,
        n_params=k,
        restarts=summary,
    )


def select_model(fits: list[FitResult]) -> FitResult:
    """Minimum AIC; ties go to the fit with fewer parameters."""
    if not fits:
        raise ValueError("no fits to select from")
    return min(fits, key=lambda r: (r.aic, r.n_params))
