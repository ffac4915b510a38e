"""Rolling-window driver, exposure-adjusted returns and the pairwise TD projection."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .baskets import CarrySeries, build_baskets
from .config import RunConfig, substream
from .fitting import FitResult, fit_mixture_mle, select_model
from .ingestion import PricePanel, fill_forward, log_returns, ratios_from_quotes
from .marginals import FitError, fit_marginal, fit_record, pit_transform
from .taildep import TailDepEstimate, mixture_td, robust_pairwise_td

log = logging.getLogger(__name__)

BASKETS = ("investment", "funding")


class RegressionError(ValueError):
    pass


@dataclass
class WindowResult:
    date: np.datetime64
    window_start: np.datetime64
    window_end: np.datetime64
    basket: str
    members: tuple[str, ...]
    marginal_fits: list[dict]
    copula_fits: list[FitResult]
    selected: FitResult | None
    td: TailDepEstimate | None
    pairwise: list[tuple[str, str, TailDepEstimate]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "date": str(self.date),
            "window_start": str(self.window_start),
            "window_end": str(self.window_end),
            "basket": self.basket,
            "members": list(self.members),
            "marginal_fits": self.marginal_fits,
            "copula_fits": [f.to_dict() for f in self.copula_fits],
            "selected": self.selected.family if self.selected else None,
            "td": None if self.td is None else {"lower": self.td.lower, "upper": self.td.upper, **self.td.meta},
            "pairwise": [
                {"ccy_i": a, "ccy_j": b, "lower": e.lower, "upper": e.upper} for a, b, e in self.pairwise
            ],
        }


# ---------------------------------------------------------------------------
# rolling analysis

_STATE: dict = {}


def _init_worker(dates, currencies, forward, spot, returns, config):
    _STATE.update(dates=dates, currencies=currencies, forward=forward, spot=spot, returns=returns, config=config)


def _analyse_day(t: int) -> list[WindowResult]:
    st = _STATE
    cfg: RunConfig = st["config"]
    dates, currencies, rets = st["dates"], st["currencies"], st["returns"]
    ratios = ratios_from_quotes(currencies, st["forward"][t], st["spot"][t])
    day = dates[t]
    if len(ratios) < cfg.quintiles:
        log.info("%s: skipped, only %d quoted currencies", day, len(ratios))
        return []
    assignment = build_baskets(ratios, cfg.quintiles, day)
    col = {c: j for j, c in enumerate(currencies)}
    # returns row i is the move into price day i + 1
    block = rets[t - cfg.window:t]
    margin_cache: dict[str, object] = {}
    out = []
    for b_id, basket in enumerate(BASKETS):
        members = assignment.investment if basket == "investment" else assignment.funding
        usable = [c for c in members if np.all(np.isfinite(block[:, col[c]]))]
        if len(usable) < cfg.min_members:
            log.info("%s %s: skipped, %d members with full data", day, basket, len(usable))
            continue
        try:
            fits = []
            for c in usable:
                if c not in margin_cache:
                    margin_cache[c] = fit_marginal(block[:, col[c]], cfg.margin_model)
                fits.append(margin_cache[c])
        except FitError as exc:
            log.info("%s %s: skipped, marginal fit failed: %s", day, basket, exc)
            continue
        x = np.column_stack([block[:, col[c]] for c in usable])
        pseudo = pit_transform(x, fits)
        copula_fits = []
        for fam in cfg.family_codes:
            ss = substream(cfg.seed, f"copula-restarts-{fam}", t, b_id)
            copula_fits.append(
                fit_mixture_mle(pseudo, fam, restarts=cfg.restarts, seed=ss, aic_free_weights=cfg.aic_free_weights)
            )
        selected = select_model(copula_fits)
        d = len(usable)
        td = mixture_td(selected.model, d, min(cfg.td_h, d - 1)) if selected.converged else None
        pairwise = []
        for i, j in combinations(range(d), 2):
            est = robust_pairwise_td(
                pseudo[:, [i, j]],
                tuple(range(cfg.upper_percentiles[0], cfg.upper_percentiles[1] + 1)),
                tuple(range(cfg.lower_percentiles[0], cfg.lower_percentiles[1] + 1)),
            )
            pairwise.append((usable[i], usable[j], est))
        out.append(
            WindowResult(
                day,
                dates[t - cfg.window + 1],
                day,
                basket,
                tuple(usable),
                [fit_record(f, currency=c, window_start=str(dates[t - cfg.window + 1]), window_end=str(day))
                 for c, f in zip(usable, fits)],
                copula_fits,
                selected,
                td,
                pairwise,
            )
        )
    return out


def rolling_analysis(panel: PricePanel, config: RunConfig, jobs: int | None = None) -> list[WindowResult]:
    """One result per (trading day, basket) for every day with a full trailing window."""
    filled = fill_forward(panel)
    rets = log_returns(filled).returns
    if panel.n_days < config.window + 1:
        raise ValueError(f"panel has {panel.n_days} days; window {config.window} needs at least {config.window + 1}")
    days = list(range(config.window, panel.n_days))
    args = (filled.dates, filled.currencies, filled.forward1m, filled.spot, rets, config)
    jobs = jobs or config.jobs or os.cpu_count() or 1
    if jobs == 1:
        _init_worker(*args)
        chunks = [_analyse_day(t) for t in days]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=args) as pool:
            chunks = list(pool.map(_analyse_day, days, chunksize=max(1, len(days) // (4 * jobs))))
    return [r for chunk in chunks for r in chunk]


# ---------------------------------------------------------------------------
# exposure adjustment


@dataclass
class AdjustedReturns:
    dates: np.ndarray
    raw: np.ndarray
    adj_high: np.ndarray
    adj_low: np.ndarray
    flags: np.ndarray  # True where a TD value was missing and the raw return passed through

    @property
    def cum_raw(self):
        return np.cumsum(self.raw)

    @property
    def cum_adj_high(self):
        return np.cumsum(self.adj_high)

    @property
    def cum_adj_low(self):
        return np.cumsum(self.adj_low)


def exposure_adjusted_returns(
    carry: CarrySeries,
    td_high: Mapping,
    td_low: Mapping,
    direction: str = "downside",
    combine: bool = False,
) -> AdjustedReturns:
    """Scale HML returns by tail-exposure factors of the investment (high) and funding (low) baskets.

    downside: high by (1 - upper TD), low by (1 - lower TD);
    upside:   high by (1 + lower TD), low by (1 + upper TD).
    ``td_high``/``td_low`` map dates to TailDepEstimate. With ``combine`` both
    factors multiply a single series, reported in both columns.
    """
    if direction not in ("downside", "upside"):
        raise ValueError("direction must be 'downside' or 'upside'")
    sign = -1.0 if direction == "downside" else 1.0
    hi_attr, lo_attr = ("upper", "lower") if direction == "downside" else ("lower", "upper")
    n = carry.hml.size
    adj_high, adj_low = np.empty(n), np.empty(n)
    flags = np.zeros(n, dtype=bool)
    for i, (d, r) in enumerate(zip(carry.dates, carry.hml)):
        eh, el = td_high.get(d), td_low.get(d)
        fh = 1.0 if eh is None else 1.0 + sign * getattr(eh, hi_attr)
        fl = 1.0 if el is None else 1.0 + sign * getattr(el, lo_attr)
        flags[i] = eh is None or el is None
        if combine:
            adj_high[i] = adj_low[i] = r * fh * fl
        else:
            adj_high[i], adj_low[i] = r * fh, r * fl
    return AdjustedReturns(carry.dates.copy(), carry.hml.copy(), adj_high, adj_low, flags)


# ---------------------------------------------------------------------------
# OLS projection


@dataclass
class OlsFit:
    intercept: float
    coefficients: np.ndarray
    std_errors: np.ndarray  # intercept first
    r_squared: float
    n_obs: int
    names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "coefficients": dict(zip(self.names, self.coefficients.tolist())),
            "std_errors": {"constant": float(self.std_errors[0]),
                           **dict(zip(self.names, self.std_errors[1:].tolist()))},
            "r_squared": self.r_squared,
            "n_obs": self.n_obs,
        }


def _collinear_pair(X: np.ndarray, names: Sequence[str]) -> str:
    cols = [np.ones(X.shape[0])] + [X[:, j] for j in range(X.shape[1])]
    labels = ["constant", *names]
    for i, j in combinations(range(len(cols)), 2):
        if np.linalg.matrix_rank(np.column_stack([cols[i], cols[j]])) < 2:
            return f"{labels[i]} and {labels[j]}"
    return "a linear combination of regressors"


def regress_basket_td(y, X, names: Sequence[str] | None = None) -> OlsFit:
    """OLS with intercept via a QR decomposition; homoskedastic standard errors."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.column_stack([np.asarray(x, dtype=float).ravel() for x in X]) if not isinstance(X, np.ndarray) else X
    X = X.reshape(y.size, -1)
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    n, p = X.shape
    if n < 10:
        raise RegressionError(f"need at least 10 observations, got {n}")
    A = np.column_stack([np.ones(n), X])
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if np.any(diag <= 1e-10 * diag.max()) or np.linalg.matrix_rank(A) < p + 1:
        raise RegressionError(f"rank-deficient design: {_collinear_pair(X, names)} are collinear")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - A @ beta
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    dof = n - p - 1
    sigma2 = rss / dof if dof > 0 else float("nan")
    Rinv = np.linalg.inv(R)
    se = np.sqrt(sigma2 * np.sum(Rinv**2, axis=1))
    return OlsFit(float(beta[0]), beta[1:], se, float(min(max(r2, 0.0), 1.0)), n, names)
