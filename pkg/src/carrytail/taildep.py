"""Parametric and non-parametric tail-dependence coefficients.

Parametric coefficients follow the generalized Archimedean definition: the
first ``h`` coordinates are jointly extreme given that the remaining ``n - h``
are. With ``h = 1`` this is the exposure of one currency conditioned on the
rest of its basket, which is the default used by the pipeline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.stats import rankdata

from .copula import DomainError, Generator, MixtureCopula, _log_abs_dpsi

log = logging.getLogger(__name__)

UPPER_PERCENTILES = tuple(range(1, 21))
LOWER_PERCENTILES = tuple(range(80, 100))


@dataclass(frozen=True)
class TailDepEstimate:
    lower: float
    upper: float
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} tail dependence {v} outside [0, 1]")


def _check_split(n: int, h: int) -> None:
    if not (isinstance(n, (int, np.integer)) and isinstance(h, (int, np.integer))) or not 1 <= h < n:
        raise DomainError(f"need integers 1 <= h < n, got n={n}, h={h}")


def _alt_power_sum(m: int, a: float) -> float:
    # sum_{i=1}^m C(m, i) (-1)^i i^a
    return sum(comb(m, i) * (-1) ** i * i**a for i in range(1, m + 1))


def archimedean_lower_td(g: Generator, n: int, h: int = 1) -> float:
    _check_split(n, h)
    if g.family == "clayton":
        return ((n - h) / n) ** (1.0 / g.theta)
    if g.family == "op_clayton":
        return ((n - h) / n) ** (1.0 / (g.beta * g.theta))
    return 0.0


def archimedean_upper_td(g: Generator, n: int, h: int = 1) -> float:
    """Limit of the binomial-sum ratio as t -> 0+.

    Near zero the Gumbel and outer-power Clayton generators behave like
    ``1 - t**a`` (a = 1/theta resp. 1/beta), so ``i * psi'(i t)`` is
    proportional to ``i**a`` and the ratio reduces to alternating power sums.
    """
    _check_split(n, h)
    if g.family == "gumbel":
        a = 1.0 / g.theta
    elif g.family == "op_clayton":
        a = 1.0 / g.beta
    else:
        return 0.0
    if a == 1.0:
        return 0.0
    value = _alt_power_sum(n, a) / _alt_power_sum(n - h, a)
    return float(min(max(value, 0.0), 1.0))


def upper_td_ratio(g: Generator, n: int, h: int, t: float) -> float:
    """The binomial-sum ratio itself at a finite ``t`` (its t -> 0+ limit is the upper TD)."""
    _check_split(n, h)

    def s(m):
        return sum(
            comb(m, i) * i * (-1) ** i * -np.exp(_log_abs_dpsi(g.family, i * t, 1, g.theta, g.beta))
            for i in range(1, m + 1)
        )

    return float(s(n) / s(n - h))


def lower_td_ratio(g: Generator, n: int, h: int, t: float) -> float:
    """n/(n-h) * psi'(n t) / psi'((n-h) t) at a finite ``t`` (its t -> inf limit is the lower TD)."""
    _check_split(n, h)
    la = _log_abs_dpsi(g.family, n * t, 1, g.theta, g.beta)
    lb = _log_abs_dpsi(g.family, (n - h) * t, 1, g.theta, g.beta)
    return float(n / (n - h) * np.exp(la - lb))


def mixture_td(model: MixtureCopula, n: int | None = None, h: int = 1) -> TailDepEstimate:
    """Weight-averaged component coefficients."""
    n = model.dim if n is None else n
    lower = sum(w * archimedean_lower_td(g, n, h) for g, w in zip(model.components, model.weights))
    upper = sum(w * archimedean_upper_td(g, n, h) for g, w in zip(model.components, model.weights))
    families = "+".join(g.family for g in model.components)
    return TailDepEstimate(
        float(min(lower, 1.0)), float(min(upper, 1.0)), "parametric", {"family": families, "n": n, "h": h}
    )


# ---------------------------------------------------------------------------
# non-parametric pairwise estimators


def _ranks(pseudo) -> np.ndarray:
    x = np.asarray(pseudo, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("pairwise estimators need an (n, 2) sample")
    return rankdata(x, axis=0)


def _upper_from_ranks(r: np.ndarray, ks) -> tuple[np.ndarray, np.ndarray]:
    n = r.shape[0]
    ks = np.asarray(ks)
    q = (n - ks) / n
    below = np.maximum(r[:, 0], r[:, 1])
    c_hat = np.searchsorted(np.sort(below), q, side="right") / n
    empty = c_hat == 0
    with np.errstate(divide="ignore"):
        ratio = np.log(c_hat) / np.log(q)
    est = np.where(empty, 0.0, 2.0 - np.minimum(2.0, ratio))
    return est, empty


def empirical_pairwise_upper_td(pseudo, k: int, *, return_flag: bool = False):
    """Rank-based upper tail estimator at rank offset ``k``.

    When the empirical copula is zero at the evaluation point the estimate is
    0 and, with ``return_flag``, the flag is True.
    """
    ranks = _ranks(pseudo)
    n = ranks.shape[0]
    r = ranks / (n + 1)
    if n < 20:
        raise ValueError("need at least 20 observations")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in 1..{n - 1}")
    est, empty = _upper_from_ranks(r, [k])
    value = float(np.clip(est[0], 0.0, 1.0))
    return (value, bool(empty[0])) if return_flag else value


def percentile_ks(n: int, percentiles) -> np.ndarray:
    return np.clip(np.rint(np.asarray(percentiles) * n / 100.0).astype(int), 1, n - 1)


def robust_pairwise_td(
    pseudo,
    upper_percentiles=UPPER_PERCENTILES,
    lower_percentiles=LOWER_PERCENTILES,
) -> TailDepEstimate:
    """Median of the pairwise estimator over a band of rank offsets.

    The lower coefficient is the upper estimator applied to the reflected
    sample ``(1 - u, 1 - v)``; the ``p``-th lower percentile uses the same
    offset as the ``(100 - p)``-th upper percentile, so reflecting the input
    swaps the two estimates exactly.
    """
    ranks = _ranks(pseudo)
    n = ranks.shape[0]
    if n < 100:
        raise ValueError("need at least 100 observations")
    upper, _ = _upper_from_ranks(ranks / (n + 1), percentile_ks(n, upper_percentiles))
    # average ranks of the reflected sample are exactly n + 1 - R
    reflected = (n + 1 - ranks) / (n + 1)
    lower, _ = _upper_from_ranks(reflected, percentile_ks(n, 100 - np.asarray(lower_percentiles)))
    return TailDepEstimate(
        float(np.clip(np.median(lower), 0.0, 1.0)),
        float(np.clip(np.median(upper), 0.0, 1.0)),
        "empirical",
        {"upper_percentiles": [min(upper_percentiles), max(upper_percentiles)],
         "lower_percentiles": [min(lower_percentiles), max(lower_percentiles)]},
    )


def pairwise_td_matrix(pseudo, labels=None) -> list[tuple[str, str, TailDepEstimate]]:
    """Robust estimates for every column pair i < j."""
    x = np.asarray(pseudo, dtype=float)
    d = x.shape[1]
    labels = list(labels) if labels is not None else [str(i) for i in range(d)]
    out = []
    for i in range(d):
        for j in range(i + 1, d):
            est = robust_pairwise_td(x[:, [i, j]])
            out.append((labels[i], labels[j], TailDepEstimate(est.lower, est.upper, "empirical",
                                                               {**est.meta, "pair": [labels[i], labels[j]]})))
    return out
