"""Forward-discount sorted currency baskets and carry (HML) returns."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ingestion import PricePanel, ReturnPanel, _ratios_at

MONTH = 21


class SizingError(ValueError):
    pass


@dataclass(frozen=True)
class BasketAssignment:
    date: np.datetime64
    basket_index: dict  # currency -> 1..quintiles, 1 = highest F/S
    investment: tuple[str, ...]
    funding: tuple[str, ...]


@dataclass(frozen=True)
class CarrySeries:
    dates: np.ndarray
    long_leg: np.ndarray
    short_leg: np.ndarray
    hml: np.ndarray


def basket_sizes(n: int, quintiles: int = 5) -> list[int]:
    """Extreme baskets get floor(n/q); the remainder goes round-robin to the middle ones."""
    if quintiles < 3:
        raise SizingError("need at least 3 baskets")
    if n < quintiles:
        raise SizingError(f"{n} currencies cannot fill {quintiles} baskets")
    base = n // quintiles
    sizes = [base] * quintiles
    middle = list(range(1, quintiles - 1))
    for i in range(n - base * quintiles):
        sizes[middle[i % len(middle)]] += 1
    return sizes


def build_baskets(ratios: Mapping[str, float], quintiles: int = 5, date=None) -> BasketAssignment:
    ranked = sorted(ratios, key=lambda c: (-ratios[c], c))
    sizes = basket_sizes(len(ranked), quintiles)
    index = {}
    pos = 0
    for b, size in enumerate(sizes, start=1):
        for c in ranked[pos:pos + size]:
            index[c] = b
        pos += size
    inv = tuple(ranked[: sizes[0]])
    fund = tuple(ranked[len(ranked) - sizes[-1]:])
    return BasketAssignment(date, index, inv, fund)


def assign_baskets(panel: PricePanel, quintiles: int = 5) -> list[BasketAssignment]:
    """One assignment per trading day with enough quoted currencies."""
    out = []
    for i, d in enumerate(panel.dates):
        ratios = _ratios_at(panel, i)
        if len(ratios) >= quintiles:
            out.append(build_baskets(ratios, quintiles, d))
    return out


def _leg_return(members: Sequence[str], cum: np.ndarray, col: dict) -> float:
    vals = [cum[col[c]] for c in members if c in col and np.isfinite(cum[col[c]])]
    if not vals:
        raise ValueError("empty basket: no member has returns over the horizon")
    return float(np.mean(vals))


def carry_returns(assignments: Sequence[BasketAssignment], returns: ReturnPanel, horizon: int = MONTH) -> CarrySeries:
    """Non-overlapping holding-period returns of the long (investment) and short (funding) legs.

    Positions formed at a rebalance date t earn the cumulative log return over
    the next ``horizon`` trading days; rebalance dates are every ``horizon``-th
    trading day from the first assignment.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    by_date = {a.date: a for a in assignments}
    col = {c: j for j, c in enumerate(returns.currencies)}
    dates, longs, shorts = [], [], []
    if by_date:
        day = min(by_date)
        while True:
            # returns row i covers the move from the previous trading day to returns.dates[i]
            start = int(np.searchsorted(returns.dates, day, side="right"))
            if start + horizon > returns.dates.size:
                break
            a = by_date.get(day)
            if a is not None:
                cum = returns.returns[start:start + horizon].sum(axis=0)  # NaN if any day missing
                longs.append(_leg_return(a.investment, cum, col))
                shorts.append(_leg_return(a.funding, cum, col))
                dates.append(day)
            day = returns.dates[start + horizon - 1]
    lg, sh = np.array(longs, dtype=float), np.array(shorts, dtype=float)
    return CarrySeries(np.array(dates, dtype="datetime64[D]"), lg, sh, lg - sh)
