"""Synthetic spot/forward panels with known basket dependence.

Each currency carries a constant forward/spot ratio, so the basket ranking is
fixed: the top ``n // 5`` currencies form the investment basket and their
daily forward log returns are drawn from a Gumbel copula, the bottom ones from
a Clayton copula, and the middle currencies are independent.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import stats

from .config import substream
from .copula import Generator, MixtureCopula, sample_copula
from .ingestion import write_long_csv

CODES = ("AUD", "BRL", "CAD", "CHF", "CZK", "DKK", "EUR", "GBP", "HUF", "JPY",
         "MXN", "NOK", "NZD", "PLN", "SEK", "SGD", "TRY", "ZAR")


def synthetic_panel_arrays(n_days: int = 300, n_ccy: int = 15, seed: int = 0,
                           high_theta: float = 2.0, low_theta: float = 2.0,
                           scale: float = 0.005, start: str = "2020-01-01"):
    """Return (dates, currencies, spot, forward) arrays."""
    if not 5 <= n_ccy <= len(CODES):
        raise ValueError(f"n_ccy must be in 5..{len(CODES)}")
    ccys = CODES[:n_ccy]
    size = n_ccy // 5
    # forward/spot ratios: descending differential, shuffled across codes
    order = np.random.default_rng(substream(seed, "synthetic-order")).permutation(n_ccy)
    diffs = np.linspace(0.004, -0.004, n_ccy)[np.argsort(order)]
    rank = np.argsort(-diffs)
    high, low = rank[:size], rank[-size:]

    u = np.random.default_rng(substream(seed, "synthetic-independent")).uniform(size=(n_days - 1, n_ccy))
    hi = MixtureCopula.single(Generator("gumbel", high_theta), size)
    lo = MixtureCopula.single(Generator("clayton", low_theta), size)
    u[:, high] = sample_copula(hi, n_days - 1, substream(seed, "synthetic-high"))
    u[:, low] = sample_copula(lo, n_days - 1, substream(seed, "synthetic-low"))
    rets = scale * stats.t.ppf(u, df=5)

    level = np.exp(np.random.default_rng(substream(seed, "synthetic-level")).normal(0.0, 0.5, n_ccy))
    logf = np.vstack([np.log(level), np.log(level) + np.cumsum(rets, axis=0)])
    forward = np.exp(logf)
    spot = forward / (1.0 + diffs)
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    return dates, ccys, spot, forward


def write_synthetic_panel(directory, **kwargs) -> tuple[Path, Path]:
    """Write ``spot.csv`` and ``forward.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dates, ccys, spot, forward = synthetic_panel_arrays(**kwargs)
    sp, fw = directory / "spot.csv", directory / "forward.csv"
    write_long_csv(sp, dates, ccys, spot)
    write_long_csv(fw, dates, ccys, forward)
    return sp, fw


def bundled_data_dir() -> Path:
    return Path(__file__).parent / "data"
