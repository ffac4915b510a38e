"""Spot / 1-month forward price panels.

Both input files are long-format CSV with header ``date,currency,price``.
Quotes are read as USD per unit of foreign currency; codes listed in
``invert`` are flipped on load.
"""
from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


_CODE = re.compile(r"^[A-Z]{3}$")


@dataclass(frozen=True)
class PricePanel:
    """Date-aligned quotes; NaN marks an absent cell."""

    dates: np.ndarray  # datetime64[D], strictly increasing
    currencies: tuple[str, ...]
    spot: np.ndarray
    forward1m: np.ndarray
    availability: np.ndarray  # both quotes present in the source

    def __post_init__(self):
        for arr in (self.dates, self.spot, self.forward1m, self.availability):
            arr.setflags(write=False)

    @property
    def n_days(self) -> int:
        return self.dates.size

    def date_index(self, date) -> int:
        d = np.datetime64(date, "D")
        i = int(np.searchsorted(self.dates, d))
        if i >= self.dates.size or self.dates[i] != d:
            raise KeyError(f"date {d} not in panel")
        return i


@dataclass(frozen=True)
class ReturnPanel:
    dates: np.ndarray
    currencies: tuple[str, ...]
    returns: np.ndarray  # NaN where either endpoint is absent


def _read_long_csv(path: Path) -> dict[tuple[np.datetime64, str], float]:
    out: dict[tuple[np.datetime64, str], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "currency", "price"]:
            raise ParseError(f"{path}:1: expected header 'date,currency,price', got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            raw_date, code, raw_price = (c.strip() for c in row)
            try:
                date = np.datetime64(dt.date.fromisoformat(raw_date), "D")
            except ValueError:
                raise ParseError(f"{path}:{line}: bad date {raw_date!r}") from None
            if not _CODE.match(code):
                raise ParseError(f"{path}:{line}: bad currency code {code!r}")
            try:
                price = float(raw_price)
            except ValueError:
                raise ParseError(f"{path}:{line}: bad price {raw_price!r}") from None
            if not np.isfinite(price) or price <= 0:
                raise ValidationError(f"{path}:{line}: price must be positive and finite, got {raw_price}")
            key = (date, code)
            if key in out:
                raise ValidationError(f"{path}:{line}: duplicate entry for {raw_date},{code}")
            out[key] = price
    return out


def load_price_panel(spot_path, forward_path, invert: Iterable[str] = ()) -> PricePanel:
    spot_path, forward_path = Path(spot_path), Path(forward_path)
    spot = _read_long_csv(spot_path)
    fwd = _read_long_csv(forward_path)
    dates = np.array(sorted({d for d, _ in spot} | {d for d, _ in fwd}), dtype="datetime64[D]")
    currencies = tuple(sorted({c for _, c in spot} | {c for _, c in fwd}))
    di = {d: i for i, d in enumerate(dates)}
    ci = {c: j for j, c in enumerate(currencies)}
    s = np.full((dates.size, len(currencies)), np.nan)
    f = np.full_like(s, np.nan)
    for (d, c), p in spot.items():
        s[di[d], ci[c]] = p
    for (d, c), p in fwd.items():
        f[di[d], ci[c]] = p
    flip = [ci[c] for c in set(invert) if c in ci]
    if flip:
        s[:, flip] = 1.0 / s[:, flip]
        f[:, flip] = 1.0 / f[:, flip]
    avail = ~np.isnan(s) & ~np.isnan(f)
    return PricePanel(dates, currencies, s, f, avail)


def _ffill(a: np.ndarray) -> np.ndarray:
    idx = np.where(np.isnan(a), 0, np.arange(a.shape[0])[:, None])
    np.maximum.accumulate(idx, axis=0, out=idx)
    out = a[idx, np.arange(a.shape[1])]
    # cells before the first observation stay absent
    return out


def fill_forward(panel: PricePanel) -> PricePanel:
    """Carry the last quote forward over gaps; leading gaps stay NaN."""
    return replace(
        panel,
        spot=_ffill(panel.spot.copy()),
        forward1m=_ffill(panel.forward1m.copy()),
        availability=panel.availability.copy(),
        dates=panel.dates.copy(),
    )


def fill_counts(panel: PricePanel, filled: PricePanel) -> dict[str, int]:
    before = ~np.isnan(panel.spot) & ~np.isnan(panel.forward1m)
    after = ~np.isnan(filled.spot) & ~np.isnan(filled.forward1m)
    return {c: int(n) for c, n in zip(panel.currencies, (after & ~before).sum(axis=0))}


def log_returns(panel: PricePanel) -> ReturnPanel:
    lf = np.log(panel.forward1m)
    return ReturnPanel(panel.dates[1:].copy(), panel.currencies, lf[1:] - lf[:-1])


def forward_spot_ratio(panel: PricePanel, date) -> dict[str, float]:
    """F/S per currency quoted on ``date``; absent currencies are omitted."""
    i = panel.date_index(date)
    return _ratios_at(panel, i)


def _ratios_at(panel: PricePanel, i: int) -> dict[str, float]:
    return ratios_from_quotes(panel.currencies, panel.forward1m[i], panel.spot[i])


def ratios_from_quotes(currencies, forward_row, spot_row) -> dict[str, float]:
    r = np.asarray(forward_row) / np.asarray(spot_row)
    return {c: float(v) for c, v in zip(currencies, r) if np.isfinite(v)}


def write_panel(panel: PricePanel, path) -> None:
    """Persist a panel as compressed npz."""
    np.savez_compressed(
        path,
        dates=panel.dates.astype("datetime64[D]").astype(np.int64),
        currencies=np.array(panel.currencies),
        spot=panel.spot,
        forward1m=panel.forward1m,
        availability=panel.availability,
    )


def read_panel(path) -> PricePanel:
    with np.load(path, allow_pickle=False) as z:
        return PricePanel(
            z["dates"].astype("datetime64[D]"),
            tuple(str(c) for c in z["currencies"]),
            z["spot"].copy(),
            z["forward1m"].copy(),
            z["availability"].copy(),
        )


def write_long_csv(path, dates, currencies, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "currency", "price"])
        for i, d in enumerate(dates):
            for j, c in enumerate(currencies):
                if np.isfinite(values[i, j]):
                    w.writerow([str(d), c, repr(float(values[i, j]))])
