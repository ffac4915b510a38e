"""Command-line entry point: ``carrytail <subcommand> [options]``.

Exit codes: 0 ok, 2 I/O error, 3 validation error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from collections import Counter
from itertools import combinations
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    RegressionError,
    exposure_adjusted_returns,
    regress_basket_td,
    rolling_analysis,
)
from .baskets import SizingError, assign_baskets, carry_returns
from .config import ConfigError, RunConfig, load_config, substream
from .copula import DomainError, Generator, MixtureCopula, ParameterError, sample_copula
from .fitting import CopulaFitError, fit_mixture_mle, select_model
from .ingestion import (
    ParseError,
    PricePanel,
    ValidationError,
    fill_counts,
    fill_forward,
    load_price_panel,
    log_returns,
    read_panel,
    write_panel,
)
from .marginals import FitError, fit_marginal, fit_record
from .taildep import archimedean_lower_td, archimedean_upper_td, robust_pairwise_td

log = logging.getLogger("carrytail")

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "MANIFEST"


# ---------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for key in ("out", "seed", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    for key in ("spot", "forward", "panel", "window", "margin_model", "td_h", "restarts"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "families", None):
        cfg.families = [f.strip().lower() for f in args.families.split(",") if f.strip()]
    if getattr(args, "invert", None):
        cfg.invert = [c.strip() for c in args.invert.split(",") if c.strip()]
    return cfg.validate()


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _load_panel(cfg: RunConfig) -> PricePanel:
    if cfg.panel:
        return read_panel(_require_file(cfg.panel))
    if cfg.spot and cfg.forward:
        return load_price_panel(_require_file(cfg.spot), _require_file(cfg.forward), cfg.invert)
    raise ConfigError("no input data: set panel, or spot and forward")


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_matrix(path) -> np.ndarray:
    p = _require_file(path)
    try:
        data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{p}: {exc}") from None
    return data


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    cfg = _config(args)
    raw = _load_panel(cfg)
    filled = fill_forward(raw)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "panel.npz"
    write_panel(filled, target)
    counts = fill_counts(raw, filled)
    print(f"currencies ({len(filled.currencies)}): {', '.join(filled.currencies)}")
    print(f"dates: {filled.dates[0]} .. {filled.dates[-1]} ({filled.n_days} rows)")
    print("filled cells: " + ", ".join(f"{c}={n}" for c, n in counts.items() if n) if any(counts.values())
          else "filled cells: none")
    print(f"panel written to {target}")
    return EXIT_OK


def _write_baskets(out: Path, assignments) -> None:
    rows = []
    for a in assignments:
        for c in sorted(a.basket_index):
            rows.append([str(a.date), c, a.basket_index[c]])
    _write_csv(out / "baskets.csv", ["date", "currency", "basket_index"], rows)


def _write_carry(out: Path, carry) -> None:
    rows = [[str(d), _fmt(l), _fmt(s), _fmt(h)]
            for d, l, s, h in zip(carry.dates, carry.long_leg, carry.short_leg, carry.hml)]
    _write_csv(out / "carry.csv", ["date", "long", "short", "hml"], rows)


def cmd_baskets(args) -> int:
    cfg = _config(args)
    panel = fill_forward(_load_panel(cfg))
    assignments = assign_baskets(panel, cfg.quintiles)
    carry = carry_returns(assignments, log_returns(panel), cfg.horizon)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_baskets(out, assignments)
    _write_carry(out, carry)
    print(f"{len(assignments)} daily assignments, {carry.hml.size} carry periods written to {out}")
    return EXIT_OK


def cmd_fit_margins(args) -> int:
    cfg = _config(args)
    panel = fill_forward(_load_panel(cfg))
    rets = log_returns(panel)
    end = panel.date_index(args.date) if args.date else panel.n_days - 1
    if end < cfg.window:
        raise SizingError(f"window {cfg.window} does not fit before {panel.dates[end]}")
    block = rets.returns[end - cfg.window:end]
    records = []
    for j, c in enumerate(panel.currencies):
        x = block[:, j]
        if not np.all(np.isfinite(x)):
            log.info("%s: incomplete window, skipped", c)
            continue
        fit = fit_marginal(x, cfg.margin_model)
        records.append(fit_record(fit, currency=c, window_start=str(panel.dates[end - cfg.window + 1]),
                                  window_end=str(panel.dates[end])))
        print(f"{c}: loglik {fit.loglik:.3f}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "margins.json", records)
    return EXIT_OK


def cmd_fit_copula(args) -> int:
    cfg = _config(args)
    u = _read_matrix(args.input)
    fits = []
    for i, fam in enumerate(cfg.family_codes):
        fits.append(fit_mixture_mle(u, fam, restarts=cfg.restarts, seed=substream(cfg.seed, "fit-copula", i),
                                    aic_free_weights=cfg.aic_free_weights))
    best = select_model(fits)
    for f in fits:
        mark = "*" if f is best else " "
        print(f"{mark} {f.family:4s} loglik {f.loglik_copula:12.4f}  AIC {f.aic:12.4f}  converged {f.converged}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "copula_fits.json", {"selected": best.family, "fits": [f.to_dict() for f in fits]})
    return EXIT_OK


def cmd_taildep(args) -> int:
    if args.input:
        u = _read_matrix(args.input)
        if u.shape[1] != 2:
            raise ValidationError(f"{args.input}: expected 2 columns, got {u.shape[1]}")
        est = robust_pairwise_td(u)
        print(json.dumps({"kind": "empirical", "lower": est.lower, "upper": est.upper}))
        return EXIT_OK
    if not args.family:
        raise ConfigError("taildep needs --family or --input")
    g = Generator(args.family, args.theta, args.beta)
    n, h = args.n, args.h
    print(json.dumps({"kind": "parametric", "family": g.family, "n": n, "h": h,
                      "lower": archimedean_lower_td(g, n, h), "upper": archimedean_upper_td(g, n, h)}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = MixtureCopula.single(Generator(args.family, args.theta, args.beta), args.d)
    seed = args.seed if args.seed is not None else 0
    u = sample_copula(model, args.n, substream(seed, "simulate"))
    path = Path(args.output) if args.output else Path(args.out or ".") / "sample.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, [f"u{j + 1}" for j in range(args.d)], ([_fmt(v) for v in row] for row in u))
    print(f"{args.n} x {args.d} sample written to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# full run


def _pair_est(result, a: str, b: str):
    for i, j, est in result.pairwise:
        if {i, j} == {a, b}:
            return est
    raise KeyError(f"pair {a}-{b} missing on {result.date}")


def _regressions(results, basket: str, n_ccy: int) -> dict:
    """Basket TD on pairwise TD of the most frequent members, over days where all of them are present."""
    rows = [r for r in results if r.basket == basket and r.td is not None]
    freq = Counter(c for r in rows for c in r.members)
    ccys = sorted(c for c, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:n_ccy])
    out: dict = {"currencies": ccys}
    if len(ccys) < 2:
        out["error"] = "fewer than two currencies available"
        return out
    pairs = list(combinations(ccys, 2))
    names = [f"{a}-{b}" for a, b in pairs]
    days = [r for r in rows if set(ccys) <= set(r.members)]
    out["n_days"] = len(days)
    for side in ("lower", "upper"):
        y = np.array([getattr(r.td, side) for r in days])
        X = np.array([[getattr(_pair_est(r, a, b), side) for a, b in pairs] for r in days]).reshape(len(days), -1)
        try:
            out[side] = regress_basket_td(y, X, names).to_dict()
        except RegressionError as exc:
            log.warning("%s %s regression: %s", basket, side, exc)
            out[side] = {"error": str(exc)}
    return out


def _aic_summary(results, families) -> list[str]:
    lines = ["AIC comparison (mean over windows; selection counts)"]
    for basket in ("investment", "funding"):
        rows = [r for r in results if r.basket == basket]
        if not rows:
            lines.append(f"  {basket}: no windows")
            continue
        picks = Counter(r.selected.family for r in rows)
        parts = []
        for fam in families:
            aics = [f.aic for r in rows for f in r.copula_fits if f.family == fam]
            parts.append(f"{fam} {np.mean(aics):.2f} ({picks.get(fam, 0)})")
        lines.append(f"  {basket} [{len(rows)} windows]: " + ", ".join(parts))
    return lines


def _write_manifest(out: Path, files: list[str], status: str) -> None:
    lines = [f"status: {status}"]
    for name in files:
        p = out / name
        if p.is_file():
            lines.append(f"{hashlib.sha256(p.read_bytes()).hexdigest()}  {name}")
    (out / MANIFEST).write_text("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    try:
        _run(cfg, out, written, args.jobs)
    except BaseException as exc:
        _write_manifest(out, written, f"failed: {type(exc).__name__}: {exc}")
        raise
    _write_manifest(out, written, "complete")
    return EXIT_OK


def _run(cfg: RunConfig, out: Path, written: list[str], jobs) -> None:
    # the bundle location is not part of the recorded configuration
    record = RunConfig(**{**cfg.as_dict(), "out": ""})
    (out / "config.cfg").write_text("\n".join(l for l in record.to_text().splitlines() if not l.startswith("out ="))
                                    + "\n")
    written.append("config.cfg")

    raw = _load_panel(cfg)
    if raw.n_days < cfg.window + 1:
        raise SizingError(f"window {cfg.window} needs at least {cfg.window + 1} trading days; panel has {raw.n_days}")
    panel = fill_forward(raw)
    rets = log_returns(panel)

    results = rolling_analysis(raw, cfg, jobs)
    with open(out / "windows.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    written.append("windows.jsonl")

    _write_csv(out / "td_series.csv", ["date", "basket", "kind", "lower", "upper"],
               [[str(r.date), r.basket, f"parametric-{r.selected.family}", _fmt(r.td.lower), _fmt(r.td.upper)]
                for r in results if r.td is not None])
    written.append("td_series.csv")
    _write_csv(out / "pairwise_td.csv", ["date", "ccy_i", "ccy_j", "lower", "upper"],
               [[str(r.date), a, b, _fmt(e.lower), _fmt(e.upper)]
                for r in results for a, b, e in r.pairwise])
    written.append("pairwise_td.csv")
    _write_csv(out / "aic.csv", ["date", "basket", *cfg.family_codes, "selected"],
               [[str(r.date), r.basket, *[_fmt(f.aic) for f in r.copula_fits], r.selected.family]
                for r in results])
    written.append("aic.csv")

    # positions start once a full trailing window exists
    first = panel.dates[cfg.window]
    assignments = [a for a in assign_baskets(panel, cfg.quintiles) if a.date >= first]
    _write_baskets(out, assignments)
    written.append("baskets.csv")
    carry = carry_returns(assignments, rets, cfg.horizon)
    _write_carry(out, carry)
    written.append("carry.csv")

    td_high = {r.date: r.td for r in results if r.basket == "investment" and r.td is not None}
    td_low = {r.date: r.td for r in results if r.basket == "funding" and r.td is not None}
    missing = set()
    for direction, name in (("downside", "adjusted_returns.csv"), ("upside", "adjusted_returns_upside.csv")):
        adj = exposure_adjusted_returns(carry, td_high, td_low, direction, cfg.combine)
        missing.update(str(d) for d, m in zip(adj.dates, adj.flags) if m)
        _write_csv(out / name, ["date", "raw", "adj_high", "adj_low", "cum_raw", "cum_adj_high", "cum_adj_low"],
                   [[str(d), *map(_fmt, vals)]
                    for d, *vals in zip(adj.dates, adj.raw, adj.adj_high, adj.adj_low, adj.cum_raw,
                                        adj.cum_adj_high, adj.cum_adj_low)])
        written.append(name)
    # rebalance dates whose return passed through unadjusted
    _write_csv(out / "td_missing.csv", ["date"], [[d] for d in sorted(missing)])
    written.append("td_missing.csv")

    _write_json(out / "regression.json",
                {b: _regressions(results, b, cfg.regression_currencies) for b in ("investment", "funding")})
    written.append("regression.json")

    for line in _aic_summary(results, cfg.family_codes):
        print(line)
    print(f"{len(results)} window results written to {out}")


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(parser: argparse.ArgumentParser) -> None:
    # SUPPRESS lets the flags appear before or after the subcommand
    parser.add_argument("--config", default=argparse.SUPPRESS, help="run configuration file")
    parser.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="top-level random seed")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spot", help="spot CSV (date,currency,price)")
    p.add_argument("--forward", help="1-month forward CSV")
    p.add_argument("--panel", help="panel file written by ingest")
    p.add_argument("--invert", help="comma-separated codes quoted as foreign per USD")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carrytail", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, fill and persist a price panel")
    _global_flags(p)
    _data_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("baskets", help="daily basket assignments and carry returns")
    _global_flags(p)
    _data_flags(p)
    p.set_defaults(func=cmd_baskets)

    p = sub.add_parser("fit-margins", help="fit every currency over one trailing window")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--date", help="window end date (default: last)")
    p.add_argument("--window", type=int)
    p.add_argument("--margin-model", dest="margin_model", choices=("lggd", "garch11"))
    p.set_defaults(func=cmd_fit_margins)

    p = sub.add_parser("fit-copula", help="fit mixture copulas to a pseudo-sample CSV")
    _global_flags(p)
    p.add_argument("--input", required=True, help="CSV with a header row and one column per dimension")
    p.add_argument("--families", help="comma-separated subset of cfg,cg,opc")
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_fit_copula)

    p = sub.add_parser("taildep", help="parametric or robust empirical tail dependence")
    _global_flags(p)
    p.add_argument("--family", choices=("clayton", "gumbel", "frank", "op_clayton"))
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2, help="dimension")
    p.add_argument("--h", type=int, default=1, help="number of coordinates in the conditioned event")
    p.add_argument("--input", help="two-column pseudo-sample CSV for the empirical estimator")
    p.set_defaults(func=cmd_taildep)

    p = sub.add_parser("run", help="full rolling-window pipeline")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--window", type=int)
    p.add_argument("--margin-model", dest="margin_model", choices=("lggd", "garch11"))
    p.add_argument("--families", help="comma-separated subset of cfg,cg,opc")
    p.add_argument("--td-h", dest="td_h", type=int, help="conditioned-event size for basket TD")
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="draw a copula sample")
    _global_flags(p)
    p.add_argument("--family", required=True, choices=("clayton", "gumbel", "frank", "op_clayton"))
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--output", help="CSV path (default: OUT/sample.csv)")
    p.set_defaults(func=cmd_simulate)
    return parser


def _exit_code(exc: BaseException) -> int | None:
    if isinstance(exc, (FitError, CopulaFitError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ParseError, ValidationError, ConfigError, ParameterError, DomainError, SizingError,
                        RegressionError, KeyError, ValueError)):
        return EXIT_VALIDATION
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key in ("config", "out", "jobs", "seed"):
        if not hasattr(args, key):
            setattr(args, key, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
