import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carrytail.ingestion import (
    ParseError,
    PricePanel,
    ValidationError,
    fill_counts,
    fill_forward,
    forward_spot_ratio,
    load_price_panel,
    log_returns,
    read_panel,
    write_long_csv,
    write_panel,
)


def _write(path, rows, header="date,currency,price"):
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


@pytest.fixture
def pair(tmp_path):
    spot = _write(tmp_path / "spot.csv", [
        "2020-01-01,AUD,0.70", "2020-01-01,JPY,0.0090",
        "2020-01-02,AUD,0.71", "2020-01-02,JPY,0.0091",
        "2020-01-03,AUD,0.72", "2020-01-03,JPY,0.0092",
    ])
    fwd = _write(tmp_path / "fwd.csv", [
        "2020-01-01,AUD,0.701", "2020-01-01,JPY,0.0089",
        "2020-01-02,AUD,0.711", "2020-01-02,JPY,0.0090",
        "2020-01-03,AUD,0.721", "2020-01-03,JPY,0.0091",
    ])
    return spot, fwd


def _panel(spot, fwd=None, dates=None):
    spot = np.asarray(spot, dtype=float)
    fwd = spot.copy() if fwd is None else np.asarray(fwd, dtype=float)
    n = spot.shape[0]
    dates = np.arange(n).astype("datetime64[D]") if dates is None else dates
    ccys = tuple(f"C{j:02d}"[:3] for j in range(spot.shape[1]))
    return PricePanel(dates, ccys, spot, fwd, ~np.isnan(spot) & ~np.isnan(fwd))


def test_load_full_panel(pair):
    p = load_price_panel(*pair)
    assert p.currencies == ("AUD", "JPY")
    assert p.spot.shape == (3, 2) and p.availability.all()
    assert p.dates[0] == np.datetime64("2020-01-01")


def test_missing_cell_marked_and_filled(tmp_path, pair):
    spot, fwd = pair
    lines = spot.read_text().splitlines()
    _write(spot, [l for l in lines[1:] if l != "2020-01-02,AUD,0.71"])
    p = load_price_panel(spot, fwd)
    assert not p.availability[1, 0]
    assert math.isnan(p.spot[1, 0])
    f = fill_forward(p)
    assert f.spot[1, 0] == 0.70
    assert fill_counts(p, f) == {"AUD": 1, "JPY": 0}


def test_zero_price_rejected(pair):
    spot, fwd = pair
    _write(spot, ["2020-01-01,AUD,0"])
    with pytest.raises(ValidationError, match=r"spot\.csv:2"):
        load_price_panel(spot, fwd)


def test_duplicate_rejected(pair):
    spot, fwd = pair
    _write(spot, ["2020-01-01,AUD,0.7", "2020-01-01,AUD,0.8"])
    with pytest.raises(ValidationError, match="duplicate"):
        load_price_panel(spot, fwd)


@pytest.mark.parametrize("row", ["2020-01-01,AUD", "2020-13-01,AUD,0.7", "2020-01-01,aud,0.7", "2020-01-01,AUD,x"])
def test_malformed_rows_name_line(pair, row):
    spot, fwd = pair
    _write(spot, ["2020-01-01,JPY,0.009", row])
    with pytest.raises(ParseError, match=r":3:"):
        load_price_panel(spot, fwd)


def test_bad_header(pair):
    spot, fwd = pair
    _write(spot, ["2020-01-01,AUD,0.7"], header="day,ccy,px")
    with pytest.raises(ParseError):
        load_price_panel(spot, fwd)


def test_invert(pair):
    p = load_price_panel(*pair, invert=["JPY"])
    assert p.spot[0, 1] == pytest.approx(1 / 0.009, rel=1e-15)


def test_fill_forward_examples():
    p = _panel([[1.0], [np.nan], [np.nan], [1.2]])
    assert list(fill_forward(p).spot[:, 0]) == [1.0, 1.0, 1.0, 1.2]
    lead = fill_forward(_panel([[np.nan], [1.0]]))
    assert math.isnan(lead.spot[0, 0]) and lead.spot[1, 0] == 1.0
    full = _panel([[1.0, 2.0], [1.5, 2.5]])
    assert np.array_equal(fill_forward(full).spot, full.spot)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(0.1, 10)), min_size=1, max_size=30))
def test_fill_forward_idempotent(values):
    col = np.array([np.nan if v is None else v for v in values])[:, None]
    once = fill_forward(_panel(col))
    twice = fill_forward(once)
    assert np.array_equal(once.spot, twice.spot, equal_nan=True)
    first = np.flatnonzero(~np.isnan(col[:, 0]))
    if first.size:
        assert not np.isnan(once.spot[first[0]:, 0]).any()


def test_log_returns_examples():
    r = log_returns(_panel([[1.0, 2.0], [math.e, 1.0]]))
    assert r.returns[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert r.returns[0, 1] == pytest.approx(-math.log(2), rel=1e-15)
    assert np.all(log_returns(_panel(np.full((5, 3), 1.7))).returns == 0.0)


def test_forward_spot_ratio(pair):
    p = load_price_panel(*pair)
    ratios = forward_spot_ratio(p, "2020-01-01")
    assert ratios["AUD"] == pytest.approx(0.701 / 0.70, rel=1e-15)
    same = _panel([[1.0]], [[1.0]])
    assert forward_spot_ratio(same, same.dates[0]) == {"C00": 1.0}
    absent = _panel([[1.0, np.nan]], [[1.01, np.nan]])
    assert list(forward_spot_ratio(absent, absent.dates[0])) == ["C00"]
    with pytest.raises(KeyError):
        forward_spot_ratio(p, "1999-01-01")


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3), f=st.floats(0.5, 2), s=st.floats(0.5, 2))
def test_ratio_scale_invariant(c, f, s):
    a = _panel([[s]], [[f]])
    b = _panel([[s * c]], [[f * c]])
    assert forward_spot_ratio(a, a.dates[0])["C00"] == pytest.approx(forward_spot_ratio(b, b.dates[0])["C00"],
                                                                      rel=1e-14)


def test_panel_immutable(pair):
    p = load_price_panel(*pair)
    with pytest.raises(ValueError):
        p.spot[0, 0] = 1.0


def test_panel_roundtrip(tmp_path, pair):
    p = fill_forward(load_price_panel(*pair))
    write_panel(p, tmp_path / "panel.npz")
    q = read_panel(tmp_path / "panel.npz")
    assert q.currencies == p.currencies
    assert np.array_equal(q.dates, p.dates) and np.array_equal(q.spot, p.spot)


def test_long_csv_roundtrip(tmp_path):
    dates = np.array(["2021-03-01", "2021-03-02"], dtype="datetime64[D]")
    vals = np.array([[0.1234567890123, np.nan], [2.0, 3.0]])
    write_long_csv(tmp_path / "s.csv", dates, ("AUD", "NZD"), vals)
    p = load_price_panel(tmp_path / "s.csv", tmp_path / "s.csv")
    assert p.spot[0, 0] == 0.1234567890123 and math.isnan(p.spot[0, 1])
