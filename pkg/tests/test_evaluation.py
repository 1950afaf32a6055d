import numpy as np
import pytest
from hypothesis import given, strategies as st

from quantvar.data import TimeSeriesPanel, TransformCode, month_label
from quantvar.evaluation import (
    EvaluationError,
    EventWindow,
    RatioTable,
    ScoreTable,
    average_qs,
    pinball,
    qs_ratio,
    ratio_table_rows,
    realization_date,
    realized_value,
    render_ratio_table,
    render_score_table,
    score_records,
    score_table_rows,
)
from quantvar.forecast import QuantileForecastSet


def _panel(values, start="2000-01", names=None):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] == 1 and values.shape[1] > 1 and names is None:
        values = values.T
    n = values.shape[1]
    names = names or [f"y{j}" for j in range(n)]
    dates = [month_label(j) for j in range(
        _mi(start), _mi(start) + values.shape[0])]
    return TimeSeriesPanel(
        dates=dates,
        values=values,
        names=names,
        tcodes=[TransformCode.LEVEL] * n,
    )


def _m(j, start="2000-01"):
    return month_label(_mi(start) + j)


def _mi(label):
    from quantvar.data import month_index

    return month_index(label)


# ---------------------------------------------------------------------------
# pinball loss


def test_pinball_reference_values():
    assert pinball(2.0, 0.1) == pytest.approx(0.2)
    assert pinball(-2.0, 0.1) == pytest.approx(1.8)
    assert pinball(0.0, 0.37) == 0.0


def test_pinball_asymmetry_ratio_is_exact():
    # at q = 0.1 an undershoot costs exactly nine times an equal overshoot,
    # and the ratio is exact in floating point (0.9*2 / (0.1*2))
    assert pinball(-2.0, 0.1) / pinball(2.0, 0.1) == 9.0


def test_pinball_vectorized():
    u = np.array([2.0, -2.0, 0.0])
    np.testing.assert_allclose(pinball(u, 0.1), [0.2, 1.8, 0.0])


def test_pinball_rejects_bad_level():
    for q in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(EvaluationError):
            pinball(1.0, q)


@given(
    st.floats(-1e6, 1e6),
    st.floats(0.01, 0.99),
)
def test_pinball_nonnegative_and_zero_only_at_zero(u, q):
    v = pinball(u, q)
    assert v >= 0.0
    if u != 0.0:
        assert v > 0.0


@given(st.floats(0.05, 0.95), st.floats(0.1, 100.0))
def test_pinball_one_sided_slopes(q, x):
    # slope q on the positive side, q - 1 on the negative side
    assert pinball(x, q) == pytest.approx(q * x, rel=1e-12)
    assert pinball(-x, q) == pytest.approx((1 - q) * x, rel=1e-12)


@given(
    st.floats(-50, 50), st.floats(-50, 50), st.floats(0.05, 0.95), st.floats(0, 1)
)
def test_pinball_convex(a, b, q, w):
    mid = pinball(w * a + (1 - w) * b, q)
    assert mid <= w * pinball(a, q) + (1 - w) * pinball(b, q) + 1e-9


# ---------------------------------------------------------------------------
# realizations and windows


def test_realization_date_arithmetic():
    assert realization_date("2019-11", 3) == "2020-02"


def test_realized_value_alignment_and_bounds():
    panel = _panel([[10.0], [11.0], [12.0]], start="2005-06")
    assert realized_value(panel, "y0", "2005-06", 1) == 11.0
    assert realized_value(panel, "y0", "2005-06", 2) == 12.0
    assert realized_value(panel, "y0", "2005-06", 3) is None  # beyond sample
    with pytest.raises(EvaluationError):
        realized_value(panel, "y0", "2004-01", 1)  # precedes sample


def test_event_window_membership():
    w = EventWindow("slump", "2014-06", "2016-01")
    assert w.contains("2014-06") and w.contains("2016-01") and w.contains("2015-03")
    assert not w.contains("2014-05") and not w.contains("2016-02")
    with pytest.raises(EvaluationError):
        EventWindow("bad", "2015-01", "2015-01")


# ---------------------------------------------------------------------------
# score tables


def _one_model_set(preds, origins, h=1, q=0.5, model="m", names=("y0",)):
    fset = QuantileForecastSet(variable_names=list(names))
    for origin, pred in zip(origins, preds):
        fset.add(model, origin, h, q, np.full(len(names), pred, dtype=float))
    return fset


def test_average_qs_matches_brute_force():
    rng = np.random.default_rng(7)
    T = 40
    y = rng.normal(size=T)
    panel = _panel(y[:, None])
    origins = [_m(j) for j in range(5, 25)]
    fset = QuantileForecastSet(variable_names=["y0"])
    qs = (0.1, 0.5, 0.9)
    preds = {}
    for h in (1, 3):
        for q in qs:
            for i, o in enumerate(origins):
                p = rng.normal()
                preds[(o, h, q)] = p
                fset.add("m", o, h, q, np.array([p]))
    table = average_qs(fset, panel, "y0")
    for h in (1, 3):
        for q in qs:
            scores = []
            for o in origins:
                t = _mi(o) + h - _mi("2000-01")
                u = y[t] - preds[(o, h, q)]
                scores.append(u * (q - (1 if u < 0 else 0)))
            assert table.score("m", q, h) == pytest.approx(
                float(np.mean(scores)), abs=1e-14
            )
            assert table.count("m", q, h) == len(origins)


def test_average_qs_symmetric_errors_at_median():
    # unit errors at q = 0.5 score |u|/2 = 0.5 regardless of sign
    panel = _panel([[0.0]] * 12)
    origins = [_m(j) for j in range(0, 10)]
    preds = [(-1.0) ** j for j in range(10)]  # error = 0 - pred = ∓1
    fset = _one_model_set(preds, origins)
    table = average_qs(fset, panel, "y0")
    assert table.score("m", 0.5, 1) == pytest.approx(0.5)


def test_window_by_realization_date_vs_origin():
    panel = _panel([[0.0]] * 12)
    origins = [_m(j) for j in range(0, 8)]
    fset = _one_model_set([1.0] * len(origins), origins, h=2)
    # realizations land at months 2..9; window [2000-04, 2000-06] covers
    # realizations of origins 2000-02..2000-04 (3 of them)
    w = EventWindow("mid", "2000-04", "2000-06")
    t_real = average_qs(fset, panel, "y0", window=w)
    assert t_real.count("m", 0.5, 2) == 3
    # by origin date the same window covers origins 2000-04..2000-06
    t_orig = average_qs(fset, panel, "y0", window=w, by_origin=True)
    assert t_orig.count("m", 0.5, 2) == 3
    # all-covering window must agree with the unconditional table exactly
    wide = EventWindow("all", "1999-01", "2001-12")
    t_all = average_qs(fset, panel, "y0", window=wide)
    t_unc = average_qs(fset, panel, "y0")
    assert t_all.entries == t_unc.entries and t_all.counts == t_unc.counts


def test_unobserved_realizations_are_skipped():
    panel = _panel([[0.0]] * 5)
    origins = [_m(j) for j in range(0, 5)]
    fset = _one_model_set([1.0] * 5, origins, h=2)
    recs = score_records(fset, panel, "y0")
    # origins 2000-04 and 2000-05 have undated realizations -> skipped
    assert len(recs) == 3
    table = average_qs(fset, panel, "y0")
    assert table.count("m", 0.5, 2) == 3


def test_empty_window_table_is_empty_not_error():
    panel = _panel([[0.0]] * 12)
    origins = [_m(j) for j in range(0, 8)]
    fset = _one_model_set([1.0] * len(origins), origins)
    w = EventWindow("off", "2011-01", "2012-01")
    table = average_qs(fset, panel, "y0", window=w)
    assert table.entries == {}


def test_window_with_nothing_scorable_raises():
    panel = _panel([[0.0]] * 3)
    fset = _one_model_set([1.0], ["2000-02"], h=5)  # realization beyond sample
    with pytest.raises(EvaluationError):
        average_qs(fset, panel, "y0", window=EventWindow("w", "2000-01", "2000-12"))


# ---------------------------------------------------------------------------
# ratios


def _two_model_table(num_scale=1.0):
    panel = _panel([[0.0]] * 20)
    origins = [_m(j) for j in range(0, 15)]
    a = _one_model_set([num_scale] * 15, origins, model="a")
    b = _one_model_set([1.0] * 15, origins, model="b")
    return average_qs([a, b], panel, "y0")


def test_qs_ratio_self_is_one_and_halving():
    table = _two_model_table()
    same = qs_ratio(table, "a", "a")
    assert same.ratio(0.5, 1) == 1.0
    # numerator errors half the benchmark's -> ratio 0.5 exactly
    half = qs_ratio(_two_model_table(num_scale=0.5), "a", "b")
    assert half.ratio(0.5, 1) == pytest.approx(0.5, abs=1e-15)


def test_qs_ratio_scale_invariance():
    t1 = _two_model_table(num_scale=0.7)
    r1 = qs_ratio(t1, "a", "b")
    # rescaling every score by the same constant leaves ratios unchanged
    t2 = ScoreTable(variable=t1.variable, window_label=t1.window_label)
    t2.entries = {k: 3.7 * v for k, v in t1.entries.items()}
    t2.counts = dict(t1.counts)
    r2 = qs_ratio(t2, "a", "b")
    for key in r1.entries:
        assert r2.entries[key] == pytest.approx(r1.entries[key], rel=1e-12)


def test_qs_ratio_zero_benchmark_flagged():
    panel = _panel([[0.0]] * 10)
    origins = [_m(j) for j in range(0, 5)]
    a = _one_model_set([1.0] * 5, origins, model="a")
    b = _one_model_set([0.0] * 5, origins, model="b")  # perfect -> QS 0
    table = average_qs([a, b], panel, "y0")
    ratio = qs_ratio(table, "a", "b")
    assert (0.5, 1) in ratio.flagged
    assert np.isnan(ratio.ratio(0.5, 1))


def test_qs_ratio_coverage_mismatch_rejected():
    panel = _panel([[0.0]] * 10)
    origins = [_m(j) for j in range(0, 5)]
    a = _one_model_set([1.0] * 5, origins, model="a")
    b = _one_model_set([1.0] * 5, origins, model="b", q=0.9)
    table = average_qs([a, b], panel, "y0")
    with pytest.raises(EvaluationError):
        qs_ratio(table, "a", "b")
    with pytest.raises(EvaluationError):
        qs_ratio(table, "missing", "b")


# ---------------------------------------------------------------------------
# rendering


def test_render_score_table_smoke():
    table = _two_model_table()
    text = render_score_table(table)
    assert "QS50" in text and "[a]" in text and "[b]" in text
    rows = score_table_rows(table)
    assert rows[0] == ["model", "quantile", "horizon", "score", "n_origins"]
    assert len(rows) == 1 + len(table.entries)


def test_render_ratio_table_marks_na_and_favorable():
    panel = _panel([[0.0]] * 10)
    origins = [_m(j) for j in range(0, 5)]
    a = QuantileForecastSet(variable_names=["y0"])
    b = QuantileForecastSet(variable_names=["y0"])
    for o in origins:
        a.add("a", o, 1, 0.5, np.array([0.5]))
        b.add("b", o, 1, 0.5, np.array([1.0]))
        a.add("a", o, 2, 0.5, np.array([1.0]))
        b.add("b", o, 2, 0.5, np.array([0.0]))  # zero benchmark at h=2
    table = average_qs([a, b], panel, "y0")
    ratio = qs_ratio(table, "a", "b")
    text = render_ratio_table(ratio)
    assert "n/a" in text  # flagged cell
    assert "QS50" in text
    rows = ratio_table_rows(ratio)
    flagged_rows = [r for r in rows[1:] if r[5] == 1]
    assert len(flagged_rows) == 1 and flagged_rows[0][4] == "n/a"
