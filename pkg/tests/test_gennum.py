import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import power
from genwave.gennum import (
    DEFAULT_GRID, EpsGrid, GenNumber, GridError, NetError, TriState, Verdict, classify,
    count_sign_changes, estimate_order, is_invertible, is_moderate, make_geometric_grid,
    verdict_row, CSV_FIELDS,
)

G = DEFAULT_GRID


def net(f, grid=G):
    return GenNumber.from_function(grid, f)


# -- grid -------------------------------------------------------------------

def test_grid_halving_samples():
    g = make_geometric_grid(1.0, 0.5, 8)
    np.testing.assert_allclose(g.samples, [1, .5, .25, .125, .0625, .03125, .015625, .0078125])


def test_grid_last_sample():
    g = make_geometric_grid(0.1, 0.8, 16)
    assert g.samples.size == 16
    assert g.samples[-1] == pytest.approx(0.1 * 0.8 ** 15, rel=1e-14)


@pytest.mark.parametrize("args,field", [((1.0, 1.5, 8), "q"), ((0.0, 0.5, 8), "eps0"),
                                        ((1.2, 0.5, 8), "eps0"), ((1.0, 0.5, 7), "count")])
def test_grid_rejects_bad_parameters(args, field):
    with pytest.raises(GridError, match=field):
        make_geometric_grid(*args)


def test_grid_tail_window():
    assert G.tail() == (8, 16)
    assert EpsGrid(1.0, 0.5, 8).tail() == (4, 8)


# -- construction and arithmetic -------------------------------------------

def test_non_finite_rejected():
    vals = np.ones(G.count)
    vals[3] = np.nan
    with pytest.raises(NetError, match="eps_3"):
        GenNumber(G, vals)


def test_grid_mismatch_rejected():
    with pytest.raises(NetError, match="grid mismatch"):
        net(power(1, 1)) + net(power(1, 1), EpsGrid(0.5, 0.7, 16))


def test_product_of_eps_is_order_two():
    e = net(power(1, 1))
    sq = e * e
    v = classify(sq)
    assert v.kind is Verdict.STRICTLY_POSITIVE and v.m == 2
    assert estimate_order(sq).slope == pytest.approx(2.0, abs=1e-9)


def test_x_minus_x_is_negligible():
    x = net(lambda e: np.sin(np.asarray(e)) + 2.0)
    assert classify(x + (-x)).kind is Verdict.NEGLIGIBLE


def test_inverse_times_square():
    v = classify(net(power(1, -1)) * net(power(1, 2)))
    assert v.kind is Verdict.STRICTLY_POSITIVE and v.m == 1


# -- order estimation --------------------------------------------------------

def test_order_exact_power():
    fit = estimate_order(net(power(1, -1.5)))
    assert fit.slope == pytest.approx(-1.5, abs=0.05)
    assert fit.r_squared > 0.999


def test_order_dominant_term():
    fit = estimate_order(net(lambda e: 3 * np.asarray(e) ** 2 + np.asarray(e) ** 5))
    assert fit.slope == pytest.approx(2.0, abs=0.05)


def test_order_log_is_flagged_sublinear():
    # on the default grid the slope of log log(1/eps) is still -0.25; the
    # asymptotic regime needs smaller eps
    fit = estimate_order(net(lambda e: np.log(1 / np.asarray(e)), EpsGrid(1e-3, 0.5, 16)))
    assert abs(fit.slope) <= 0.15
    assert "low_r2" in fit.flags and "sublinear" in fit.flags


def test_order_rejects_zero_window():
    with pytest.raises(NetError, match="identically zero on window"):
        estimate_order(GenNumber(G, np.zeros(G.count)))


def test_order_flags_dropped_zeros():
    vals = G.samples ** 2
    vals[-2] = 0.0
    assert "zeros_dropped" in estimate_order(GenNumber(G, vals)).flags


# -- classification -----------------------------------------------------------

def test_classify_square():
    v = classify(net(power(1, 2)))
    assert v.kind is Verdict.STRICTLY_POSITIVE and v.m == 2
    assert v.is_moderate


def test_classify_exp_negligible():
    v = classify(net(lambda e: np.exp(-1 / np.asarray(e))))
    assert v.kind is Verdict.NEGLIGIBLE


def test_classify_sin_indeterminate():
    x = net(lambda e: np.sin(1 / np.asarray(e)))
    assert count_sign_changes(x.values[8:]) >= 1
    v = classify(x)
    assert v.kind is Verdict.INDETERMINATE and "sign changes" in v.reason


def test_exp_on_short_grid_not_certified_positive():
    # exp(-1/eps) >= eps**8 on the J = 8 tail, but it decays faster at the end
    x = net(lambda e: np.exp(-1 / np.asarray(e)), EpsGrid(1.0, 0.7, 8))
    assert classify(x).kind is not Verdict.STRICTLY_POSITIVE
    assert is_invertible(x) is not TriState.YES


def test_classify_negative_power():
    v = classify(net(power(-1, 2)))
    assert v.kind is Verdict.STRICTLY_NEGATIVE and v.m == 2


def test_classify_moderate_without_sign():
    # zeros on the tail rule out a strict sign but not moderateness
    vals = G.samples ** -3
    vals[[9, 12]] = 0.0
    v = classify(GenNumber(G, vals))
    assert v.kind is Verdict.MODERATE
    assert v.order == pytest.approx(-3.0, abs=0.05)


def test_classify_faster_than_any_power_growth_is_indeterminate():
    v = classify(net(lambda e: np.exp(1 / np.asarray(e)) * 1e-300))
    assert v.kind is Verdict.INDETERMINATE
    assert not is_moderate(net(lambda e: np.exp(1 / np.asarray(e)) * 1e-300))


# -- invertibility -------------------------------------------------------------

def test_invertible_eps():
    assert is_invertible(net(power(1, 1))) is TriState.YES


def test_invertible_exp_no():
    assert is_invertible(net(lambda e: np.exp(-1 / np.asarray(e)))) is TriState.NO


def test_invertible_oscillating_indeterminate():
    x = net(lambda e: np.asarray(e) * np.sin(1 / np.asarray(e)))
    assert is_invertible(x) is TriState.INDETERMINATE


# -- csv schema ---------------------------------------------------------------

def test_verdict_row_schema():
    x = net(power(2, 3))
    row = verdict_row("x", classify(x))
    assert tuple(row) == CSV_FIELDS
    assert row["verdict"] == "StrictlyPositive" and row["m_or_s"] == "3"


# -- properties -----------------------------------------------------------------

exponents = st.floats(-5.0, 5.0, allow_nan=False)
coeffs = st.floats(0.01, 100.0) | st.floats(-100.0, -0.01)


@given(c=coeffs, a=exponents)
def test_power_law_order_recovered(c, a):
    assert estimate_order(net(power(c, a))).slope == pytest.approx(a, abs=0.05)


@given(c1=coeffs, a1=st.floats(-4, 4), c2=coeffs, a2=st.floats(-4, 4))
def test_order_is_additive_under_products(c1, a1, c2, a2):
    x, y = net(power(c1, a1)), net(power(c2, a2))
    s = estimate_order(x * y).slope
    assert s == pytest.approx(estimate_order(x).slope + estimate_order(y).slope, abs=0.1)


def _family(kind, c, a):
    if kind == "power":
        return power(c, a)
    return lambda e: c * np.exp(-abs(a) / np.asarray(e, dtype=float))


@given(kind=st.sampled_from(["power", "exp"]), c=coeffs, a=st.floats(-4, 4),
       j=st.integers(8, 15))
def test_invertibility_stable_under_refinement(kind, c, a, j):
    if kind == "exp" and abs(a) < 1.0:
        # exp(-a/eps) with a far below the smallest sampled eps is a constant on
        # the coarse grid; no finite test separates it from one
        a = math.copysign(1.0 + abs(a), a)
    f = _family(kind, c, a)
    coarse = is_invertible(net(f, EpsGrid(1.0, 0.7, j)))
    fine = is_invertible(net(f, EpsGrid(1.0, 0.7, j + 8)))
    assert {coarse, fine} != {TriState.YES, TriState.NO}


@given(c=st.floats(0.01, 100.0), a=st.floats(-8, 8))
def test_strictly_positive_implies_invertible(c, a):
    x = net(power(c, a))
    if classify(x).kind is Verdict.STRICTLY_POSITIVE:
        assert is_invertible(x) is TriState.YES


@given(kind=st.sampled_from(["power", "exp"]), c=coeffs, a=st.floats(-4, 4))
def test_abs_matches_up_to_sign(kind, c, a):
    x = net(_family(kind, c, a))
    v, w = classify(x), classify(abs(x))
    flip = {Verdict.STRICTLY_NEGATIVE: Verdict.STRICTLY_POSITIVE}
    assert w.kind is flip.get(v.kind, v.kind)
    assert w.m == v.m
