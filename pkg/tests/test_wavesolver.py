import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from genwave import geometry as geo
from genwave import wavesolver as ws
from genwave.gennum import EpsGrid, Verdict

W = 2 * math.pi


def flat(periodic=True, box=(0.0, 1.0), t_range=(0.0, 1.0)):
    chart = geo.Chart((box,), (16,), (periodic,), t_range=t_range)
    return geo.make_minkowski(1, chart)


def standing(n, horizon=1.0, theta=0.5):
    m = flat(t_range=(0.0, horizon))
    fr = ws.solve_fixed_eps(m, 1.0, ws.IVPSpec(lambda x: np.sin(W * x[:, 0])),
                            ws.SolveGrid((n,), horizon, theta=theta))
    exact = np.sin(W * fr.axes[0])[None, :] * np.cos(W * fr.t)[:, None]
    return m, fr, float(np.max(np.abs(fr.u - exact)))


# -- known solutions ----------------------------------------------------------------

def test_standing_wave_second_order():
    hs, errs = [], []
    for n in (64, 128, 256):
        _, _, err = standing(n)
        hs.append(1.0 / n)
        errs.append(err)
    assert ws.convergence_order(hs, errs) == pytest.approx(2.0, abs=0.2)
    assert errs[-1] < 1e-3


def test_forced_quadratic_is_exact():
    m = flat(t_range=(0.0, 0.7))
    ivp = ws.IVPSpec(lambda x: 0.0 * x[:, 0], source=lambda t, x: 2.0 + 0.0 * x[:, 0])
    fr = ws.solve_fixed_eps(m, 1.0, ivp, ws.SolveGrid((32,), 0.7))
    np.testing.assert_allclose(fr.u, -(fr.t ** 2)[:, None] * np.ones_like(fr.u), atol=1e-12)


def test_forced_quadratic_residual():
    m = flat(t_range=(0.0, 0.5))
    r = ws.residual_check(m, 1.0, lambda t, x: -t ** 2, f=lambda t, x: 2.0 + 0.0 * t,
                          cells=(32,), n_times=11)
    assert r <= 1e-10


def test_residual_of_exact_solution_converges():
    m = flat(t_range=(0.0, 0.5))
    exact = lambda t, x: np.sin(W * x[..., 0]) * np.cos(W * t)  # noqa: E731
    hs, res = [], []
    for n in (32, 64, 128):
        hs.append(1.0 / n)
        # dt = 2h: at dt = h the time and space truncation errors cancel exactly
        res.append(ws.residual_check(m, 1.0, exact, cells=(n,), n_times=n // 4 + 1))
    assert ws.convergence_order(hs, res) == pytest.approx(2.0, abs=0.2)
    assert ws.residual_check(m, 1.0, exact, cells=(256,), n_times=65) <= 0.05


def test_solver_output_residual_small():
    m, fr, _ = standing(128, horizon=0.5)
    assert ws.residual_check(m, 1.0, fr) <= 0.05


def test_residual_needs_resolution():
    with pytest.raises(ValueError, match="insufficient resolution"):
        ws.residual_check(flat(), 1.0, lambda t, x: t, cells=(4,), n_times=9)


# -- scheme properties ----------------------------------------------------------------

def test_cfl_violation_reports_required_step():
    with pytest.raises(ws.CFLError) as info:
        ws.solve_fixed_eps(flat(), 1.0, ws.IVPSpec(lambda x: 0 * x[:, 0]),
                           ws.SolveGrid((64,), 1.0, dt=0.1))
    assert info.value.dt == 0.1
    assert info.value.required == pytest.approx(0.5 / 64)


def test_work_budget():
    with pytest.raises(ws.InfeasibleError):
        ws.solve_fixed_eps(flat(), 1.0, ws.IVPSpec(lambda x: 0 * x[:, 0]),
                           ws.SolveGrid((64,), 1.0, max_work=1000))


def test_finite_propagation_speed():
    m = flat(periodic=False, box=(-3.0, 3.0))
    bump = lambda x: np.exp(-(x[:, 0] / 0.1) ** 2)  # noqa: E731
    fr = ws.solve_fixed_eps(m, 1.0, ws.IVPSpec(bump), ws.SolveGrid((1200,), 1.0))
    x = fr.axes[0]
    far = np.abs(x) > 1.0 + 0.5
    assert np.max(np.abs(fr.u[-1][far])) <= 1e-3 * np.max(np.abs(fr.u[-1]))
    near = (np.abs(x) > 0.8) & (np.abs(x) < 1.2)
    assert np.max(np.abs(fr.u[-1][near])) > 0.3


def test_outflow_lets_pulse_leave():
    m = flat(periodic=False, box=(-1.0, 1.0), t_range=(0.0, 2.5))
    bump = lambda x: np.exp(-(x[:, 0] / 0.1) ** 2)  # noqa: E731
    fr = ws.solve_fixed_eps(m, 1.0, ws.IVPSpec(bump), ws.SolveGrid((400,), 2.5))
    assert np.max(np.abs(fr.u[-1])) < 0.05


def test_energy_error_second_order():
    devs = []
    for n in (64, 128):
        m, fr, _ = standing(n, horizon=0.3)
        devs.append(ws.energy_trace(fr, m).max_deviation)
    assert devs[0] / devs[1] == pytest.approx(4.0, rel=0.3)


def test_energy_of_zero_field():
    m = flat()
    fr = ws.solve_fixed_eps(m, 1.0, ws.IVPSpec(lambda x: 0 * x[:, 0]), ws.SolveGrid((32,), 0.5))
    tr = ws.energy_trace(fr, m)
    assert np.all(tr.energy == 0.0) and tr.drift == 0.0


def test_static_cone_energy_drift():
    cone = geo.make_mollified_cone(0.5, t_range=(0.0, 0.3))
    ring = lambda x: np.exp(-((np.hypot(x[:, 0], x[:, 1]) - 1.0) / 0.5) ** 2)  # noqa: E731
    drifts = []
    for n in (192, 384):
        fr = ws.solve_fixed_eps(cone, 0.25, ws.IVPSpec(ring), ws.SolveGrid((n, n), 0.3))
        drifts.append(ws.energy_trace(fr, cone).drift)
    assert drifts[-1] <= 1e-3
    assert drifts[0] / drifts[1] == pytest.approx(4.0, rel=0.3)


def _cone_solve(ivp, horizon=0.2):
    cone = geo.make_mollified_cone(0.6, t_range=(0.0, abs(horizon)))
    return ws.solve_fixed_eps(cone, 0.3, ivp, ws.SolveGrid((48, 48), horizon))


@settings(max_examples=10)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(a, b):
    p = ws.IVPSpec(lambda x: np.exp(-np.sum(x ** 2, axis=1)),
                   initial_rate=lambda x: np.sin(x[:, 0]))
    q = ws.IVPSpec(lambda x: np.cos(x[:, 1]), source=lambda t, x: t * x[:, 0])
    up, uq = _cone_solve(p).u, _cone_solve(q).u
    uc = _cone_solve(p.scaled_sum(a, q, b)).u
    scale = max(1.0, np.max(np.abs(up)), np.max(np.abs(uq)))
    assert np.max(np.abs(uc - (a * up + b * uq))) <= 1e-9 * scale * (1 + abs(a) + abs(b))


def test_time_reversal_symmetry():
    m = flat()
    ivp = ws.IVPSpec(lambda x: np.exp(np.sin(W * x[:, 0])))
    fwd = ws.solve_fixed_eps(m, 1.0, ivp, ws.SolveGrid((64,), 0.4))
    bwd = ws.solve_fixed_eps(m, 1.0, ivp, ws.SolveGrid((64,), -0.4))
    np.testing.assert_allclose(bwd.t, -fwd.t)
    np.testing.assert_allclose(bwd.u, fwd.u, atol=1e-9)


def test_mixed_time_space_terms_rejected():
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,))

    def ev(eps, pts):
        out = np.tile(np.array([[-1.0, 0.2], [0.2, 1.0]]), (pts.shape[0], 1, 1))
        return out

    m = geo.MetricNet(chart, ev, "tilted", {}, static=True)
    with pytest.raises(ValueError, match="g\\^\\{ti\\}"):
        ws.solve_fixed_eps(m, 1.0, ws.IVPSpec(lambda x: 0 * x[:, 0]), ws.SolveGrid((16,), 0.1))


def test_degenerate_metric_detected():
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,))
    m = geo.make_diagonal_metric([-1.0, 0.0], chart)
    with pytest.raises(ws.DegeneratePointError):
        ws.dalembertian_coefficients(m, 1.0, np.zeros((1, 2)))


# -- nets ---------------------------------------------------------------------------------

def test_solve_net_minkowski_moderate_zero():
    m = flat(t_range=(0.0, 0.5))
    net = ws.solve_net(m, EpsGrid(1.0, 0.7, 8), ws.IVPSpec(lambda x: np.sin(W * x[:, 0])),
                       ws.SolveGrid((64,), 0.5))
    assert net.ok and net.verdict.is_moderate
    assert np.ptp(net.sup_norm) == 0.0
    assert len(list(net.rows())) == 8


def test_solve_net_failure_is_indeterminate():
    torus = geo.make_collapsing_torus(1.0, counts=16)
    net = ws.solve_net(torus, EpsGrid(0.5, 0.5, 8),
                       ws.IVPSpec(lambda x: np.sin(x[:, 2])),
                       ws.SolveGrid((8, 8, 8), 1.0, max_work=2e5))
    assert not net.ok
    assert net.verdict.kind is Verdict.INDETERMINATE
    assert any(s.startswith("infeasible") for s in net.status)


def test_solve_net_parallel_matches_serial():
    m = flat(t_range=(0.0, 0.3))
    ivp = ws.IVPSpec(lambda x: np.sin(W * x[:, 0]))
    args = (m, EpsGrid(1.0, 0.7, 8), ivp, ws.SolveGrid((32,), 0.3))
    a, b = ws.solve_net(*args), ws.solve_net(*args, workers=3)
    np.testing.assert_array_equal(a.sup_norm, b.sup_norm)


def test_torus_coefficients():
    eps = 0.2
    ginv, b = ws.dalembertian_coefficients(geo.make_collapsing_torus(1.0), eps, np.zeros((3, 4)))
    np.testing.assert_allclose(ginv[:, 3, 3], eps ** -2)
    assert ws.max_characteristic_speed(ginv) == pytest.approx(1 / eps)


# -- pullbacks --------------------------------------------------------------------------

def _identity_map():
    return ws.CoordinateMap((ws.MapProfile.identity(), ws.MapProfile.identity()))


def test_identity_pullback_is_flat():
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,), t_range=(0.0, 0.5))
    m = ws.conformal_pullback_metric(_identity_map(), chart)
    pts = np.array([[0.1, 0.2], [0.4, 0.9]])
    np.testing.assert_allclose(m(0.1, pts), np.tile(np.diag([-1.0, 1.0]), (2, 1, 1)), atol=1e-12)
    fr = ws.pullback_solution(ws.mollify_map(_identity_map(), 0.1), lambda s: np.sin(W * s),
                              lambda s: 0 * s, chart, 32, 9)
    exact = np.sin(W * (fr.axes[0][None, :] - fr.t[:, None]))
    np.testing.assert_allclose(fr.u, exact, atol=1e-12)


def test_conformal_pullback_residual_converges():
    c = 0.1
    tau = ws.MapProfile(lambda t: t + c * math.sin(W * t) / W)
    phi = ws.CoordinateMap((tau, ws.MapProfile.identity()))
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,), t_range=(0.0, 0.5))
    m = ws.conformal_pullback_metric(phi, chart)
    pe = ws.mollify_map(phi, 0.1)
    hs, res = [], []
    for n in (32, 64, 128):
        fr = ws.pullback_solution(pe, lambda s: np.sin(W * s), lambda s: 0 * s, chart, n,
                                  n // 2 + 1)
        hs.append(1.0 / n)
        res.append(ws.residual_check(m, 0.1, fr))
    assert ws.convergence_order(hs, res) == pytest.approx(2.0, abs=0.3)


def test_pullback_requires_increasing_time_map():
    phi = ws.CoordinateMap((ws.MapProfile(lambda t: -t), ws.MapProfile.identity()))
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,))
    with pytest.raises(ValueError, match="increasing"):
        ws.conformal_pullback_metric(phi, chart)(0.1, [[0.5, 0.5]])


def test_pullback_domain_check():
    chart = geo.Chart(((0.0, 1.0),), (16,), (True,), t_range=(0.0, 1.0))
    with pytest.raises(ValueError, match="domain"):
        ws.pullback_solution(ws.mollify_map(_identity_map(), 0.1), np.sin, np.sin, chart, 16, 5,
                             profile_domain=(0.0, 1.0))


def test_conformal_identity_symbolic():
    # 1+1 wave operators of conformally related metrics differ by the factor
    t, x = sp.symbols("t x", real=True)
    omega = 1 + t ** 2 / 3 + sp.sin(x) / 5
    u = sp.Function("u")(t, x)

    def box(factor):
        g = sp.diag(-factor, factor)
        ginv = g.inv()
        sq = sp.sqrt(-g.det())
        c = (t, x)
        return sum(sp.diff(sq * ginv[m, n] * sp.diff(u, c[n]), c[m])
                   for m in range(2) for n in range(2)) / sq

    assert sp.simplify(box(omega) - box(1) / omega) == 0


def test_mollified_map_derivative_consistency():
    tau = ws.MapProfile(lambda t: t + 0.3 * abs(t - 0.5) ** 1.5)
    pe = ws.mollify_map(ws.CoordinateMap((tau, ws.MapProfile.identity())), 0.05)
    s = np.array([0.3, 0.48, 0.52, 0.7])
    h = 1e-5
    fd = (pe.component(0, s + h) - pe.component(0, s - h)) / (2 * h)
    np.testing.assert_allclose(pe.component(0, s, 1), fd, rtol=1e-6)
