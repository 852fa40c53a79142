"""Regularized scalar wave equation ``box_{g_eps} u = f`` with data on ``t = 0``.

The wave operator is taken in divergence form
``|g|^{-1/2} d_mu (|g|^{1/2} g^{mu nu} d_nu u)`` and expanded as
``g^{mu nu} d_mu d_nu u + b^nu d_nu u``.  Time stepping is explicit leapfrog
with centred first-order terms; the first step is a Taylor step using the
equation itself.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .gennum import (
    DEFAULT_PARAMS, AsymptoticVerdict, ClassifyParams, EpsGrid, GenNumber,
    Verdict, classify, _linfit,
)
from .geometry import Chart, MetricNet, VectorFieldSpec, metric_partials, multi_indices
from .mollify import Mollified

__all__ = [
    "DegeneratePointError", "CFLError", "BlowUpError", "InfeasibleError",
    "IVPSpec", "SolveGrid", "FieldFrame", "SolutionNet", "EnergyTrace",
    "dalembertian_coefficients", "max_characteristic_speed", "solve_fixed_eps",
    "solve_net", "energy_trace", "residual_check", "MapProfile",
    "CoordinateMap", "MollifiedMap", "mollify_map", "conformal_pullback_metric",
    "map_derivative_net", "pullback_solution", "convergence_order",
]


class DegeneratePointError(ValueError):
    pass


class CFLError(ValueError):
    def __init__(self, dt: float, required: float):
        super().__init__(f"time step {dt:.6g} violates CFL; need dt <= {required:.6g}")
        self.dt = dt
        self.required = required


class BlowUpError(RuntimeError):
    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite field at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


class InfeasibleError(RuntimeError):
    """The resolution this eps needs exceeds the work budget."""


# ---------------------------------------------------------------------------
# operator coefficients
# ---------------------------------------------------------------------------

def dalembertian_coefficients(metric: MetricNet, eps: float, pts) -> tuple[np.ndarray, np.ndarray]:
    """``(g^{mu nu}, b^nu)`` at each point, ``b^nu = |g|^{-1/2} d_mu(|g|^{1/2} g^{mu nu})``.

    Uses exact first partials of the metric when declared, centred
    differences at ``eps / 16`` otherwise.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g = metric(eps, pts)
    det = np.linalg.det(g)
    bad = np.abs(det) < 1e-300
    if bad.any():
        k = int(np.argmax(bad))
        raise DegeneratePointError(f"|det g| vanishes at {pts[k]} (eps = {eps:.6g})")
    ginv = np.linalg.inv(g)
    dg = metric_partials(metric, eps, pts, 1)
    # d_mu g^{mu nu} = -g^{mu a} d_mu g_ab g^{b nu};  d_mu log sqrt|g| = g^{ab} d_mu g_ab / 2
    div_inv = -np.einsum("nma,nmab,nbv->nv", ginv, dg, ginv)
    dlog = 0.5 * np.einsum("nab,nmab->nm", ginv, dg)
    b = div_inv + np.einsum("nmv,nm->nv", ginv, dlog)
    return ginv, b


def max_characteristic_speed(ginv: np.ndarray) -> float:
    """Largest coordinate speed ``sqrt(lambda_max(g^{ij}) / -g^{tt})``."""
    spatial = ginv[:, 1:, 1:]
    lam = np.linalg.eigvalsh(spatial)[:, -1]
    gtt = -ginv[:, 0, 0]
    if np.any(gtt <= 0.0):
        raise DegeneratePointError("g^tt must be negative (t is not a time function)")
    return float(np.sqrt(np.max(lam / gtt)))


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IVPSpec:
    """``box u = f``, ``u|_Sigma = v``, ``xi_hat u|_Sigma = w`` on ``Sigma = {t = t0}``.

    ``source(t, x)`` and the data act on spatial point arrays of shape (N, d).
    ``xi`` defaults to the normalised ``d_t``.
    """

    initial_value: Callable[[np.ndarray], np.ndarray]
    initial_rate: Optional[Callable[[np.ndarray], np.ndarray]] = None
    source: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    xi: Optional[VectorFieldSpec] = None

    def scaled_sum(self, a: float, other: "IVPSpec", b: float) -> "IVPSpec":
        """Data of ``a * self + b * other`` (same xi)."""
        def lin(f1, f2):
            if f1 is None and f2 is None:
                return None
            z = lambda *args: 0.0  # noqa: E731
            f1 = f1 or z
            f2 = f2 or z
            return lambda *args: a * np.asarray(f1(*args)) + b * np.asarray(f2(*args))

        return IVPSpec(lin(self.initial_value, other.initial_value),
                       lin(self.initial_rate, other.initial_rate),
                       lin(self.source, other.source), self.xi)


@dataclass(frozen=True)
class SolveGrid:
    """Discretisation: cells per spatial axis, horizon, CFL safety factor.

    ``dt`` is derived from the CFL bound unless given explicitly, in which
    case it is checked.  ``cells_for`` may tighten the lattice per eps.
    ``max_work`` caps cells x steps.
    """

    cells: tuple[int, ...]
    horizon: float
    theta: float = 0.5
    dt: Optional[float] = None
    store_every: int = 1
    max_work: float = 2e9
    cells_for: Optional[Callable[[float], tuple[int, ...]]] = None

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ValueError(f"CFL factor theta must lie in (0, 1], got {self.theta}")
        if min(self.cells) < 4:
            raise ValueError("at least 4 cells per axis")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")


@dataclass
class FieldFrame:
    """Stored time levels of one fixed-eps solution; ``u`` and ``ut`` have
    shape ``(n_times,) + cells``."""

    eps: float
    t: np.ndarray
    axes: tuple[np.ndarray, ...]
    u: np.ndarray
    ut: np.ndarray
    periodic: tuple[bool, ...]
    dt: float
    scheme: str = "leapfrog"
    meta: dict = field(default_factory=dict)

    @property
    def spatial_steps(self) -> tuple[float, ...]:
        return tuple(_axis_step(a, p) for a, p in zip(self.axes, self.periodic))

    def spatial_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.u)))

    def rows(self, every: int = 1):
        """(t, x..., u) tuples for CSV export."""
        pts = self.spatial_points()
        for k in range(0, self.t.size, every):
            vals = self.u[k].ravel()
            for p, val in zip(pts, vals):
                yield (float(self.t[k]), *map(float, p), float(val))


def _axis_step(axis: np.ndarray, periodic: bool) -> float:
    return float(axis[1] - axis[0])


class _Lattice:
    """Flattened solver lattice with stencil neighbour tables."""

    def __init__(self, chart: Chart, cells: Sequence[int]):
        self.chart = chart
        self.cells = tuple(int(c) for c in cells)
        if len(self.cells) != chart.d:
            raise ValueError(f"need {chart.d} cell counts, got {self.cells}")
        axes = []
        for i, ((a, b), n) in enumerate(zip(chart.box, self.cells)):
            h = (b - a) / n
            if chart.periodic[i]:
                axes.append(a + h * np.arange(n))
            else:
                axes.append(a + h * (np.arange(n) + 0.5))
        self.axes = tuple(axes)
        self.steps = np.array([(b - a) / n for (a, b), n in zip(chart.box, self.cells)])
        self.size = int(np.prod(self.cells))
        mesh = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        idx = np.indices(self.cells).reshape(len(self.cells), -1)
        d = len(self.cells)
        self.nbr_p = np.empty((d, self.size), dtype=np.int64)
        self.nbr_m = np.empty((d, self.size), dtype=np.int64)
        interior = np.ones(self.size, dtype=bool)
        for i in range(d):
            self.nbr_p[i] = self._shift(idx, {i: 1})
            self.nbr_m[i] = self._shift(idx, {i: -1})
            if not chart.periodic[i]:
                interior &= (idx[i] > 0) & (idx[i] < self.cells[i] - 1)
        self.interior = interior
        self.pairs = np.array([(i, j) for i in range(d) for j in range(i + 1, d)],
                              dtype=np.int64).reshape(-1, 2)
        self.nbr_d = np.empty((len(self.pairs), 4, self.size), dtype=np.int64)
        for k, (i, j) in enumerate(self.pairs):
            for s, (si, sj) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
                self.nbr_d[k, s] = self._shift(idx, {i: si, j: sj})
        self.boundary = []
        for i in range(d):
            if chart.periodic[i]:
                continue
            lo = np.flatnonzero(idx[i] == 0)
            hi = np.flatnonzero(idx[i] == self.cells[i] - 1)
            self.boundary.append((i, lo, self.nbr_p[i][lo], hi, self.nbr_m[i][hi]))

    def _shift(self, idx, shifts):
        moved = idx.copy()
        for i, s in shifts.items():
            if self.chart.periodic[i]:
                moved[i] = (moved[i] + s) % self.cells[i]
            else:
                moved[i] = np.clip(moved[i] + s, 0, self.cells[i] - 1)
        return np.ravel_multi_index(tuple(moved), self.cells)

    def spacetime(self, t: float) -> np.ndarray:
        return np.concatenate([np.full((self.size, 1), t), self.points], axis=1)


class _Coefficients:
    """Operator coefficients on the lattice at one time, in kernel layout."""

    def __init__(self, metric: MetricNet, eps: float, lat: _Lattice, t: float):
        ginv, b = dalembertian_coefficients(metric, eps, lat.spacetime(t))
        scale = np.abs(ginv).max()
        if np.max(np.abs(ginv[:, 0, 1:])) > 1e-12 * scale:
            raise ValueError("explicit scheme requires g^{ti} = 0 on the chart")
        d = lat.chart.d
        self.gtt = np.ascontiguousarray(ginv[:, 0, 0])
        self.bt = np.ascontiguousarray(b[:, 0])
        self.a_diag = np.ascontiguousarray(np.stack([ginv[:, 1 + i, 1 + i] for i in range(d)]))
        self.a_off = np.ascontiguousarray(
            np.stack([ginv[:, 1 + i, 1 + j] for i, j in lat.pairs]) if len(lat.pairs)
            else np.zeros((0, lat.size)))
        self.b = np.ascontiguousarray(b[:, 1:].T)
        self.speed = max_characteristic_speed(ginv)
        self.axis_speed = [np.sqrt(self.a_diag[i] / -self.gtt) for i in range(d)]
        self.ginv = ginv

    def operator(self, lat: _Lattice, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        return _kernels.apply_operator(u, self.a_diag, self.a_off, lat.pairs, self.b,
                                       1.0 / lat.steps, lat.nbr_p, lat.nbr_m, lat.nbr_d,
                                       lat.interior, out)


def _stable_dt(lat: _Lattice, speed: float, theta: float) -> float:
    return theta * float(lat.steps.min()) / (speed * math.sqrt(lat.chart.d))


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def _gradient(u: np.ndarray, lat: _Lattice) -> list[np.ndarray]:
    shaped = u.reshape(lat.cells)
    out = []
    for i in range(lat.chart.d):
        h = lat.steps[i]
        if lat.chart.periodic[i]:
            g = (np.roll(shaped, -1, axis=i) - np.roll(shaped, 1, axis=i)) / (2 * h)
        else:
            g = np.gradient(shaped, h, axis=i, edge_order=2)
        out.append(g.ravel())
    return out


def _initial_rate(metric, eps, ivp: IVPSpec, lat: _Lattice, t0: float, u0: np.ndarray):
    w = np.zeros(lat.size) if ivp.initial_rate is None else \
        np.broadcast_to(np.asarray(ivp.initial_rate(lat.points), dtype=float), (lat.size,))
    xi = ivp.xi or VectorFieldSpec.coordinate(0, lat.chart.dim, normalize=True)
    vec = xi.at(metric, eps, lat.spacetime(t0))
    if np.min(np.abs(vec[:, 0])) < 1e-12:
        raise ValueError("xi is tangent to the initial slice somewhere")
    grads = _gradient(u0, lat)
    tangential = sum(vec[:, 1 + i] * grads[i] for i in range(lat.chart.d))
    return (w - tangential) / vec[:, 0]


def _source(ivp: IVPSpec, t: float, lat: _Lattice) -> np.ndarray:
    if ivp.source is None:
        return np.zeros(lat.size)
    return np.ascontiguousarray(np.broadcast_to(
        np.asarray(ivp.source(t, lat.points), dtype=float), (lat.size,)))


def _apply_outflow(lat: _Lattice, coef: _Coefficients, u: np.ndarray, unew: np.ndarray, dt: float):
    for i, lo, lo_in, hi, hi_in in lat.boundary:
        c = coef.axis_speed[i] * abs(dt) / lat.steps[i]
        unew[lo] = u[lo] + c[lo] * (u[lo_in] - u[lo])
        unew[hi] = u[hi] - c[hi] * (u[hi] - u[hi_in])


def solve_fixed_eps(metric: MetricNet, eps: float, ivp: IVPSpec, grid: SolveGrid) -> FieldFrame:
    """Evolve the data to ``grid.horizon`` at one eps.

    A negative horizon runs backwards in time.  Raises :class:`CFLError` if
    an explicit ``dt`` is too large, :class:`InfeasibleError` if the work cap
    is exceeded and :class:`BlowUpError` on non-finite values.
    """
    chart = metric.chart
    cells = grid.cells_for(eps) if grid.cells_for is not None else grid.cells
    lat = _Lattice(chart, cells)
    t0 = chart.t_range[0]
    static = metric.static
    coef = _Coefficients(metric, eps, lat, t0)
    speed = coef.speed
    if not static:
        for ts in chart.times():
            speed = max(speed, _Coefficients(metric, eps, lat, ts).speed)
    dt_max = _stable_dt(lat, speed, grid.theta)
    span = abs(grid.horizon)
    if grid.dt is not None:
        if grid.dt > dt_max * (1 + 1e-12):
            raise CFLError(grid.dt, dt_max)
        n_steps = max(1, int(math.ceil(span / grid.dt - 1e-9)))
    else:
        n_steps = max(1, int(math.ceil(span / dt_max)))
    dt = math.copysign(span / n_steps, grid.horizon) if span > 0 else 0.0
    if lat.size * n_steps > grid.max_work:
        raise InfeasibleError(
            f"eps = {eps:.4g} needs {n_steps} steps on {lat.size} cells "
            f"(> budget {grid.max_work:.3g})")

    u0 = np.ascontiguousarray(
        np.broadcast_to(np.asarray(ivp.initial_value(lat.points), dtype=float), (lat.size,)))
    ut0 = _initial_rate(metric, eps, ivp, lat, t0, u0)

    stored_t, stored_u, stored_ut = [t0], [u0.copy()], [ut0.copy()]
    if n_steps == 0 or dt == 0.0:
        return _frame(eps, lat, stored_t, stored_u, stored_ut, dt, grid, n_steps)

    # Taylor first step with u_tt from the equation
    f0 = _source(ivp, t0, lat)
    lu0 = coef.operator(lat, u0)
    utt0 = (f0 - lu0 - coef.bt * ut0) / coef.gtt
    u1 = u0 + dt * ut0 + 0.5 * dt * dt * utt0
    if lat.boundary:
        tmp = u1.copy()
        _apply_outflow(lat, coef, u0, tmp, dt)
        bmask = ~lat.interior
        u1[bmask] = tmp[bmask]

    uold, u = u0, np.ascontiguousarray(u1)
    inv_dx = 1.0 / lat.steps
    for n in range(1, n_steps + 1):
        t = t0 + n * dt
        if not static:
            coef = _Coefficients(metric, eps, lat, t)
            if coef.speed * abs(dt) * math.sqrt(lat.chart.d) > float(lat.steps.min()) * (1 + 1e-9):
                raise CFLError(abs(dt), _stable_dt(lat, coef.speed, grid.theta))
        f = _source(ivp, t, lat)
        unew = np.empty_like(u)
        _kernels.leapfrog_step(u, uold, unew, coef.a_diag, coef.a_off, lat.pairs, coef.b,
                               coef.gtt, coef.bt, f, inv_dx, lat.nbr_p, lat.nbr_m, lat.nbr_d,
                               lat.interior, dt)
        if lat.boundary:
            _apply_outflow(lat, coef, u, unew, dt)
        if not np.all(np.isfinite(unew)):
            raise BlowUpError(n + 1, t + dt)
        if n % grid.store_every == 0 or n == n_steps:
            stored_t.append(t)
            stored_u.append(u.copy())
            stored_ut.append((unew - uold) / (2.0 * dt))
        uold, u = u, unew
    return _frame(eps, lat, stored_t, stored_u, stored_ut, dt, grid, n_steps)


def _frame(eps, lat, ts, us, uts, dt, grid, n_steps) -> FieldFrame:
    shape = (len(ts),) + lat.cells
    return FieldFrame(eps, np.array(ts), lat.axes, np.array(us).reshape(shape),
                      np.array(uts).reshape(shape), tuple(lat.chart.periodic), dt,
                      meta={"steps": n_steps, "cells": lat.cells, "theta": grid.theta,
                            "backend": _kernels.BACKEND})


@dataclass(frozen=True)
class EnergyTrace:
    t: np.ndarray
    energy: np.ndarray
    drift: float
    max_deviation: float
    monotone: bool


@dataclass
class SolutionNet:
    grid: EpsGrid
    frames: list[Optional[FieldFrame]]
    status: list[str]
    sup_norm: np.ndarray
    energies: list[Optional[EnergyTrace]]
    verdict: AsymptoticVerdict

    @property
    def ok(self) -> bool:
        return all(s == "ok" for s in self.status)

    def rows(self):
        """(eps, sup_norm, E0, ET, status) per grid point."""
        for eps, s, e, st in zip(self.grid.samples, self.sup_norm, self.energies, self.status):
            yield (float(eps), float(s), e.energy[0] if e else float("nan"),
                   e.energy[-1] if e else float("nan"), st)


def solve_net(metric: MetricNet, grid: EpsGrid, ivp: IVPSpec, solve_grid: SolveGrid,
              params: ClassifyParams = DEFAULT_PARAMS, workers: int = 1,
              keep_frames: bool = True) -> SolutionNet:
    """Solve at every eps of the grid and classify the sup-norm net.

    Solves may run in parallel; results are gathered in grid order so the
    outcome does not depend on scheduling.
    """

    def run(eps):
        try:
            frame = solve_fixed_eps(metric, eps, ivp, solve_grid)
        except CFLError as exc:
            return None, f"cfl: {exc}"
        except BlowUpError as exc:
            return None, f"blowup: {exc}"
        except InfeasibleError as exc:
            return None, f"infeasible: {exc}"
        return frame, "ok"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, grid.samples))
    else:
        results = [run(eps) for eps in grid.samples]

    frames, status, sups, energies = [], [], [], []
    for frame, st in results:
        status.append(st)
        if frame is None:
            frames.append(None)
            sups.append(np.nan)
            energies.append(None)
            continue
        sups.append(frame.sup_norm())
        energies.append(energy_trace(frame, metric))
        frames.append(frame if keep_frames else None)
    sups = np.array(sups)
    if all(s == "ok" for s in status):
        verdict = classify(GenNumber(grid, sups, name="sup|u|"), params)
    else:
        j = next(i for i, s in enumerate(status) if s != "ok")
        verdict = AsymptoticVerdict(Verdict.INDETERMINATE,
                                    reason=f"solve failed at eps_{j}: {status[j]}")
    return SolutionNet(grid, frames, status, sups, energies, verdict)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def _frame_lattice(frame: FieldFrame) -> np.ndarray:
    return frame.spatial_points()


def energy_trace(frame: FieldFrame, metric: MetricNet, mass_term: bool = False) -> EnergyTrace:
    """``E(t) = int (-g^tt u_t^2 + g^ij u_i u_j) sqrt|g| dx`` at each stored time.

    On ``-dt^2 + h`` this is ``int (u_t^2 + h^ij u_i u_j) dvol_h``, conserved
    for static metrics.  ``mass_term`` adds ``u^2 sqrt|g|``.
    """
    pts = _frame_lattice(frame)
    steps = frame.spatial_steps
    dv = float(np.prod(steps))
    cells = frame.u.shape[1:]
    d = len(cells)
    energies = np.empty(frame.t.size)
    cache = None
    for k, t in enumerate(frame.t):
        if cache is None or not metric.static:
            st = np.concatenate([np.full((pts.shape[0], 1), t), pts], axis=1)
            g = metric(frame.eps, st)
            ginv = np.linalg.inv(g)
            vol = np.sqrt(np.abs(np.linalg.det(g)))
            cache = (ginv, vol)
        ginv, vol = cache
        u = frame.u[k]
        grads = []
        for i in range(d):
            if frame.periodic[i]:
                gi = (np.roll(u, -1, axis=i) - np.roll(u, 1, axis=i)) / (2 * steps[i])
            else:
                gi = np.gradient(u, steps[i], axis=i, edge_order=2)
            grads.append(gi.ravel())
        dens = -ginv[:, 0, 0] * frame.ut[k].ravel() ** 2
        for i in range(d):
            for j in range(d):
                dens = dens + ginv[:, 1 + i, 1 + j] * grads[i] * grads[j]
        if mass_term:
            dens = dens + u.ravel() ** 2
        energies[k] = float(np.sum(dens * vol) * dv)
    e0 = energies[0]
    if e0 == 0.0:
        drift = 0.0 if np.all(energies == 0.0) else math.inf
        dev = drift
    else:
        drift = abs(energies[-1] - e0) / e0
        dev = float(np.max(np.abs(energies - e0)) / e0)
    diffs = np.diff(energies)
    monotone = bool(np.all(diffs <= 0.0) or np.all(diffs >= 0.0))
    return EnergyTrace(frame.t.copy(), energies, drift, dev, monotone)


def _second_diffs(arr: np.ndarray, steps: Sequence[float], periodic: Sequence[bool]):
    """Centred first and second differences on a (t, x...) array.

    Axis 0 (time) is never periodic; edges of non-periodic axes are invalid
    and trimmed by the caller.
    """
    ndim = arr.ndim

    def shift(a, axis, s):
        if periodic[axis]:
            return np.roll(a, -s, axis=axis)
        out = np.empty_like(a)
        sl_dst = [slice(None)] * ndim
        sl_src = [slice(None)] * ndim
        if s > 0:
            sl_dst[axis] = slice(0, -s)
            sl_src[axis] = slice(s, None)
        else:
            sl_dst[axis] = slice(-s, None)
            sl_src[axis] = slice(0, s)
        out[tuple(sl_dst)] = a[tuple(sl_src)]
        return out

    first = [(shift(arr, a, 1) - shift(arr, a, -1)) / (2 * steps[a]) for a in range(ndim)]
    second = {}
    for a in range(ndim):
        second[(a, a)] = (shift(arr, a, 1) - 2 * arr + shift(arr, a, -1)) / steps[a] ** 2
        for b in range(a + 1, ndim):
            pp = shift(shift(arr, a, 1), b, 1)
            pm = shift(shift(arr, a, 1), b, -1)
            mp = shift(shift(arr, a, -1), b, 1)
            mm = shift(shift(arr, a, -1), b, -1)
            second[(a, b)] = (pp - pm - mp + mm) / (4 * steps[a] * steps[b])
    return first, second


def residual_check(metric: MetricNet, eps: float,
                   u: Union[FieldFrame, Callable[[np.ndarray, np.ndarray], np.ndarray]],
                   f: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
                   cells: Optional[Sequence[int]] = None, n_times: Optional[int] = None) -> float:
    """``sup |box_{g_eps} u - f|`` over interior samples, centred differences.

    ``u`` is a frame or a callable ``u(t, x)`` sampled on the chart lattice
    with ``cells`` per axis and ``n_times`` uniform time levels.  ``f(t, x)``
    uses the same point layout.
    """
    chart = metric.chart
    if isinstance(u, FieldFrame):
        ts = u.t
        axes = u.axes
        periodic = u.periodic
        data = u.u
        if ts.size >= 3 and np.ptp(np.diff(ts)) > 1e-9 * abs(ts[1] - ts[0]):
            raise ValueError("frame time levels must be uniformly spaced")
    else:
        if cells is None or n_times is None:
            raise ValueError("sampling a callable needs cells and n_times")
        lat = _Lattice(chart, cells)
        axes = lat.axes
        periodic = tuple(chart.periodic)
        ts = np.linspace(chart.t_range[0], chart.t_range[1], n_times)
        mesh = np.meshgrid(ts, *axes, indexing="ij")
        data = np.asarray(u(mesh[0], np.stack(mesh[1:], axis=-1)), dtype=float)
    if ts.size < 3 or min(a.size for a in axes) < 5:
        raise ValueError("insufficient resolution: need >= 3 time levels and >= 5 points per axis")
    steps = [ts[1] - ts[0]] + [a[1] - a[0] for a in axes]
    per = (False,) + tuple(periodic)
    first, second = _second_diffs(data, steps, per)
    mesh = np.meshgrid(ts, *axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    interior = np.ones(data.shape, dtype=bool)
    for a, p in enumerate(per):
        if not p:
            sl = [slice(None)] * data.ndim
            sl[a] = 0
            interior[tuple(sl)] = False
            sl[a] = -1
            interior[tuple(sl)] = False
    sel = interior.ravel()
    ginv, b = dalembertian_coefficients(metric, eps, pts[sel])
    dim = data.ndim
    box = np.zeros(sel.sum())
    for a in range(dim):
        box += b[:, a] * first[a].ravel()[sel]
        box += ginv[:, a, a] * second[(a, a)].ravel()[sel]
        for c in range(a + 1, dim):
            box += 2 * ginv[:, a, c] * second[(a, c)].ravel()[sel]
    if f is not None:
        fvals = np.asarray(f(mesh[0], np.stack(mesh[1:], axis=-1)), dtype=float)
        box -= np.broadcast_to(fvals, data.shape).ravel()[sel]
    return float(np.max(np.abs(box)))


def convergence_order(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    return _linfit(np.log(np.asarray(h, float)), np.log(np.asarray(err, float)))[0]


# ---------------------------------------------------------------------------
# mollified coordinate maps and pullbacks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MapProfile:
    """One component of an axis-aligned map: ``Phi^a(x) = func(x^a)``."""

    func: Callable[[float], float]
    breakpoints: Optional[Callable] = None
    domain: Optional[tuple[float, float]] = None

    @classmethod
    def identity(cls) -> "MapProfile":
        return cls(lambda s: s)


@dataclass(frozen=True)
class CoordinateMap:
    """``Phi(t, x...) = (phi_0(t), phi_1(x_1), ...)``."""

    profiles: tuple[MapProfile, ...]

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([np.vectorize(p.func, otypes=[float])(pts[:, a])
                         for a, p in enumerate(self.profiles)], axis=1)


class MollifiedMap:
    """Componentwise mollification of a :class:`CoordinateMap` at width eps.

    Each component depends on one coordinate, so the tensor-product kernel
    reduces to a 1-D convolution; derivatives fall on the kernel.
    """

    def __init__(self, phi: CoordinateMap, eps: float):
        self.phi = phi
        self.eps = float(eps)
        self._moll = [Mollified(p.func, eps, p.breakpoints, p.domain) for p in phi.profiles]
        self._cache: dict = {}

    @property
    def dim(self) -> int:
        return len(self.phi.profiles)

    def component(self, a: int, s, deriv: int = 0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        uniq, inv = np.unique(s.ravel(), return_inverse=True)
        key = (a, deriv)
        cache = self._cache.setdefault(key, {})
        missing = [v for v in uniq.tolist() if v not in cache]
        if missing:
            vals = self._moll[a](np.array(missing), deriv)
            cache.update(zip(missing, vals.tolist()))
        out = np.array([cache[v] for v in uniq.tolist()])
        return out[inv].reshape(s.shape)

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([self.component(a, pts[:, a]) for a in range(self.dim)], axis=1)

    def derivative(self, pts, a: int, k: int) -> np.ndarray:
        """``d^k Phi_eps^a / (dx^a)^k`` at the points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.component(a, pts[:, a], k)


def mollify_map(phi: CoordinateMap, eps: float) -> MollifiedMap:
    return MollifiedMap(phi, eps)


def conformal_pullback_metric(phi: CoordinateMap, chart: Chart) -> MetricNet:
    """``eps -> Phi_eps^* eta / (phi_0')^2`` for an axis-aligned map.

    With ``Phi = (tau(t), x...)`` this is ``-dt^2 + sum dx_i^2 (phi_i'/tau')^2``.
    In 1+1 dimensions ``ubar o Phi_eps`` solves its wave equation whenever
    ``ubar`` solves the flat one.  Exact first partials are supplied.
    """
    dim = chart.dim
    if len(phi.profiles) != dim:
        raise ValueError(f"map has {len(phi.profiles)} components, chart needs {dim}")
    maps: dict[float, MollifiedMap] = {}

    def get(eps):
        m = maps.get(eps)
        if m is None:
            m = maps[eps] = mollify_map(phi, eps)
        return m

    def slopes(eps, pts, k):
        m = get(eps)
        return np.stack([m.derivative(pts, a, k) for a in range(dim)], axis=1)

    def ev(eps, pts):
        d1 = slopes(eps, pts, 1)
        if np.any(d1[:, 0] <= 0.0):
            raise ValueError("time component of the map must be increasing")
        diag = (d1 / d1[:, :1]) ** 2
        diag[:, 0] = -1.0
        out = np.zeros((pts.shape[0], dim, dim))
        idx = np.arange(dim)
        out[:, idx, idx] = diag
        return out

    def partials(eps, pts, k, inverse):
        if k != 1 or inverse:
            return None
        d1 = slopes(eps, pts, 1)
        d2 = slopes(eps, pts, 2)
        out = np.zeros((pts.shape[0], dim, dim, dim))
        tau1, tau2 = d1[:, 0], d2[:, 0]
        for i in range(1, dim):
            # g_ii = (phi_i' / tau')^2 with phi_i a function of x_i, tau of t
            ratio = d1[:, i] / tau1
            out[:, 0, i, i] = -2.0 * ratio ** 2 * tau2 / tau1
            out[:, i, i, i] = 2.0 * ratio * d2[:, i] / tau1
        return out

    return MetricNet(chart, ev, "conformal-pullback", {}, partials=partials)


def map_derivative_net(phi: CoordinateMap, grid: EpsGrid, axis: int, k: int,
                       samples: Callable[[float], np.ndarray]) -> GenNumber:
    """``eps -> sup |d^k Phi_eps^axis|`` over ``samples(eps)`` (1-D coordinates)."""
    vals = []
    for eps in grid.samples:
        m = mollify_map(phi, eps)
        vals.append(float(np.max(np.abs(m.component(axis, samples(eps), k)))))
    return GenNumber(grid, np.array(vals), name=f"sup|d^{k} Phi^{axis}|")


def pullback_solution(phi_eps: MollifiedMap, profile_f: Callable, profile_g: Callable,
                      chart: Chart, cells: int, n_times: int,
                      profile_domain: Optional[tuple[float, float]] = None) -> FieldFrame:
    """Sample ``u = ubar o Phi_eps`` with ``ubar(tau, s) = F(s - tau) + G(s + tau)``.

    1+1 dimensions only.
    """
    if chart.d != 1 or phi_eps.dim != 2:
        raise ValueError("pullback of the d'Alembert solution is defined in 1+1 dimensions")
    lat = _Lattice(chart, (cells,))
    ts = np.linspace(chart.t_range[0], chart.t_range[1], n_times)
    xs = lat.axes[0]
    tau = phi_eps.component(0, ts)
    sig = phi_eps.component(1, xs)
    minus = sig[None, :] - tau[:, None]
    plus = sig[None, :] + tau[:, None]
    if profile_domain is not None:
        lo, hi = profile_domain
        if min(minus.min(), plus.min()) < lo or max(minus.max(), plus.max()) > hi:
            raise ValueError("range of Phi_eps leaves the domain of the flat solution")
    u = np.asarray(profile_f(minus), float) + np.asarray(profile_g(plus), float)
    ut = np.gradient(u, ts, axis=0, edge_order=2)
    dt = float(ts[1] - ts[0]) if ts.size > 1 else 0.0
    return FieldFrame(phi_eps.eps, ts, (xs,), u, ut, (chart.periodic[0],), dt,
                      scheme="pullback")
