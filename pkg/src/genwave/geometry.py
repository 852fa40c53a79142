"""Nets of Lorentzian metrics on a chart and checks of their growth hypotheses.

Coordinates are ``(t, x_1, ..., x_d)`` with signature ``(-, +, ..., +)``.
A :class:`MetricNet` evaluates ``g_eps`` at a batch of points; derivatives are
taken from exact callables when the net declares them and otherwise by
centred finite differences with step ``eps / 16``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .gennum import (
    DEFAULT_PARAMS, ClassifyParams, EpsGrid, GenNumber, NetError, OrderFit,
    TriState, estimate_order, is_invertible, _linfit,
)
from .mollify import Mollified, kinks_of_abs_sin

__all__ = [
    "Chart", "MetricNet", "VectorFieldSpec", "ResolutionError",
    "NonProductMetricError", "multi_indices", "fd_partials", "metric_partials",
    "christoffel", "make_minkowski", "make_diagonal_metric",
    "make_product_metric", "make_mollified_cone", "make_collapsing_torus",
    "make_holder_conformal", "make_log_growth_metric", "default_cap",
    "HolderCoefficient", "ValidityReport", "verify_generalized_metric",
    "GrowthEntry", "derivative_growth_orders", "XiGrowth",
    "xi_covariant_growth", "CollapseReport", "volume_and_curvature_asymptotics",
    "disk_area", "sectional_curvatures",
]


class ResolutionError(ValueError):
    """Finite-difference step too coarse for the eps-scale features."""


class NonProductMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    """Space-time box ``[t0, t1] x prod(box)`` with a sampling lattice.

    ``counts`` is the number of lattice points per spatial axis used for
    sup-norms; periodic axes sample ``[a, b)``, others ``[a, b]``.
    The initial slice is ``t = t_range[0]``.
    """

    box: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    periodic: tuple[bool, ...]
    t_range: tuple[float, float] = (0.0, 1.0)
    t_samples: int = 3

    def __post_init__(self):
        d = len(self.box)
        if d not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d}")
        if len(self.counts) != d or len(self.periodic) != d:
            raise ValueError("box, counts and periodic must have equal length")
        for i, (a, b) in enumerate(self.box):
            if not b > a:
                raise ValueError(f"box[{i}] is degenerate: {(a, b)}")
        if min(self.counts) < 16:
            raise ValueError(f"at least 16 samples per axis required, got {self.counts}")
        if not self.t_range[1] >= self.t_range[0]:
            raise ValueError(f"bad time range {self.t_range}")

    @property
    def d(self) -> int:
        return len(self.box)

    @property
    def dim(self) -> int:
        return 1 + self.d

    def axis(self, i: int, n: Optional[int] = None) -> np.ndarray:
        a, b = self.box[i]
        n = self.counts[i] if n is None else n
        if self.periodic[i]:
            return a + (b - a) * np.arange(n) / n
        return np.linspace(a, b, n)

    def lattice(self) -> np.ndarray:
        axes = [self.axis(i) for i in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def times(self) -> np.ndarray:
        t0, t1 = self.t_range
        if self.t_samples <= 1 or t1 == t0:
            return np.array([t0])
        return np.linspace(t0, t1, self.t_samples)

    def spacetime(self, spatial: np.ndarray) -> np.ndarray:
        ts = self.times()
        n = spatial.shape[0]
        out = np.empty((ts.size * n, self.dim))
        for k, t in enumerate(ts):
            out[k * n:(k + 1) * n, 0] = t
            out[k * n:(k + 1) * n, 1:] = spatial
        return out


@dataclass(frozen=True)
class MetricNet:
    """``eps -> g_eps`` on a chart.

    ``eval(eps, pts)`` maps points of shape (N, D) to matrices (N, D, D).
    ``partials(eps, pts, k, inverse)`` may return exact order-k partials in
    the :func:`fd_partials` layout, or None to fall back to differencing.
    ``extra_points(eps)`` adds eps-dependent spatial samples (N, d).
    """

    chart: Chart
    eval: Callable[[float, np.ndarray], np.ndarray]
    name: str = "metric"
    params: dict = field(default_factory=dict)
    partials: Optional[Callable] = None
    extra_points: Optional[Callable[[float], np.ndarray]] = None
    static: bool = False

    def __call__(self, eps: float, pts) -> np.ndarray:
        return self.eval(eps, np.atleast_2d(np.asarray(pts, dtype=float)))

    def inverse(self, eps: float, pts) -> np.ndarray:
        return np.linalg.inv(self(eps, pts))

    def sample_points(self, eps: float) -> np.ndarray:
        spatial = self.chart.lattice()
        if self.extra_points is not None:
            spatial = np.concatenate([spatial, np.atleast_2d(self.extra_points(eps))])
        return self.chart.spacetime(spatial)


@dataclass(frozen=True)
class VectorFieldSpec:
    """A vector field on the chart; ``normalize`` divides by ``sqrt|g(xi, xi)|``."""

    eval: Callable[[np.ndarray], np.ndarray]
    normalize: bool = False
    name: str = "xi"

    @classmethod
    def coordinate(cls, axis: int, dim: int, normalize: bool = False) -> "VectorFieldSpec":
        def ev(pts):
            out = np.zeros((pts.shape[0], dim))
            out[:, axis] = 1.0
            return out

        return cls(ev, normalize, name=f"d_{axis}")

    def at(self, metric: MetricNet, eps: float, pts: np.ndarray, floor: float = 1e-10) -> np.ndarray:
        xi = self.eval(pts)
        if not self.normalize:
            return xi
        g = metric(eps, pts)
        n2 = np.einsum("ni,nij,nj->n", xi, g, xi)
        if np.min(np.abs(n2)) < floor:
            raise ValueError(f"|g(xi, xi)| falls below {floor:g}; cannot normalise {self.name}")
        return xi / np.sqrt(np.abs(n2))[:, None]


# ---------------------------------------------------------------------------
# finite differences and connection
# ---------------------------------------------------------------------------

_FD_WEIGHTS = {
    0: ((0, 1.0),),
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def multi_indices(dim: int, k: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations_with_replacement(range(dim), k))


def fd_partials(func: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, k: int,
                step: float) -> np.ndarray:
    """All order-k partials of ``func`` by second-order centred differences.

    Output shape is ``(N, len(multi_indices(D, k))) + func_shape``; for k = 1
    the second axis is simply the coordinate index.
    """
    if k not in _FD_WEIGHTS:
        raise ValueError(f"derivative order {k} not supported (max 4)")
    pts = np.asarray(pts, dtype=float)
    dim = pts.shape[1]
    out = []
    for mi in multi_indices(dim, k):
        counts = np.bincount(np.array(mi, dtype=int), minlength=dim) if k else np.zeros(dim, int)
        acc = None
        for combo in itertools.product(*[_FD_WEIGHTS[c] for c in counts]):
            offset = np.array([o for o, _ in combo], dtype=float) * step
            w = math.prod(wt for _, wt in combo)
            term = w * func(pts + offset)
            acc = term if acc is None else acc + term
        out.append(acc / step ** k)
    return np.stack(out, axis=1)


def _fd_step(eps: float, factor: float) -> float:
    h = factor * eps
    if h > eps / 8.0:
        raise ResolutionError(f"finite-difference step {h:.3g} exceeds eps/8 = {eps / 8:.3g}")
    return h


def metric_partials(metric: MetricNet, eps: float, pts: np.ndarray, k: int,
                    inverse: bool = False, step_factor: float = 1.0 / 16.0) -> np.ndarray:
    if metric.partials is not None:
        exact = metric.partials(eps, pts, k, inverse)
        if exact is not None:
            return exact
    h = _fd_step(eps, step_factor)
    func = (lambda p: metric.inverse(eps, p)) if inverse else (lambda p: metric(eps, p))
    return fd_partials(func, pts, k, h)


def christoffel(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``Gamma[n, a, b, c]`` from metrics (N, D, D) and ``dg[n, mu, a, b] = d_mu g_ab``."""
    ginv = np.linalg.inv(g)
    lower = np.transpose(dg, (0, 2, 1, 3)) + np.transpose(dg, (0, 2, 3, 1)) - dg
    return 0.5 * np.einsum("nad,ndbc->nabc", ginv, lower)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _diag_stack(diag: np.ndarray) -> np.ndarray:
    n, dim = diag.shape
    out = np.zeros((n, dim, dim))
    idx = np.arange(dim)
    out[:, idx, idx] = diag
    return out


def make_diagonal_metric(entries: Sequence, chart: Chart, name: str = "diagonal") -> MetricNet:
    """Position-independent diagonal metric; entries are constants or callables of eps."""
    if len(entries) != chart.dim:
        raise ValueError(f"need {chart.dim} diagonal entries, got {len(entries)}")
    fns = [e if callable(e) else (lambda eps, c=float(e): c) for e in entries]

    def ev(eps, pts):
        diag = np.array([float(f(eps)) for f in fns])
        return _diag_stack(np.broadcast_to(diag, (pts.shape[0], chart.dim)))

    def partials(eps, pts, k, inverse):
        if k == 0:
            return None
        n = len(multi_indices(chart.dim, k))
        return np.zeros((pts.shape[0], n, chart.dim, chart.dim))

    return MetricNet(chart, ev, name, {}, partials=partials, static=True)


def make_minkowski(d: int = 3, chart: Optional[Chart] = None) -> MetricNet:
    if chart is None:
        chart = Chart(((0.0, 1.0),) * d, (16,) * d, (True,) * d)
    return make_diagonal_metric([-1.0] + [1.0] * chart.d, chart, name="minkowski")


def make_product_metric(h: Callable[[np.ndarray], np.ndarray], chart: Chart,
                        name: str = "product") -> MetricNet:
    """Static ``-dt^2 + h(x)`` with an eps-independent spatial metric ``h``."""

    def ev(eps, pts):
        out = np.zeros((pts.shape[0], chart.dim, chart.dim))
        out[:, 0, 0] = -1.0
        out[:, 1:, 1:] = h(pts[:, 1:])
        return out

    return MetricNet(chart, ev, name, {}, static=True)


def default_cap(s):
    """Bump ``exp(1 - 1/(1 - s^2))`` on [0, 1), zero beyond; equals 1 at 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _check_cap(chi):
    at0 = float(np.asarray(chi(np.array([0.0])))[0])
    beyond = np.asarray(chi(np.array([1.0, 1.5, 3.0])), dtype=float)
    if abs(at0 - 1.0) > 1e-12:
        raise ValueError(f"cap profile must satisfy chi(0) = 1, got {at0}")
    if np.max(np.abs(beyond)) > 1e-12:
        raise ValueError("cap profile must vanish for s >= 1")
    vals = np.asarray(chi(np.linspace(0.0, 1.0, 513)), dtype=float)
    if np.any(np.diff(vals) > 1e-12):
        raise ValueError("cap profile must be non-increasing on [0, 1]")


def make_mollified_cone(alpha: float, chi: Callable = default_cap,
                        half_width: float = 2.5, counts: int = 32,
                        t_range: tuple[float, float] = (0.0, 1.0),
                        ring_fractions: Sequence[float] = (0.25, 0.5, 0.75),
                        ring_angles: int = 16) -> MetricNet:
    """2+1 cone ``-dt^2 + dr^2 + f_eps(r)^2 dtheta^2`` in Cartesian coordinates.

    ``f_eps(r) = r (alpha + (1 - alpha) chi(r / eps))``, so ``g_eps`` is the
    exact cone for ``r >= eps`` and Minkowski at the axis.  The spatial block
    is ``F delta_ij + (1 - F) x_i x_j / r^2`` with ``F = (f_eps / r)^2``.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"deficit parameter alpha must lie in (0, 1), got {alpha}")
    _check_cap(chi)
    chart = Chart(((-half_width, half_width),) * 2, (counts, counts), (False, False),
                  t_range=t_range)

    def ev(eps, pts):
        x, y = pts[:, 1], pts[:, 2]
        r2 = x * x + y * y
        r = np.sqrt(r2)
        with np.errstate(divide="ignore"):
            ratio = alpha + (1.0 - alpha) * chi(r / eps)
        big_f = ratio * ratio
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(r2 > 0.0, (1.0 - big_f) / r2, 0.0)
        out = np.zeros((pts.shape[0], 3, 3))
        out[:, 0, 0] = -1.0
        out[:, 1, 1] = big_f + w * x * x
        out[:, 2, 2] = big_f + w * y * y
        out[:, 1, 2] = out[:, 2, 1] = w * x * y
        return out

    def rings(eps):
        th = 2.0 * np.pi * np.arange(ring_angles) / ring_angles
        pts = [np.stack([f * eps * np.cos(th), f * eps * np.sin(th)], axis=1)
               for f in ring_fractions]
        return np.concatenate(pts)

    return MetricNet(chart, ev, "mollified-cone", {"alpha": alpha},
                     extra_points=rings, static=True)


def make_collapsing_torus(p: float, counts: int = 16) -> MetricNet:
    """``-dt^2 + dx^2 + dy^2 + eps^(2p) dz^2`` on the periodic box [0, 2 pi)^3."""
    if not p > 0.0:
        raise ValueError(f"collapse exponent must be positive, got {p}")
    chart = Chart(((0.0, 2 * np.pi),) * 3, (counts,) * 3, (True,) * 3)
    m = make_diagonal_metric([-1.0, 1.0, 1.0, lambda eps: eps ** (2.0 * p)], chart,
                             name="collapsing-torus")
    return MetricNet(chart, m.eval, "collapsing-torus", {"p": p},
                     partials=m.partials, static=True)


@dataclass(frozen=True)
class HolderCoefficient:
    """Rough wave speed squared ``a(t)`` with its kink locations and lower bound."""

    func: Callable[[float], float]
    lower_bound: float
    breakpoints: Optional[Callable] = None
    description: str = ""

    @classmethod
    def oscillatory(cls, a0: float = 1.0, alpha_h: float = 0.5,
                    omega: float = 2 * np.pi) -> "HolderCoefficient":
        return cls(lambda t: a0 + abs(math.sin(omega * t)) ** alpha_h, a0,
                   kinks_of_abs_sin(omega),
                   f"{a0} + |sin({omega:.6g} t)|^{alpha_h}")


def make_holder_conformal(coefficient: Optional[HolderCoefficient] = None,
                          alpha_h: float = 0.5, width_factor: float = 1.0,
                          regularization: str = "coefficient",
                          length: float = 1.0, counts: int = 64,
                          t_range: tuple[float, float] = (0.0, 1.0)) -> MetricNet:
    """1+1 metric ``-dt^2 + dx^2 / a_eps(t)`` on a periodic x-interval.

    Its wave operator has principal part ``-(d_t^2 - a_eps d_x^2)``.
    ``regularization="coefficient"`` takes ``a_eps = a * rho_eps``;
    ``"map"`` takes ``a_eps = (sqrt(a) * rho_eps)^2``, the squared speed of the
    mollified optical time ``tau_eps = (int_0^t sqrt(a)) * rho_eps``, for which
    pulled-back flat solutions are exact.
    """
    if not (0.0 < alpha_h < 1.0):
        raise ValueError(f"Hoelder exponent must lie in (0, 1), got {alpha_h}")
    if regularization not in ("coefficient", "map"):
        raise ValueError(f"unknown regularization {regularization!r}")
    coef = coefficient or HolderCoefficient.oscillatory(alpha_h=alpha_h)
    if not coef.lower_bound > 0.0:
        raise ValueError("coefficient lower bound a_0 must be positive")
    t0, t1 = t_range
    probe = np.linspace(t0 - 1.0, t1 + 1.0, 4001)
    vals = np.array([coef.func(t) for t in probe])
    if np.min(vals) < coef.lower_bound - 1e-12:
        raise ValueError(f"coefficient drops to {np.min(vals):.6g} below a_0 = {coef.lower_bound}")

    chart = Chart(((0.0, length),), (counts,), (True,), t_range=t_range, t_samples=33)
    inner = coef.func if regularization == "coefficient" else (lambda t: math.sqrt(coef.func(t)))
    cache: dict[float, Mollified] = {}

    def moll(eps):
        m = cache.get(eps)
        if m is None:
            m = cache[eps] = Mollified(inner, width_factor * eps, coef.breakpoints)
        return m

    def speed2(eps, t, deriv=0):
        m = moll(eps)
        if regularization == "coefficient":
            return m(t, deriv)
        s0 = m(t)
        if deriv == 0:
            return s0 * s0
        if deriv == 1:
            return 2.0 * s0 * m(t, 1)
        raise ValueError("only first derivatives of a_eps are exposed")

    def ev(eps, pts):
        t = pts[:, 0]
        uniq, inv = np.unique(t, return_inverse=True)
        a = speed2(eps, uniq)[inv]
        out = np.zeros((pts.shape[0], 2, 2))
        out[:, 0, 0] = -1.0
        out[:, 1, 1] = 1.0 / a
        return out

    def partials(eps, pts, k, inverse):
        if k != 1 or inverse:
            return None
        t = pts[:, 0]
        uniq, inv = np.unique(t, return_inverse=True)
        a = speed2(eps, uniq)[inv]
        da = speed2(eps, uniq, 1)[inv]
        out = np.zeros((pts.shape[0], 2, 2, 2))
        out[:, 0, 1, 1] = -da / (a * a)
        return out

    params = {"alpha_h": alpha_h, "regularization": regularization,
              "coefficient": coef.description, "width_factor": width_factor}
    return MetricNet(chart, ev, "hoelder-conformal", params, partials=partials)


def make_log_growth_metric(coeff: float = 1.0, length: float = 2 * np.pi,
                           counts: int = 64) -> MetricNet:
    """``diag(-1, h)`` with ``h = 1 + c eps log(1/eps) sin(x / eps)``.

    With ``xi = d_x`` one has ``nabla_x xi^x = h' / (2h) ~ (c/2) log(1/eps)``.
    Exact partials are provided.
    """
    chart = Chart(((0.0, length),), (counts,), (False,), t_samples=1)

    def ev(eps, pts):
        lg = math.log(1.0 / eps)
        h = 1.0 + coeff * eps * lg * np.sin(pts[:, 1] / eps)
        out = np.zeros((pts.shape[0], 2, 2))
        out[:, 0, 0] = -1.0
        out[:, 1, 1] = h
        return out

    def partials(eps, pts, k, inverse):
        if inverse or k == 0:
            return None
        lg = math.log(1.0 / eps)
        phase = pts[:, 1] / eps
        # k-th derivative of sin(x/eps) is eps^-k sin(x/eps + k pi/2)
        dk = coeff * eps * lg * eps ** (-k) * np.sin(phase + k * np.pi / 2)
        mis = multi_indices(2, k)
        out = np.zeros((pts.shape[0], len(mis), 2, 2))
        for j, mi in enumerate(mis):
            if all(a == 1 for a in mi):
                out[:, j, 1, 1] = dk
        return out

    return MetricNet(chart, ev, "log-growth", {"coeff": coeff}, partials=partials, static=True)


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidityReport:
    symmetric: bool
    det_net: GenNumber
    det_invertible: TriState
    indices: tuple[int, ...]
    index: Optional[int]
    passed: bool

    @property
    def index_constant(self) -> bool:
        return len(self.indices) == 1


def verify_generalized_metric(metric: MetricNet, grid: EpsGrid,
                              params: ClassifyParams = DEFAULT_PARAMS) -> ValidityReport:
    """Symmetry, invertible determinant net and constant pointwise index.

    The determinant net is ``eps -> min over samples |det g_eps|``; the index
    is the number of negative eigenvalues at every sampled point on the tail.
    """
    symmetric = True
    det_min = np.empty(grid.count)
    lo, hi = params.window if params.window is not None else grid.tail()
    indices: set[int] = set()
    for j, eps in enumerate(grid.samples):
        g = metric(eps, metric.sample_points(eps))
        scale = np.maximum(np.abs(g).max(axis=(1, 2)), 1e-300)
        if np.any(np.abs(g - np.swapaxes(g, 1, 2)).max(axis=(1, 2)) > 1e-12 * scale):
            symmetric = False
        det_min[j] = np.min(np.abs(np.linalg.det(g)))
        if lo <= j < hi:
            eigs, _ = _kernels.eigvalsh_batch(g)
            indices.update(np.unique((eigs < 0.0).sum(axis=1)).tolist())
    det_net = GenNumber(grid, det_min, name="min|det g|")
    inv = is_invertible(det_net, params)
    idx = tuple(sorted(indices))
    index = idx[0] if len(idx) == 1 else None
    passed = symmetric and inv is TriState.YES and index is not None
    return ValidityReport(symmetric, det_net, inv, idx, index, passed)


@dataclass(frozen=True)
class GrowthEntry:
    """Sup-norm of order-k partials of the metric (or its inverse) as a net."""

    k: int
    which: str
    values: GenNumber
    slope: float
    fit: Optional[OrderFit]
    bound: float
    passed: bool


def derivative_growth_orders(metric: MetricNet, grid: EpsGrid, k_max: int = 3,
                             step_factor: float = 1.0 / 16.0,
                             tolerance: float = 0.25) -> list[GrowthEntry]:
    """Fit ``D_k(eps) = sup |d^k g_eps|`` and accept slopes ``>= -k - tolerance``.

    Coordinate partials stand in for Lie derivatives along the coordinate
    frame.  A net that vanishes identically gets slope ``+inf``.
    """
    if not 1 <= k_max <= 4:
        raise ValueError(f"k_max must lie in 1..4, got {k_max}")
    for eps in grid.samples:
        _fd_step(eps, step_factor)
    entries = []
    for which in ("metric", "inverse"):
        sups = np.zeros((k_max, grid.count))
        for j, eps in enumerate(grid.samples):
            pts = metric.sample_points(eps)
            for k in range(1, k_max + 1):
                d = metric_partials(metric, eps, pts, k, which == "inverse", step_factor)
                sups[k - 1, j] = np.max(np.abs(d))
        for k in range(1, k_max + 1):
            net = GenNumber(grid, sups[k - 1], name=f"D{k}({which})")
            lo, hi = grid.tail()
            tail = net.values[lo:hi]
            if np.all(tail <= 1e-300):
                entries.append(GrowthEntry(k, which, net, math.inf, None, -float(k), True))
                continue
            fit = estimate_order(net)
            entries.append(GrowthEntry(k, which, net, fit.slope, fit, -float(k),
                                       fit.slope >= -k - tolerance))
    return entries


@dataclass(frozen=True)
class XiGrowth:
    """``G(eps) = sup |nabla xi|`` against ``log(1/eps)``.

    ``log_coefficient``/``intercept`` come from a linear fit of G on
    ``log(1/eps)`` over the tail; ``bound_constant`` is the smallest C with
    ``G <= C (1 + log(1/eps))`` on the tail.
    """

    values: GenNumber
    log_coefficient: float
    intercept: float
    bound_constant: float
    ratio_slope: float
    passed: bool


def _field_partials(xi: VectorFieldSpec, metric: MetricNet, eps: float, pts, h):
    return fd_partials(lambda p: xi.at(metric, eps, p), pts, 1, h)


def xi_covariant_growth(metric: MetricNet, xi: VectorFieldSpec, grid: EpsGrid,
                        step_factor: float = 1.0 / 16.0,
                        ratio_tolerance: float = 0.1) -> XiGrowth:
    """Growth of ``nabla^eps xi`` measured against ``|log eps|``.

    Passes when G vanishes on the tail or when ``G / (1 + log(1/eps))`` shows
    no power-law growth (fitted order ``>= -ratio_tolerance``).
    """
    gvals = np.empty(grid.count)
    for j, eps in enumerate(grid.samples):
        pts = metric.sample_points(eps)
        h = _fd_step(eps, step_factor)
        g = metric(eps, pts)
        dg = metric_partials(metric, eps, pts, 1, False, step_factor)
        gam = christoffel(g, dg)
        v = xi.at(metric, eps, pts)
        dv = _field_partials(xi, metric, eps, pts, h)  # dv[n, mu, nu] = d_mu xi^nu
        cov = dv + np.einsum("nvml,nl->nmv", gam, v)
        gvals[j] = np.max(np.abs(cov))
    net = GenNumber(grid, gvals, name="sup|nabla xi|")
    lo, hi = grid.tail()
    eps_t = grid.samples[lo:hi]
    logs = np.log(1.0 / eps_t)
    tail = gvals[lo:hi]
    if np.all(tail == 0.0):
        return XiGrowth(net, 0.0, 0.0, 0.0, math.inf, True)
    c1, c0, _ = _linfit(logs, tail)
    ratio = GenNumber(grid, gvals / (1.0 + np.log(1.0 / grid.samples)))
    rfit = estimate_order(ratio)
    bound = float(np.max(tail / (1.0 + logs)))
    return XiGrowth(net, c1, c0, bound, rfit.slope, rfit.slope >= -ratio_tolerance)


# ---------------------------------------------------------------------------
# collapse diagnostics
# ---------------------------------------------------------------------------

def _spatial_metric(metric: MetricNet, eps: float, t: float):
    def h(x):
        pts = np.concatenate([np.full((x.shape[0], 1), t), x], axis=1)
        return metric(eps, pts)[:, 1:, 1:]
    return h


def _check_product(metric: MetricNet, eps: float):
    chart = metric.chart
    spatial = chart.lattice()
    t0, t1 = chart.t_range
    if t1 <= t0:
        t1 = t0 + 1.0
    # irrational offsets so time-periodic coefficients cannot alias
    times = t0 + (t1 - t0) * np.array([0.0, 0.1234567, 0.3819660, 0.7071068, 1.0])
    blocks = [metric(eps, np.concatenate([np.full((spatial.shape[0], 1), t), spatial], axis=1))
              for t in times]
    ga = blocks[0]
    if np.max(np.abs(ga[:, 0, 1:])) > 1e-14:
        raise NonProductMetricError("metric has dt-cross terms")
    if np.max(np.abs(ga[:, 0, 0] + 1.0)) > 1e-14:
        raise NonProductMetricError("g_tt is not -1")
    scale = 1e-14 * max(1.0, np.abs(ga).max())
    for gb in blocks[1:]:
        if np.max(np.abs(ga[:, 1:, 1:] - gb[:, 1:, 1:])) > scale:
            raise NonProductMetricError("spatial block depends on time")


def _quadrature(chart: Chart, n: int):
    nodes, weights = [], []
    for i, (a, b) in enumerate(chart.box):
        if chart.periodic[i]:
            nodes.append(a + (b - a) * np.arange(n) / n)
            weights.append(np.full(n, (b - a) / n))
        else:
            x, w = np.polynomial.legendre.leggauss(n)
            nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
            weights.append(0.5 * (b - a) * w)
    mesh = np.meshgrid(*nodes, indexing="ij")
    wmesh = np.meshgrid(*weights, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    w = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    return pts, w


def sectional_curvatures(h: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                         step: float) -> np.ndarray:
    """Sectional curvature of every coordinate plane, shape (N, n_planes).

    Christoffels come from centred differences of ``h``; their derivatives
    from centred differences of the Christoffel field.
    """
    d = x.shape[1]
    if d < 2:
        return np.zeros((x.shape[0], 0))

    def gamma(p):
        return christoffel(h(p), fd_partials(h, p, 1, step))

    gam = gamma(x)
    dgam = fd_partials(gamma, x, 1, step)  # [n, e, a, b, c] = d_e Gamma^a_bc
    # R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db} - G^a_{de} G^e_{cb}
    riem = (np.einsum("ncadb->nabcd", dgam) - np.einsum("ndacb->nabcd", dgam)
            + np.einsum("nace,nedb->nabcd", gam, gam)
            - np.einsum("nade,necb->nabcd", gam, gam))
    hm = h(x)
    low = np.einsum("nae,nebcd->nabcd", hm, riem)
    planes = list(itertools.combinations(range(d), 2))
    out = np.empty((x.shape[0], len(planes)))
    for k, (i, j) in enumerate(planes):
        area = hm[:, i, i] * hm[:, j, j] - hm[:, i, j] ** 2
        out[:, k] = low[:, i, j, i, j] / area
    return out


@dataclass(frozen=True)
class CollapseReport:
    volume: GenNumber
    volume_fit: OrderFit
    curvature: np.ndarray          # sup |sectional curvature| per eps
    curvature_fit: Optional[OrderFit]
    injectivity: Optional[GenNumber]
    injectivity_fit: Optional[OrderFit]


def volume_and_curvature_asymptotics(metric: MetricNet, grid: EpsGrid,
                                     quad_points: int = 32,
                                     curvature_step: Optional[float] = None) -> CollapseReport:
    """Volume, curvature and an injectivity proxy of the slices ``t = const``.

    The proxy is the shortest closed coordinate loop along a periodic axis,
    ``min int_0^P sqrt(h_ii) dx_i`` over lattice base points.
    """
    chart = metric.chart
    qpts, qw = _quadrature(chart, max(quad_points, 16))
    base = chart.lattice()
    t0 = chart.t_range[0]
    vol = np.empty(grid.count)
    curv = np.empty(grid.count)
    inj = np.empty(grid.count)
    periodic_axes = [i for i in range(chart.d) if chart.periodic[i]]
    for j, eps in enumerate(grid.samples):
        _check_product(metric, eps)
        h = _spatial_metric(metric, eps, t0)
        vol[j] = float(np.sum(qw * np.sqrt(np.linalg.det(h(qpts)))))
        step = curvature_step if curvature_step is not None else min(eps / 16.0, 1e-3)
        k = sectional_curvatures(h, base, step)
        curv[j] = float(np.max(np.abs(k))) if k.size else 0.0
        lengths = []
        for i in periodic_axes:
            a, b = chart.box[i]
            n = max(quad_points, 16)
            s = a + (b - a) * np.arange(n) / n
            for x0 in base[:: max(1, base.shape[0] // 64)]:
                line = np.repeat(x0[None, :], n, axis=0)
                line[:, i] = s
                lengths.append(np.sum(np.sqrt(h(line)[:, i, i])) * (b - a) / n)
        inj[j] = min(lengths) if lengths else np.nan
    vol_net = GenNumber(grid, vol, name="vol(h)")
    vfit = estimate_order(vol_net)
    cfit = None
    lo, hi = grid.tail()
    if np.any(curv[lo:hi] > 0.0):
        cfit = estimate_order(GenNumber(grid, curv))
    inj_net = inj_fit = None
    if periodic_axes:
        inj_net = GenNumber(grid, inj, name="injectivity proxy")
        inj_fit = estimate_order(inj_net)
    return CollapseReport(vol_net, vfit, curv, cfit, inj_net, inj_fit)


def disk_area(metric: MetricNet, eps: float, radius: float, n_r: int = 64,
              n_theta: int = 64) -> float:
    """Area of the coordinate disk ``r <= radius`` in a 2+1 static metric."""
    if metric.chart.d != 2:
        raise ValueError("disk_area needs two spatial dimensions")
    x, w = np.polynomial.legendre.leggauss(n_r)
    pieces = [(0.0, min(eps, radius))] + ([(eps, radius)] if radius > eps else [])
    rs, wr = [], []
    for a, b in pieces:
        rs.append(0.5 * (b - a) * x + 0.5 * (b + a))
        wr.append(0.5 * (b - a) * w)
    r = np.concatenate(rs)
    wr = np.concatenate(wr)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([np.full(rr.size, metric.chart.t_range[0]),
                    (rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    sq = np.sqrt(np.linalg.det(metric(eps, pts)[:, 1:, 1:])).reshape(rr.shape)
    return float(np.sum(wr[:, None] * rr * sq) * 2 * np.pi / n_theta)
