"""Generalized numbers as nets sampled on a geometric grid of smoothing parameters.

A :class:`GenNumber` is one representative ``eps -> x_eps`` of an element of the
generalized number ring, known only at the samples of an :class:`EpsGrid`.
Asymptotic statements (moderate, negligible, strictly positive) are decided on
the tail of the grid, so every verdict is relative to the representative and
the grid it was computed on.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

__all__ = [
    "GridError", "NetError", "EpsGrid", "make_geometric_grid", "DEFAULT_GRID", "GenNumber",
    "OrderFit", "Verdict", "AsymptoticVerdict", "TriState",
    "ClassifyParams", "estimate_order", "classify", "is_invertible",
    "is_moderate", "count_sign_changes", "CSV_FIELDS", "verdict_row",
]


class GridError(ValueError):
    """Invalid grid parameters."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class NetError(ValueError):
    """A net is unusable: non-finite values, mismatched grids, empty window."""


@dataclass(frozen=True)
class EpsGrid:
    """Samples ``eps_j = eps0 * q**j`` for ``j = 0 .. count-1``."""

    eps0: float
    q: float
    count: int

    def __post_init__(self):
        if not (0.0 < self.eps0 <= 1.0):
            raise GridError("eps0", f"must lie in (0, 1], got {self.eps0!r}")
        if not (0.0 < self.q < 1.0):
            raise GridError("q", f"must lie in (0, 1), got {self.q!r}")
        if int(self.count) != self.count or self.count < 8:
            raise GridError("count", f"must be an integer >= 8, got {self.count!r}")

    @cached_property
    def samples(self) -> np.ndarray:
        s = self.eps0 * self.q ** np.arange(self.count, dtype=float)
        s.setflags(write=False)
        return s

    def __len__(self):
        return self.count

    def tail(self, min_len: int = 4) -> tuple[int, int]:
        """Default asymptotic window: last half of the grid, at least ``min_len`` points."""
        n = max(self.count // 2, min_len)
        return self.count - n, self.count

    def with_count(self, count: int) -> "EpsGrid":
        return EpsGrid(self.eps0, self.q, count)


def make_geometric_grid(eps0: float, q: float, count: int) -> EpsGrid:
    return EpsGrid(float(eps0), float(q), int(count))


DEFAULT_GRID = EpsGrid(1.0, 0.7, 16)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class GenNumber:
    """A real net on an :class:`EpsGrid`.

    ``generator`` is an optional vectorised closed form ``eps_array -> values``.
    When present, classification also inspects points between the grid
    samples, which catches oscillations a geometric grid can step over.
    """

    __slots__ = ("grid", "values", "generator", "name")

    def __init__(self, grid: EpsGrid, values, generator: Optional[Callable] = None,
                 name: str = ""):
        values = _frozen(values)
        if values.shape != (grid.count,):
            raise NetError(f"expected {grid.count} values, got shape {values.shape}")
        bad = ~np.isfinite(values)
        if bad.any():
            j = int(np.argmax(bad))
            raise NetError(f"non-finite value at eps_{j} = {grid.samples[j]:.6g}")
        self.grid = grid
        self.values = values
        self.generator = generator
        self.name = name

    @classmethod
    def from_function(cls, grid: EpsGrid, func: Callable, name: str = "") -> "GenNumber":
        return cls(grid, func(grid.samples), generator=func, name=name)

    @classmethod
    def constant(cls, grid: EpsGrid, c: float, name: str = "") -> "GenNumber":
        c = float(c)
        return cls(grid, np.full(grid.count, c),
                   generator=lambda e: np.full(np.shape(e), c), name=name)

    def __repr__(self):
        label = self.name or "GenNumber"
        return f"<{label} on {self.grid}: {self.values[-1]:.4g} at eps_min>"

    def __len__(self):
        return self.grid.count

    # -- ring operations, pointwise in eps ---------------------------------

    def _lift(self, other):
        if isinstance(other, GenNumber):
            if other.grid != self.grid:
                raise NetError(f"grid mismatch: {self.grid} vs {other.grid}")
            return other
        if np.isscalar(other):
            return GenNumber.constant(self.grid, float(other))
        return NotImplemented

    def _combine(self, other, op):
        other = self._lift(other)
        if other is NotImplemented:
            return NotImplemented
        gen = None
        if self.generator is not None and other.generator is not None:
            g1, g2 = self.generator, other.generator
            gen = lambda e: op(g1(e), g2(e))  # noqa: E731
        return GenNumber(self.grid, op(self.values, other.values), gen)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not np.isscalar(other):
            return NotImplemented
        return self.scale(1.0 / float(other))

    def __neg__(self):
        return self.scale(-1.0)

    def __abs__(self):
        g = self.generator
        return GenNumber(self.grid, np.abs(self.values),
                         None if g is None else (lambda e: np.abs(g(e))))

    def scale(self, c: float) -> "GenNumber":
        c = float(c)
        g = self.generator
        return GenNumber(self.grid, c * self.values,
                         None if g is None else (lambda e: c * g(e)))

    def map(self, func: Callable) -> "GenNumber":
        g = self.generator
        return GenNumber(self.grid, func(self.values),
                         None if g is None else (lambda e: func(g(e))))


# ---------------------------------------------------------------------------
# order fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit ``log|x| ~ slope * log(eps) + intercept`` on a window."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]
    sign_changes: int
    flags: tuple[str, ...] = ()

    @property
    def flagged(self) -> bool:
        return bool(self.flags)


def count_sign_changes(values) -> int:
    s = np.sign(np.asarray(values, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _linfit(xs, ys):
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.dot(ys, ys))):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


def estimate_order(x: GenNumber, window: Optional[tuple[int, int]] = None) -> OrderFit:
    """Fit the power-law order of ``|x|`` on ``window`` (default: grid tail).

    Zero samples are dropped from the fit and flagged.  A slope ``s`` means
    ``|x_eps| ~ C * eps**s`` on the window.
    """
    lo, hi = window if window is not None else x.grid.tail()
    if not (0 <= lo < hi <= x.grid.count):
        raise NetError(f"window {(lo, hi)} outside grid of {x.grid.count} points")
    if hi - lo < 4:
        raise NetError(f"window {(lo, hi)} shorter than 4 points")
    vals = x.values[lo:hi]
    eps = x.grid.samples[lo:hi]
    nz = vals != 0.0
    if not nz.any():
        raise NetError("identically zero on window")
    flags = []
    if not nz.all():
        flags.append("zeros_dropped")
    sc = count_sign_changes(vals)
    if sc:
        flags.append("sign_changes")
    if nz.sum() < 2:
        raise NetError("fewer than two non-zero samples on window")
    lx = np.log(eps[nz])
    ly = np.log(np.abs(vals[nz]))
    slope, intercept, r2 = _linfit(lx, ly)
    if r2 < 0.999:
        flags.append("low_r2")
    # local slopes on the two halves expose non-power-law (e.g. logarithmic) nets
    if nz.sum() >= 4:
        mid = len(lx) // 2
        s1 = _linfit(lx[: mid + 1], ly[: mid + 1])[0]
        s2 = _linfit(lx[mid:], ly[mid:])[0]
        if abs(s1 - s2) > 0.1 * max(abs(s1), abs(s2)) and abs(s1 - s2) > 1e-3:
            flags.append("curved")
            if abs(slope) < 0.5 and abs(s2) < abs(s1):
                flags.append("sublinear")
    return OrderFit(slope, intercept, r2, (lo, hi), sc, tuple(flags))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

class Verdict(enum.Enum):
    STRICTLY_POSITIVE = "StrictlyPositive"
    STRICTLY_NEGATIVE = "StrictlyNegative"
    NEGLIGIBLE = "Negligible"
    MODERATE = "Moderate"
    INDETERMINATE = "Indeterminate"


class TriState(enum.Enum):
    YES = "Yes"
    NO = "No"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class ClassifyParams:
    """Thresholds for :func:`classify`.

    ``m_max`` bounds the exponent in ``x >= eps**m``; a fitted decay order of at
    least ``q_neg`` counts as negligible; ``n_max`` bounds moderate growth.
    ``refine`` extra points are inserted between tail samples when the net
    carries a generator (0 disables).  A strict-sign bound ``eps**m`` is only
    accepted when ``m`` is at least the log-log slope of the last tail segment
    minus ``trend_slack``.
    """

    m_max: int = 8
    q_neg: float = 10.0
    n_max: float = 8.0
    window: Optional[tuple[int, int]] = None
    refine: int = 8
    trend_slack: float = 0.1


DEFAULT_PARAMS = ClassifyParams()


@dataclass(frozen=True)
class AsymptoticVerdict:
    kind: Verdict
    m: Optional[int] = None
    order: Optional[float] = None
    reason: str = ""
    fit: Optional[OrderFit] = None
    heuristic: bool = False

    @property
    def is_strict(self) -> bool:
        return self.kind in (Verdict.STRICTLY_POSITIVE, Verdict.STRICTLY_NEGATIVE)

    @property
    def is_moderate(self) -> bool:
        # negligible nets are moderate too; strict sign implies moderate
        return self.kind is not Verdict.INDETERMINATE

    @property
    def label(self) -> str:
        if self.is_strict:
            return f"{self.kind.value}(m={self.m})"
        if self.kind is Verdict.MODERATE:
            return f"Moderate(s={self.order:.3g})"
        if self.kind is Verdict.INDETERMINATE:
            return f"Indeterminate({self.reason})"
        return self.kind.value

    def __str__(self):
        return self.label


def _tail_samples(x: GenNumber, lo: int, hi: int, refine: int):
    eps = x.grid.samples[lo:hi]
    vals = x.values[lo:hi]
    if refine <= 0 or x.generator is None:
        return eps, vals
    n_fine = (hi - lo - 1) * (refine + 1) + 1
    fine = np.exp(np.linspace(math.log(eps[0]), math.log(eps[-1]), n_fine))
    with np.errstate(all="ignore"):
        fvals = np.asarray(x.generator(fine), dtype=float)
    if fvals.shape != fine.shape or not np.all(np.isfinite(fvals)):
        return eps, vals
    # keep the exact grid values; generator only fills in between
    fvals = fvals.copy()
    fvals[:: refine + 1] = vals
    return fine, fvals


def classify(x: GenNumber, params: ClassifyParams = DEFAULT_PARAMS) -> AsymptoticVerdict:
    """Asymptotic verdict for ``x`` on the tail window.

    Precedence: all-zero tail, strict sign with ``x >= eps**m`` (m <= m_max),
    negligible decay order, sign changes, moderate growth, and finally
    indeterminate.  Negligible and moderate verdicts rely on the fitted order
    and are marked heuristic where sampling cannot settle them.
    """
    lo, hi = params.window if params.window is not None else x.grid.tail()
    vals = x.values[lo:hi]
    if np.all(vals == 0.0):
        return AsymptoticVerdict(Verdict.NEGLIGIBLE, reason="identically zero on tail")
    eps_t, vals_t = _tail_samples(x, lo, hi, params.refine)
    try:
        fit = estimate_order(x, (lo, hi))
    except NetError as exc:
        # tail is numerically zero apart from isolated samples
        return AsymptoticVerdict(Verdict.NEGLIGIBLE, reason=str(exc), heuristic=True)

    for sign, kind in ((1.0, Verdict.STRICTLY_POSITIVE), (-1.0, Verdict.STRICTLY_NEGATIVE)):
        sv = sign * vals_t
        if np.all(sv > 0.0):
            logs = np.log(sv)
            leps = np.log(eps_t)
            # a bound eps**m with m below the local decay rate at the end of
            # the tail would be crossed further down (exp(-1/eps) on short grids)
            e2 = x.grid.samples[hi - 2:hi]
            trend = math.log(vals[-1] / vals[-2]) / math.log(e2[1] / e2[0])
            for m in range(params.m_max + 1):
                if m < trend - params.trend_slack:
                    continue
                # x >= eps**m  <=>  log x >= m log eps
                if np.all(logs >= m * leps - 1e-12 * np.abs(m * leps)):
                    return AsymptoticVerdict(kind, m=m, order=fit.slope, fit=fit)

    sc = count_sign_changes(vals_t)
    if fit.slope >= params.q_neg:
        return AsymptoticVerdict(Verdict.NEGLIGIBLE, order=fit.slope, fit=fit,
                                 reason=f"decay order {fit.slope:.3g} >= {params.q_neg:g}",
                                 heuristic=True)
    if sc:
        return AsymptoticVerdict(Verdict.INDETERMINATE, order=fit.slope, fit=fit,
                                 reason="sign changes on tail")
    if fit.slope >= -params.n_max:
        return AsymptoticVerdict(Verdict.MODERATE, order=fit.slope, fit=fit,
                                 heuristic=True)
    return AsymptoticVerdict(Verdict.INDETERMINATE, order=fit.slope, fit=fit,
                             reason=f"growth order {fit.slope:.3g} below -{params.n_max:g}")


def is_moderate(x: GenNumber, params: ClassifyParams = DEFAULT_PARAMS) -> bool:
    """Magnitude bounded by ``eps**-n_max`` on the tail (sign ignored)."""
    lo, hi = params.window if params.window is not None else x.grid.tail()
    if np.all(x.values[lo:hi] == 0.0):
        return True
    return estimate_order(x, (lo, hi)).slope >= -params.n_max


def is_invertible(x: GenNumber, params: ClassifyParams = DEFAULT_PARAMS) -> TriState:
    """Yes when ``|x| >= eps**m`` on the tail without sign changes.

    A representative that changes sign between samples passes through zero,
    so no lower bound can hold there; such nets are never certified.
    """
    lo, hi = params.window if params.window is not None else x.grid.tail()
    _, vals_t = _tail_samples(x, lo, hi, params.refine)
    if classify(abs(x), params).kind is Verdict.STRICTLY_POSITIVE and count_sign_changes(vals_t) == 0:
        return TriState.YES
    if classify(x, params).kind is Verdict.NEGLIGIBLE:
        return TriState.NO
    return TriState.INDETERMINATE


# ---------------------------------------------------------------------------
# CSV rows
# ---------------------------------------------------------------------------

CSV_FIELDS = ("name", "slope", "r2", "verdict", "m_or_s", "window_lo",
              "window_hi", "sign_changes")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    return str(v)


def verdict_row(name: str, verdict: AsymptoticVerdict) -> dict:
    fit = verdict.fit
    if verdict.is_strict:
        m_or_s = verdict.m
    elif verdict.kind is Verdict.MODERATE:
        m_or_s = verdict.order
    else:
        m_or_s = None
    return {
        "name": name,
        "slope": _fmt(fit.slope if fit else None),
        "r2": _fmt(fit.r_squared if fit else None),
        "verdict": verdict.kind.value,
        "m_or_s": _fmt(m_or_s),
        "window_lo": _fmt(fit.window[0] if fit else None),
        "window_hi": _fmt(fit.window[1] if fit else None),
        "sign_changes": _fmt(fit.sign_changes if fit else None),
    }
