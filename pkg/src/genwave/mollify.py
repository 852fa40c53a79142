"""Convolution with a scaled smooth bump, with derivatives taken on the kernel."""
from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import Callable, Iterable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate


def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _kernel_poly(k: int) -> Polynomial:
    """P_k with psi^(k)(s) = psi(s) P_k(s) / (1 - s^2)^(2k)."""
    p = Polynomial([1.0])
    one_m = Polynomial([1.0, 0.0, -1.0])
    s = Polynomial([0.0, 1.0])
    for j in range(k):
        p = -2.0 * s * p + one_m ** 2 * p.deriv() + 4.0 * j * s * one_m * p
    return p


@lru_cache(maxsize=None)
def _mass() -> float:
    val, _ = integrate.quad(lambda s: float(_psi(s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return val


def bump(s, deriv: int = 0):
    """Unit-mass bump on [-1, 1] and its derivatives."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    one_m = 1.0 - si ** 2
    out[inside] = np.exp(-1.0 / one_m) * _kernel_poly(deriv)(si) / one_m ** (2 * deriv)
    return out / _mass()


class Mollified:
    """``(func * rho_w)`` for a 1-D function, ``rho_w(y) = bump(y / w) / w``.

    ``breakpoints`` lists points where ``func`` is not smooth; quadrature is
    split there so cusps do not spoil the accuracy.  Derivatives are
    ``w**-k * int func(t - w s) bump^(k)(s) ds``.
    """

    def __init__(self, func: Callable[[float], float], width: float,
                 breakpoints: Optional[Callable[[float, float], Iterable[float]]] = None,
                 domain: Optional[tuple[float, float]] = None):
        if width <= 0.0:
            raise ValueError(f"mollifier width must be positive, got {width}")
        self.func = func
        self.width = float(width)
        self.breakpoints = breakpoints
        self.domain = domain

    def _check_margin(self, t: np.ndarray):
        if self.domain is None:
            return
        lo, hi = self.domain
        if t.size and (t.min() - self.width < lo - 1e-12 or t.max() + self.width > hi + 1e-12):
            raise ValueError(
                f"mollifier support [{t.min() - self.width:.6g}, {t.max() + self.width:.6g}] "
                f"leaves the domain [{lo:.6g}, {hi:.6g}]; margin too small")

    def _one(self, t: float, deriv: int) -> float:
        w = self.width
        pts = []
        if self.breakpoints is not None:
            for b in self.breakpoints(t - w, t + w):
                s = (t - b) / w
                if -1.0 < s < 1.0:
                    pts.append(s)
        poly = _kernel_poly(deriv)
        mass = _mass()
        func = self.func

        def integrand(s):
            one_m = 1.0 - s * s
            if one_m <= 0.0:
                return 0.0
            return func(t - w * s) * math.exp(-1.0 / one_m) * poly(s) / one_m ** (2 * deriv)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(integrand, -1.0, 1.0, points=sorted(pts) or None,
                                    epsabs=1e-14, epsrel=1e-12, limit=200)
        return val / mass / w ** deriv

    def __call__(self, t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        self._check_margin(t)
        flat = np.array([self._one(float(ti), deriv) for ti in t.ravel()])
        return flat.reshape(t.shape)


def kinks_of_abs_sin(omega: float):
    """Breakpoint generator for profiles built from ``|sin(omega t)|``."""

    def points(lo: float, hi: float):
        k0 = math.ceil(lo * omega / math.pi)
        k1 = math.floor(hi * omega / math.pi)
        return [k * math.pi / omega for k in range(k0, k1 + 1)]

    return points


def kinks_at(*locations: float):
    locs = tuple(float(x) for x in locations)

    def points(lo: float, hi: float):
        return [x for x in locs if lo <= x <= hi]

    return points
