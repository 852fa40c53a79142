"""Symmetric bilinear forms over generalized numbers.

Matrices and vectors are nets of ordinary arrays on a shared
:class:`~genwave.gennum.EpsGrid`.  Spectral data are computed pointwise in eps
and paired across eps by sort order only; certification of signs goes through
:func:`genwave.gennum.classify`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .gennum import (
    DEFAULT_PARAMS, ClassifyParams, EpsGrid, GenNumber, NetError, TriState,
    Verdict, AsymptoticVerdict, classify, is_moderate, verdict_row,
)

__all__ = [
    "GenVector", "GenSymMatrix", "EigenError", "NotLorentzianError",
    "IndexVerdict", "FormClass", "FormVerdict", "CausalClass", "ICSReport",
    "bilinear", "ordered_eigenvalues", "index_of", "classify_form",
    "causal_type", "is_free", "inverse_cauchy_schwarz", "index_row",
]


class EigenError(RuntimeError):
    """The pointwise eigensolver failed; for symmetric input this is a defect."""


class NotLorentzianError(ValueError):
    pass


def _net_entry(grid: EpsGrid, entry):
    """Scalar, callable of eps, or GenNumber -> (values, generator)."""
    if isinstance(entry, GenNumber):
        if entry.grid != grid:
            raise NetError("grid mismatch")
        return entry.values, entry.generator
    if callable(entry):
        return np.asarray(entry(grid.samples), dtype=float), entry
    c = float(entry)
    return np.full(grid.count, c), (lambda e, c=c: np.full(np.shape(e), c))


class GenVector:
    """Net of vectors in R^n; ``components`` has shape (J, n)."""

    def __init__(self, grid: EpsGrid, components, generator: Optional[Callable] = None):
        comp = np.array(components, dtype=float)
        if comp.ndim != 2 or comp.shape[0] != grid.count or comp.shape[1] < 1:
            raise NetError(f"components must have shape ({grid.count}, n), got {comp.shape}")
        if not np.all(np.isfinite(comp)):
            raise NetError("non-finite vector component")
        comp.setflags(write=False)
        self.grid = grid
        self.components = comp
        self.generator = generator

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    @classmethod
    def from_entries(cls, grid: EpsGrid, entries: Sequence) -> "GenVector":
        """Each entry is a constant, a vectorised callable of eps, or a GenNumber."""
        pairs = [_net_entry(grid, e) for e in entries]
        vals = np.stack([p[0] for p in pairs], axis=1)
        gens = [p[1] for p in pairs]
        gen = None
        if all(g is not None for g in gens):
            gen = lambda e: np.stack([np.broadcast_to(g(e), np.shape(e)) for g in gens], axis=-1)  # noqa: E731
        return cls(grid, vals, gen)

    def component(self, i: int) -> GenNumber:
        g = self.generator
        return GenNumber(self.grid, self.components[:, i],
                         None if g is None else (lambda e: g(e)[..., i]))

    def norm_squared(self) -> GenNumber:
        g = self.generator
        return GenNumber(self.grid, np.sum(self.components ** 2, axis=1),
                         None if g is None else (lambda e: np.sum(g(e) ** 2, axis=-1)))


class GenSymMatrix:
    """Net of symmetric n x n matrices; ``entries`` has shape (J, n, n).

    Input is checked for symmetry to 1e-12 relative and then symmetrised.
    """

    def __init__(self, grid: EpsGrid, entries, generator: Optional[Callable] = None):
        a = np.array(entries, dtype=float)
        if a.ndim != 3 or a.shape[0] != grid.count or a.shape[1] != a.shape[2]:
            raise NetError(f"entries must have shape ({grid.count}, n, n), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NetError("non-finite matrix entry")
        asym = np.abs(a - np.swapaxes(a, 1, 2)).max(axis=(1, 2))
        scale = np.abs(a).max(axis=(1, 2))
        bad = asym > 1e-12 * np.maximum(scale, 1e-300)
        if bad.any():
            j = int(np.argmax(bad))
            raise NetError(f"matrix not symmetric at eps_{j} = {grid.samples[j]:.6g}")
        a = 0.5 * (a + np.swapaxes(a, 1, 2))
        a.setflags(write=False)
        self.grid = grid
        self.entries = a
        self.generator = generator

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def constant(cls, grid: EpsGrid, matrix) -> "GenSymMatrix":
        m = np.asarray(matrix, dtype=float)
        return cls(grid, np.broadcast_to(m, (grid.count,) + m.shape),
                   lambda e: np.broadcast_to(m, np.shape(e) + m.shape).copy())

    @classmethod
    def diag(cls, grid: EpsGrid, entries: Sequence) -> "GenSymMatrix":
        pairs = [_net_entry(grid, e) for e in entries]
        n = len(pairs)
        vals = np.zeros((grid.count, n, n))
        for i, (v, _) in enumerate(pairs):
            vals[:, i, i] = v
        gens = [p[1] for p in pairs]

        def gen(e):
            e = np.asarray(e, dtype=float)
            out = np.zeros(e.shape + (n, n))
            for i, g in enumerate(gens):
                out[..., i, i] = g(e)
            return out

        return cls(grid, vals, gen)

    @classmethod
    def from_function(cls, grid: EpsGrid, func: Callable) -> "GenSymMatrix":
        """``func`` maps an array of eps to an array of matrices (..., n, n)."""
        return cls(grid, func(grid.samples), func)

    def scale(self, c: GenNumber | float) -> "GenSymMatrix":
        if isinstance(c, GenNumber):
            if c.grid != self.grid:
                raise NetError("grid mismatch")
            vals = c.values[:, None, None] * self.entries
            gen = None
            if c.generator is not None and self.generator is not None:
                cg, mg = c.generator, self.generator
                gen = lambda e: np.asarray(cg(e))[..., None, None] * mg(e)  # noqa: E731
            return GenSymMatrix(self.grid, vals, gen)
        c = float(c)
        g = self.generator
        return GenSymMatrix(self.grid, c * self.entries,
                            None if g is None else (lambda e: c * g(e)))

    def congruent(self, q) -> "GenSymMatrix":
        """``Q^T A Q`` for a fixed matrix ``Q``."""
        q = np.asarray(q, dtype=float)
        g = self.generator
        return GenSymMatrix(self.grid, q.T @ self.entries @ q,
                            None if g is None else (lambda e: q.T @ g(e) @ q))

    def trace(self) -> np.ndarray:
        return np.trace(self.entries, axis1=1, axis2=2)

    def det(self) -> np.ndarray:
        return np.linalg.det(self.entries)


def bilinear(b: GenSymMatrix, u: GenVector, v: GenVector) -> GenNumber:
    """The net ``eps -> u_eps^T b_eps v_eps``."""
    if not (b.grid == u.grid == v.grid):
        raise NetError("grid mismatch")
    if not (b.dim == u.dim == v.dim):
        raise NetError(f"dimension mismatch: form {b.dim}, vectors {u.dim}, {v.dim}")
    vals = np.einsum("ji,jik,jk->j", u.components, b.entries, v.components)
    gen = None
    if b.generator is not None and u.generator is not None and v.generator is not None:
        bg, ug, vg = b.generator, u.generator, v.generator
        gen = lambda e: np.einsum("...i,...ik,...k->...", ug(e), bg(e), vg(e))  # noqa: E731
    return GenNumber(b.grid, vals, gen)


# ---------------------------------------------------------------------------
# spectrum and index
# ---------------------------------------------------------------------------

def ordered_eigenvalues(a: GenSymMatrix) -> list[GenNumber]:
    """Ascending eigenvalue nets ``lambda_1 <= ... <= lambda_n``."""
    eigs, ok = _kernels.eigvalsh_batch(a.entries)
    if not np.all(ok):
        j = int(np.argmin(ok))
        raise EigenError(f"eigensolver did not converge at eps_{j} = {a.grid.samples[j]:.6g}")
    out = []
    for i in range(a.dim):
        gen = None
        if a.generator is not None:
            ag = a.generator
            gen = lambda e, i=i: np.linalg.eigvalsh(ag(np.asarray(e, dtype=float)))[..., i]  # noqa: E731
        out.append(GenNumber(a.grid, eigs[:, i], gen, name=f"lambda_{i + 1}"))
    return out


@dataclass(frozen=True)
class IndexVerdict:
    index: Optional[int]
    reason: str = ""
    eigen_verdicts: tuple[AsymptoticVerdict, ...] = field(default=(), repr=False)

    @property
    def certified(self) -> bool:
        return self.index is not None

    def __str__(self):
        return f"Index({self.index})" if self.certified else f"Indeterminate({self.reason})"


def index_of(a: GenSymMatrix, params: ClassifyParams = DEFAULT_PARAMS) -> IndexVerdict:
    """Number of strictly negative ordered eigenvalues, provided the rest are
    strictly positive; otherwise indeterminate naming the first eigenvalue
    that breaks the split."""
    verdicts = tuple(classify(lam, params) for lam in ordered_eigenvalues(a))
    j = 0
    while j < len(verdicts) and verdicts[j].kind is Verdict.STRICTLY_NEGATIVE:
        j += 1
    for i in range(j, len(verdicts)):
        if verdicts[i].kind is not Verdict.STRICTLY_POSITIVE:
            return IndexVerdict(None, f"lambda_{i + 1}: {verdicts[i].label}", verdicts)
    return IndexVerdict(j, "", verdicts)


class FormClass(enum.Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    LORENTZIAN = "Lorentzian"
    OTHER_INDEX = "OtherIndex"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class FormVerdict:
    kind: FormClass
    index: Optional[int] = None
    reason: str = ""

    def __str__(self):
        if self.kind is FormClass.OTHER_INDEX:
            return f"OtherIndex({self.index})"
        return self.kind.value


def classify_form(a: GenSymMatrix, params: ClassifyParams = DEFAULT_PARAMS) -> FormVerdict:
    iv = index_of(a, params)
    if iv.index is None:
        return FormVerdict(FormClass.INDETERMINATE, None, iv.reason)
    if iv.index == 0:
        return FormVerdict(FormClass.POSITIVE_DEFINITE, 0)
    if iv.index == 1:
        return FormVerdict(FormClass.LORENTZIAN, 1)
    return FormVerdict(FormClass.OTHER_INDEX, iv.index)


# ---------------------------------------------------------------------------
# causality
# ---------------------------------------------------------------------------

class CausalClass(enum.Enum):
    TIMELIKE = "Timelike"
    NULL = "Null"
    SPACELIKE = "Spacelike"
    NONE = "None"
    INDETERMINATE = "Indeterminate"


def _require_lorentzian(b: GenSymMatrix, params: ClassifyParams):
    fv = classify_form(b, params)
    if fv.kind is not FormClass.LORENTZIAN:
        raise NotLorentzianError(f"form not Lorentzian ({fv})")


_ROUNDOFF = 64 * np.finfo(float).eps


def _square_with_floor(b: GenSymMatrix, v: GenVector) -> GenNumber:
    """``b(v, v)`` with values inside the round-off of ``|v|^T |b| |v|`` set to 0."""

    def clean(vals, bm, vv):
        scale = np.einsum("...i,...ik,...k->...", np.abs(vv), np.abs(bm), np.abs(vv))
        return np.where(np.abs(vals) <= _ROUNDOFF * scale, 0.0, vals)

    raw = bilinear(b, v, v)
    gen = None
    if raw.generator is not None:
        rg, bg, vg = raw.generator, b.generator, v.generator
        gen = lambda e: clean(rg(e), bg(e), vg(e))  # noqa: E731
    return GenNumber(b.grid, clean(raw.values, b.entries, v.components), gen)


def causal_type(b: GenSymMatrix, v: GenVector,
                params: ClassifyParams = DEFAULT_PARAMS) -> CausalClass:
    """Sign class of ``b(v, v)``.

    ``NONE`` is a certified outcome: the square is moderate but has no sign
    class, which happens because the order on generalized numbers is partial.
    ``NULL`` rests on the negligibility heuristic.
    """
    _require_lorentzian(b, params)
    s = _square_with_floor(b, v)
    verdict = classify(s, params)
    if verdict.kind is Verdict.STRICTLY_NEGATIVE:
        return CausalClass.TIMELIKE
    if verdict.kind is Verdict.STRICTLY_POSITIVE:
        return CausalClass.SPACELIKE
    if verdict.kind is Verdict.NEGLIGIBLE:
        return CausalClass.NULL
    if verdict.kind is Verdict.INDETERMINATE and is_moderate(s, params):
        return CausalClass.NONE
    return CausalClass.INDETERMINATE


def is_free(v: GenVector, params: ClassifyParams = DEFAULT_PARAMS) -> TriState:
    """Freeness via the Euclidean squared norm being strictly positive."""
    verdict = classify(v.norm_squared(), params)
    if verdict.kind is Verdict.STRICTLY_POSITIVE:
        return TriState.YES
    if verdict.kind is Verdict.NEGLIGIBLE:
        return TriState.NO
    return TriState.INDETERMINATE


@dataclass(frozen=True)
class ICSReport:
    """``d = b(u,v)^2 - b(u,u) b(v,v)`` and whether it stays non-negative."""

    defect: GenNumber
    passed: bool
    worst_relative: float
    verdict: AsymptoticVerdict


def inverse_cauchy_schwarz(b: GenSymMatrix, u: GenVector, v: GenVector,
                           tol: float = 1e-10,
                           params: ClassifyParams = DEFAULT_PARAMS) -> ICSReport:
    _require_lorentzian(b, params)
    for name, w in (("u", u), ("v", v)):
        ct = causal_type(b, w, params)
        if ct is not CausalClass.TIMELIKE:
            raise ValueError(f"{name} is not timelike under b (got {ct.value})")
    buv = bilinear(b, u, v)
    prod = bilinear(b, u, u) * bilinear(b, v, v)
    d = buv * buv - prod
    scale = np.maximum(np.abs(prod.values), np.finfo(float).tiny)
    rel = d.values / scale
    verdict = classify(d, params)
    passed = bool(np.all(rel >= -tol)) and verdict.kind is not Verdict.STRICTLY_NEGATIVE
    return ICSReport(d, passed, float(rel.min()), verdict)


def index_row(name: str, verdict: AsymptoticVerdict, variant: str) -> dict:
    """CSV row in the scalar-verdict schema plus the variant column."""
    row = verdict_row(name, verdict)
    row["variant"] = variant
    return row
