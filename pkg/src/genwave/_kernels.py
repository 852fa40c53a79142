"""Hot inner loops of the solver and the pointwise eigen-solves.

Every kernel has a numba implementation and a pure-numpy one with the same
signature.  The numba path is used when numba imports and the environment
variable ``GENWAVE_DISABLE_NUMBA`` is unset (or set to 0/false/no).  Both
paths stay importable under explicit names so tests and the benchmark can
compare them directly.
"""
import logging
import os

import numpy as np

_flag = os.environ.get("GENWAVE_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _flag not in ("", "0", "false", "no")

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not DISABLE_NUMBA


def _njit(func):
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# spatial operator  L u = A^{ij} D_i D_j u + b^i D_i u  on a flattened lattice
# ---------------------------------------------------------------------------

def apply_operator_numpy(u, a_diag, a_off, pairs, b, inv_dx, nbr_p, nbr_m,
                         nbr_d, interior, out):
    """Second-order centred stencil of the spatial part of the wave operator.

    ``u`` is the flattened field, ``a_diag``/``b`` have shape (d, P), ``a_off``
    holds the i<j entries listed in ``pairs``.  ``nbr_d[k]`` stores the four
    diagonal neighbours (++, +-, -+, --) of pair k.  Points outside
    ``interior`` get 0.
    """
    out[:] = 0.0
    d = a_diag.shape[0]
    acc = np.zeros_like(u)
    for i in range(d):
        up = u[nbr_p[i]]
        um = u[nbr_m[i]]
        acc += a_diag[i] * (up - 2.0 * u + um) * inv_dx[i] ** 2
        acc += b[i] * (up - um) * (0.5 * inv_dx[i])
    for k in range(pairs.shape[0]):
        i, j = pairs[k, 0], pairs[k, 1]
        cross = (u[nbr_d[k, 0]] - u[nbr_d[k, 1]] - u[nbr_d[k, 2]]
                 + u[nbr_d[k, 3]])
        acc += 2.0 * a_off[k] * cross * (0.25 * inv_dx[i] * inv_dx[j])
    out[interior] = acc[interior]
    return out


@_njit
def apply_operator_numba(u, a_diag, a_off, pairs, b, inv_dx, nbr_p, nbr_m,
                         nbr_d, interior, out):
    d = a_diag.shape[0]
    npairs = pairs.shape[0]
    for p in range(u.shape[0]):
        if not interior[p]:
            out[p] = 0.0
            continue
        up0 = u[p]
        acc = 0.0
        for i in range(d):
            up = u[nbr_p[i, p]]
            um = u[nbr_m[i, p]]
            acc += a_diag[i, p] * (up - 2.0 * up0 + um) * inv_dx[i] * inv_dx[i]
            acc += b[i, p] * (up - um) * (0.5 * inv_dx[i])
        for k in range(npairs):
            i = pairs[k, 0]
            j = pairs[k, 1]
            cross = (u[nbr_d[k, 0, p]] - u[nbr_d[k, 1, p]]
                     - u[nbr_d[k, 2, p]] + u[nbr_d[k, 3, p]])
            acc += 2.0 * a_off[k, p] * cross * (0.25 * inv_dx[i] * inv_dx[j])
        out[p] = acc
    return out


def leapfrog_step_numpy(u, uold, unew, a_diag, a_off, pairs, b, gtt, bt, f,
                        inv_dx, nbr_p, nbr_m, nbr_d, interior, dt):
    """One explicit step of  g^tt u_tt + b^t u_t + L u = f  on interior points.

    Time derivatives are centred, so the update is pointwise in u^{n+1}.
    Non-interior entries of ``unew`` are left untouched for the caller's
    boundary treatment.
    """
    lu = np.empty_like(u)
    apply_operator_numpy(u, a_diag, a_off, pairs, b, inv_dx, nbr_p, nbr_m,
                         nbr_d, interior, lu)
    inv_dt2 = 1.0 / (dt * dt)
    half_inv_dt = 0.5 / dt
    denom = gtt * inv_dt2 + bt * half_inv_dt
    rhs = f - lu + gtt * (2.0 * u - uold) * inv_dt2 + bt * uold * half_inv_dt
    unew[interior] = (rhs / denom)[interior]
    return unew


@_njit
def leapfrog_step_numba(u, uold, unew, a_diag, a_off, pairs, b, gtt, bt, f,
                        inv_dx, nbr_p, nbr_m, nbr_d, interior, dt):
    d = a_diag.shape[0]
    npairs = pairs.shape[0]
    inv_dt2 = 1.0 / (dt * dt)
    half_inv_dt = 0.5 / dt
    for p in range(u.shape[0]):
        if not interior[p]:
            continue
        up0 = u[p]
        lu = 0.0
        for i in range(d):
            up = u[nbr_p[i, p]]
            um = u[nbr_m[i, p]]
            lu += a_diag[i, p] * (up - 2.0 * up0 + um) * inv_dx[i] * inv_dx[i]
            lu += b[i, p] * (up - um) * (0.5 * inv_dx[i])
        for k in range(npairs):
            i = pairs[k, 0]
            j = pairs[k, 1]
            cross = (u[nbr_d[k, 0, p]] - u[nbr_d[k, 1, p]]
                     - u[nbr_d[k, 2, p]] + u[nbr_d[k, 3, p]])
            lu += 2.0 * a_off[k, p] * cross * (0.25 * inv_dx[i] * inv_dx[j])
        denom = gtt[p] * inv_dt2 + bt[p] * half_inv_dt
        rhs = (f[p] - lu + gtt[p] * (2.0 * up0 - uold[p]) * inv_dt2
               + bt[p] * uold[p] * half_inv_dt)
        unew[p] = rhs / denom
    return unew


# ---------------------------------------------------------------------------
# batched symmetric eigenvalues
# ---------------------------------------------------------------------------

def eigvalsh_batch_numpy(mats):
    """Ascending eigenvalues of a stack of symmetric matrices (LAPACK).

    Returns ``(eigs, converged)``; a LAPACK failure marks the offending
    matrices as not converged instead of raising.
    """
    mats = np.asarray(mats, dtype=float)
    try:
        return np.linalg.eigvalsh(mats), np.ones(mats.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        n = mats.shape[-1]
        eigs = np.full((mats.shape[0], n), np.nan)
        ok = np.zeros(mats.shape[0], dtype=bool)
        for k, m in enumerate(mats):
            try:
                eigs[k] = np.linalg.eigvalsh(m)
                ok[k] = True
            except np.linalg.LinAlgError:
                pass
        return eigs, ok


@_njit
def _jacobi_batch(mats, tol, max_sweeps):
    nb = mats.shape[0]
    n = mats.shape[1]
    eigs = np.empty((nb, n))
    ok = np.zeros(nb, dtype=np.bool_)
    a = np.empty((n, n))
    for k in range(nb):
        scale = 0.0
        for i in range(n):
            for j in range(n):
                a[i, j] = mats[k, i, j]
                scale += a[i, j] * a[i, j]
        converged = scale == 0.0
        for _sweep in range(max_sweeps):
            if converged:
                break
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += a[i, j] * a[i, j]
            if off <= tol * tol * scale:
                converged = True
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    for r in range(n):
                        arp = a[r, p]
                        arq = a[r, q]
                        a[r, p] = c * arp - s * arq
                        a[r, q] = s * arp + c * arq
                    for r in range(n):
                        apr = a[p, r]
                        aqr = a[q, r]
                        a[p, r] = c * apr - s * aqr
                        a[q, r] = s * apr + c * aqr
        diag = np.empty(n)
        for i in range(n):
            diag[i] = a[i, i]
        eigs[k] = np.sort(diag)
        ok[k] = converged
    return eigs, ok


def eigvalsh_batch_numba(mats, tol=1e-15, max_sweeps=64):
    """Cyclic Jacobi sweeps on each matrix of the stack; small n only."""
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    return _jacobi_batch(mats, tol, max_sweeps)


if USE_NUMBA:
    apply_operator = apply_operator_numba
    leapfrog_step = leapfrog_step_numba
    eigvalsh_batch = eigvalsh_batch_numba
    BACKEND = "numba"
else:
    apply_operator = apply_operator_numpy
    leapfrog_step = leapfrog_step_numpy
    eigvalsh_batch = eigvalsh_batch_numpy
    BACKEND = "numpy"
