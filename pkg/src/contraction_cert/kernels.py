"""Hot loops, each with a numba version and a pure-numpy version.

The public functions dispatch on the backend chosen in _backend. Both paths
compute the same quantities; the numpy path is what runs when numba is absent
or CONTRACTION_CERT_BACKEND=numpy.
"""
import math

import numpy as np
from scipy.special import erfc

from ._backend import HAVE_NUMBA, jit
from .numerics import gauss_legendre

# ---------------------------------------------------------------------------
# coupled Gaussian step (maximal coupling, reflection otherwise)


def _coupled_step_py(xh, yh, Z, U, sd, xn, yn, coal):
    n, d = xh.shape
    for i in range(n):
        r2 = 0.0
        dz = 0.0
        for k in range(d):
            diff = xh[i, k] - yh[i, k]
            r2 += diff * diff
            dz += diff * Z[i, k]
        for k in range(d):
            xn[i, k] = xh[i, k] + sd * Z[i, k]
        # log of phi_yhat(X') / phi_xhat(X')
        logratio = -(r2 + 2.0 * sd * dz) / (2.0 * sd * sd)
        if r2 == 0.0 or math.log(U[i]) <= logratio:
            for k in range(d):
                yn[i, k] = xn[i, k]
            coal[i] = True
        else:
            rr = math.sqrt(r2)
            ez = dz / rr
            for k in range(d):
                e = (xh[i, k] - yh[i, k]) / rr
                yn[i, k] = yh[i, k] + sd * (Z[i, k] - 2.0 * e * ez)
            coal[i] = False


_coupled_step_nb = jit(_coupled_step_py)


def _coupled_step_np(xh, yh, Z, U, sd):
    diff = xh - yh
    r2 = np.einsum("ij,ij->i", diff, diff)
    dz = np.einsum("ij,ij->i", diff, Z)
    xn = xh + sd * Z
    with np.errstate(divide="ignore", invalid="ignore"):
        logratio = -(r2 + 2.0 * sd * dz) / (2.0 * sd * sd)
        coal = (r2 == 0.0) | (np.log(U) <= logratio)
        rr = np.sqrt(r2)
        e = np.where(rr[:, None] > 0, diff / np.where(rr > 0, rr, 1.0)[:, None], 0.0)
    ez = np.einsum("ij,ij->i", e, Z)
    refl = yh + sd * (Z - 2.0 * e * ez[:, None])
    yn = np.where(coal[:, None], xn, refl)
    return xn, yn, coal


def coupled_gauss_step(xh, yh, Z, U, sd):
    """One coupled step from drift-advanced points xh, yh (arrays of shape (n, d)).

    X' = xh + sd Z; Y' = X' when U <= phi_yh(X')/phi_xh(X'), else the
    reflection of the noise across the hyperplane between xh and yh.
    """
    xh = np.ascontiguousarray(xh, dtype=float)
    yh = np.ascontiguousarray(yh, dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    if _coupled_step_nb is None:
        return _coupled_step_np(xh, yh, Z, U, float(sd))
    xn = np.empty_like(xh)
    yn = np.empty_like(yh)
    coal = np.empty(xh.shape[0], dtype=np.bool_)
    _coupled_step_nb(xh, yh, Z, U, float(sd), xn, yn, coal)
    return xn, yn, coal


# ---------------------------------------------------------------------------
# clipped second moment of the one-step distance change
#
# With R' the coupled distance after one step from drift-advanced distance
# rhat (noise standard deviation sd) and r the current distance, return
# E[clip(R' - r)^2]. In standardized noise w, R' = rhat - 2 sd w on w < rhat/(2 sd)
# with density phi(w) - phi(w - rhat/sd), plus an atom at R' = 0.
# mode 1: clip = -min((dR)^-, w_par);  mode 3: u = r0 below r0, l = w_par above.

_TAIL = 8.5
_GL_N = 32
_GL_X, _GL_W = gauss_legendre(_GL_N)


def _clip(dR, r, mode, r0, wpar):
    if mode == 1:
        neg = -dR if dR < 0.0 else 0.0
        return -min(neg, wpar)
    if r < r0:
        v = dR if dR < r0 else r0
        return v if v > 0.0 else 0.0
    v = dR if dR < 0.0 else 0.0
    return v if v > -wpar else -wpar


def _clipped_moment_py(r, rhat, sd, mode, r0, wpar, gx, gw, out):
    n = r.shape[0]
    bps = np.empty(8)
    for i in range(n):
        ri = r[i]
        kap = rhat[i] / sd
        hi = min(0.5 * kap, _TAIL)
        lo = -_TAIL
        pc = math.erfc(0.5 * kap / math.sqrt(2.0))
        c0 = _clip(-ri, ri, mode, r0, wpar)
        acc = pc * c0 * c0
        if hi > lo:
            nb = 0
            bps[nb] = lo
            nb += 1
            bps[nb] = hi
            nb += 1
            for c in (-4.0, 0.0, 4.0):
                if lo < c < hi:
                    bps[nb] = c
                    nb += 1
            if mode == 1:
                t1, t2 = 0.0, -wpar
            elif ri < r0:
                t1, t2 = r0, 0.0
            else:
                t1, t2 = 0.0, -wpar
            for thr in (t1, t2):
                wc = (rhat[i] - ri - thr) / (2.0 * sd)
                if lo < wc < hi:
                    bps[nb] = wc
                    nb += 1
            b = np.sort(bps[:nb])
            for k in range(nb - 1):
                a0 = b[k]
                a1 = b[k + 1]
                if a1 <= a0:
                    continue
                half = 0.5 * (a1 - a0)
                mid = 0.5 * (a1 + a0)
                for q in range(gx.shape[0]):
                    w = mid + half * gx[q]
                    dens = math.exp(-0.5 * w * w) / math.sqrt(2.0 * math.pi) * (-math.expm1(kap * w - 0.5 * kap * kap))
                    cl = _clip(rhat[i] - 2.0 * sd * w - ri, ri, mode, r0, wpar)
                    acc += half * gw[q] * dens * cl * cl
        out[i] = acc


if HAVE_NUMBA:
    _clip = jit(_clip)
    _clipped_moment_nb = jit(_clipped_moment_py)
else:
    _clipped_moment_nb = None


def _clipped_moment_np(r, rhat, sd, mode, r0, wpar, chunk=4096):
    out = np.empty(r.shape[0])
    for s in range(0, r.shape[0], chunk):
        out[s:s + chunk] = _clipped_moment_chunk(r[s:s + chunk], rhat[s:s + chunk], sd, mode, r0, wpar)
    return out


def _clip_np(dR, r, mode, r0, wpar):
    if mode == 1:
        return -np.minimum(np.maximum(-dR, 0.0), wpar)
    below = np.clip(dR, 0.0, r0)
    above = np.clip(dR, -wpar, 0.0)
    return np.where(r < r0, below, above)


def _clipped_moment_chunk(r, rhat, sd, mode, r0, wpar):
    kap = rhat / sd
    hi = np.minimum(0.5 * kap, _TAIL)
    lo = np.full_like(hi, -_TAIL)
    pc = erfc(0.5 * kap / math.sqrt(2.0))
    c0 = _clip_np(-r, r, mode, r0, wpar)
    acc = pc * c0 * c0
    if mode == 1:
        t1 = np.zeros_like(r)
        t2 = np.full_like(r, -wpar)
    else:
        t1 = np.where(r < r0, r0, 0.0)
        t2 = np.where(r < r0, 0.0, -wpar)
    cand = np.column_stack([lo, hi, np.full_like(r, -4.0), np.zeros_like(r), np.full_like(r, 4.0),
                            (rhat - r - t1) / (2 * sd), (rhat - r - t2) / (2 * sd)])
    cand = np.clip(cand, lo[:, None], hi[:, None])
    b = np.sort(cand, axis=1)
    a0, a1 = b[:, :-1], b[:, 1:]
    half = 0.5 * (a1 - a0)
    mid = 0.5 * (a1 + a0)
    w = mid[:, :, None] + half[:, :, None] * _GL_X[None, None, :]
    k = kap[:, None, None]
    dens = np.exp(-0.5 * w * w) / math.sqrt(2 * math.pi) * (-np.expm1(k * w - 0.5 * k * k))
    dR = rhat[:, None, None] - 2.0 * sd * w - r[:, None, None]
    cl = _clip_np(dR, np.broadcast_to(r[:, None, None], dR.shape), mode, r0, wpar)
    integ = np.sum(half[:, :, None] * _GL_W[None, None, :] * dens * cl * cl, axis=(1, 2))
    return acc + np.where(hi > lo, integ, 0.0)


def clipped_moment(r, rhat, sd, mode, r0, wpar):
    """E[clip(R' - r)^2] for arrays r, rhat (same shape)."""
    r = np.ascontiguousarray(np.asarray(r, dtype=float).ravel())
    rhat = np.ascontiguousarray(np.broadcast_to(np.asarray(rhat, dtype=float), r.shape).ravel())
    code = 1 if mode == "thm1" else 3
    if _clipped_moment_nb is None:
        return _clipped_moment_np(r, rhat, float(sd), code, float(r0), float(wpar))
    out = np.empty_like(r)
    _clipped_moment_nb(r, rhat, float(sd), code, float(r0), float(wpar), _GL_X, _GL_W, out)
    return out


# ---------------------------------------------------------------------------
# square assignment by shortest augmenting paths


def _assign_py(C, col4row):
    n = C.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    row4col = -np.ones(n, dtype=np.int64)
    for k in range(n):
        col4row[k] = -1
    shortest = np.empty(n)
    path = np.empty(n, dtype=np.int64)
    SR = np.empty(n, dtype=np.bool_)
    SC = np.empty(n, dtype=np.bool_)
    remaining = np.empty(n, dtype=np.int64)
    for cur in range(n):
        for j in range(n):
            shortest[j] = np.inf
            path[j] = -1
            SR[j] = False
            SC[j] = False
            remaining[j] = n - 1 - j
        nrem = n
        minval = 0.0
        i = cur
        sink = -1
        while sink == -1:
            SR[i] = True
            idx = -1
            lowest = np.inf
            for it in range(nrem):
                j = remaining[it]
                rc = minval + C[i, j] - u[i] - v[j]
                if rc < shortest[j]:
                    path[j] = i
                    shortest[j] = rc
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    idx = it
            if lowest == np.inf:
                return False
            minval = lowest
            j = remaining[idx]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            SC[j] = True
            nrem -= 1
            remaining[idx] = remaining[nrem]
        u[cur] += minval
        for r in range(n):
            if SR[r] and r != cur:
                u[r] += minval - shortest[col4row[r]]
        for j in range(n):
            if SC[j]:
                v[j] -= minval - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break
    return True


_assign_nb = jit(_assign_py)


def _assign_np(C):
    """Same algorithm with the inner column scan vectorized."""
    n = C.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    row4col = -np.ones(n, dtype=np.int64)
    col4row = -np.ones(n, dtype=np.int64)
    for cur in range(n):
        shortest = np.full(n, np.inf)
        path = -np.ones(n, dtype=np.int64)
        SR = np.zeros(n, dtype=bool)
        SC = np.zeros(n, dtype=bool)
        minval = 0.0
        i = cur
        sink = -1
        while sink == -1:
            SR[i] = True
            free = ~SC
            rc = minval + C[i] - u[i] - v
            better = free & (rc < shortest)
            path[better] = i
            shortest[better] = rc[better]
            cand = np.where(free, shortest, np.inf)
            lowest = cand.min()
            if lowest == np.inf:
                raise ValueError("assignment infeasible (non-finite costs)")
            ties = np.nonzero(cand == lowest)[0]
            unassigned = ties[row4col[ties] == -1]
            j = int(unassigned[0]) if len(unassigned) else int(ties[0])
            minval = lowest
            SC[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
        u[cur] += minval
        rows = np.nonzero(SR)[0]
        rows = rows[rows != cur]
        u[rows] += minval - shortest[col4row[rows]]
        v[SC] -= minval - shortest[SC]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break
    return col4row


def assign(C):
    """Column assigned to each row in a minimum-cost perfect matching of square C."""
    C = np.ascontiguousarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    if _assign_nb is None:
        return _assign_np(C)
    col4row = np.empty(C.shape[0], dtype=np.int64)
    if not _assign_nb(C, col4row):
        raise ValueError("assignment infeasible")
    return col4row
