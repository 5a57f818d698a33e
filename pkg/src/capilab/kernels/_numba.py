"""numba implementations of the hot kernels (serial loops, nogil)."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _p2_elements(X, qbary, qw, axisym, K, F):
    nt = X.shape[0]
    grads = np.empty((6, 2))
    phi = np.empty(6)
    for t in range(nt):
        x0, y0 = X[t, 0, 0], X[t, 0, 1]
        ax, ay = X[t, 1, 0] - x0, X[t, 1, 1] - y0
        bx, by = X[t, 2, 0] - x0, X[t, 2, 1] - y0
        det = ax * by - ay * bx
        g1x, g1y = by / det, -bx / det
        g2x, g2y = -ay / det, ax / det
        g0x, g0y = -g1x - g2x, -g1y - g2y
        area = 0.5 * det
        for q in range(qw.shape[0]):
            l0, l1, l2 = qbary[q, 0], qbary[q, 1], qbary[q, 2]
            phi[0] = l0 * (2 * l0 - 1)
            phi[1] = l1 * (2 * l1 - 1)
            phi[2] = l2 * (2 * l2 - 1)
            phi[3] = 4 * l0 * l1
            phi[4] = 4 * l1 * l2
            phi[5] = 4 * l2 * l0
            c0, c1, c2 = 4 * l0 - 1, 4 * l1 - 1, 4 * l2 - 1
            grads[0, 0], grads[0, 1] = c0 * g0x, c0 * g0y
            grads[1, 0], grads[1, 1] = c1 * g1x, c1 * g1y
            grads[2, 0], grads[2, 1] = c2 * g2x, c2 * g2y
            grads[3, 0] = 4 * (l1 * g0x + l0 * g1x)
            grads[3, 1] = 4 * (l1 * g0y + l0 * g1y)
            grads[4, 0] = 4 * (l2 * g1x + l1 * g2x)
            grads[4, 1] = 4 * (l2 * g1y + l1 * g2y)
            grads[5, 0] = 4 * (l0 * g2x + l2 * g0x)
            grads[5, 1] = 4 * (l0 * g2y + l2 * g0y)
            wt = qw[q] * area
            if axisym:
                wt *= l0 * x0 + l1 * X[t, 1, 0] + l2 * X[t, 2, 0]
            for a in range(6):
                F[t, a] += wt * phi[a]
                for b in range(6):
                    K[t, a, b] += wt * (grads[a, 0] * grads[b, 0]
                                        + grads[a, 1] * grads[b, 1])


def p2_element_matrices(X, qbary, qw, axisym):
    nt = X.shape[0]
    K = np.zeros((nt, 6, 6))
    F = np.zeros((nt, 6))
    _p2_elements(np.ascontiguousarray(X, dtype=np.float64),
                 np.ascontiguousarray(qbary, dtype=np.float64),
                 np.ascontiguousarray(qw, dtype=np.float64), bool(axisym), K, F)
    return K, F


@njit(cache=True, nogil=True)
def _csr_matvec(indptr, indices, data, x, out):
    for i in range(indptr.shape[0] - 1):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


@njit(cache=True, nogil=True)
def _pcg(indptr, indices, data, b, x, dinv, tol, maxiter):
    n = b.shape[0]
    r = np.empty(n)
    Ap = np.empty(n)
    _csr_matvec(indptr, indices, data, x, Ap)
    bnorm = 0.0
    for i in range(n):
        r[i] = b[i] - Ap[i]
        bnorm += b[i] * b[i]
    bnorm = np.sqrt(bnorm)
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    z = dinv * r
    p = z.copy()
    rz = 0.0
    rr = 0.0
    for i in range(n):
        rz += r[i] * z[i]
        rr += r[i] * r[i]
    res = np.sqrt(rr) / bnorm
    it = 0
    while it < maxiter and res > tol:
        _csr_matvec(indptr, indices, data, p, Ap)
        pAp = 0.0
        for i in range(n):
            pAp += p[i] * Ap[i]
        alpha = rz / pAp
        rz_new = 0.0
        rr = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * Ap[i]
            z[i] = dinv[i] * r[i]
            rz_new += r[i] * z[i]
            rr += r[i] * r[i]
        beta = rz_new / rz
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rz = rz_new
        res = np.sqrt(rr) / bnorm
        it += 1
    return it, res


def pcg_csr(indptr, indices, data, b, x0, dinv, tol, maxiter):
    x = np.array(x0, dtype=np.float64, copy=True)
    # unsigned indices spare numba the negative-index wraparound test in the gather
    it, res = _pcg(np.asarray(indptr, dtype=np.uint64), np.asarray(indices, dtype=np.uint64),
                   np.asarray(data, dtype=np.float64), np.asarray(b, dtype=np.float64),
                   x, np.asarray(dinv, dtype=np.float64), float(tol), int(maxiter))
    return x, int(it), float(res)


@njit(cache=True, nogil=True)
def _max_pair(P, Q):
    best = 0.0
    for i in range(P.shape[0]):
        for j in range(Q.shape[0]):
            dx = P[i, 0] - Q[j, 0]
            dy = P[i, 1] - Q[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > best:
                best = d2
    return np.sqrt(best)


def max_pair_distance(P, Q):
    return float(_max_pair(np.ascontiguousarray(P, dtype=np.float64),
                           np.ascontiguousarray(Q, dtype=np.float64)))


@njit(cache=True, nogil=True)
def _ball(X, nu, radius, pts, tol, counts):
    for i in range(X.shape[0]):
        c = 0
        for j in range(pts.shape[0]):
            dx = pts[j, 0] - X[i, 0]
            dy = pts[j, 1] - X[i, 1]
            val = dx * dx + dy * dy - 2.0 * radius * (dx * nu[i, 0] + dy * nu[i, 1])
            if val < -tol:
                c += 1
        counts[i] = c


def ball_violations(X, nu, radius, pts, tol):
    counts = np.zeros(X.shape[0], dtype=np.int64)
    _ball(np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(nu, dtype=np.float64),
          float(radius), np.ascontiguousarray(pts, dtype=np.float64), float(tol), counts)
    return counts
