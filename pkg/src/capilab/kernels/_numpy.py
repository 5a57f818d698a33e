"""Vectorised numpy implementations of the hot kernels."""

import numpy as np
import scipy.sparse as sp


def _bary_gradients(X):
    """Gradients of the barycentric coordinates, shape (nt, 3, 2), and areas."""
    d1 = X[:, 1] - X[:, 0]
    d2 = X[:, 2] - X[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], axis=1), 0.5 * det


def p2_shape(bary):
    """P2 basis values (6,) and barycentric-derivative table (6, 3) at a point."""
    l0, l1, l2 = bary
    phi = np.array([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])
    dphi = np.array([
        [4 * l0 - 1, 0.0, 0.0],
        [0.0, 4 * l1 - 1, 0.0],
        [0.0, 0.0, 4 * l2 - 1],
        [4 * l1, 4 * l0, 0.0],
        [0.0, 4 * l2, 4 * l1],
        [4 * l2, 0.0, 4 * l0],
    ])
    return phi, dphi


def p2_element_matrices(X, qbary, qw, axisym):
    """Element stiffness (nt, 6, 6) and unit-load vectors (nt, 6).

    ``X`` holds triangle vertex coordinates (nt, 3, 2).  In axisymmetric mode
    every integrand carries the radial weight ``s = x[0]`` (no 2*pi factor).
    """
    G, area = _bary_gradients(X)
    nt = X.shape[0]
    K = np.zeros((nt, 6, 6))
    F = np.zeros((nt, 6))
    for bary, w in zip(qbary, qw):
        phi, dphi = p2_shape(bary)
        grads = np.einsum("ab,tbk->tak", dphi, G)
        wt = w * area
        if axisym:
            wt = wt * (X[:, :, 0] @ bary)
        K += wt[:, None, None] * np.einsum("tak,tbk->tab", grads, grads)
        F += wt[:, None] * phi[None, :]
    return K, F


def pcg_csr(indptr, indices, data, b, x0, dinv, tol, maxiter):
    """Diagonally preconditioned CG; returns (x, iterations, relative residual)."""
    A = sp.csr_matrix((data, indices, indptr), shape=(b.size, b.size))
    x = x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while it < maxiter and res > tol:
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        res = np.linalg.norm(r) / bnorm
        it += 1
    return x, it, res


def max_pair_distance(P, Q, chunk=1024):
    """max_{i,j} |P_i - Q_j| by brute force over all pairs."""
    best = 0.0
    for start in range(0, P.shape[0], chunk):
        blk = P[start:start + chunk]
        d2 = ((blk[:, None, :] - Q[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, float(d2.max()))
    return np.sqrt(best)


def ball_violations(X, nu, radius, pts, tol, chunk=512):
    """For each boundary sample count sampled points strictly inside its exterior ball.

    The ball at sample i is centred at X_i + radius*nu_i.  A point y is inside
    when |y - X_i|^2 - 2*radius*<y - X_i, nu_i> < -tol, which avoids the
    cancellation of comparing two large distances when the radius is huge.
    """
    counts = np.zeros(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], chunk):
        x = X[start:start + chunk]
        n = nu[start:start + chunk]
        d = pts[None, :, :] - x[:, None, :]
        val = (d ** 2).sum(axis=-1) - 2.0 * radius * np.einsum("ijk,ik->ij", d, n)
        counts[start:start + chunk] = (val < -tol).sum(axis=1)
    return counts
