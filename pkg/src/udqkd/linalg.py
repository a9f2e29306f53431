"""Small dense linear algebra for covariance matrices.

Every routine accepts either a single ``(n, n)`` matrix or a stack of them with
shape ``(..., n, n)``; the leading axes are treated as independent problems.
Matrices here never exceed 8x8, so the eigensolver is a plain cyclic Jacobi
iteration vectorised across the stack.
"""

from __future__ import annotations

import numpy as np

MAX_SWEEPS = 100
OFFDIAG_RTOL = 1e-14
ABS_FLOOR = 1e-12


class LinAlgError(ArithmeticError):
    """Raised when a kernel routine cannot produce a trustworthy result."""


class ConvergenceError(LinAlgError):
    pass


def max_norm(a):
    """Entry-wise max norm over the trailing two axes."""
    return np.max(np.abs(a), axis=(-2, -1))


def sym_matrix(entries, *, rtol=1e-12):
    """Validate ``entries`` as a real symmetric matrix of even dimension.

    Returns a float copy that is exactly symmetric. Small asymmetries (below
    ``rtol`` relative to the max norm) are averaged away; larger ones raise.
    """
    a = np.array(entries, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    n = a.shape[-1]
    if n == 0 or n % 2:
        raise ValueError(f"matrix dimension must be a positive even number, got {n}")
    at = np.swapaxes(a, -1, -2)
    scale = np.maximum(max_norm(a), ABS_FLOOR)
    if np.any(max_norm(a - at) > rtol * scale):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + at)


def sym_eig(a):
    """Eigen-decomposition of real symmetric matrices by cyclic Jacobi rotations.

    Returns ``(w, q)`` with eigenvalues ``w`` sorted in descending order and
    orthonormal eigenvectors in the columns of ``q`` so that
    ``a == q @ diag(w) @ q.T``.
    """
    a = np.array(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape((-1, n, n)).copy()
    m = a.shape[0]
    q = np.broadcast_to(np.eye(n), (m, n, n)).copy()

    if n > 1:
        thresh = OFFDIAG_RTOL * np.maximum(max_norm(a), ABS_FLOOR)
        iu = np.triu_indices(n, 1)
        rows = np.arange(m)
        for _ in range(MAX_SWEEPS):
            off = np.sqrt(np.sum(a[:, iu[0], iu[1]] ** 2, axis=1))
            active = off > thresh
            if not active.any():
                break
            idx = rows[active]
            sub, subq = a[idx], q[idx]
            for p in range(n - 1):
                for k in range(p + 1, n):
                    _rotate(sub, subq, p, k)
            a[idx], q[idx] = sub, subq
        else:
            off = np.sqrt(np.sum(a[:, iu[0], iu[1]] ** 2, axis=1))
            if np.any(off > thresh):
                raise ConvergenceError(
                    f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps "
                    f"(off-diagonal norm {off.max():.3e})"
                )

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    q = np.take_along_axis(q, order[:, None, :], axis=-1)
    return w.reshape(batch_shape + (n,)), q.reshape(batch_shape + (n, n))


def _rotate(a, q, p, k):
    # Annihilate a[:, p, k] in place for every matrix in the stack.
    apq = a[:, p, k]
    nz = apq != 0.0
    if not nz.any():
        return
    theta = np.divide(a[:, k, k] - a[:, p, p], 2.0 * apq, out=np.zeros_like(apq), where=nz)
    t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(theta == 0.0, 1.0, t)
    t = np.where(nz, t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    c1, s1 = c[:, None], s[:, None]
    col_p, col_k = a[:, :, p].copy(), a[:, :, k].copy()
    a[:, :, p] = c1 * col_p - s1 * col_k
    a[:, :, k] = s1 * col_p + c1 * col_k
    row_p, row_k = a[:, p, :].copy(), a[:, k, :].copy()
    a[:, p, :] = c1 * row_p - s1 * row_k
    a[:, k, :] = s1 * row_p + c1 * row_k
    a[:, p, k] = 0.0
    a[:, k, p] = 0.0

    vec_p, vec_k = q[:, :, p].copy(), q[:, :, k].copy()
    q[:, :, p] = c1 * vec_p - s1 * vec_k
    q[:, :, k] = s1 * vec_p + c1 * vec_k


def sqrt_spd(a):
    """Principal square root of symmetric positive definite matrices."""
    w, q = sym_eig(a)
    wmin = w[..., -1]
    bad = wmin <= ABS_FLOOR
    if np.any(bad):
        worst = float(np.min(wmin))
        raise LinAlgError(f"matrix is not positive definite (smallest eigenvalue {worst:.6g})")
    root = np.sqrt(w)
    b = (q * root[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (b + np.swapaxes(b, -1, -2))


def pinv_x_projected(gamma, mode_index):
    """Moore-Penrose inverse of ``X gamma X`` where ``X`` keeps only mode
    ``mode_index``'s x quadrature.

    The result is zero except for ``1 / gamma[2k, 2k]`` at ``(2k, 2k)``.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[-1]
    if not 0 <= mode_index < n // 2:
        raise IndexError(f"mode index {mode_index} out of range for {n // 2} modes")
    k = 2 * mode_index
    var = gamma[..., k, k]
    if np.any(var <= ABS_FLOOR):
        raise LinAlgError("degenerate measured quadrature")
    out = np.zeros_like(gamma)
    out[..., k, k] = 1.0 / var
    return out


def congruence(s, gamma):
    """``S gamma S^T``, symmetrised to remove rounding asymmetry."""
    s = np.asarray(s, dtype=float)
    out = s @ np.asarray(gamma, dtype=float) @ np.swapaxes(s, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def direct_sum(g1, g2):
    """Block-diagonal stacking ``g1 (+) g2`` (leading batch axes broadcast)."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    n1, n2 = g1.shape[-1], g2.shape[-1]
    batch = np.broadcast_shapes(g1.shape[:-2], g2.shape[:-2])
    out = np.zeros(batch + (n1 + n2, n1 + n2))
    out[..., :n1, :n1] = g1
    out[..., n1:, n1:] = g2
    return out
