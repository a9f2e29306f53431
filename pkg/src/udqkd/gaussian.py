"""Gaussian states in shot-noise units.

Quadratures are ordered ``(x1, y1, x2, y2, ...)`` throughout. Covariance
matrices are plain numpy arrays; functions that only touch covariances also
accept stacks ``(..., 2n, 2n)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import (
    LinAlgError,
    congruence,
    pinv_x_projected,
    sqrt_spd,
    sym_eig,
    sym_matrix,
)

logger = logging.getLogger(__name__)

NU_SNAP = 1e-9
NU_HARD = 1e-6
PAIR_RTOL = 1e-8


class UnphysicalStateError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = sym_matrix(self.cov)
        mean = np.array(self.mean, dtype=float).reshape(-1)
        if mean.shape[0] != cov.shape[-1]:
            raise ValueError("mean vector and covariance dimensions differ")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def from_cov(cls, cov):
        cov = np.asarray(cov, dtype=float)
        return cls(np.zeros(cov.shape[-1]), cov)

    @property
    def n_modes(self) -> int:
        return self.cov.shape[-1] // 2


def omega(n_modes: int) -> np.ndarray:
    """Symplectic form: ``n_modes`` copies of [[0, 1], [-1, 0]] on the diagonal."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def uniform_state_cov(r: float) -> np.ndarray:
    """diag(1/r, r): coherent for r = 1, x-squeezed for r > 1, y-squeezed for r < 1."""
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    return np.diag([1.0 / r, r])


def epr_cov(v):
    """Two-mode squeezed vacuum covariance; ``v`` may be an array."""
    v = np.asarray(v, dtype=float)
    c = np.sqrt(v * v - 1.0)
    out = np.zeros(v.shape + (4, 4))
    for q in range(4):
        out[..., q, q] = v
    out[..., 0, 2] = out[..., 2, 0] = c
    out[..., 1, 3] = out[..., 3, 1] = -c
    return out


def epr_state(v: float) -> GaussianState:
    if v < 1:
        raise ValueError(f"EPR variance must be >= 1, got {v}")
    return GaussianState.from_cov(epr_cov(v))


def _check_mode(state: GaussianState, mode: int):
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode {mode} out of range for a {state.n_modes}-mode state")


def _embed(state: GaussianState, local: np.ndarray, modes) -> np.ndarray:
    s = np.eye(2 * state.n_modes)
    idx = [q for m in modes for q in (2 * m, 2 * m + 1)]
    s[np.ix_(idx, idx)] = local
    return s


def _apply(state: GaussianState, s: np.ndarray) -> GaussianState:
    return GaussianState(s @ state.mean, congruence(s, state.cov))


def squeezer(v: float, r: float) -> np.ndarray:
    """Single-mode squeezer diag(sqrt(V/r), sqrt(r/V))."""
    if not v / r > 0:
        raise ValueError("V/r must be positive")
    a = np.sqrt(v / r)
    return np.diag([a, 1.0 / a])


def squeeze_mode(state: GaussianState, mode: int, v: float, r: float) -> GaussianState:
    _check_mode(state, mode)
    return _apply(state, _embed(state, squeezer(v, r), [mode]))


def beam_splitter_matrix(t: float) -> np.ndarray:
    """Two-mode beam splitter on ``(x_i, y_i, x_j, y_j)``.

    Output i is ``sqrt(T) i + sqrt(1-T) j``; output j is ``-sqrt(1-T) i + sqrt(T) j``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {t}")
    a, b = np.sqrt(t), np.sqrt(1.0 - t)
    i2 = np.eye(2)
    return np.block([[a * i2, b * i2], [-b * i2, a * i2]])


def beam_splitter(state: GaussianState, mode_i: int, mode_j: int, t: float) -> GaussianState:
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beam splitter needs two distinct modes")
    return _apply(state, _embed(state, beam_splitter_matrix(t), [mode_i, mode_j]))


def _split(cov, mode):
    n = cov.shape[-1]
    keep = [q for q in range(n) if q // 2 != mode]
    meas = [2 * mode, 2 * mode + 1]
    rest = cov[..., keep, :][..., :, keep]
    sigma = cov[..., keep, :][..., :, meas]
    gm = cov[..., meas, :][..., :, meas]
    return rest, sigma, gm


def condition_on_x_homodyne(state, measured_mode: int):
    """Condition on an x-homodyne measurement of ``measured_mode``.

    Returns ``(cov, gain)``: the covariance of the remaining modes and the
    vector that maps the measured value (minus its mean) onto the shift of
    the remaining modes' mean. ``state`` may also be a bare covariance array
    or a stack of them.
    """
    cov = state.cov if isinstance(state, GaussianState) else np.asarray(state, dtype=float)
    n_modes = cov.shape[-1] // 2
    if not 0 <= measured_mode < n_modes:
        raise IndexError(f"mode {measured_mode} out of range for a {n_modes}-mode state")
    rest, sigma, gm = _split(cov, measured_mode)
    try:
        p = pinv_x_projected(gm, 0)
    except LinAlgError as exc:
        raise LinAlgError(f"degenerate measured quadrature on mode {measured_mode}") from exc
    cond = rest - sigma @ p @ np.swapaxes(sigma, -1, -2)
    cond = 0.5 * (cond + np.swapaxes(cond, -1, -2))
    gain = (sigma @ p)[..., 0]
    return cond, gain


def symplectic_eigenvalues(gamma) -> np.ndarray:
    """Symplectic spectrum, descending, one value per mode.

    The values are the square roots of the doubly degenerate eigenvalues of
    the symmetric matrix ``g^(1/2) (-W g W) g^(1/2)`` with ``g`` the covariance
    and ``W`` the symplectic form.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[-1]
    w_form = omega(n // 2)
    root = sqrt_spd(gamma)
    m = root @ (-w_form @ gamma @ w_form) @ root
    lam, _ = sym_eig(0.5 * (m + np.swapaxes(m, -1, -2)))
    hi, lo = lam[..., 0::2], lam[..., 1::2]
    scale = np.maximum(np.abs(hi), 1.0)
    if np.any(np.abs(hi - lo) > PAIR_RTOL * scale):
        worst = float(np.max(np.abs(hi - lo) / scale))
        raise LinAlgError(f"symplectic eigenvalue pairing failed (relative gap {worst:.3e})")
    return np.sqrt(np.clip(0.5 * (hi + lo), 0.0, None))


def is_physical(gamma, tol=1e-12):
    """Direct test of ``gamma + i W >= 0``.

    The Hermitian matrix ``A + iB`` is positive semidefinite exactly when the
    real symmetric matrix [[A, -B], [B, A]] is, so no complex arithmetic is
    needed. ``tol`` is relative to the max norm of ``gamma``.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[-1]
    w_form = np.broadcast_to(omega(n // 2), gamma.shape)
    real = np.block([[gamma, -w_form], [w_form, gamma]])
    lam, _ = sym_eig(real)
    scale = np.maximum(np.max(np.abs(gamma), axis=(-2, -1)), 1.0)
    return lam[..., -1] >= -tol * scale


def g_entropy(x):
    """(x+1) log2(x+1) - x log2 x, continuous at x = 0."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    return np.where(pos, (xs + 1.0) * np.log2(xs + 1.0) - xs * np.log2(xs), 0.0)


def clamp_nu(nu):
    nu = np.asarray(nu, dtype=float)
    if np.any(nu < 1.0 - NU_HARD):
        raise UnphysicalStateError(f"unphysical state: symplectic eigenvalue {float(nu.min()):.9g} < 1")
    soft = (nu < 1.0 - NU_SNAP).sum()
    if soft:
        logger.warning("clamped %d symplectic eigenvalue(s) slightly below 1", int(soft))
    return np.maximum(nu, 1.0)


def von_neumann_entropy(gamma):
    """Entropy in bits of the Gaussian state(s) with covariance ``gamma``."""
    nu = clamp_nu(symplectic_eigenvalues(gamma))
    return np.sum(g_entropy(0.5 * (nu - 1.0)), axis=-1)
