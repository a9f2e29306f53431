"""Covariance matrices of the entanglement-based picture of the UD protocol.

Mode labels: A (Alice's kept mode), B1 (channel output), R0/H (detector-noise
EPR pair), B (detected mode after the efficiency beam splitter).

The builders use numpy broadcasting throughout: fields of ``ProtocolParams``
(or of a :class:`ParamArrays` stack) and the hypothesis pair may be arrays,
and the returned matrices carry the broadcast shape in their leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import NamedTuple, Sequence

import numpy as np

from .gaussian import GaussianState, condition_on_x_homodyne, epr_cov, epr_state


class ParamError(ValueError):
    """Invalid scenario parameter; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


# field -> (lower, lower_inclusive, upper, upper_inclusive, text)
_RANGES = {
    "r": (0.0, False, np.inf, False, "r > 0"),
    "v_mod": (0.0, True, np.inf, False, "v_mod >= 0"),
    "t_x": (0.0, False, 1.0, True, "0 < t_x <= 1"),
    "eps_x": (0.0, True, np.inf, False, "eps_x >= 0"),
    "eta": (0.0, False, 1.0, True, "0 < eta <= 1"),
    "v_el": (0.0, True, np.inf, False, "v_el >= 0"),
    "beta": (0.0, True, 1.0, True, "0 <= beta <= 1"),
}


def check_range(name: str, value: float, ranges=_RANGES) -> float:
    lo, lo_inc, hi, hi_inc, text = ranges[name]
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParamError(name, f"expected a number, got {value!r}") from None
    ok = (value >= lo if lo_inc else value > lo) and (value <= hi if hi_inc else value < hi)
    if not ok or np.isnan(value):
        raise ParamError(name, f"value {value!r} outside valid range {text}")
    return value


@dataclass(frozen=True)
class ProtocolParams:
    """One UD scenario. Defaults are the 1-dB x-squeezed reference case.

    ``eps_x`` is referred to the channel input; all variances are in
    shot-noise units.
    """

    r: float = 1.1
    v_mod: float = 3.0
    t_x: float = 0.1
    eps_x: float = 0.01
    eta: float = 0.6
    v_el: float = 0.1
    beta: float = 0.99

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, check_range(f.name, getattr(self, f.name)))
        if self.eta == 1.0 and self.v_el > 0.0:
            raise ParamError("v_el", "electronic noise must be 0 when eta == 1")

    def replace(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ParamArrays:
    """Unvalidated column stack of several ``ProtocolParams`` (shape ``(L, 1)``)."""

    r: np.ndarray
    v_mod: np.ndarray
    t_x: np.ndarray
    eps_x: np.ndarray
    eta: np.ndarray
    v_el: np.ndarray
    beta: np.ndarray

    @classmethod
    def stack(cls, params: Sequence[ProtocolParams]) -> "ParamArrays":
        cols = {
            f.name: np.array([getattr(p, f.name) for p in params], dtype=float)[:, None]
            for f in fields(ProtocolParams)
        }
        return cls(**cols)

    def take(self, idx) -> "ParamArrays":
        return ParamArrays(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})


class PhaseHypothesis(NamedTuple):
    """Candidate phase-quadrature variance and correlation at the channel output."""

    v_y_b1: float
    c_y_b1: float


class NoiseBudget(NamedTuple):
    chi_linex: float
    chi_hom: float
    chi_totx: float


def noise_budget(p) -> NoiseBudget:
    chi_linex = (1.0 - p.t_x) / p.t_x + p.eps_x
    chi_hom = (1.0 + p.v_el) / p.eta - 1.0
    return NoiseBudget(chi_linex, chi_hom, chi_linex + chi_hom / p.t_x)


def ebs_variance(p):
    """EPR variance V of the equivalent source, V = sqrt(1 + r V_M)."""
    return np.sqrt(1.0 + p.r * p.v_mod)


def _zeros(shape, n):
    return np.zeros(shape + (n, n))


def build_gamma_ab1(p, h: PhaseHypothesis) -> np.ndarray:
    """4x4 covariance of Alice's mode and the channel output for hypothesis ``h``."""
    v = ebs_variance(p)
    chi_linex = noise_budget(p).chi_linex
    cx = np.sqrt(p.t_x * p.v_mod) * np.sqrt(v)
    bx = p.t_x * (p.v_mod + 1.0 / p.r + chi_linex)
    v, cx, bx, vy, cy = np.broadcast_arrays(v, cx, bx, *map(np.asarray, h))
    g = _zeros(v.shape, 4)
    g[..., 0, 0] = g[..., 1, 1] = v
    g[..., 0, 2] = g[..., 2, 0] = cx
    g[..., 2, 2] = bx
    g[..., 1, 3] = g[..., 3, 1] = cy
    g[..., 3, 3] = vy
    return g


def noise_variance(p):
    """Variance V_N of the EPR pair modelling electronic noise."""
    eta = np.asarray(p.eta, dtype=float)
    gap = 1.0 - eta
    safe = np.where(gap > 0, gap, 1.0)
    return np.where(gap > 0, 1.0 + p.v_el / safe, 1.0)


def detector_ancilla(p: ProtocolParams) -> GaussianState:
    if p.eta == 1.0 and p.v_el > 0.0:
        raise ParamError("v_el", "electronic noise must be 0 when eta == 1")
    return epr_state(float(noise_variance(p)))


def _detector_bs(eta):
    # Beam splitter mixing B1 (mode 1) with R0 (mode 2) in the A,B1,R0,H frame.
    eta = np.asarray(eta, dtype=float)
    a, b = np.sqrt(eta), np.sqrt(1.0 - eta)
    s = np.broadcast_to(np.eye(8), eta.shape + (8, 8)).copy()
    for q in (2, 3):
        s[..., q, q] = a
        s[..., q, q + 2] = b
        s[..., q + 2, q] = -b
        s[..., q + 2, q + 2] = a
    return s


def build_gamma_abrh(p, h: PhaseHypothesis) -> np.ndarray:
    """8x8 covariance after the detector beam splitter, modes ordered A, B, R, H."""
    ab1 = build_gamma_ab1(p, h)
    rh = epr_cov(noise_variance(p))
    joint = np.zeros(np.broadcast_shapes(ab1.shape[:-2], rh.shape[:-2]) + (8, 8))
    joint[..., :4, :4] = ab1
    joint[..., 4:, 4:] = rh
    s = _detector_bs(p.eta)
    out = s @ joint @ np.swapaxes(s, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def reorder_modes(gamma, perm: Sequence[int]) -> np.ndarray:
    """Permute modes: mode ``i`` of the result is mode ``perm[i]`` of ``gamma``."""
    gamma = np.asarray(gamma)
    n = gamma.shape[-1] // 2
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{list(perm)} is not a permutation of {n} modes")
    idx = [q for m in perm for q in (2 * m, 2 * m + 1)]
    return gamma[..., idx, :][..., :, idx]


def inverse_perm(perm: Sequence[int]) -> list[int]:
    inv = [0] * len(perm)
    for i, m in enumerate(perm):
        inv[m] = i
    return inv


ABRH_TO_ARHB = (0, 2, 3, 1)


def conditional_gamma_arh(p, h: PhaseHypothesis) -> np.ndarray:
    """6x6 covariance of A, R, H after Bob's x-homodyne outcome is known."""
    arhb = reorder_modes(build_gamma_abrh(p, h), ABRH_TO_ARHB)
    cond, _ = condition_on_x_homodyne(arhb, 3)
    return cond
