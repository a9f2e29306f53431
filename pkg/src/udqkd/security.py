"""Key rate of the UD protocol under collective attacks, reverse reconciliation.

The phase-quadrature pair (V_y, C_y) at the channel output is not fully known
to Alice and Bob. For a measured V_y the worst case is found by scanning every
C_y that keeps the two-mode state physical; repeating that over V_y traces the
safe line.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gaussian import UnphysicalStateError, condition_on_x_homodyne, von_neumann_entropy
from .protocol import (
    ParamArrays,
    PhaseHypothesis,
    ProtocolParams,
    build_gamma_ab1,
    build_gamma_abrh,
    conditional_gamma_arh,
    ebs_variance,
    noise_budget,
)

GRID_POINTS = 2001
GOLDEN_TOL = 1e-9
BOUNDARY_TOL = 1e-6
REGION_ATOL = 1e-12
DEFAULT_ATTEN_DB_PER_KM = 0.2
# Upper bound on matrices per evaluation batch (memory, not accuracy).
_BATCH = 16384
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Parabola:
    """Physical region (C_y - c0)^2 <= k (V_y - v0)."""

    c0: float
    v0: float
    k: float

    def half_width(self, v_y):
        return np.sqrt(self.k * np.maximum(np.asarray(v_y, dtype=float) - self.v0, 0.0))

    def residual(self, v_y, c_y):
        """Positive inside the region, zero on the boundary."""
        return self.k * (np.asarray(v_y) - self.v0) - (np.asarray(c_y) - self.c0) ** 2

    def contains(self, v_y, c_y, atol=REGION_ATOL):
        v_y = np.asarray(v_y, dtype=float)
        return (v_y >= self.v0 - atol) & (self.residual(v_y, c_y) >= -atol)


class RegionClass(enum.Enum):
    UNPHYSICAL = "unphysical"
    UNSECURE = "unsecure"
    SECURE = "secure"


@dataclass(frozen=True)
class KeyRatePoint:
    v_y: float
    i_ab: float
    chi_be: float
    delta_i: float
    c_y_at_min: float
    on_boundary: bool

    def as_dict(self):
        return {
            "v_y": self.v_y,
            "i_ab": self.i_ab,
            "chi_be": self.chi_be,
            "delta_i": self.delta_i,
            "c_y_at_min": self.c_y_at_min,
            "on_boundary": self.on_boundary,
        }


def mutual_information(p):
    """Alice-Bob Shannon information (bits) from the closed form."""
    chi_tot = noise_budget(p).chi_totx
    return 0.5 * np.log2((1.0 / p.r + p.v_mod + chi_tot) / (1.0 / p.r + chi_tot))


def mutual_information_from_cov(p: ProtocolParams) -> float:
    """Same quantity computed as 0.5 log2(V_A / V_A|B) from the detected state.

    Only x quadratures enter, so any phase hypothesis will do.
    """
    ab = build_gamma_abrh(p, PhaseHypothesis(1.0, 0.0))[:4, :4]
    cond, _ = condition_on_x_homodyne(ab, 1)
    return float(0.5 * np.log2(ab[0, 0] / cond[0, 0]))


def parabola(p) -> Parabola:
    v = ebs_variance(p)
    chi = noise_budget(p).chi_linex
    base = 1.0 / p.r + chi
    c0 = -np.sqrt((v * v - 1.0) / p.r) / (np.sqrt(p.t_x * v) * base)
    v0 = 1.0 / (p.t_x * base)
    k = (v * v - 1.0) / v * chi / base
    return Parabola(c0, v0, k)


def in_region(p, h: PhaseHypothesis, atol=REGION_ATOL):
    return parabola(p).contains(h.v_y_b1, h.c_y_b1, atol)


def _holevo(p, v_y, c_y):
    # No region check here; callers guarantee physical inputs.
    h = PhaseHypothesis(v_y, c_y)
    return von_neumann_entropy(build_gamma_ab1(p, h)) - von_neumann_entropy(conditional_gamma_arh(p, h))


def holevo_bound(p: ProtocolParams, h: PhaseHypothesis) -> float:
    """Upper bound (bits) on Eve's information about Bob's x data."""
    if not in_region(p, h):
        raise UnphysicalStateError(f"hypothesis {tuple(h)} lies outside the physical region")
    chi = float(_holevo(p, float(h.v_y_b1), float(h.c_y_b1)))
    if chi < -1e-9:
        raise UnphysicalStateError(f"negative Holevo bound {chi:.3e}: inconsistent inputs")
    return max(chi, 0.0)


def key_rate(p: ProtocolParams, h: PhaseHypothesis) -> KeyRatePoint:
    i_ab = float(mutual_information(p))
    chi = holevo_bound(p, h)
    par = parabola(p)
    on_edge = abs(float(par.residual(h.v_y_b1, h.c_y_b1))) <= BOUNDARY_TOL
    return KeyRatePoint(float(h.v_y_b1), i_ab, chi, p.beta * i_ab - chi, float(h.c_y_b1), on_edge)


def classify(p: ProtocolParams, h: PhaseHypothesis) -> RegionClass:
    if not in_region(p, h):
        return RegionClass.UNPHYSICAL
    return RegionClass.SECURE if key_rate(p, h).delta_i > 0 else RegionClass.UNSECURE


def expected_vy(p, eps_y=None):
    """Phase-quadrature variance at the channel output if T_y equals T_x.

    ``eps_y`` overrides the phase-quadrature excess noise; by default the
    amplitude value ``eps_x`` is reused.
    """
    eps = p.eps_x if eps_y is None else eps_y
    return p.t_x * (p.r + (1.0 - p.t_x) / p.t_x + eps)


def _chunks(n_lanes, n_cols):
    step = max(1, _BATCH // max(n_cols, 1))
    for start in range(0, n_lanes, step):
        yield slice(start, min(start + step, n_lanes))


def _chi_lanes(pa: ParamArrays, v_y, c_y):
    """Holevo bound for lanes: ``v_y`` shape (L,), ``c_y`` shape (L, M)."""
    out = np.empty(c_y.shape)
    for sl in _chunks(c_y.shape[0], c_y.shape[1]):
        out[sl] = _holevo(pa.take(sl), v_y[sl, None], c_y[sl])
    return out


def _minimize_lanes(pa: ParamArrays, v_y):
    """Worst-case key rate per lane over the admissible C_y interval.

    A dense grid locates the global minimum (no convexity assumed), golden
    section polishes it, and both interval ends are always candidates
    because the minimum frequently sits on the boundary.
    """
    par = parabola(pa)
    c0, v0 = par.c0[:, 0], par.v0[:, 0]
    if np.any(v_y < v0 - REGION_ATOL):
        bad = int(np.argmax(v_y < v0 - REGION_ATOL))
        raise UnphysicalStateError(f"v_y = {v_y[bad]!r} lies below the parabola vertex {v0[bad]!r}")
    half = np.sqrt(par.k[:, 0] * np.maximum(v_y - v0, 0.0))
    lo, hi = c0 - half, c0 + half
    i_ab = mutual_information(pa)[:, 0]
    beta = pa.beta[:, 0]

    def f(c):
        return beta[:, None] * i_ab[:, None] - _chi_lanes(pa, v_y, c)

    frac = np.linspace(0.0, 1.0, GRID_POINTS)
    grid = lo[:, None] + (hi - lo)[:, None] * frac
    grid[:, -1] = hi
    fg = f(grid)
    lanes = np.arange(len(v_y))
    best = np.argmin(fg, axis=1)

    a = grid[lanes, np.maximum(best - 1, 0)]
    b = grid[lanes, np.minimum(best + 1, GRID_POINTS - 1)]
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f12 = f(np.stack([x1, x2], axis=1))
    f1, f2 = f12[:, 0], f12[:, 1]
    for _ in range(200):
        if np.all(b - a < GOLDEN_TOL):
            break
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        nx1 = np.where(left, b - _INVPHI * (b - a), x2)
        nx2 = np.where(left, x1, a + _INVPHI * (b - a))
        new = np.where(left, nx1, nx2)
        fn = f(new[:, None])[:, 0]
        f1, f2 = np.where(left, fn, f2), np.where(left, f1, fn)
        x1, x2 = nx1, nx2
    xg = np.where(f1 < f2, x1, x2)
    fgold = np.minimum(f1, f2)

    cands = np.stack([grid[lanes, best], xg, lo, hi], axis=1)
    fc = np.stack([fg[lanes, best], fgold, fg[:, 0], fg[:, -1]], axis=1)
    pick = np.argmin(fc, axis=1)
    c_min = cands[lanes, pick]
    d_min = fc[lanes, pick]
    edge = (np.abs(c_min - lo) <= BOUNDARY_TOL) | (np.abs(c_min - hi) <= BOUNDARY_TOL)
    return [
        KeyRatePoint(
            v_y=float(v_y[i]),
            i_ab=float(i_ab[i]),
            chi_be=float(beta[i] * i_ab[i] - d_min[i]),
            delta_i=float(d_min[i]),
            c_y_at_min=float(c_min[i]),
            on_boundary=bool(edge[i]),
        )
        for i in lanes
    ]


def min_key_rate_at_vy(p: ProtocolParams, v_y: float) -> KeyRatePoint:
    return _minimize_lanes(ParamArrays.stack([p]), np.array([float(v_y)]))[0]


def safe_line(p: ProtocolParams, v_y_grid: Sequence[float]) -> list[KeyRatePoint]:
    v = np.asarray(v_y_grid, dtype=float).reshape(-1)
    if v.size == 0:
        return []
    order = np.argsort(v, kind="stable")
    pts = _minimize_lanes(ParamArrays.stack([p] * v.size), v[order])
    return pts


def min_key_rate_expected(p: ProtocolParams, eps_y=None) -> KeyRatePoint:
    return min_key_rate_at_vy(p, expected_vy(p, eps_y))


def min_key_rate_expected_many(params: Sequence[ProtocolParams], eps_y=None) -> list[KeyRatePoint]:
    """Batched :func:`min_key_rate_expected` over independent scenarios."""
    if not params:
        return []
    pa = ParamArrays.stack(params)
    return _minimize_lanes(pa, np.asarray(expected_vy(pa, eps_y), dtype=float)[:, 0])


def distance_to_transmission(length_km, atten_db_per_km=DEFAULT_ATTEN_DB_PER_KM):
    if np.any(np.asarray(length_km) < 0):
        raise ValueError("distance must be non-negative")
    if not atten_db_per_km > 0:
        raise ValueError("attenuation must be positive")
    return 10.0 ** (-atten_db_per_km * np.asarray(length_km, dtype=float) / 10.0)
