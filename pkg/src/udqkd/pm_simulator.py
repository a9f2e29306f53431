"""Monte Carlo run of the prepare-and-measure UD protocol.

Alice displaces squeezed (or coherent) states along x with Gaussian
amplitudes, the channel attenuates and adds noise independently per
quadrature, and Bob homodynes a randomly chosen quadrature. Only second
moments are kept, so memory stays flat in ``n_pulses``.

Randomness: pulses are processed in fixed chunks of ``CHUNK`` pulses. Every
(chunk, component) pair owns a PCG64 generator seeded by
``SeedSequence(seed, spawn_key=(chunk, component))``, so each component's
draws are reproducible on their own and chunks can be generated in any order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple

import numpy as np

from .protocol import ParamError, ProtocolParams, ebs_variance, noise_budget

CHUNK = 1 << 16
MIN_REVEALED = 1000
COMPONENTS = ("modulation", "state_noise", "channel_noise", "basis", "detector_noise", "reveal")

RAW_MAGIC = b"UDQKDRAW"
RAW_VERSION = 1
RAW_HEADER = struct.Struct("<8sII")  # magic, version, fields per record
RAW_FIELDS = 3  # basis flag (0 = x, 1 = y), alice_x, bob_value


@dataclass(frozen=True)
class SimConfig:
    params: ProtocolParams = field(default_factory=ProtocolParams)
    t_y: float | None = None
    eps_y: float | None = None
    n_pulses: int = 1_000_000
    seed: int = 0
    reveal_fraction: float = 0.5

    def __post_init__(self):
        if self.t_y is None:
            object.__setattr__(self, "t_y", self.params.t_x)
        if self.eps_y is None:
            object.__setattr__(self, "eps_y", self.params.eps_x)
        if not 0.0 < self.t_y <= 1.0:
            raise ParamError("t_y", f"value {self.t_y!r} outside valid range 0 < t_y <= 1")
        if not self.eps_y >= 0.0:
            raise ParamError("eps_y", f"value {self.eps_y!r} outside valid range eps_y >= 0")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses <= 0:
            raise ParamError("n_pulses", f"value {self.n_pulses!r} must be a positive integer")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ParamError("seed", f"value {self.seed!r} must be an unsigned 64-bit integer")
        if not 0.0 < self.reveal_fraction < 1.0:
            raise ParamError(
                "reveal_fraction", f"value {self.reveal_fraction!r} outside valid range 0 < f < 1"
            )
        object.__setattr__(self, "n_pulses", int(self.n_pulses))
        object.__setattr__(self, "seed", int(self.seed))


class Estimates(NamedTuple):
    t_x_hat: float
    eps_x_hat: float
    v_y_hat: float


@dataclass(frozen=True)
class SimOutcome:
    """Sifted second moments and the parameters estimated from them.

    ``empirical_cov`` is the x-quadrature block (Alice, Bob) with Alice's
    data rescaled to the entanglement-based picture, so it is directly
    comparable with the detected-state covariance matrix.
    """

    empirical_cov: np.ndarray
    var_y_b: float
    var_signal_x: float
    var_alice_x: float
    t_x_hat: float
    eps_x_hat: float
    v_y_hat: float
    n_x_sifted: int
    n_y_sifted: int
    n_revealed: int

    def as_dict(self):
        return {
            "empirical_cov": self.empirical_cov.tolist(),
            "var_y_b": self.var_y_b,
            "var_signal_x": self.var_signal_x,
            "var_alice_x": self.var_alice_x,
            "t_x_hat": self.t_x_hat,
            "eps_x_hat": self.eps_x_hat,
            "v_y_hat": self.v_y_hat,
            "n_x_sifted": self.n_x_sifted,
            "n_y_sifted": self.n_y_sifted,
            "n_revealed": self.n_revealed,
        }


def alice_gain(p: ProtocolParams) -> float:
    """Ratio of Alice's prepare-and-measure displacement to her EPR-side x outcome."""
    v = ebs_variance(p)
    return math.sqrt((v * v - 1.0) / (p.r * v))


def _streams(seed: int, chunk: int):
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk, i))))
        for i, name in enumerate(COMPONENTS)
    }


def _run_chunk(cfg: SimConfig, chunk: int, n: int):
    p = cfg.params
    g = _streams(cfg.seed, chunk)
    alice_x = g["modulation"].normal(0.0, math.sqrt(p.v_mod), n)
    sig_x = alice_x + g["state_noise"].normal(0.0, math.sqrt(1.0 / p.r), n)
    sig_y = g["state_noise"].normal(0.0, math.sqrt(p.r), n)

    out_x = math.sqrt(p.t_x) * sig_x + g["channel_noise"].normal(
        0.0, math.sqrt(1.0 - p.t_x + p.t_x * p.eps_x), n
    )
    out_y = math.sqrt(cfg.t_y) * sig_y + g["channel_noise"].normal(
        0.0, math.sqrt(1.0 - cfg.t_y + cfg.t_y * cfg.eps_y), n
    )

    basis_y = g["basis"].random(n) < 0.5
    quad = np.where(basis_y, out_y, out_x)
    bob = math.sqrt(p.eta) * quad + g["detector_noise"].normal(0.0, math.sqrt(1.0 - p.eta + p.v_el), n)
    reveal = (g["reveal"].random(n) < cfg.reveal_fraction) & ~basis_y
    return alice_x, sig_x, basis_y, bob, reveal


def _raw_records(alice_x, basis_y, bob):
    rec = np.empty((alice_x.size, RAW_FIELDS), dtype="<f8")
    rec[:, 0] = basis_y
    rec[:, 1] = alice_x
    rec[:, 2] = bob
    return rec.tobytes()


def write_raw_header(fh: BinaryIO):
    fh.write(RAW_HEADER.pack(RAW_MAGIC, RAW_VERSION, RAW_FIELDS))


def read_raw(fh: BinaryIO) -> np.ndarray:
    """Parse a raw-sample dump into an ``(n, 3)`` float array."""
    head = fh.read(RAW_HEADER.size)
    if len(head) != RAW_HEADER.size:
        raise ValueError("truncated raw-sample header")
    magic, version, nfields = RAW_HEADER.unpack(head)
    if magic != RAW_MAGIC or version != RAW_VERSION or nfields != RAW_FIELDS:
        raise ValueError("not a raw-sample dump of a supported version")
    body = fh.read()
    if len(body) % (8 * RAW_FIELDS):
        raise ValueError("raw-sample body is not a whole number of records")
    return np.frombuffer(body, dtype="<f8").reshape(-1, RAW_FIELDS)


def _estimate(p: ProtocolParams, n_rev, saa, sab, sbb, n_y, syy) -> Estimates:
    if n_rev < MIN_REVEALED:
        raise ValueError(f"need at least {MIN_REVEALED} revealed pairs, got {n_rev}")
    if n_y <= 0:
        raise ValueError("no phase-quadrature measurements to estimate V_y from")
    v_y_hat = syy / n_y / p.eta - noise_budget(p).chi_hom
    if saa <= 0.0:
        # No modulation: the channel is not identifiable from x data.
        return Estimates(math.nan, math.nan, v_y_hat)
    slope = sab / saa
    t_hat = slope * slope / p.eta
    resid = (sbb - slope * sab) / n_rev
    eps_hat = (resid - p.eta * t_hat / p.r - p.eta * (1.0 - t_hat) - (1.0 - p.eta) - p.v_el) / (p.eta * t_hat)
    return Estimates(t_hat, eps_hat, v_y_hat)


def estimate_params(p: ProtocolParams, alice_x, bob_x, bob_y) -> Estimates:
    """Estimate channel parameters from revealed x pairs and Bob's y data.

    Moments are taken about zero because every quadrature is known to be
    centred. The transmission follows from the regression slope
    ``sqrt(eta * T_x)``; the excess noise is whatever residual variance the
    loss, state noise and detector model leave unexplained.
    """
    a = np.asarray(alice_x, dtype=float)
    b = np.asarray(bob_x, dtype=float)
    y = np.asarray(bob_y, dtype=float)
    if a.shape != b.shape:
        raise ValueError("alice_x and bob_x must pair up")
    return _estimate(
        p, a.size, math.fsum(a * a), math.fsum(a * b), math.fsum(b * b), y.size, math.fsum(y * y)
    )


def simulate(cfg: SimConfig, raw_out: BinaryIO | None = None) -> SimOutcome:
    p = cfg.params
    keys = ("n_x", "n_y", "n_rev", "sig2", "a2", "ab", "b2", "ra2", "rab", "rb2", "y2")
    parts = {k: [] for k in keys}
    if raw_out is not None:
        write_raw_header(raw_out)

    n_chunks = -(-cfg.n_pulses // CHUNK)
    for c in range(n_chunks):
        n = min(CHUNK, cfg.n_pulses - c * CHUNK)
        alice_x, sig_x, basis_y, bob, reveal = _run_chunk(cfg, c, n)
        if raw_out is not None:
            raw_out.write(_raw_records(alice_x, basis_y, bob))
        xs = ~basis_y
        a, b = alice_x[xs], bob[xs]
        ra, rb = alice_x[reveal], bob[reveal]
        y = bob[basis_y]
        for k, v in (
            ("n_x", a.size), ("n_y", y.size), ("n_rev", ra.size),
            ("sig2", np.dot(sig_x, sig_x)), ("a2", np.dot(a, a)), ("ab", np.dot(a, b)),
            ("b2", np.dot(b, b)), ("ra2", np.dot(ra, ra)), ("rab", np.dot(ra, rb)),
            ("rb2", np.dot(rb, rb)), ("y2", np.dot(y, y)),
        ):
            parts[k].append(v)

    tot = {k: (sum(v) if k.startswith("n_") else math.fsum(v)) for k, v in parts.items()}
    n_x, n_y = int(tot["n_x"]), int(tot["n_y"])
    if n_x == 0 or n_y == 0:
        raise ValueError("too few pulses: one of the bases was never chosen")
    est = _estimate(p, int(tot["n_rev"]), tot["ra2"], tot["rab"], tot["rb2"], n_y, tot["y2"])

    gain = alice_gain(p) if p.v_mod > 0 else 1.0
    var_a = tot["a2"] / n_x
    cov = np.array(
        [
            [var_a / gain**2, tot["ab"] / n_x / gain],
            [tot["ab"] / n_x / gain, tot["b2"] / n_x],
        ]
    )
    return SimOutcome(
        empirical_cov=cov,
        var_y_b=tot["y2"] / n_y,
        var_signal_x=tot["sig2"] / cfg.n_pulses,
        var_alice_x=var_a,
        t_x_hat=est.t_x_hat,
        eps_x_hat=est.eps_x_hat,
        v_y_hat=est.v_y_hat,
        n_x_sifted=n_x,
        n_y_sifted=n_y,
        n_revealed=int(tot["n_rev"]),
    )
