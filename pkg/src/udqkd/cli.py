"""Command-line front end.

Scenario files are flat ``key = value`` text; ``#`` starts a comment. Every
key can also be given as a flag of the same name (``--v_mod 3`` or
``--v-mod 3``); flags win over the file, the file wins over the defaults.
Grids are written ``start:stop:count`` (inclusive, evenly spaced) or as a
comma-separated list.

Outputs are CSV files whose leading ``#`` lines record the fully resolved
configuration. ``--json`` additionally writes a JSON mirror next to the CSV.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .pm_simulator import SimConfig, simulate
from .protocol import ParamError, ProtocolParams, build_gamma_abrh, ebs_variance, noise_budget, PhaseHypothesis
from .security import (
    distance_to_transmission,
    expected_vy,
    min_key_rate_expected,
    min_key_rate_expected_many,
    parabola,
    safe_line,
)

PARAM_KEYS = [f.name for f in fields(ProtocolParams)]


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def parse_grid(text: str) -> list[float]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("grid must look like start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        values = np.linspace(start, stop, count).tolist()
    else:
        values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError("grid is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("grid must be strictly increasing")
    return values


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _opt_grid(text):
    return None if str(text).strip().lower() in ("", "none") else parse_grid(text)


def _opt_str(text):
    return None if str(text).strip().lower() in ("", "none") else str(text).strip()


# key -> (parser, default)
SCHEMA = {
    **{k: (float, getattr(ProtocolParams(), k)) for k in PARAM_KEYS},
    "eps_y": (_opt_float, None),
    "t_y": (_opt_float, None),
    "atten": (float, 0.2),
    "distances": (parse_grid, parse_grid("0:60:61")),
    "r_grid": (parse_grid, [0.6, 0.8, 1.0, 1.2, 1.4]),
    "v_y_grid": (_opt_grid, None),
    "n_pulses": (int, 1_000_000),
    "seed": (int, 0),
    "reveal_fraction": (float, 0.5),
    "raw": (_opt_str, None),
}


def read_config(path) -> dict:
    """Parse a ``key = value`` scenario file into raw strings."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown configuration key")
        raw[key] = value
    return raw


def resolve(raw: dict) -> dict:
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    for key, value in raw.items():
        parser, _ = SCHEMA[key]
        try:
            cfg[key] = parser(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None
    if not cfg["atten"] > 0:
        raise ConfigError("atten", f"value {cfg['atten']!r} outside valid range atten > 0")
    if cfg["eps_y"] is not None and not cfg["eps_y"] >= 0:
        raise ConfigError("eps_y", f"value {cfg['eps_y']!r} outside valid range eps_y >= 0")
    if any(d < 0 for d in cfg["distances"]):
        raise ConfigError("distances", "distances must be >= 0")
    if any(r <= 0 for r in cfg["r_grid"]):
        raise ConfigError("r_grid", "every r must be > 0")
    return cfg


def params_of(cfg: dict, **over) -> ProtocolParams:
    return ProtocolParams(**{k: over.get(k, cfg[k]) for k in PARAM_KEYS})


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return "none" if v is None else str(v)


class Table:
    def __init__(self, command: str, cfg: dict, columns: list[str]):
        self.command = command
        self.cfg = cfg
        self.columns = columns
        self.rows: list[list] = []

    def add(self, *row):
        self.rows.append(list(row))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# udqkd {__version__} {self.command}\n")
        for k in sorted(self.cfg):
            buf.write(f"# {k} = {_fmt(self.cfg[k])}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                v = float(v)
                return v if math.isfinite(v) else None
            if isinstance(v, np.bool_):
                return bool(v)
            return v

        doc = {
            "command": self.command,
            "config": {k: self.cfg[k] for k in sorted(self.cfg)},
            "columns": self.columns,
            "rows": [[clean(v) for v in row] for row in self.rows],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def cmd_keyrate(cfg: dict) -> Table:
    p = params_of(cfg)
    nb = noise_budget(p)
    par = parabola(p)
    vy = expected_vy(p, cfg["eps_y"])
    kp = min_key_rate_expected(p, cfg["eps_y"])
    t = Table("keyrate", cfg, ["quantity", "value"])
    for name, value in [
        ("V", ebs_variance(p)),
        ("chi_linex", nb.chi_linex),
        ("chi_hom", nb.chi_hom),
        ("chi_totx", nb.chi_totx),
        ("c0", par.c0),
        ("v0", par.v0),
        ("k", par.k),
        ("v_y_expected", vy),
        ("i_ab", kp.i_ab),
        ("chi_be", kp.chi_be),
        ("delta_i_min", kp.delta_i),
        ("c_y_min", kp.c_y_at_min),
        ("on_boundary", kp.on_boundary),
    ]:
        t.add(name, float(value) if not isinstance(value, bool) else value)
    return t


def default_vy_grid(p: ProtocolParams, eps_y=None, n=61) -> list[float]:
    v0 = float(parabola(p).v0)
    span = 10.0 * max(float(expected_vy(p, eps_y)) - v0, 0.0) or 0.05
    return np.linspace(v0, v0 + span, n).tolist()


def cmd_region(cfg: dict) -> Table:
    p = params_of(cfg)
    par = parabola(p)
    grid = cfg["v_y_grid"] or default_vy_grid(p, cfg["eps_y"])
    if grid[0] < float(par.v0) - 1e-12:
        raise ConfigError("v_y_grid", f"values must be >= the parabola vertex {float(par.v0)!r}")
    vy_exp = float(expected_vy(p, cfg["eps_y"]))
    t = Table(
        "region",
        cfg,
        ["v_y", "c_lower", "c_upper", "c_safe", "delta_i_min", "chi_be", "on_boundary", "v_y_expected"],
    )
    for v, kp in zip(grid, safe_line(p, grid)):
        hw = float(par.half_width(v))
        t.add(v, float(par.c0) - hw, float(par.c0) + hw, kp.c_y_at_min, kp.delta_i, kp.chi_be,
              kp.on_boundary, vy_exp)
    return t


def cmd_sweep_distance(cfg: dict) -> Table:
    dist = cfg["distances"]
    tx = distance_to_transmission(np.array(dist), cfg["atten"])
    t = Table("sweep-distance", cfg,
              ["distance_km", "t_x", "r", "v_y", "c_y_min", "i_ab", "chi_be", "delta_i_min", "on_boundary"])
    for r in cfg["r_grid"]:
        ps = [params_of(cfg, r=r, t_x=float(x)) for x in tx]
        for d, x, kp in zip(dist, tx, min_key_rate_expected_many(ps, cfg["eps_y"])):
            t.add(d, float(x), r, kp.v_y, kp.c_y_at_min, kp.i_ab, kp.chi_be, kp.delta_i, kp.on_boundary)
    return t


def cmd_sweep_r(cfg: dict) -> Table:
    ps = [params_of(cfg, r=r) for r in cfg["r_grid"]]
    pts = min_key_rate_expected_many(ps, cfg["eps_y"])
    t = Table("sweep-r", cfg,
              ["r", "V", "c0", "v0", "k", "v_y_expected", "c_y_min", "i_ab", "chi_be", "delta_i_min", "on_boundary"])
    for p, kp in zip(ps, pts):
        par = parabola(p)
        t.add(p.r, float(ebs_variance(p)), float(par.c0), float(par.v0), float(par.k), kp.v_y,
              kp.c_y_at_min, kp.i_ab, kp.chi_be, kp.delta_i, kp.on_boundary)
    return t


def cmd_simulate(cfg: dict) -> Table:
    p = params_of(cfg)
    sc = SimConfig(params=p, t_y=cfg["t_y"], eps_y=cfg["eps_y"], n_pulses=cfg["n_pulses"],
                   seed=cfg["seed"], reveal_fraction=cfg["reveal_fraction"])
    if cfg["raw"]:
        with open(cfg["raw"], "wb") as fh:
            out = simulate(sc, raw_out=fh)
    else:
        out = simulate(sc)

    # Analytic values from the detected-state covariance with the true V_y.
    true_vy = sc.t_y * (p.r + (1.0 - sc.t_y) / sc.t_y + sc.eps_y)
    ab = build_gamma_abrh(p, PhaseHypothesis(true_vy, 0.0))
    n_x, n_y = out.n_x_sifted, out.n_y_sifted
    va, vb, cab = ab[0, 0], ab[2, 2], ab[0, 2]
    rows = [
        ("var_alice_x", out.empirical_cov[0, 0], va, va * math.sqrt(2.0 / n_x)),
        ("cov_alice_bob_x", out.empirical_cov[0, 1], cab, math.sqrt((va * vb + cab * cab) / n_x)),
        ("var_bob_x", out.empirical_cov[1, 1], vb, vb * math.sqrt(2.0 / n_x)),
        ("var_bob_y", out.var_y_b, ab[3, 3], ab[3, 3] * math.sqrt(2.0 / n_y)),
        ("var_signal_x", out.var_signal_x, p.v_mod + 1.0 / p.r,
         (p.v_mod + 1.0 / p.r) * math.sqrt(2.0 / sc.n_pulses)),
        ("t_x_hat", out.t_x_hat, p.t_x, math.nan),
        ("eps_x_hat", out.eps_x_hat, p.eps_x, math.nan),
        ("v_y_hat", out.v_y_hat, true_vy, math.nan),
    ]
    t = Table("simulate", cfg, ["quantity", "empirical", "analytic", "delta", "stderr", "z"])
    for name, emp, ana, se in rows:
        emp, ana = float(emp), float(ana)
        z = (emp - ana) / se if se > 0 else math.nan
        t.add(name, emp, ana, emp - ana, float(se), z)
    t.add("n_x_sifted", float(n_x), math.nan, math.nan, math.nan, math.nan)
    t.add("n_y_sifted", float(n_y), math.nan, math.nan, math.nan, math.nan)
    t.add("n_revealed", float(out.n_revealed), math.nan, math.nan, math.nan, math.nan)
    return t


COMMANDS = {
    "keyrate": cmd_keyrate,
    "region": cmd_region,
    "sweep-distance": cmd_sweep_distance,
    "sweep-r": cmd_sweep_r,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="udqkd", description="UD CV-QKD key-rate tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="scenario file (key = value lines)")
        sp.add_argument("--out", help="output CSV path (default: stdout)")
        sp.add_argument("--json", action="store_true", help="also write a JSON mirror")
        for key in SCHEMA:
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            sp.add_argument(*flags, dest=key, default=None, metavar="VALUE")
    return parser


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    raw = read_config(args.config) if args.config else {}
    raw.update({k: getattr(args, k) for k in SCHEMA if getattr(args, k) is not None})
    cfg = resolve(raw)
    params_of(cfg)  # validate early, before any work
    table = COMMANDS[args.command](cfg)
    csv_text = table.to_csv()
    if args.out:
        out = Path(args.out)
        out.write_text(csv_text)
        if args.json:
            out.with_suffix(".json").write_text(table.to_json())
    else:
        stdout.write(table.to_json() if args.json else csv_text)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ParamError, ConfigError) as exc:
        sys.stderr.write(f"error\tfield={exc.field}\tmessage={json.dumps(exc.message)}\n")
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        sys.stderr.write(f"error\tfield=-\tmessage={json.dumps(str(exc))}\n")
        return 1
