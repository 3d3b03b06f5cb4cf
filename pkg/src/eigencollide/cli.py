"""Command-line entry point.

Every run writes its payload files plus ``manifest.json`` into ``--out``;
``replay`` re-executes a manifest and reproduces the payload bytes.
Exit codes: 0 success, 1 configuration error, 2 numerical or resource
error, 3 inconclusive resolution.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .collision import (CollisionConfig, detect_collision, estimate_probability, monotonicity_violations,
                        phase_header, records_digest, with_hurst)
from .dimension import empirical_dimension
from .errors import ConfigError, EigenCollideError, InconclusiveResolutionError, NumericalError, ResourceError
from .field import FRACTIONAL_SHEET, ISOTROPIC_FBM, CovarianceKernel, GridSpec, sample_field, structure_check
from .io import fmt, write_csv, write_json
from .matrix import ProcessConfig, assemble_path
from .spectral import eigh_batch, spectrum_path_header, spectrum_path_rows
from .strata import format_strata_table, verify_strata

COMMANDS = ("sample-field", "check-kernel", "simulate", "scan", "dim", "verify-strata")
NEEDS_K = ("simulate", "scan", "dim")
SEED_ENV = "EIGENCOLLIDE_SEED"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _interval(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise ConfigError("interval must be A,B")
    return vals


def _kernel(text):
    if text not in (ISOTROPIC_FBM, FRACTIONAL_SHEET):
        raise ConfigError(f"kernel must be {ISOTROPIC_FBM} or {FRACTIONAL_SHEET}")
    return text


def _format(text):
    if text not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    return text


CONVERTERS = {
    "beta": _int, "d": _int, "k": _ints, "n": _int, "hurst": _floats, "kernel": _kernel,
    "interval": _interval, "grid": _ints, "paths": _int, "eps": _floats, "refine": _int,
    "seed": _int, "out": str, "format": _format, "threads": _int, "dmax": _int, "samples": _int,
    "window": _int, "allow_inconclusive": _bool,
}

DEFAULTS = {
    "beta": 1, "d": 2, "k": None, "n": 1, "hurst": [0.25], "kernel": ISOTROPIC_FBM,
    "interval": [1.0, 2.0], "grid": [64], "paths": 200, "eps": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
    "refine": 6, "seed": 0, "out": ".", "format": "csv", "threads": None, "dmax": 6, "samples": 20,
    "window": 16, "allow_inconclusive": False,
}


def _common(parser):
    s = argparse.SUPPRESS
    parser.add_argument("--beta", type=str, default=s, help="1 (real symmetric) or 2 (Hermitian)")
    parser.add_argument("--d", type=str, default=s, help="matrix size")
    parser.add_argument("--k", type=str, default=s, help="collision multiplicity (list for scan)")
    parser.add_argument("--n", type=str, default=s, help="time dimension N")
    parser.add_argument("--hurst", type=str, default=s, help="Hurst indices F[,F...]")
    parser.add_argument("--kernel", type=str, default=s, help=f"{ISOTROPIC_FBM} or {FRACTIONAL_SHEET}")
    parser.add_argument("--interval", type=str, default=s, help="A,B for the cube [A,B]^N")
    parser.add_argument("--grid", type=str, default=s, help="points per axis INT[,INT...]")
    parser.add_argument("--paths", type=str, default=s, help="replicates (dim: flagged paths)")
    parser.add_argument("--eps", type=str, default=s, help="decreasing gap thresholds")
    parser.add_argument("--refine", type=str, default=s, help="refinement depth")
    parser.add_argument("--seed", type=str, default=s, help="master seed")
    parser.add_argument("--out", type=str, default=s, help="output directory")
    parser.add_argument("--format", type=str, default=s, help="csv or json")
    parser.add_argument("--threads", type=str, default=s, help="worker processes")
    parser.add_argument("--config", type=str, default=s, help="INI file with [defaults]/[command] sections")


def build_parser():
    parser = Parser(prog="eigencollide", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _common(p)
        if name == "verify-strata":
            p.add_argument("--dmax", type=str, default=argparse.SUPPRESS)
            p.add_argument("--samples", type=str, default=argparse.SUPPRESS)
        if name == "scan":
            p.add_argument("--allow-inconclusive", action="store_const", const="true",
                           default=argparse.SUPPRESS, help="report cells instead of exiting 3")
        if name == "dim":
            p.add_argument("--window", type=str, default=argparse.SUPPRESS)
    rp = sub.add_parser("replay")
    rp.add_argument("manifest")
    rp.add_argument("--out", type=str, default=argparse.SUPPRESS)
    return parser


def read_config_file(path, command):
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for section in ("defaults", command):
        if cp.has_section(section):
            for key, val in cp.items(section):
                key = key.replace("-", "_")
                if key not in CONVERTERS:
                    raise ConfigError(f"unknown config key {key!r} in [{section}]")
                values[key] = val
    return values


def resolve(command, flags, env=None):
    """Merge built-in defaults, the environment seed, the config file and flags (later wins)."""
    env = os.environ if env is None else env
    cfg = dict(DEFAULTS)
    raw = {}
    if SEED_ENV in env:
        raw["seed"] = env[SEED_ENV]
    if "config" in flags:
        raw.update(read_config_file(flags["config"], command))
    raw.update({k: v for k, v in flags.items() if k != "config"})
    for key, val in raw.items():
        cfg[key] = CONVERTERS[key](val)
    if command in NEEDS_K and cfg["k"] is None:
        raise ConfigError(f"{command} requires --k")
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def _kernel_from(cfg):
    n = cfg["n"]
    h = cfg["hurst"]
    if len(h) == 1:
        h = h * n
    if len(h) != n:
        raise ConfigError(f"--hurst needs 1 or {n} values")
    return CovarianceKernel(cfg["kernel"], tuple(h))


def _grid_from(cfg):
    n = cfg["n"]
    res = cfg["grid"]
    if len(res) == 1:
        res = res * n
    if len(res) != n:
        raise ConfigError(f"--grid needs 1 or {n} values")
    lo, hi = cfg["interval"]
    return GridSpec((lo,) * n, (hi,) * n, tuple(res))


def _process_from(cfg):
    return ProcessConfig(cfg["beta"], cfg["d"], _kernel_from(cfg), _grid_from(cfg), seed=cfg["seed"])


def _single_k(cfg):
    if len(cfg["k"]) != 1:
        raise ConfigError("this command takes a single --k")
    return cfg["k"][0]


def cmd_sample_field(cfg, out):
    kern, grid = _kernel_from(cfg), _grid_from(cfg)
    f = sample_field(kern, grid, cfg["seed"])
    if cfg["format"] == "csv":
        return [f.to_csv(out / "field.csv")]
    return [write_json(out / "field.json", {"kernel": kern.kind, "hurst": list(kern.hurst.h),
                                            "seed_path": list(f.seed_path), "points": grid.points(),
                                            "values": f.values})]


def cmd_check_kernel(cfg, out):
    kern, grid = _kernel_from(cfg), _grid_from(cfg)
    rep = structure_check(kern, grid, seed=cfg["seed"])
    payload = {"kernel": kern.kind, "hurst": list(kern.hurst.h), "c1": rep.c1, "c2": rep.c2, "c3": rep.c3,
               "c4": rep.c4, "n_pairs": rep.n_pairs, "passed": rep.passed, "failure": rep.failure}
    print(("PASS" if rep.passed else "FAIL") + f" c1={rep.c1:.6g} c2={rep.c2:.6g} c3={rep.c3:.6g} c4={rep.c4:.6g}")
    if cfg["format"] == "csv":
        return [write_csv(out / "kernel.csv", list(payload), [list(payload.values())])]
    return [write_json(out / "kernel.json", payload)]


def cmd_simulate(cfg, out):
    proc = _process_from(cfg)
    k = _single_k(cfg)
    path = assemble_path(proc, 0)
    rec = detect_collision(path, k, cfg["eps"], cfg["refine"], replicate=0)
    vals = eigh_batch(path.matrices())
    n = proc.grid.n
    record = {"replicate": rec.replicate, "eps": list(rec.eps), "flags": list(rec.flags),
              "indeterminate": list(rec.indeterminate), "argmin": list(rec.argmin), "min_gap": rec.min_gap,
              "grid_min_gap": rec.grid_min_gap, "modulus": rec.modulus, "n_refined": rec.n_refined}
    if cfg["format"] == "csv":
        return [path.to_csv(out / "path.csv"),
                write_csv(out / "spectrum.csv", spectrum_path_header(n, proc.d, [k]),
                          spectrum_path_rows(path.points, vals, [k])),
                write_csv(out / "collision.csv", list(record),
                          [[";".join(map(fmt, v)) if isinstance(v, list) else v for v in record.values()]])]
    return [write_json(out / "path.json", {"manifest": path.manifest(), "points": path.points,
                                           "entries": path.entries, "eigenvalues": vals, "collision": record})]


def cmd_scan(cfg, out):
    # each --hurst value is one isotropic cell; the first one seeds the base config
    proc = _process_from(dict(cfg, hurst=cfg["hurst"][:1]))
    base = CollisionConfig(proc, cfg["k"][0], tuple(cfg["eps"]),
                           cfg["refine"], cfg["paths"], cfg["seed"])
    mode = "report" if cfg["allow_inconclusive"] else "raise"
    cells = []
    for k in cfg["k"]:
        for h in cfg["hurst"]:
            c = with_hurst(base, (h,) * proc.kernel.n, k)
            cells.append(estimate_probability(c, cfg["threads"], mode))
    for c in cells:
        print(f"beta={c.beta} d={c.d} k={c.k} H={','.join(f'{x:g}' for x in c.hurst)} Q={c.q:.6g} "
              f"threshold={c.threshold:g} {c.regime} estimate={c.estimate:.4g} "
              f"CI=[{c.ci_low:.4g}, {c.ci_high:.4g}]")
    if cfg["format"] == "csv":
        rows = [r for c in cells for r in c.csv_rows()]
        return [write_csv(out / "phase.csv", phase_header(proc.kernel.n), rows)]
    payload = {"config": base.to_dict(), "cells": [c.to_dict() for c in cells],
               "records_digest": records_digest([r for c in cells for r in c.records]),
               "monotonicity_violations": [[list(a), list(b)] for a, b in monotonicity_violations(cells)]}
    return [write_json(out / "phase.json", payload)]


def cmd_dim(cfg, out):
    proc = _process_from(cfg)
    res = empirical_dimension(proc, _single_k(cfg), paths=cfg["paths"], eps=cfg["eps"][0],
                              refine_depth=cfg["refine"], window=cfg["window"])
    print(f"theory={res.theory.value:.6g} ell0={res.theory.ell0} box_estimate={res.box.slope:.6g} "
          f"residual={res.box.residual:.3g} paths={res.paths}/{res.replicates_tried}")
    if cfg["format"] == "csv":
        return [write_csv(out / "boxes.csv", ["scale", "occupied"], res.csv_rows())]
    payload = res.to_dict()
    payload["scales"] = res.box.scales
    payload["occupied"] = res.box.counts
    return [write_json(out / "dim.json", payload)]


def cmd_verify_strata(cfg, out):
    rows = verify_strata(cfg["dmax"], cfg["samples"], cfg["seed"])
    print(format_strata_table(rows))
    if not all(r["pass"] for r in rows):
        raise NumericalError("stratum rank certification failed")
    if cfg["format"] == "csv":
        return [write_csv(out / "strata.csv", list(rows[0]), [list(r.values()) for r in rows])]
    return [write_json(out / "strata.json", rows)]


HANDLERS = {"sample-field": cmd_sample_field, "check-kernel": cmd_check_kernel, "simulate": cmd_simulate,
            "scan": cmd_scan, "dim": cmd_dim, "verify-strata": cmd_verify_strata}


def _stamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def execute(command, cfg, out_dir=None):
    out = Path(out_dir if out_dir is not None else cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    started = _stamp()
    outputs = HANDLERS[command](cfg, out)
    manifest = {"command": command, "config": cfg, "seed": cfg["seed"], "version": __version__,
                "started": started, "finished": _stamp(), "outputs": [p.name for p in outputs]}
    write_json(out / "manifest.json", manifest)
    return manifest


def replay(manifest_path, out_dir=None):
    try:
        m = json.loads(Path(manifest_path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from None
    if m.get("command") not in HANDLERS:
        raise ConfigError("manifest names an unknown command")
    cfg = dict(DEFAULTS)
    cfg.update(m["config"])
    return execute(m["command"], cfg, out_dir if out_dir is not None else Path(manifest_path).parent)


def run(argv=None, env=None):
    try:
        args = vars(build_parser().parse_args(argv))
    except UsageError:
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    command = args.pop("command")
    try:
        if command == "replay":
            replay(args["manifest"], args.get("out"))
        else:
            execute(command, resolve(command, args, env))
    except InconclusiveResolutionError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ResourceError, EigenCollideError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
