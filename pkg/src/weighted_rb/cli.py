"""Command line front end: ``weighted-rb {mesh,offline,online,convergence,cache}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import CacheError, ConfigError
from .linalg import SolverError
from .mesh import build_benchmark_mesh, save_mesh
from .rom import BasisExtensionError

EXIT_CONFIG = 2
EXIT_CACHE = 3
EXIT_IO = 4
EXIT_NUMERIC = 5


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", default="desk", choices=sorted(harness.PROFILES))
    p.add_argument("--config", help="key = value file applied on top of the profile")
    for f in dataclasses.fields(harness.ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE")


def _resolve_config(args) -> harness.ExperimentConfig:
    cfg = harness.profile(args.profile)
    if args.config:
        cfg = harness.load_config(args.config, cfg)
    overrides = {}
    for f in dataclasses.fields(harness.ExperimentConfig):
        raw = getattr(args, "cfg_" + f.name, None)
        if raw is not None:
            try:
                overrides[f.name] = harness.parse_value(f.name, raw)
            except ConfigError as exc:
                raise ConfigError(f"--{f.name.replace('_', '-')}: {exc}") from None
    return cfg.replace(**overrides) if overrides else cfg


def _parse_xi(text: str, dim: int) -> np.ndarray:
    try:
        xi = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"--xi: cannot parse {text!r} as comma-separated floats") from exc
    if xi.size != dim:
        raise ConfigError(f"--xi: expected {dim} values, got {xi.size}")
    return xi


def cmd_mesh(args) -> int:
    cfg = _resolve_config(args)
    mesh = build_benchmark_mesh(cfg.mesh_h)
    path = Path(args.output or Path(cfg.output_dir) / "mesh.txt")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, path)
    print(f"mesh h={cfg.mesh_h!r} nodes={mesh.n_nodes} triangles={len(mesh.triangles)} -> {path}")
    return 0


def cmd_offline(args) -> int:
    cfg = _resolve_config(args)
    result, rom_path, trace_path = harness.run_offline(cfg)
    last = result.trace.steps[-1]
    print(f"N={last.N} Ntilde={last.N_dual} estimator_max={last.estimator_max:.6e}")
    print(f"rom -> {rom_path}")
    print(f"trace -> {trace_path}")
    return 0


def cmd_online(args) -> int:
    rm, _ = harness.load_reduced_model(args.rom)
    dim = rm.sqrt_lam.size + 1
    if args.xi_ref:
        xi = np.append(np.zeros(dim - 1), args.xi_in_ref)
    elif args.xi:
        xi = _parse_xi(args.xi, dim)
    else:
        raise ConfigError("online: pass --xi or --xi-ref")
    report = harness.online_report(rm, xi)
    if not report["in_support"]:
        print("warning: parameter lies outside the support of the density", file=sys.stderr)
    clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in report.items()}
    print(json.dumps(clean, indent=2))
    return 0


def cmd_convergence(args) -> int:
    cfg = _resolve_config(args)
    data = harness.run_convergence(cfg)
    out = Path(cfg.output_dir)
    print("N,rms_nonweighted,rms_weighted,rms_pod_projection,out_nonweighted,out_weighted")
    for row in zip(data.n_values, data.rms_nonweighted, data.rms_weighted,
                   data.rms_pod_projection, data.out_nonweighted, data.out_weighted):
        print(f"{row[0]}," + ",".join(f"{v:.6e}" for v in row[1:]))
    print(f"csv -> {out}/fig2.csv {out}/fig3a.csv {out}/fig3b.csv")
    return 0


def cmd_cache(args) -> int:
    cfg = _resolve_config(args)
    path = Path(args.path) if args.path else harness.cache_path(cfg)
    if args.action == "build":
        cache = harness.snapshot_cache_build(harness.build_problem(cfg), path, reuse=not args.force)
        print(f"cache {path} samples={cache.primal.shape[0]} digest={cache.digest[:16]}")
    elif args.action == "verify":
        if not path.exists():
            raise CacheError(f"{path}: no snapshot cache")
        cache = harness.SnapshotCache.load(path, cfg.snapshot_digest())
        print(f"cache {path} ok digest={cache.digest[:16]}")
    else:
        print(f"{path} digest={cfg.snapshot_digest()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weighted-rb", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build and export the benchmark mesh")
    _add_config_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("offline", help="POD-greedy construction, writes the ROM and trace")
    _add_config_flags(p)
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="evaluate a stored ROM at one parameter")
    p.add_argument("rom")
    p.add_argument("--xi", help="comma-separated xi_out values followed by xi_in")
    p.add_argument("--xi-ref", action="store_true", help="use the reference parameter")
    p.add_argument("--xi-in-ref", type=float, default=0.1)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("convergence", help="Monte Carlo error curves (fig2/fig3a/fig3b CSVs)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("cache", help="build, verify or locate the snapshot cache")
    p.add_argument("action", choices=("build", "verify", "digest"))
    p.add_argument("--path")
    p.add_argument("--force", action="store_true", help="rebuild even if the file exists")
    _add_config_flags(p)
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CacheError as exc:
        print(f"error[cache]: {exc}", file=sys.stderr)
        return EXIT_CACHE
    except (SolverError, BasisExtensionError, FloatingPointError) as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error[input]: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
