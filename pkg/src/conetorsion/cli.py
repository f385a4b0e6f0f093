"""Batch experiment runner.

Every subcommand reads an optional JSON config, writes JSON reports and CSV
series into ``--out`` and is deterministic for a fixed config and seed.
Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cmc, geometry, shapeflow, symmetrize, torsion
from ._validation import check_choice, check_int, check_positive
from .exceptions import ConeTorsionError
from .geometry import ConeSpec, PolarGraph
from .mesh import generate_mesh

logger = logging.getLogger("conetorsion")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


# -- config parsing --------------------------------------------------------------

@dataclass
class Context:
    config: dict
    base_dir: Path
    out: Path
    seed: int
    threads: int


def _get(cfg: dict, key: str, default=None, required: bool = False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required field {key!r}")
    return default


def _checked(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _positive(cfg, key, default):
    return _checked(check_positive, key, _get(cfg, key, default))


def _integer(cfg, key, default, minimum=0):
    return _checked(check_int, key, _get(cfg, key, default), minimum)


def _cone(cfg: dict, aperture=None) -> ConeSpec:
    kind = _get(cfg, "kind", "planar")
    if aperture is None:
        aperture = _get(cfg, "aperture", required=True)
    if isinstance(aperture, str):
        aperture = _parse_angle(aperture)
    return _checked(ConeSpec, kind, aperture)


def _parse_angle(text: str) -> float:
    """Angles such as ``"pi/2"``, ``"3*pi/4"`` or ``"0.5"``."""
    expr = text.replace(" ", "").lower()
    num, _, den = expr.partition("/")
    try:
        if "pi" in num:
            coef = num.replace("pi", "").rstrip("*") or "1"
            value = float(coef) * math.pi
        else:
            value = float(num)
        return value / float(den) if den else value
    except ValueError as exc:
        raise ConfigError(f"cannot parse angle {text!r}") from exc


def _profile(cfg: dict, cone: ConeSpec, ctx: Context, seed=None) -> PolarGraph:
    spec = _get(cfg, "profile", {"type": "sector"})
    if not isinstance(spec, dict):
        raise ConfigError("'profile' must be an object")
    kind = _get(spec, "type", "sector")
    n_theta = _integer(spec, "n_theta", 64, minimum=geometry.MIN_N_THETA)
    radius = _positive(spec, "radius", 1.0)
    if kind == "sector":
        g = PolarGraph.constant(cone, radius, n_theta)
    elif kind == "cosine":
        g = _checked(geometry.cosine_profile, cone, radius, float(_get(spec, "amplitude", 0.1)),
                     _integer(spec, "k", 4), n_theta)
    elif kind == "random":
        rng = np.random.default_rng(ctx.seed if seed is None else seed)
        g = _checked(geometry.random_profile, cone, rng, radius, _integer(spec, "n_modes", 4, 1),
                     n_theta, _positive(spec, "max_amplitude", 0.15))
    elif kind == "file":
        path = ctx.base_dir / str(_get(spec, "path", required=True))
        try:
            g = PolarGraph.from_json(path.read_text())
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read profile {path}: {exc}") from exc
    elif kind == "rho":
        g = _checked(PolarGraph, cone, _get(spec, "rho", required=True))
    else:
        raise ConfigError(f"unknown profile type {kind!r}")
    if _get(spec, "unit_volume", False):
        g = geometry.normalize_volume(g, 1.0)
    return g


def _mesh_settings(cfg: dict):
    return _positive(cfg, "h", 0.02), _positive(cfg, "grading", 2.0)


# -- output helpers --------------------------------------------------------------------

def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


# -- subcommands ---------------------------------------------------------------------------

def cmd_solve(ctx: Context) -> dict:
    cfg = ctx.config
    cone = _cone(cfg)
    g = _profile(cfg, cone, ctx)
    h, grading = _mesh_settings(cfg)
    tol = _positive(cfg, "solver_tol", torsion.DEFAULT_SOLVER_TOL)
    method = _checked(check_choice, "method", _get(cfg, "method", "cg"), {"cg", "direct"})
    mesh = generate_mesh(g, h, grading)
    u = torsion.solve_torsion(mesh, tol, method)
    report = torsion.report_for(u).to_dict()
    report["config"] = {"cone": cone.to_dict(), "h": h, "grading": grading,
                        "solver_tol": tol, "method": method}
    if g.is_sector:
        report["sector_energy_exact"] = -cone.omega_measure() * g.rho[0] ** (cone.dim + 2) / (
            2 * cone.dim * (cone.dim + 2))
    _write_json(ctx.out / "report.json", report)
    u.to_text(ctx.out / "field.txt")
    g.to_json(ctx.out / "profile.json")
    return report


def _run_flow(cfg: dict, g: PolarGraph):
    functional = _checked(check_choice, "functional", _get(cfg, "functional", "torsion"),
                          {"torsion", "perimeter"})
    if functional == "torsion":
        params = shapeflow.MeshParams(_positive(cfg, "h", 0.04), _positive(cfg, "grading", 2.0))
        return functional, shapeflow.flow_torsion(
            g, _integer(cfg, "steps", 200), _positive(cfg, "step_size", 4.0), params,
            _positive(cfg, "solver_tol", torsion.DEFAULT_SOLVER_TOL),
            stationarity_tol=_positive(cfg, "stationarity_tol", 2e-4),
        )
    return functional, shapeflow.flow_perimeter(
        g, _integer(cfg, "steps", 500), _positive(cfg, "gap_tol", 1e-8))


def _flow_summary(functional: str, state: shapeflow.FlowState) -> dict:
    g = state.graph
    cone = g.cone
    radius = cone.sector_radius(geometry.volume(g))
    out = {
        "functional": functional,
        "steps": state.step,
        "converged": state.converged,
        "reason": state.reason,
        "final_value": state.energy_history[-1],
        "final_residual": state.overdetermined_residual_history[-1],
        "volume_drift": state.volume_drift,
        "isoperimetric_gap": geometry.isoperimetric_gap(g),
        "max_rho_deviation": float(np.max(np.abs(g.rho - radius))),
        "sector_radius": radius,
    }
    if functional == "torsion":
        n = cone.dim
        out["sector_energy"] = -cone.omega_measure() * radius ** (n + 2) / (2 * n * (n + 2))
    return out


def cmd_flow(ctx: Context) -> dict:
    cfg = ctx.config
    cone = _cone(cfg)
    g = _profile(cfg, cone, ctx)
    functional, state = _run_flow(cfg, g)
    summary = _flow_summary(functional, state)
    state.to_csv(ctx.out / "history.csv")
    state.graph.to_json(ctx.out / "final_profile.json")
    _write_json(ctx.out / "summary.json", summary)
    return summary


def cmd_symmetrize(ctx: Context) -> dict:
    cfg = ctx.config
    cone = _cone(cfg)
    g = _profile(cfg, cone, ctx)
    h, grading = _mesh_settings(cfg)
    n_bins = _integer(cfg, "n_bins", symmetrize.DEFAULT_BINS, minimum=16)
    powers = _get(cfg, "p", [1.0, 2.0])
    powers = [_checked(check_positive, "p", p) for p in powers]
    if any(p < 1.0 for p in powers):
        raise ConfigError("every p must be >= 1")
    u = torsion.solve_torsion(generate_mesh(g, h, grading))
    profile = symmetrize.decreasing_rearrangement(u, n_bins)
    target = generate_mesh(geometry.sector_of_same_volume(g), h, grading)
    u_star = symmetrize.omega_symmetrize(u, target, n_bins)
    report = {"cone": cone.to_dict(), "h": h, "n_bins": n_bins, "p": {}}
    for p in powers:
        lp = torsion.lp_integral(u, p)
        report["p"][repr(p)] = {
            "polya_szego_gap": symmetrize.polya_szego_gap(u, p, n_bins),
            "lp_source": lp,
            "lp_rearranged": profile.integral(p),
            "lp_relative_difference": profile.integral(p) / lp - 1.0,
        }
    report["tolerances"] = {"polya_szego_gap": 1e-4, "lp_relative": 1e-5}
    report["symmetrized_max"] = float(u_star.values.max())
    profile.to_csv(ctx.out / "rearranged.csv")
    _write_json(ctx.out / "report.json", report)
    return report


def cmd_isoperimetric(ctx: Context) -> dict:
    cfg = ctx.config
    cone = _cone(cfg)
    g = _profile(cfg, cone, ctx)
    report = {
        "cone": cone.to_dict(),
        "is_sector": g.is_sector,
        "volume": geometry.volume(g),
        "relative_perimeter": geometry.relative_perimeter(g),
        "isoperimetric_gap": geometry.isoperimetric_gap(g),
        "tolerances": {"sector_gap": 1e-8},
    }
    _write_json(ctx.out / "report.json", report)
    return report


CMC_TOL = 1e-4


def _cmc_ok(entry: dict) -> bool:
    keys = ("orthogonality_defect", "minkowski1_residual", "umbilicity_gap",
            "minkowski2_residual")
    ok = all(abs(entry[k]) <= CMC_TOL for k in keys if k in entry)
    if entry.get("mean_curvature_identity_gap") is not None:
        ok &= entry["mean_curvature_identity_gap"] <= 1e-6
    fit = entry.get("center_fit")
    return ok and fit is not None and fit["admissible"]


def cmd_cmc(ctx: Context) -> dict:
    cfg = ctx.config
    n = _integer(cfg, "n_samples", 2048, minimum=3)
    entries = []
    for name, curve, graph in cmc.standard_suite(n):
        entry = cmc.verification_report(curve, graph)
        entry["name"] = name
        entry["passed"] = _cmc_ok(entry)
        entries.append(entry)
    extra = []
    if _get(cfg, "include_counterexamples", True):
        tilted = cmc.tilted_arc(math.pi / 2, 0.1, 1.0, n)
        extra.append({"name": "tilted arc pi/2", **cmc.verification_report(tilted),
                      "boundary_term": cmc.minkowski1_boundary_term(tilted)})
        cone = ConeSpec("axisym", math.pi / 4)
        extra.append({"name": "oblate spheroid pi/4",
                      **cmc.verification_report(cmc.spheroid_meridian(cone, 1.0, 0.8, n))})
    report = {"n_samples": n, "tolerance": CMC_TOL, "suite": entries, "counterexamples": extra,
              "all_passed": all(e["passed"] for e in entries)}
    _write_json(ctx.out / "report.json", report)
    if not report["all_passed"]:
        raise ConeTorsionError("a CMC suite surface failed its checks")
    return report


def _apertures(cfg: dict):
    spec = _get(cfg, "apertures", required=True)
    if isinstance(spec, dict):
        start, stop = _parse(spec, "start"), _parse(spec, "stop")
        return list(np.linspace(start, stop, _integer(spec, "num", 5, minimum=1)))
    if not isinstance(spec, list) or not spec:
        raise ConfigError("'apertures' must be a non-empty list or a {start, stop, num} object")
    return [_parse_angle(a) if isinstance(a, str) else float(a) for a in spec]


def _parse(spec, key):
    v = _get(spec, key, required=True)
    return _parse_angle(v) if isinstance(v, str) else float(v)


def cmd_sweep(ctx: Context) -> list:
    cfg = ctx.config
    apertures = _apertures(cfg)
    n_seeds = _integer(cfg, "seeds_per_aperture", 1, minimum=1)
    cones = [_cone(cfg, a) for a in apertures]
    seeds = np.random.SeedSequence(ctx.seed).spawn(len(cones) * n_seeds)
    jobs = []
    for i, cone in enumerate(cones):
        for j in range(n_seeds):
            seed = int(seeds[i * n_seeds + j].generate_state(1, np.uint64)[0])
            jobs.append((cone, seed, _profile(cfg, cone, ctx, seed)))

    def run(job):
        cone, seed, g = job
        functional, state = _run_flow(cfg, g)
        return cone, seed, _flow_summary(functional, state)

    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        results = list(pool.map(run, jobs))  # map preserves sweep order
    header = ["index", "aperture", "seed", "functional", "steps", "converged", "final_value",
              "final_residual", "isoperimetric_gap", "max_rho_deviation", "sector_energy"]
    rows = []
    for k, (cone, seed, s) in enumerate(results):
        rows.append([k, float(cone.aperture), seed, s["functional"], s["steps"], s["converged"],
                     float(s["final_value"]), float(s["final_residual"]),
                     float(s["isoperimetric_gap"]), float(s["max_rho_deviation"]),
                     float(s.get("sector_energy", float("nan")))])
    _write_csv(ctx.out / "sweep.csv", header, rows)
    return rows


COMMANDS = {
    "solve": cmd_solve,
    "flow": cmd_flow,
    "symmetrize": cmd_symmetrize,
    "isoperimetric": cmd_isoperimetric,
    "cmc": cmd_cmc,
    "sweep": cmd_sweep,
}


# -- entry point ---------------------------------------------------------------------------

def _configure_logging():
    level_name = os.environ.get("CONE_TORSION_LOG", "quiet").strip().lower()
    level = LOG_LEVELS.get(level_name, logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("conetorsion").setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conetorsion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed (u64)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        seed = args.seed if args.seed is not None else _get(config, "seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        base = args.config.parent if args.config is not None else Path(".")
        ctx = Context(config, base, args.out, seed, args.threads)
        COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConeTorsionError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
