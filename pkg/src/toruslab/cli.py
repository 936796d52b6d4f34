"""Command-line driver: ``toruslab --config run.json [--out DIR] [--threads N] [--verbose]``.

The configuration is a single JSON document whose ``command`` field selects
the job.  Each run writes ``report.json`` (sorted keys, config hash, seeds)
and, for tabular results, ``detail.csv``.  Exit codes: 0 pass, 1 a checked
property failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .control import control_cost_bound_check, export_samples, synthesize_control, verify_terminal, write_control_csv
from .estimates import dispersive_scan, growth_exponents, resolvent_ratio_scan, tail_slope, zygmund_scan
from .floquet import build_floquet, rough_potential_1d
from .geometry import hitting_fraction, inscribed_square, lemma_geom_bruteforce, rational_hitting_lowerbound
from .hamiltonian import SpectralProjectorSpec, build_hamiltonian, propagate, rough_potential, split_step
from .lowfreq import ModelSystem, assemble_constant, verify_elimination
from .observability import build_gramian, shell_observability_scan
from .torus import FourierField, ObservationRegion, TorusGeometry

log = logging.getLogger("toruslab")

COMMANDS = ("simulate", "gramian", "control", "scan-zygmund", "scan-resolvent", "scan-dispersive",
            "verify-geom", "scan-shells", "lowfreq", "hitting")


class ConfigError(ValueError):
    pass


# config parsing ----------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _geometry(cfg: dict) -> TorusGeometry:
    g = cfg.get("geometry", {})
    try:
        return TorusGeometry(float(g.get("A", 2 * math.pi)), float(g.get("B", 2 * math.pi)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _region(cfg: dict, geometry: TorusGeometry) -> ObservationRegion:
    spec = cfg.get("region", "half")
    A, B = geometry.period_x, geometry.period_y
    presets = {"full": [(0, A, 0, B)], "half": [(0, A / 2, 0, B)], "quarter": [(0, A / 2, 0, B / 2)]}
    rects = presets.get(spec) if isinstance(spec, str) else spec
    if rects is None:
        raise ConfigError(f"unknown region preset {spec!r}")
    try:
        region = ObservationRegion(tuple(tuple(float(v) for v in r) for r in rects))
        region.validate(geometry)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid region: {exc}") from exc
    return region


def read_coefficient_csv(path: str | Path, geometry: TorusGeometry) -> FourierField:
    """Plain coefficients from a CSV with columns ``n1, n2, re, im``."""
    amps = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            amps[(int(row["n1"]), int(row["n2"]))] = complex(float(row["re"]), float(row["im"]))
    L = max((max(abs(a), abs(b)) for a, b in amps), default=0)
    return FourierField.from_plain(geometry, L, amps)


def _potential(cfg: dict, geometry: TorusGeometry, key: str = "potential") -> FourierField | None:
    spec = cfg.get(key, "zero")
    if spec in (None, "zero"):
        return None
    if spec == "cos_x":
        return FourierField.from_plain(geometry, 1, {(1, 0): 1, (-1, 0): 1})
    if spec == "cos_xy":
        return FourierField.from_plain(geometry, 1, {(1, 0): 1, (-1, 0): 1, (0, 1): 1, (0, -1): 1})
    if isinstance(spec, dict):
        if "constant" in spec:
            return FourierField.constant(geometry, 0, float(spec["constant"]))
        if "file" in spec:
            return read_coefficient_csv(spec["file"], geometry)
        if "random" in spec:
            r = spec["random"]
            seed = _record(cfg, f"{key}.random.seed", int(r.get("seed", 0)))
            return rough_potential(geometry, int(r.get("cutoff", 8)), float(r.get("tail", r.get("eps", 0.1))),
                                   float(r.get("l2", 1.0)), seed)
    raise ConfigError(f"unknown potential specification {spec!r}")


def _potential_1d(cfg: dict, spec, label: str = "potential_1d") -> dict:
    if spec in (None, "zero"):
        return {}
    if spec == "cos":
        return {1: 1.0, -1: 1.0}
    if isinstance(spec, dict) and "random" in spec:
        r = spec["random"]
        seed = _record(cfg, f"{label}.random.seed", int(r.get("seed", 0)))
        return rough_potential_1d(int(r.get("cutoff", 8)), float(r.get("tail", r.get("eps", 0.1))),
                                  float(r.get("l2", 1.0)), seed)
    raise ConfigError(f"unknown 1D potential {spec!r}")


def _state(cfg: dict, geometry: TorusGeometry, N: int) -> FourierField:
    spec = cfg.get("u0", "random")
    if isinstance(spec, str):
        m = re.fullmatch(r"mode\((-?\d+),\s*(-?\d+)\)", spec.strip())
        if m:
            return FourierField.from_dict(geometry, N, {(int(m[1]), int(m[2])): 1.0})
        if spec == "random":
            return FourierField.random(geometry, N, _seed(cfg))
    raise ConfigError(f"unknown initial state {spec!r}")


def _record(cfg: dict, name: str, value: int) -> int:
    cfg.setdefault("_seeds", {})[name] = value
    return value


def _seed(cfg: dict, key: str = "seed", default: int = 0) -> int:
    """Seed from the config, recorded so the report lists every seed actually used."""
    return _record(cfg, key, int(cfg.get(key, default)))


def _need(cfg: dict, key: str, kind: Callable = float):
    if key not in cfg:
        raise ConfigError(f"missing required field {key!r}")
    try:
        return kind(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {key!r}: {exc}") from exc


def _pmap(fn: Callable, items: Iterable, threads: int) -> list:
    """Order-preserving map, optionally over a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# commands ----------------------------------------------------------------------

def cmd_simulate(cfg, threads):
    geo = _geometry(cfg)
    N = _need(cfg, "N", int)
    V = _potential(cfg, geo)
    H = build_hamiltonian(geo, V, N)
    u0 = _state(cfg, geo, N)
    times = [float(t) for t in (cfg["times"] if "times" in cfg else np.linspace(0, _need(cfg, "T"), 11))]
    rows, drift = [], 0.0
    for t in times:
        u = propagate(H, u0, t)
        d = abs(u.norm() - u0.norm())
        drift = max(drift, d)
        row = {"t": t, "norm": u.norm(), "drift": d}
        if cfg.get("split_steps"):
            ss = split_step(geo, V or FourierField.zeros(geo, 0), u0, t, int(cfg["split_steps"]))
            row["split_step_error"] = (ss - u).norm()
        rows.append(row)
    return {"max_norm_drift": drift}, rows, drift <= 1e-10


def cmd_gramian(cfg, threads):
    geo = _geometry(cfg)
    H = build_hamiltonian(geo, _potential(cfg, geo), _need(cfg, "N", int))
    T = _need(cfg, "T")
    G, rep = build_gramian(H, _region(cfg, geo), T, cfg.get("M"))
    mu = np.linalg.eigvalsh(G)
    rows = [{"index": i, "gramian_eigenvalue": float(v)} for i, v in enumerate(mu)]
    ok = (not rep.failed) and rep.lambda_max <= T * (1 + 1e-10)
    return rep.summary(), rows, ok


def cmd_control(cfg, threads):
    geo = _geometry(cfg)
    N = _need(cfg, "N", int)
    T = _need(cfg, "T")
    H = build_hamiltonian(geo, _potential(cfg, geo), N)
    region = _region(cfg, geo)
    u0 = _state(cfg, geo, N)
    sol = synthesize_control(H, region, T, u0, float(cfg.get("tol", 1e-10)))
    _, rep = build_gramian(H, region, T)
    check = control_cost_bound_check(sol, rep, u0)
    uT = verify_terminal(H, region, T, sol, u0, int(cfg.get("verify_steps", 64)))
    summary = dict(sol.summary(), K=rep.K, verified_terminal=uT, cost_check=check["passed"])
    rows = []
    if cfg.get("export_csv", False):
        n = export_samples(sol, u0, float(cfg.get("export_tol", 1e-4)))
        summary["export_samples"] = n
        summary["export_file"] = "control.csv"
        cfg["_control_export"] = (sol, n)
    ok = sol.terminal_norm <= 1e-8 * u0.norm() and uT <= 1e-8 * max(u0.norm(), 1e-300) + 1e-12 and check["passed"]
    return summary, rows, ok


def cmd_scan_zygmund(cfg, threads):
    geo = _geometry(cfg)
    kappas = sorted(float(k) for k in cfg.get("kappa_list", [1, 2, 4, 8]))
    hs = sorted((float(h) for h in cfg.get("h_list", [1 / 32, 1 / 64, 1 / 128])), reverse=True)
    trials = int(cfg.get("trials", 200))
    seed = _seed(cfg)
    # one sub-scan per h with seed offset by its sorted position; results come back in that order
    jobs = [(h, seed + i) for i, h in enumerate(hs)]
    parts = _pmap(lambda job: zygmund_scan(geo, kappas, [job[0]], trials, job[1]), jobs, threads)
    reports = [r for part in parts for r in part]
    exps = growth_exponents(reports)
    rows = [dict(kappa=r.params[0], h=r.params[1], **{k: v for k, v in r.as_dict().items() if k != "params"})
            for r in reports]
    for r in rows:
        r["witness"] = ";".join(map(str, r["witness"]))
    limit = float(cfg.get("max_exponent", 0.65))
    summary = {"growth_exponents": {repr(h): e for h, e in exps.items()}, "max_exponent": limit,
               "points": len(reports)}
    return summary, rows, all(e <= limit for e in exps.values())


def cmd_scan_resolvent(cfg, threads):
    geo = _geometry(cfg)
    H = build_hamiltonian(geo, _potential(cfg, geo), int(cfg.get("N", 10)))
    im = float(cfg.get("im_tau", 1.0))
    taus = [complex(float(r), im) for r in cfg.get("re_tau", [10, 40, 160, 640])]
    reports = resolvent_ratio_scan(H, taus, int(cfg.get("trials", 200)), _seed(cfg))
    rows = [{"re_tau": r.params[0], "im_tau": r.params[1], "max_ratio": r.max_ratio, "mean_ratio": r.mean_ratio,
             "residual": r.extras["residual"]} for r in reports]
    ok = reports[-1].max_ratio <= float(cfg.get("factor", 1.5)) * reports[0].max_ratio
    ok = ok and all(r.extras["residual"] <= 1e-9 for r in reports)
    return {"first_max": reports[0].max_ratio, "last_max": reports[-1].max_ratio}, rows, ok


def cmd_scan_dispersive(cfg, threads):
    N = int(cfg.get("N", 8))
    k = float(cfg.get("k", 0.0))
    ops = [build_floquet(k, _potential_1d(cfg, w, f"potentials[{i}]"), N)
           for i, w in enumerate(cfg.get("potentials", ["zero", "cos"]))]
    Ts = sorted(float(t) for t in cfg.get("T_list", [2.0**j for j in range(10)]))
    reports = dispersive_scan(ops, Ts, int(cfg.get("trials", 10)), _seed(cfg))
    rows = [{"T": r.params[0], "max_ratio": r.max_ratio, "mean_ratio": r.mean_ratio} for r in reports]
    slope = tail_slope(reports, int(cfg.get("tail", 4)))
    limit = float(cfg.get("max_tail_slope", 0.1))
    return {"max_ratio": max(r.max_ratio for r in reports), "tail_slope": slope, "max_tail_slope": limit}, rows, slope <= limit


def cmd_verify_geom(cfg, threads):
    eps = float(cfg.get("epsilon", 1 / 16))
    Q = int(cfg.get("Q", 12))
    rep = lemma_geom_bruteforce(eps, Q, float(cfg.get("grid_step", 0.01)))
    rows = [{"a1": q[0], "a2": q[1], "a3": q[2], "a4": q[3], "verdict": "inconclusive"} for q in rep.inconclusive]
    rows += [{"a1": q[0], "a2": q[1], "a3": q[2], "a4": q[3], "verdict": "violation"} for q in rep.violations]
    return rep.summary(), rows, rep.passed


def cmd_scan_shells(cfg, threads):
    geo = _geometry(cfg)
    H = build_hamiltonian(geo, _potential(cfg, geo), int(cfg.get("N", 8)))
    rho = float(cfg.get("rho", 0.2))
    specs = [SpectralProjectorSpec(float(h), rho, cfg.get("chi", "sharp")) for h in cfg.get("h_list", [1 / 3, 1 / 4, 1 / 5, 1 / 6])]
    reps = shell_observability_scan(H, specs, _region(cfg, geo), _need(cfg, "T"))
    rows = [{"h": r.extras["h"], "rho": r.extras["rho"], "shell_size": r.extras["shell_size"], "K": r.K} for r in reps]
    Ks = [r.K for r in reps]
    ok = bool(Ks) and all(math.isfinite(k) for k in Ks) and max(Ks) <= 2 * float(np.median(Ks))
    return {"K_max": max(Ks, default=None), "K_median": float(np.median(Ks)) if Ks else None}, rows, ok


def cmd_lowfreq(cfg, threads):
    W = _potential_1d(cfg, cfg.get("potential_1d", "zero"))
    op = build_floquet(float(cfg.get("k", 0.0)), W, int(cfg.get("N", 6)))
    omega = [tuple(map(float, iv)) for iv in cfg.get("omega", [[0, math.pi]])]
    model = ModelSystem.from_floquet(op, omega, float(cfg.get("T", 2 * math.pi)))
    rep = assemble_constant(model, epsilon=float(cfg.get("epsilon", 2.0)))
    ver = verify_elimination(model, rep["K_assembled"], int(cfg.get("trials", 200)), _seed(cfg))
    rep = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in rep.items()}
    rep["verification"] = ver
    ok = ver["passed"] and rep["K_assembled"] >= rep["K_gramian"] and rep["vandermonde_zero_residual"] <= 1e-10
    return rep, [], ok


def cmd_hitting(cfg, threads):
    geo = _geometry(cfg)
    region = _region(cfg, geo)
    rows = []
    for item in cfg.get("lines", []):
        d = item["direction"]
        d = tuple(d) if isinstance(d, list) else d
        rep = hitting_fraction(geo, d, item.get("z0", [0.0, 0.0]), region, float(item.get("T", 100.0)))
        rows.append({"direction": json.dumps(list(rep.direction)), "z0": json.dumps(list(rep.z0)), "T": rep.T,
                     "fraction": rep.fraction, "refinement_delta": rep.refinement_delta})
    summary: dict[str, Any] = {"lines": len(rows)}
    ok = all(0 <= r["fraction"] <= 1 for r in rows)
    lb = cfg.get("lowerbound")
    if lb:
        reg = inscribed_square(lb["center"], float(lb["radius"])) if "radius" in lb else region
        res = rational_hitting_lowerbound(geo, reg, float(lb["N"]), float(lb["norm_cap"]), int(lb.get("z_grid", 8)))
        summary["lowerbound"] = {"delta": res["delta"], "direction": res["direction"], "directions": res["directions"]}
        ok = ok and res["delta"] > 0
    return summary, rows, ok


HANDLERS = {
    "simulate": cmd_simulate, "gramian": cmd_gramian, "control": cmd_control, "scan-zygmund": cmd_scan_zygmund,
    "scan-resolvent": cmd_scan_resolvent, "scan-dispersive": cmd_scan_dispersive, "verify-geom": cmd_verify_geom,
    "scan-shells": cmd_scan_shells, "lowfreq": cmd_lowfreq, "hitting": cmd_hitting,
}


# output ------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_csv(path: Path, rows: list[dict]) -> None:
    cols: list[str] = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in (r.get(c, "") for c in cols)])


def run(config: dict, out: str | Path = ".", threads: int = 1) -> int:
    """Execute one configured job; returns the process exit code."""
    command = config.get("command")
    if command not in HANDLERS:
        log.error("unknown command %r; expected one of %s", command, ", ".join(COMMANDS))
        return 2
    cfg = dict(config)
    try:
        summary, rows, ok = HANDLERS[command](cfg, threads)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return 2
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": cfg.get("_seeds", {}),
        "passed": bool(ok),
        "result": summary,
        "metadata": {"timestamp": datetime.now(timezone.utc).isoformat(), "version": __version__},
    }
    (out / "report.json").write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if rows:
        write_csv(out / "detail.csv", rows)
    if "_control_export" in cfg:
        sol, n = cfg["_control_export"]
        write_control_csv(sol, out / "control.csv", n)
    log.info("%s: %s", command, "pass" if ok else "FAIL")
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="toruslab", description="Reproducible driver for toruslab experiments.")
    parser.add_argument("command", nargs="?", help="overrides the config's command field")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return 2
    if not isinstance(config, dict):
        log.error("config must be a JSON object")
        return 2
    if args.command:
        config["command"] = args.command
    if config.get("command") not in HANDLERS:
        parser.print_usage(sys.stderr)
        log.error("unknown command %r", config.get("command"))
        return 2
    threads = args.threads or int(os.environ.get("TORUSLAB_THREADS", "1"))
    return run(config, args.out, threads)


if __name__ == "__main__":
    sys.exit(main())
