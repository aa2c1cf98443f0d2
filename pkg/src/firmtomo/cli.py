"""Command-line entry point: ``firmtomo phantom|solve|sweep|report``."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import SCALES, SOLVERS, ConfigError, ExperimentConfig
from .experiment import build_instance, operator_for, run_cell, run_solver
from .metrics import percentile_summary, write_report_csv
from .phantoms import make_ground_truth

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _image_names(N: int) -> list[str]:
    return [f"xrf{i}" for i in range(1, N)] + ["xrt"]


def _write_images(out: Path, images: np.ndarray, grid, prefix: str = "") -> list[str]:
    files = []
    vmax = float(np.max(images)) if images.size else 1.0
    for name, img in zip(_image_names(len(images)), images):
        stem = f"{prefix}{name}"
        io.write_pgm(out / f"{stem}.pgm", img, grid.rows, grid.cols, vmax)
        io.write_image_csv(out / f"{stem}.csv", img)
        files += [f"{stem}.pgm", f"{stem}.csv"]
    return files


def cmd_phantom(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    grid, A, lam = operator_for(cfg, cfg.angles[0])
    truth = make_ground_truth(grid, cfg.weights, cfg.variant_seed)
    files = _write_images(out, truth.stacked, grid)
    cfg.dump(out / "config.json")
    io.write_json(out / "manifest.json", {
        "kind": "phantom", "grid": [grid.rows, grid.cols], "pixel_size": grid.pixel_size,
        "weights": list(cfg.weights), "variant_seed": cfg.variant_seed,
        "images": files, "lambda_max": lam, "angles": cfg.angles[0]})
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig, out: Path, solver: str) -> int:
    """First (angles, s, gamma) of the config, trial 0."""
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.json")
    angles, s, gamma = cfg.angles[0], cfg.noise_levels[0], cfg.gammas[0]
    inst = build_instance(cfg, angles, s, cfg.seed, 0)
    try:
        res = run_solver(inst, cfg, solver, gamma, s, keep_round_log=True)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        io.write_json(out / "manifest.json", {"kind": "solve", "solver": solver, "error": str(exc)})
        return EXIT_SOLVER
    trace_files = []
    for i, tr in enumerate(res.traces):
        name = "trace.csv" if len(res.traces) == 1 else f"trace_b{i + 1}.csv"
        tr.to_csv(out / name)
        trace_files.append(name)
    if res.round_log:
        io.write_round_log(out / "rounds.csv", res.round_log, inst.problem.N)
    images = _write_images(out, res.w, inst.grid, prefix="recon_")
    report = res.report.as_dict()
    io.write_json(out / "report.json", report)
    io.write_json(out / "manifest.json", {
        "kind": "solve", "solver": solver, "angles": angles, "s": s, "gamma": gamma,
        "seed": cfg.seed, "reason": res.reason, "rounds": [len(t) for t in res.traces],
        "traces": trace_files, "images": images})
    print(f"{solver}: {res.reason} after {sum(len(t) for t in res.traces)} iterations, "
          f"f = {res.report.f:.6g}, |Dw| = {res.report.constraint_norm:.3g}, "
          f"distance = {res.report.dist_total:.6g}")
    return EXIT_SOLVER if res.reason == "error" else EXIT_OK


def _cells(cfg: ExperimentConfig):
    for a in cfg.angles:
        for s in cfg.noise_levels:
            for g in cfg.gammas:
                for t in range(cfg.trials):
                    yield int(a), float(s), float(g), t


def _cell_id(a: int, s: float, g: float, t: int) -> str:
    return f"a{a}_s{s!r}_g{g!r}_t{t}"


def _sweep_identity(cfg: ExperimentConfig) -> dict:
    """Config fields that change results; pool size and output path do not."""
    d = cfg.to_dict()
    for key in ("out", "pool_workers", "workers", "solver"):
        d.pop(key)
    return d


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    """Full factorial over (angles, s, gamma, trial); resumes from ``manifest.json``."""
    out.mkdir(parents=True, exist_ok=True)
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    cfg.dump(out / "config.json")
    manifest_path = out / "manifest.json"
    manifest = io.read_json(manifest_path) if manifest_path.exists() else {}
    identity = _sweep_identity(cfg)
    if manifest.get("identity", identity) != identity:
        print("config differs from the existing sweep; starting over", file=sys.stderr)
        manifest = {}
    done = set(manifest.get("completed", []))
    todo = [c for c in _cells(cfg) if _cell_id(*c) not in done]

    def record(result):
        cid = _cell_id(result["angles"], result["s"], result["gamma"], result["trial"])
        io.write_json(cells_dir / f"{cid}.json", result)
        done.add(cid)
        io.write_json(manifest_path, {"kind": "sweep", "identity": identity,
                                      "completed": sorted(done)})
        if "error" in result:
            print(f"cell {cid} failed: {result['error']}", file=sys.stderr)

    if cfg.pool_workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(cfg.pool_workers) as pool:
            futures = [pool.submit(run_cell, cfg, *c) for c in todo]
            for fut in futures:
                record(fut.result())
    else:
        for c in todo:
            record(run_cell(cfg, *c))
    return cmd_report(cfg, out)


def cmd_report(cfg: ExperimentConfig, out: Path) -> int:
    """Collect cell results into ``report.csv``, ``gaps.csv`` and ``summary.csv``."""
    cells_dir = out / "cells"
    if not cells_dir.is_dir():
        print(f"no sweep results under {out}", file=sys.stderr)
        return EXIT_CONFIG
    N = len(cfg.weights) + 1
    results = {}
    for path in sorted(cells_dir.glob("*.json")):
        r = io.read_json(path)
        results[(r["angles"], r["s"], r["gamma"], r["trial"])] = r
    ordered = [results[c] for c in _cells(cfg) if c in results]
    rows = [row for r in ordered for row in r["rows"]]
    write_report_csv(out / "report.csv", rows, N)

    errors = 0
    with open(out / "gaps.csv", "w") as fh:
        fh.write("angles,s,gamma,trial,gap_percent,status\n")
        for r in ordered:
            status = "error" if "error" in r else "ok"
            errors += status == "error"
            fh.write(f"{r['angles']},{r['s']!r},{r['gamma']!r},{r['trial']},"
                     f"{float(r['gap_percent']):.17g},{status}\n")
    with open(out / "summary.csv", "w") as fh:
        fh.write("angles,s,gamma,gap_p20,gap_mean,gap_p80,count\n")
        groups: dict = {}
        for r in ordered:
            groups.setdefault((r["angles"], r["s"], r["gamma"]), []).append(r["gap_percent"])
        for (a, s, g), gaps in groups.items():
            p = percentile_summary(gaps)
            fh.write(f"{a},{s!r},{g!r},{p['p20']:.17g},{p['mean']:.17g},{p['p80']:.17g},{p['count']}\n")
    print(f"{len(ordered)} cells, {errors} failed; report in {out}")
    return EXIT_SOLVER if ordered and errors == len(ordered) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="firmtomo", description="Federated multimodal tomography.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("phantom", "write ground-truth images"), ("solve", "run one solver"),
                        ("sweep", "factorial experiment with relative gaps"),
                        ("report", "aggregate an existing sweep")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--scale", choices=SCALES, default="desk")
        sp.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
        if name == "solve":
            sp.add_argument("--solver", choices=SOLVERS)
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = (ExperimentConfig.load(args.config, args.scale) if args.config
           else ExperimentConfig.preset(args.scale))
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = str(args.out)
    if getattr(args, "solver", None):
        overrides["solver"] = args.solver
    return ExperimentConfig.from_dict(overrides, cfg) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    try:
        if args.command == "phantom":
            return cmd_phantom(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out, cfg.solver)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        return cmd_report(cfg, out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
