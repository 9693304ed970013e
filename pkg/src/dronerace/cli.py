"""Command-line entry point.

    dronerace race --pair D,M --out runs/dm
    dronerace compare --out runs/all --seedless
    dronerace project-demo --out runs/demo
    dronerace plot runs/all --out runs/all/figures

Exit status is 0 on success, 1 when a run fails and 2 on a usage or
configuration error. Failures also print one JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, load_config
from .errors import ConfigError, DroneRaceError, RaceAborted, SchemaMismatch
from .harness import (CONTROLLERS, PAIRINGS, RaceLog, compare_races, extract_progress,
                      run_path_following, run_race)

log = logging.getLogger("dronerace")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


def race_csv_name(front: str, rear: str) -> str:
    return f"race_{front}-{rear}.csv"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, artifacts: list[Path],
                   timing: dict, seedless: bool, extra: dict | None = None) -> Path:
    """Record what produced the artifacts in ``out_dir``.

    Timing statistics come from the logged per-update solve times, so they
    can be recomputed from any CSV written with timing.
    """
    import numba
    import scipy

    doc = {
        "command": command,
        "software": {"artifact": _version(), "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__},
        "platform": {"system": platform.platform(), "machine": platform.machine(),
                     "processor": platform.processor()},
        "seedless": seedless,
        "config": cfg.raw,
        "timing": timing,
        "artifacts": {p.name: _sha256(p) for p in artifacts},
    }
    if extra:
        doc.update(extra)
    path = out_dir / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _parse_pair(text: str) -> tuple[str, str]:
    parts = [p.strip().upper() for p in text.split(",")]
    if len(parts) != 2 or not all(p in CONTROLLERS for p in parts):
        raise argparse.ArgumentTypeError(
            f"expected FRONT,REAR with each one of {', '.join(CONTROLLERS)}; got {text!r}")
    return parts[0], parts[1]


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "duration", None) is not None:
        if not args.duration > 0:
            raise ConfigError("--duration must be positive")
        cfg = cfg.with_duration(args.duration)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_one(cfg: RunConfig, front: str, rear: str, out: Path, seedless: bool):
    log.info("running Race(%s,%s) for %.1f s", front, rear, cfg.duration)
    start = time.perf_counter()
    try:
        race = run_race(cfg.race(front, rear))
    except RaceAborted as exc:
        if exc.log is not None:
            io.write_race_csv(exc.log, out / race_csv_name(front, rear), not seedless)
        raise
    wall = time.perf_counter() - start
    path = io.write_race_csv(race, out / race_csv_name(front, rear), include_timing=not seedless)
    prog = extract_progress(race, cfg.overtake_on, cfg.path, (cfg.theta_rear, cfg.theta_front))
    log.info("Race(%s,%s): overtake at %s s, %.1f s wall", front, rear, prog.t_ov, wall)
    stats = race.timing_stats()
    stats["overtake_time"] = prog.t_ov
    stats["wall_s"] = wall
    return race, path, stats


def cmd_race(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    front, rear = args.pair
    _, path, stats = _run_one(cfg, front, rear, out, args.seedless)
    write_manifest(out, "race", cfg, [path], {f"{front},{rear}": stats}, args.seedless)
    print(path)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    races, paths, timing = {}, [], {}
    for front, rear in PAIRINGS:
        race, path, stats = _run_one(cfg, front, rear, out, args.seedless)
        key = f"{front},{rear}"
        races[key] = race
        paths.append(path)
        timing[key] = stats
    prog = {k: extract_progress(v, cfg.overtake_on, cfg.path, (cfg.theta_rear, cfg.theta_front))
            for k, v in races.items()}
    report = compare_races(prog, cfg.window_start, cfg.overtaking_threshold,
                           cfg.obstructing_threshold)
    doc = report.to_dict()
    doc["manifest"] = MANIFEST
    rj = out / "report.json"
    rj.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    rt = out / "report.txt"
    rt.write_text(report.to_text() + f"manifest: {MANIFEST}\n")
    paths += [rj, rt]
    if args.plots:
        from .plots import plot_comparisons
        paths += plot_comparisons(races, out, cfg.window_start)
    write_manifest(out, "compare", cfg, paths, timing, args.seedless,
                   {"comparison_passed": report.passed})
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _grid_check(path, p, theta, half_width=0.5, samples=10001) -> float:
    """Distance from theta to the dense-grid minimizer of |r - p| near theta."""
    grid = np.linspace(theta - half_width, theta + half_width, samples)
    d = np.linalg.norm(path.position_grid(grid) - p, axis=1)
    return float(abs(grid[int(np.argmin(d))] - theta))


def cmd_project_demo(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    run = run_path_following(cfg.race("M", "M"), duration=args.duration or 10.0)
    stride = max(1, int(round(0.01 / cfg.control_cycle)))
    idx = np.arange(0, run.t.size, stride)
    grid_err = np.array([_grid_check(cfg.path, run.state[k, 0:3], run.state[k, 13]) for k in idx])
    csv_path = out / "project_demo.csv"
    header = ["t", "x", "y", "z", "theta", "sigma", "stationarity", "margin", "residual"]
    rows = np.column_stack([run.t, run.state[:, 0:3], run.state[:, 13:15], run.stationarity,
                            run.margin, run.residual])
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(format(float(v), ".17g") for v in r) + "\n")
    summary = {
        "duration": float(run.t[-1]),
        "final_theta": float(run.state[-1, 13]),
        "final_sigma": float(run.state[-1, 14]),
        "max_abs_stationarity": float(np.max(np.abs(run.stationarity))),
        "min_singularity_margin": float(np.min(run.margin)),
        "max_grid_theta_error": float(grid_err.max()),
        "grid_spacing": 1.0 / 10000,
        "manifest": MANIFEST,
    }
    sp = out / "project_demo.json"
    sp.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    timing = {"path_following": {"mean_ms": float(run.solve_ms.mean()),
                                 "max_ms": float(run.solve_ms.max()),
                                 "updates": int(run.t.size)}}
    write_manifest(out, "project-demo", cfg, [csv_path, sp], timing, args.seedless)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _label_from_name(name: str) -> tuple[str, str]:
    stem = Path(name).stem
    if stem.startswith("race_") and "-" in stem:
        front, rear = stem[5:].split("-", 1)
        return front, rear
    return "", ""


def cmd_plot(args) -> int:
    from .plots import plot_comparisons, plot_time_history, plot_trajectory_3d

    cfg = _load(args)
    src = Path(args.input)
    if src.is_dir():
        files = sorted(src.glob("race_*.csv"))
    elif src.is_file():
        files = [src]
    else:
        raise UsageError(f"no such file or directory: {src}")
    if not files:
        raise UsageError(f"no race_*.csv logs in {src}")
    out = Path(args.out) if args.out else (src if src.is_dir() else src.parent)
    out.mkdir(parents=True, exist_ok=True)
    races: dict[str, RaceLog] = {}
    made = []
    for f in files:
        front, rear = _label_from_name(f.name)
        race = io.read_race_csv(f, front, rear)
        races[f"{front},{rear}"] = race
        made.append(plot_time_history(race, out / f"{f.stem}_history.svg"))
        made.append(plot_trajectory_3d(race, cfg.path, out / f"{f.stem}_3d.svg"))
    if all(f"{b},{a}" in races for b, a in PAIRINGS):
        made += plot_comparisons(races, out, cfg.window_start)
    for p in made:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration (default: shipped paper.cfg)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seedless", action="store_true",
                        help="write solve times as 0 in CSV logs so reruns are byte-identical; "
                             "timings still go to the manifest")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dronerace",
                                     description="Two-drone racing with NMPC and NRHDG controllers.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("race", parents=[common], help="run one Race(FRONT,REAR)")
    p.add_argument("--pair", type=_parse_pair, required=True, metavar="FRONT,REAR",
                   help="controllers in front and behind, e.g. D,M")
    p.add_argument("--duration", type=float, help="override the simulated time (s)")
    p.set_defaults(func=cmd_race, out_default="runs/race")

    p = sub.add_parser("compare", parents=[common], help="run all four pairings and report")
    p.add_argument("--duration", type=float, help="override the simulated time (s)")
    p.add_argument("--plots", action="store_true", help="also render comparison SVGs")
    p.set_defaults(func=cmd_compare, out_default="runs/compare")

    p = sub.add_parser("project-demo", parents=[common],
                       help="single-drone path following with projection diagnostics")
    p.add_argument("--duration", type=float, help="simulated time (s), default 10")
    p.set_defaults(func=cmd_project_demo, out_default="runs/project-demo")

    p = sub.add_parser("plot", parents=[common], help="render SVG figures from race CSV logs")
    p.add_argument("input", help="a race_*.csv file or a directory of them")
    p.set_defaults(func=cmd_plot, out_default=None)
    return parser


def _error_record(exc: BaseException, status: int) -> str:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_status": status}
    t = getattr(exc, "time", None)
    if t is not None:
        rec["time"] = t
    return json.dumps(rec, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.out is None and args.out_default is not None:
        args.out = args.out_default
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(_error_record(exc, EXIT_USAGE), file=sys.stderr)
        return EXIT_USAGE
    except (DroneRaceError, SchemaMismatch) as exc:
        print(_error_record(exc, EXIT_FAILURE), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
