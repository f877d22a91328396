"""Command-line entry point: ``pjstrack {track,eval,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evalkit, synth
from .appearance import save_snapshot
from .errors import ConfigError, PJSError
from .tracker import SOLVERS, TrackerConfig, run_tracker, write_results_csv

log = logging.getLogger("pjstrack")

DEFAULT_SEEDS = "0..9"


class UsageError(Exception):
    pass


def parse_seeds(text: str) -> list[int]:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"cannot parse seeds {text!r}") from None
    if not seeds:
        raise UsageError(f"seed list {text!r} is empty")
    return seeds


def build_config(config_path, overrides: list[str], solver: str | None) -> TrackerConfig:
    values: dict = {}
    if config_path:
        with open(config_path) as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise UsageError(f"{config_path}: expected a JSON object")
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            values[key] = json.loads(raw)
        except json.JSONDecodeError:
            values[key] = raw
    if solver:
        values["solver"] = solver
    try:
        return TrackerConfig.from_dict(values)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("PJS_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise UsageError(f"PJS_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_jobs))


def _track_one(seq_path: str, seed: int, config_dict: dict, out_dir: str, dump_dict: bool) -> tuple[str, int, str | None]:
    """Run one sequence with one seed; returns ``(sequence, seed, error or None)``."""
    config = TrackerConfig.from_dict(config_dict)
    seq = evalkit.load_sequence(seq_path)
    run_dir = Path(out_dir) / seq.name
    run_dir.mkdir(parents=True, exist_ok=True)
    stem = f"seed{seed:02d}"
    on_frame = None
    if dump_dict:
        snap_dir = run_dir / f"{stem}_dict"
        snap_dir.mkdir(exist_ok=True)

        def on_frame(result, state):
            save_snapshot(snap_dir / f"frame{result.frame_index:04d}.txt", state.dictionary)

    try:
        with np.errstate(over="ignore", under="ignore"):
            results = run_tracker(seq.iter_frames(), seq.ground_truth[0], config, seed=seed, on_frame=on_frame)
    except (PJSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        (run_dir / f"{stem}.error.txt").write_text(traceback.format_exc())
        return seq.name, seed, f"{type(exc).__name__}: {exc}"
    write_results_csv(run_dir / f"{stem}.csv", results)
    return seq.name, seed, None


def cmd_track(args) -> int:
    seeds = parse_seeds(args.seeds)
    if not args.seq:
        raise UsageError("at least one --seq is required")
    config = build_config(args.config, args.set, args.solver)
    sequences = []
    for path in args.seq:
        sequences.append(evalkit.load_sequence(path))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    jobs = [(str(p), s, config.to_dict(), str(out), args.dump_dict) for p in args.seq for s in seeds]
    workers = worker_count(len(jobs))
    if workers == 1:
        outcomes = [_track_one(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_track_one, *zip(*jobs)))
    failed = 0
    for name, seed, err in outcomes:
        if err:
            failed += 1
            print(f"{name} seed {seed}: FAILED ({err})", file=sys.stderr)
        else:
            print(f"{name} seed {seed}: {out / name / f'seed{seed:02d}.csv'}")
    return 1 if failed else 0


def cmd_eval(args) -> int:
    results = Path(args.results)
    out = Path(args.out) if args.out else results
    if not args.seq:
        raise UsageError("at least one --seq is required")
    summaries = []
    for seq_path in args.seq:
        seq = evalkit.load_sequence(seq_path)
        runs = sorted((results / seq.name).glob("seed*.csv"))
        if not runs:
            print(f"{seq.name}: no run files under {results / seq.name}", file=sys.stderr)
            return 1
        reports = []
        for run in runs:
            boxes = evalkit.read_run_boxes(run)
            if len(boxes) != len(seq.ground_truth):
                print(
                    f"{run}: {len(boxes)} frames but ground truth has {len(seq.ground_truth)}",
                    file=sys.stderr,
                )
                return 1
            reports.append(evalkit.evaluate_run(boxes, seq.ground_truth, args.threshold))
        report = evalkit.aggregate_runs(reports)
        seq_out = out / seq.name
        seq_out.mkdir(parents=True, exist_ok=True)
        evalkit.write_report_csv(seq_out / "report.csv", report)
        evalkit.write_curve_csv(seq_out / "success.csv", report)
        evalkit.write_plots(seq_out, report, title=seq.name)
        summaries.append((seq.name, len(runs), report))

    label = evalkit.sr_label(args.threshold)
    print(f"{'sequence':<16} {'runs':>4} {'mean_cle':>10} {'mean_overlap':>13} {label:>8}")
    for name, n, rep in summaries:
        print(f"{name:<16} {n:>4} {rep.mean_cle:>10.3f} {rep.mean_overlap:>13.3f} {rep.success:>8.3f}")
    if len(summaries) > 1:
        avg = np.mean([rep.success for _, _, rep in summaries])
        print(f"{'average':<16} {'':>4} {'':>10} {'':>13} {avg:>8.3f}")
    return 0


def cmd_synth(args) -> int:
    try:
        path = synth.write_sequence(args.out, args.kind, args.frames, args.speed)
    except OSError as exc:
        print(f"cannot write sequence: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pjstrack", description="Patchwise joint-sparse tracker")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker over sequences and seeds")
    p.add_argument("--config", help="JSON file with tracker settings")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--seq", action="append", required=True, help="sequence directory (repeatable)")
    p.add_argument("--seeds", default=DEFAULT_SEEDS, help="a..b, a,b,c or a single seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--dump-dict", action="store_true", help="write a dictionary snapshot per frame")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracker runs against ground truth")
    p.add_argument("--results", required=True, help="directory written by 'track'")
    p.add_argument("--seq", action="append", required=True, help="sequence directory (repeatable)")
    p.add_argument("--out", help="report directory (defaults to --results)")
    p.add_argument("--threshold", type=float, default=0.6)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic test sequence")
    p.add_argument("--kind", choices=synth.KINDS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--speed", type=float, default=2.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except PJSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
