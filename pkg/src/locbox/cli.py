"""Command line interface.

Subcommands: gen (draw an instance), solve (outer region for one method),
oracle (grid cloud), experiment (gain sweep to CSV), timing (runtime
sweep), mlcheck (grid-scale likelihood identity checks).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ExperimentConfig,
    gen_instance,
    records_to_csv,
    run_experiment,
    summaries_to_csv,
    timing_sweep,
    timing_to_csv,
)
from .model import Instance
from .oracle import coherent_ml_set, grid_cloud, truncated_gaussian_argmax_check
from .relaxations import build_benchmark_sdp, build_lfr_sdp
from .sdp import write_sdpa
from .superset import (
    Method,
    compute_superset,
    rect_directions,
    rect_part,
    union_rect_interval,
)


def _load_instance(path: str) -> Instance:
    return Instance.from_json(Path(path).read_text())


def _auto_bbox(instance: Instance, pad: float = 0.0):
    lfr = compute_superset(instance, Method.LFR)
    sdp = compute_superset(instance, Method.BENCHMARK)
    if lfr.empty or sdp.empty:
        raise SystemExit("region is empty; provide an explicit bbox")
    return union_rect_interval(rect_part(sdp), rect_part(lfr), pad=pad)


def _parse_bbox(text: str, instance: Instance):
    if text == "auto":
        return _auto_bbox(instance)
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 2 * instance.dim:
        raise SystemExit(
            f"bbox needs {2 * instance.dim} comma-separated numbers or 'auto'"
        )
    lower = np.array(vals[0::2])
    upper = np.array(vals[1::2])
    return lower, upper


def _cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    draw = gen_instance(args.alpha, m=args.m, d=args.d, rng=rng)
    instance = draw.instance(args.meas_index)
    Path(args.out).write_text(instance.to_json() + "\n")
    print(f"wrote instance (M={args.m}, d={args.d}, alpha={args.alpha}) to {args.out}")
    if args.truth_out:
        truth = {
            "x_star": draw.x_star.tolist(),
            "u_samples": draw.u_samples.tolist(),
            "y_samples": draw.y_samples.tolist(),
        }
        Path(args.truth_out).write_text(json.dumps(truth) + "\n")
        print(f"wrote ground truth to {args.truth_out}")
    return 0


def _cmd_solve(args) -> int:
    instance = _load_instance(args.instance)
    method = Method(args.method)
    if args.debug_matrices:
        from .relaxations import benchmark_sdp_matrices, lfr_sdp_matrices

        builder = lfr_sdp_matrices if method is Method.LFR else benchmark_sdp_matrices
        mats = builder(instance, np.eye(instance.dim)[0])
        Path(args.debug_matrices).write_text(json.dumps(mats.to_debug_dict()) + "\n")
        print(f"wrote constraint matrices to {args.debug_matrices}")
    if args.dump_sdpa:
        outdir = Path(args.dump_sdpa)
        outdir.mkdir(parents=True, exist_ok=True)
        builder = build_lfr_sdp if method is Method.LFR else build_benchmark_sdp
        from .superset import extra_directions

        dirs = np.vstack(
            [rect_directions(instance.dim), extra_directions(args.T, instance.dim)]
        )
        for i, s in enumerate(dirs):
            write_sdpa(builder(instance, s), str(outdir / f"direction_{i}.dat-s"))
        print(f"dumped {len(dirs)} SDPA files to {outdir}")
    region = compute_superset(instance, method, T=args.T)
    Path(args.out).write_text(region.to_json() + "\n")
    if region.empty:
        print(f"{method.value}: region is EMPTY (inconsistent measurements)")
    else:
        lo, up = region.polyhedron.rect_interval() if args.T == 0 else (None, None)
        if lo is not None:
            print(f"{method.value}: rectangle {lo.tolist()} .. {up.tolist()}")
        else:
            print(f"{method.value}: polyhedron with {len(region.polyhedron.bounds)} bounds")
    print(f"wrote region to {args.out}")
    return 0


def _cmd_oracle(args) -> int:
    instance = _load_instance(args.instance)
    lower, upper = _parse_bbox(args.bbox, instance)
    cloud = grid_cloud(instance, lower, upper, args.res)
    out = Path(args.out)
    if out.suffix.lower() == ".csv":
        out.write_text(cloud.to_csv())
    else:
        out.write_text(cloud.to_json() + "\n")
    print(f"grid {args.res} points per axis, cloud size {len(cloud)}; wrote {out}")
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
    total = config.trials * len(config.alpha_grid)

    done = {"n": 0}

    def progress(trial, alpha_idx, recs):
        done["n"] += 1
        if done["n"] % 25 == 0 or done["n"] == total:
            print(f"  {done['n']}/{total} cells done", flush=True)

    result = run_experiment(config, workers=args.workers, progress=progress)
    Path(args.out).write_text(records_to_csv(result.records))
    summary_path = args.summary_out or str(
        Path(args.out).with_name(Path(args.out).stem + "_summary.csv")
    )
    Path(summary_path).write_text(summaries_to_csv(result.summaries))
    print(f"wrote {len(result.records)} records to {args.out}")
    print(f"wrote per-alpha summary to {summary_path}")
    return 0


def _parse_m_range(text: str) -> list:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def _cmd_timing(args) -> int:
    rows = timing_sweep(
        _parse_m_range(args.m), trials=args.trials, alpha=args.alpha, seed=args.seed
    )
    Path(args.out).write_text(timing_to_csv(rows))
    for r in rows:
        lfr = f"{r.mean_t_lfr_s:.3f}s" if r.mean_t_lfr_s is not None else "n/a"
        sdp = f"{r.mean_t_sdp_s:.3f}s" if r.mean_t_sdp_s is not None else "n/a"
        print(f"M={r.m}: lfr {lfr}  benchmark {sdp}  failures {r.failures}")
    times = [r.mean_t_lfr_s for r in rows if r.mean_t_lfr_s is not None]
    if any(b < a for a, b in zip(times, times[1:])):
        print("note: mean time is not monotone in M; expected noise at small trial counts")
    print(f"wrote timing table to {args.out}")
    return 0


def _cmd_mlcheck(args) -> int:
    instance = _load_instance(args.instance)
    lower, upper = _parse_bbox(args.bbox, instance)
    cloud = grid_cloud(instance, lower, upper, args.res)
    ml = coherent_ml_set(instance, lower, upper, args.res)
    same = len(cloud) == len(ml) and bool(np.array_equal(cloud.points, ml.points))
    print(f"membership cloud: {len(cloud)} points; likelihood maximizers: {len(ml)}")
    print(f"identity check: {'PASS' if same else 'FAIL'}")
    ok = same
    if len(cloud):
        rng = np.random.default_rng(args.seed)
        picks = rng.choice(len(cloud), size=min(args.checks, len(cloud)), replace=False)
        failed = 0
        for idx in picks:
            if not truncated_gaussian_argmax_check(
                instance, cloud.points[idx], lower, upper, args.res
            ):
                failed += 1
        print(
            f"truncated-Gaussian argmax check: {len(picks) - failed}/{len(picks)} PASS"
        )
        ok = ok and failed == 0
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locbox",
        description="Outer rectangles for range-based localization with bounded noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--meas-index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", help="compute an outer region")
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--T", type=int, default=0)
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-sdpa", default=None, help="directory for SDPA dumps")
    p.add_argument(
        "--debug-matrices", default=None, help="JSON dump of all constraint matrices"
    )
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("oracle", help="grid cloud of the consistent set")
    p.add_argument("--instance", required=True)
    p.add_argument("--bbox", default="auto", help="'auto' or x0,x1,y0,y1")
    p.add_argument("--res", type=int, default=400)
    p.add_argument("--out", required=True, help=".json or .csv output")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("experiment", help="Monte Carlo gain sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("timing", help="runtime sweep over anchor counts")
    p.add_argument("--m", default="1..10", help="range '1..10' or list '1,3,5'")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_timing)

    p = sub.add_parser("mlcheck", help="grid-scale likelihood identity checks")
    p.add_argument("--instance", required=True)
    p.add_argument("--bbox", default="auto")
    p.add_argument("--res", type=int, default=400)
    p.add_argument("--checks", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_mlcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
