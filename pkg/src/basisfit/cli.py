"""Command-line front end.

Subcommands: fit, experiment, gradcheck, bench, synth, eval.  Exit codes:
0 on success, 1 on I/O or parse failures, 2 on numerical fit failures.
All randomness flows from config seeds, so reruns of the same config are
byte-identical where the docs promise it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, dump_config, load_config
from .errors import BasisFitError, ConfigError, GridFormatError
from .experiment import run_bench, run_experiment, run_gradcheck, sub_seeds, variant_tags
from .fitter import DepthGrid, fit_gauss_newton, fit_linear, predict_dense
from .gridio import read_grid, read_sparse_set, write_grid, write_sparse_set
from .metrics import MetricReport, evaluate
from .multiscale import flatten_to_stack, stacked_field
from .synth import generate_bases, generate_scene, sample_sparse


def _load(config_path: str | None) -> ExperimentConfig:
    if config_path is None:
        return ExperimentConfig()
    return load_config(config_path)


def _cmd_fit(args) -> int:
    cfg = _load(args.config)
    act = cfg.activation.build()
    grid = read_grid(args.bases).astype(np.float64)
    samples = read_sparse_set(args.sparse)
    h, w, _ = grid.shape
    if samples.pixel_ids.max() >= h * w:
        from .errors import PixelOutOfRange

        raise PixelOutOfRange(f"sparse pixel ids exceed grid size {h}x{w}")
    from .fitter import BasisStack

    basis = BasisStack(grid.reshape(h * w, -1)[samples.pixel_ids])
    fit_cfg = cfg.fit.build()
    if fit_cfg.iterations == 0:
        result = fit_linear(basis, samples, act, fit_cfg.lam)
    else:
        result = fit_gauss_newton(basis, samples, act, fit_cfg)
    pred = predict_dense(grid, result.weights, act)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid(out / "depth.grid", pred.values)
    write_grid(out / "outlier_mask.grid", result.outlier_mask.astype(np.float32)[:, None], dtype=np.float32)
    payload = {
        "weights": result.weights.tolist(),
        "lambda": fit_cfg.lam,
        "iterations": fit_cfg.iterations,
        "iterations_run": result.iterations_run,
        "robust": fit_cfg.robust,
        "huber_delta": fit_cfg.huber_delta,
        "weight_deltas": result.weight_deltas.tolist(),
        "n_samples": samples.count,
        "n_outliers": int(result.outlier_mask.sum()),
        "n_clamped_targets": int(result.clamped_targets.sum()),
    }
    with open(out / "weights.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote depth.grid, outlier_mask.grid, weights.json to {out}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    summary = run_experiment(cfg, args.out)
    for tag, entry in summary["variants"].items():
        if entry.get("n_ok"):
            print(
                f"{tag}: mae {entry['mae_mean']:.6f} +/- {entry['mae_std']:.6f} "
                f"({entry['n_ok']} seeds)"
            )
        else:
            print(f"{tag}: all {entry['n_failed']} seeds failed")
    print(f"wrote results.csv, timings.csv, summary.json to {args.out}")
    return 1 if summary["all_failed"] else 0


def _cmd_gradcheck(args) -> int:
    cfg = _load(args.config)
    report = run_gradcheck(cfg, tolerance=args.tolerance)
    for name, err in report["max_rel_err_by_component"].items():
        print(f"{name}: max rel err {err:.3e}")
    print(
        f"linear {report['max_rel_err_linear']:.3e} (tol {report['tolerance_linear']:g}), "
        f"gauss-newton {report['max_rel_err_gn']:.3e} (tol {report['tolerance_gn']:g}), "
        f"kink redraws {report['kink_redraws']}"
    )
    print("PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 2


def _cmd_bench(args) -> int:
    cfg = _load(args.config)
    rows = run_bench(cfg, seed=args.seed if args.seed is not None else 0)
    for row in rows:
        print(
            f"{row['variant']:<8s} {row['height']}x{row['width']} "
            f"plan {row['channel_plan']} n={row['samples']}: "
            f"{row['median_ms']:.3f} ms (median of {row['repeats']})"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.json", "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote bench.json to {out}")
    return 0


def _cmd_synth(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    seed = cfg.seeds[0]
    act = cfg.activation.build()
    scene_seed, bases_seed, sampler_seed = sub_seeds(seed)
    scene = generate_scene(
        cfg.scene.height,
        cfg.scene.width,
        cfg.scene.kind,
        act,
        cfg.scene.depth_cap,
        scene_seed,
        bump_amplitude=cfg.scene.bump_amplitude,
    )
    bases, w_true = generate_bases(scene, cfg.channel_plan, cfg.basis_mode, bases_seed)
    sample = sample_sparse(scene, cfg.sampler.build(sampler_seed))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid(out / "scene_depth.grid", scene.depth)
    write_grid(out / "bases.grid", stacked_field(bases))
    write_sparse_set(out / "sparse.grid", sample.sparse)
    meta = {
        "seed": seed,
        "kind": scene.kind.value,
        "basis_mode": cfg.basis_mode,
        "channel_plan": list(cfg.channel_plan),
        "n_samples": sample.sparse.count,
        "n_outliers": int(sample.is_outlier.sum()),
    }
    if w_true is not None:
        meta["w_true"] = w_true.tolist()
    with open(out / "synth.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote scene_depth.grid, bases.grid, sparse.grid, synth.json to {out}")
    return 0


def _cmd_eval(args) -> int:
    pred = read_grid(args.pred)
    gt = read_grid(args.gt)
    if pred.shape[2] != 1 or gt.shape[2] != 1:
        raise GridFormatError("eval expects single-channel depth grids")
    report = evaluate(
        DepthGrid(pred[:, :, 0].astype(np.float64)),
        DepthGrid(gt[:, :, 0].astype(np.float64)),
        args.cap,
    )
    if args.csv:
        print(",".join(str(v) for v in MetricReport.CSV_FIELDS))
        print(",".join(repr(v) if isinstance(v, float) else str(v) for v in report.csv_values()))
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_init_config(args) -> int:
    dump_config(ExperimentConfig(), args.out)
    print(f"wrote default config to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="basisfit",
        description="Sparse-to-dense depth reconstruction by least-squares basis fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit weights to a basis grid and sparse depths")
    p.add_argument("bases", help="stacked basis grid file (bias channel first)")
    p.add_argument("sparse", help="sparse depth set grid file (N x 1 x 3)")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("experiment", help="seeded scene/fit/metric sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="run this single seed only")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--config", default=None)
    p.add_argument("--tolerance", type=float, default=None, help="override both stage tolerances")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("bench", help="median-of-k fit timings")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("synth", help="generate scene/bases/sparse files")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="metrics between two depth grids")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--cap", type=float, default=10.0, help="ground-truth depth cap")
    p.add_argument("--csv", action="store_true", help="emit one CSV row instead of JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("init-config", help="write the default config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_init_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GridFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BasisFitError as exc:
        print(f"fit error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
