"""Seeded experiment, gradient-check, and benchmark harnesses.

Every run is a pure function of its config.  The experiment writes a
deterministic results.csv (byte-identical across reruns of the same
config), a separate timings.csv for wall-clock numbers, and a summary
JSON with per-variant aggregates.  Seeds may be processed in parallel;
the BASISFIT_THREADS environment variable caps the worker count and the
output order is fixed by sorting on (seed, variant).
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .backward import FitGradients, FitProblem, backward_gn, backward_linear, finite_diff_oracle
from .config import ExperimentConfig, config_to_dict
from .errors import BasisFitError, KinkProximity
from .fitter import (
    BasisStack,
    DepthGrid,
    FitConfig,
    fit_gauss_newton,
    fit_linear,
    predict_dense,
)
from .metrics import MetricReport, evaluate
from .multiscale import flatten_to_stack, stacked_field
from .synth import generate_bases, generate_scene, sample_sparse

RESULTS_CSV = "results.csv"
TIMINGS_CSV = "timings.csv"
SUMMARY_JSON = "summary.json"

RESULT_FIELDS = ("seed", "variant", "status") + MetricReport.CSV_FIELDS


def thread_budget() -> int:
    """Worker cap from BASISFIT_THREADS; 1 (serial) when unset or invalid."""
    raw = os.environ.get("BASISFIT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def variant_tags(cfg: ExperimentConfig) -> list[str]:
    k = cfg.fit.iterations
    return ["lsf", f"lsf{k}", f"lsf{k}+"]


def _fit_for_variant(tag: str, cfg: ExperimentConfig, basis, samples, act):
    fit_cfg = cfg.fit.build()
    if tag == "lsf":
        return fit_linear(basis, samples, act, fit_cfg.lam)
    robust = tag.endswith("+")
    return fit_gauss_newton(
        basis, samples, act, cfg.fit.build(robust=robust)
    )


@dataclass
class SeedRow:
    seed: int
    variant: str
    status: str
    report: MetricReport | None
    fit_ms: float

    def csv_values(self) -> list:
        head = [self.seed, self.variant, self.status]
        if self.report is None:
            return head + [""] * len(MetricReport.CSV_FIELDS)
        return head + [_fmt(v) for v in self.report.csv_values()]


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def sub_seeds(seed: int) -> tuple[int, int, int]:
    """Derive the scene/bases/sampler seeds for one experiment seed."""
    state = np.random.SeedSequence(seed).generate_state(3, np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def run_seed(cfg: ExperimentConfig, seed: int) -> list[SeedRow]:
    act = cfg.activation.build()
    scene_seed, bases_seed, sampler_seed = sub_seeds(seed)
    rows: list[SeedRow] = []
    try:
        scene = generate_scene(
            cfg.scene.height,
            cfg.scene.width,
            cfg.scene.kind,
            act,
            cfg.scene.depth_cap,
            scene_seed,
            bump_amplitude=cfg.scene.bump_amplitude,
        )
        bases, _ = generate_bases(scene, cfg.channel_plan, cfg.basis_mode, bases_seed)
        sample = sample_sparse(scene, cfg.sampler.build(sampler_seed))
        basis = flatten_to_stack(bases, sample.sparse.pixel_ids)
        field = stacked_field(bases)
        gt = DepthGrid(scene.depth)
    except BasisFitError as exc:
        return [
            SeedRow(seed, tag, type(exc).__name__, None, 0.0)
            for tag in variant_tags(cfg)
        ]

    for tag in variant_tags(cfg):
        try:
            begin = time.perf_counter()
            result = _fit_for_variant(tag, cfg, basis, sample.sparse, act)
            fit_ms = (time.perf_counter() - begin) * 1e3
            pred = predict_dense(field, result.weights, act)
            report = evaluate(pred, gt, cfg.metric_depth_cap)
            rows.append(SeedRow(seed, tag, "ok", report, fit_ms))
        except BasisFitError as exc:
            rows.append(SeedRow(seed, tag, type(exc).__name__, None, 0.0))
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run all seeds x variants, write results/timings/summary, return the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = min(thread_budget(), len(cfg.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(lambda s: run_seed(cfg, s), cfg.seeds))
    else:
        per_seed = [run_seed(cfg, s) for s in cfg.seeds]
    rows = sorted(
        (row for batch in per_seed for row in batch),
        key=lambda r: (r.seed, r.variant),
    )

    with open(out / RESULTS_CSV, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for row in rows:
            writer.writerow(row.csv_values())

    with open(out / TIMINGS_CSV, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "variant", "fit_ms"])
        for row in rows:
            writer.writerow([row.seed, row.variant, f"{row.fit_ms:.3f}"])

    summary = summarize(cfg, rows)
    with open(out / SUMMARY_JSON, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def summarize(cfg: ExperimentConfig, rows: list[SeedRow]) -> dict:
    variants = {}
    for tag in variant_tags(cfg):
        ok = [r for r in rows if r.variant == tag and r.report is not None]
        entry: dict = {"n_ok": len(ok), "n_failed": sum(
            1 for r in rows if r.variant == tag and r.report is None
        )}
        if ok:
            for name in ("mae", "rmse", "delta1", "delta2", "delta3", "irmse"):
                values = [getattr(r.report, name) for r in ok]
                entry[f"{name}_mean"] = statistics.fmean(values)
                entry[f"{name}_std"] = statistics.pstdev(values)
            entry["fit_ms_mean"] = statistics.fmean(r.fit_ms for r in ok)
        variants[tag] = entry
    return {
        "config": config_to_dict(cfg),
        "n_seeds": len(cfg.seeds),
        "variants": variants,
        "all_failed": all(r.report is None for r in rows),
    }


# ---- gradient check ----------------------------------------------------


def _rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = float(np.max(np.abs(reference)))
    if scale == 0.0:
        return float(np.max(np.abs(analytic)))
    return float(np.max(np.abs(analytic - reference)) / scale)


def _gradcheck_problem(rng: np.random.Generator, cfg: ExperimentConfig, iterations: int):
    gp = cfg.gradcheck
    act = cfg.activation.build()
    n, m = gp.samples, gp.channels
    rows = np.hstack([np.ones((n, 1)), rng.normal(0.0, 1.0, size=(n, m))])
    w_star = rng.normal(0.0, 0.4, size=m + 1)
    targets = rows @ w_star + rng.normal(0.0, 0.15, size=n)
    sigmas = np.full(n, 0.05)
    fit_cfg = FitConfig(
        lam=cfg.fit.lam,
        iterations=iterations,
        robust=cfg.fit.robust if iterations > 0 else False,
        huber_delta=cfg.fit.huber_delta,
    )
    return FitProblem(BasisStack(rows), targets, sigmas, act, fit_cfg)


def run_gradcheck(cfg: ExperimentConfig, tolerance: float | None = None) -> dict:
    """Compare analytic gradients against the finite-difference oracle.

    Instances whose tape trips the Huber-kink guard are redrawn (bounded).
    Returns a report with per-component max relative errors and a 'passed'
    flag; `tolerance` overrides both stage tolerances when given.
    """
    gp = cfg.gradcheck
    tol_lin = tolerance if tolerance is not None else gp.tolerance_linear
    tol_gn = tolerance if tolerance is not None else gp.tolerance_gn
    rng = np.random.default_rng(gp.seed)
    w_ref_rng = np.random.default_rng(gp.seed + 1)

    worst = {"linear": 0.0, "gn": 0.0}
    components = {
        "grad_basis": 0.0,
        "grad_targets": 0.0,
        "grad_depths": 0.0,
    }
    redraws = 0

    def compare(grads: FitGradients, oracle: FitGradients, stage: str):
        for name in components:
            err = _rel_err(getattr(grads, name), getattr(oracle, name))
            components[name] = max(components[name], err)
            worst[stage] = max(worst[stage], err)

    for _ in range(gp.instances):
        # Linear stage.
        problem = _gradcheck_problem(rng, cfg, iterations=0)
        w = problem.run().weights
        w_ref = w_ref_rng.normal(0.0, 1.0, size=w.size)
        grad_w = w - w_ref
        grads = backward_linear(
            problem.basis,
            problem.targets,
            problem.cfg.lam,
            w,
            grad_w,
            act=problem.act,
            depths=problem.act.forward(problem.targets),
        )
        oracle = finite_diff_oracle(
            problem, lambda wv: 0.5 * float(np.sum((wv - w_ref) ** 2)), gp.step
        )
        compare(grads, oracle, "linear")

        # Gauss-Newton stage, redrawing kink-proximal instances.
        for _attempt in range(gp.max_redraws + 1):
            problem = _gradcheck_problem(rng, cfg, iterations=cfg.fit.iterations)
            result = problem.run(keep_tape=True)
            w_ref2 = w_ref_rng.normal(0.0, 1.0, size=result.weights.size)
            try:
                grads = backward_gn(result.tape, result.weights - w_ref2)
            except KinkProximity:
                redraws += 1
                continue
            oracle = finite_diff_oracle(
                problem,
                lambda wv, ref=w_ref2: 0.5 * float(np.sum((wv - ref) ** 2)),
                gp.step,
            )
            compare(grads, oracle, "gn")
            break
        else:
            raise KinkProximity(
                f"could not draw a kink-free instance in {gp.max_redraws} attempts"
            )

    passed = worst["linear"] <= tol_lin and worst["gn"] <= tol_gn
    return {
        "instances": gp.instances,
        "max_rel_err_linear": worst["linear"],
        "max_rel_err_gn": worst["gn"],
        "max_rel_err_by_component": components,
        "tolerance_linear": tol_lin,
        "tolerance_gn": tol_gn,
        "kink_redraws": redraws,
        "passed": passed,
    }


# ---- benchmark ---------------------------------------------------------


def run_bench(cfg: ExperimentConfig, seed: int = 0) -> list[dict]:
    """Median-of-k fit timings for each variant x size x channel plan."""
    bench = cfg.bench
    act = cfg.activation.build()
    rows = []
    for plan in bench.channel_plans:
        for height, width in bench.sizes:
            scene_seed, bases_seed, sampler_seed = sub_seeds(seed)
            scene = generate_scene(
                height, width, cfg.scene.kind, act, cfg.scene.depth_cap, scene_seed
            )
            bases, _ = generate_bases(scene, plan, cfg.basis_mode, bases_seed)
            # The bench sample budget overrides the sampler density.
            density = min(1.0, bench.samples / (height * width))
            sampler_cfg = replace(cfg.sampler.build(sampler_seed), density=density)
            sample = sample_sparse(scene, sampler_cfg)
            basis = flatten_to_stack(bases, sample.sparse.pixel_ids)
            for tag in variant_tags(cfg):
                times = []
                for _ in range(2):  # warmup
                    _fit_for_variant(tag, cfg, basis, sample.sparse, act)
                for _ in range(bench.repeats):
                    begin = time.perf_counter()
                    _fit_for_variant(tag, cfg, basis, sample.sparse, act)
                    times.append((time.perf_counter() - begin) * 1e3)
                rows.append(
                    {
                        "variant": tag,
                        "height": height,
                        "width": width,
                        "channel_plan": list(plan),
                        "samples": sample.sparse.count,
                        "median_ms": statistics.median(times),
                        "repeats": bench.repeats,
                    }
                )
    return rows
