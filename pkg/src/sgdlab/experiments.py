"""Experiment harness: figure presets, batch sweeps, scaling fits, the tuner.

Every experiment is a pure function of (preset name, seed, config): datasets
are regenerated deterministically from their seeds, per-run seeds are derived
from stable spawn keys (never from execution order), and aggregation is an
order-independent fold, so results are reproducible bit-exactly whether runs
execute serially or across a worker pool.

Outputs are CSV files (column schemas in each preset's docstring) plus one
JSON summary per run embedding the resolved configuration and seed.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import data as dat
from . import evidence as evd
from . import models as mdl
from . import noise as noi
from . import optim
from .numkit import RngStream, fit_line

_PKG_VERSION = "0.1.0"

__all__ = [
    "TaskSpec",
    "SweepSpec",
    "RunRecord",
    "SweepResult",
    "BestBatch",
    "LambdaRecord",
    "ScalingResult",
    "TuneResult",
    "NoValidPointError",
    "DEFAULT_BATCH_GRID",
    "LR_AXIS_BATCH_GRID",
    "DEFAULT_LAMBDA_GRID",
    "PRESET_NAMES",
    "run_batch_sweep",
    "best_batch",
    "run_lambda_sweep",
    "scaling_experiment",
    "fit_scaling",
    "heuristic_tune",
    "run_preset",
    "double_well_cost",
    "sgld_basin_occupancy",
]

DEFAULT_BATCH_GRID = (5, 10, 20, 30, 50, 100, 200, 350, 600, 1000)
LR_AXIS_BATCH_GRID = (5, 10, 20, 30, 50, 100, 200, 350, 600)
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-2, 2, 25))


class NoValidPointError(RuntimeError):
    """Every run in a sweep diverged; there is no best batch size."""


# ---------------------------------------------------------------------------
# Task construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    """Ten-class digit task for the shallow-network experiments.

    ``side=14, hidden=100`` is the desk scale; ``side=28, hidden=800`` is the
    paper-faithful scale.  When ``mnist_dir`` is set the task reads real MNIST
    IDX files instead of the synthetic corpus (and ``side`` must be 28).
    """

    train_n: int = 1000
    test_n: int = 2000
    side: int = 14
    hidden: int = 100
    data_seed: int = 0
    pixel_noise: float = 0.07
    distortion: float = 2.5
    pool_n: int | None = None  # synthetic train pool to subset from
    mnist_dir: str | None = None

    def __post_init__(self):
        if self.mnist_dir is not None and self.side != 28:
            raise ValueError("real MNIST is 28x28")

    @property
    def d(self) -> int:
        return self.side * self.side

    def build(self) -> dat.SplitPair:
        return _build_task_pair(self)


@lru_cache(maxsize=8)
def _build_task_pair(task: TaskSpec) -> dat.SplitPair:
    if task.mnist_dir is not None:
        source = dat.load_mnist_dir(task.mnist_dir)
        return dat.build_small_mnist10(source, task.train_n, task.data_seed)
    pool = task.pool_n or task.train_n
    source = dat.synthetic_mnist(
        pool, task.test_n, side=task.side, seed=task.data_seed,
        noise=task.pixel_noise, distortion=task.distortion,
    )
    if pool == task.train_n:
        return source
    return dat.build_small_mnist10(source, task.train_n, task.data_seed)


def _binary_source(
    task_seed: int, side: int = 28, mnist_dir: str | None = None,
    pool_train: int = 6000, pool_test: int = 20000, pixel_noise: float = 0.07,
) -> dat.SplitPair:
    if mnist_dir is not None:
        return dat.load_mnist_dir(mnist_dir)
    return dat.synthetic_mnist(
        pool_train, pool_test, side=side, seed=task_seed, noise=pixel_noise
    )


# ---------------------------------------------------------------------------
# Batch sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """A batch-size sweep: the grid, the shared hyperparameters, and repeats."""

    name: str
    grid: tuple[int, ...]
    repeats: int
    seed: int
    epsilon: float = 1.0
    momentum: float = 0.9
    lam: float = 0.0
    steps: int = 10000
    eval_every: int | None = None  # None -> final step only

    def __post_init__(self):
        if not self.grid:
            raise ValueError("grid must be nonempty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    batch: int
    repeat: int
    seed: int
    final_test_acc: float
    final_train_acc: float
    diverged: bool
    diverged_step: int | None


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    task: TaskSpec
    grid: tuple[int, ...]
    records: tuple[RunRecord, ...]  # grid-major, repeat-minor order
    mean_acc: tuple[float, ...]
    std_acc: tuple[float, ...]
    metadata: dict = field(compare=False)


def _seed_for(base_seed: int, batch: int, repeat: int) -> int:
    # Stable per-(B, repeat) seed: identical across grids, lambda values and
    # execution order, which is what "same seeds" comparisons rely on.
    seq = np.random.SeedSequence(base_seed, spawn_key=(batch, repeat))
    return int(seq.generate_state(2, np.uint64)[0])


def _run_one(task: TaskSpec, spec: SweepSpec, batch: int, repeat: int) -> RunRecord:
    pair = _build_task_pair(task)
    run_seed = _seed_for(spec.seed, batch, repeat)
    model = mdl.init_mlp(task.d, task.hidden, 10, RngStream(run_seed).split(2))
    config = optim.TrainConfig(
        epsilon=spec.epsilon,
        batch=batch,
        steps=spec.steps,
        seed=run_seed,
        momentum=spec.momentum,
        lam=spec.lam,
        eval_every=spec.eval_every or max(1, spec.steps),
    )
    try:
        _, trajectory = optim.train(model, pair, config, mode="momentum")
    except optim.DivergedError as err:
        return RunRecord(batch, repeat, run_seed, 0.0, 0.0, True, err.step)
    last = trajectory[-1]
    return RunRecord(
        batch, repeat, run_seed, last.test_acc, last.train_acc, False, None
    )


def run_batch_sweep(spec: SweepSpec, task: TaskSpec, workers: int = 1) -> SweepResult:
    """Train ``repeats`` runs per grid point; diverged runs score 0 and carry
    a flag (the small-batch failure region must stay visible in outputs)."""
    jobs = [(batch, repeat) for batch in spec.grid for repeat in range(spec.repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_star, [(task, spec, b, r) for b, r in jobs]))
    else:
        results = [_run_one(task, spec, b, r) for b, r in jobs]
    by_key = {(rec.batch, rec.repeat): rec for rec in results}
    records = tuple(by_key[job] for job in jobs)
    means, stds = [], []
    for batch in spec.grid:
        accs = np.array([by_key[(batch, r)].final_test_acc for r in range(spec.repeats)])
        means.append(float(accs.mean()))
        stds.append(float(accs.std(ddof=1)) if spec.repeats > 1 else 0.0)
    metadata = _metadata({"spec": asdict(spec), "task": asdict(task)})
    return SweepResult(
        spec, task, spec.grid, records, tuple(means), tuple(stds), metadata
    )


def _run_one_star(args):
    return _run_one(*args)


def _metadata(payload: dict) -> dict:
    blob = json.dumps(payload, sort_keys=True, default=str)
    return {
        "config": payload,
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "version": _PKG_VERSION,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


@dataclass(frozen=True)
class BestBatch:
    b_star: int
    lower_gap: int
    upper_gap: int
    at_edge: bool


def best_batch(result: SweepResult) -> BestBatch:
    """Argmax of mean final accuracy; ties go to the smaller batch size.

    Gap fields report the distance to the neighboring sampled batch sizes
    (the error bars of the scaling plots); a peak at a grid endpoint gets a
    one-sided gap of 0 and the ``at_edge`` flag, signalling the grid should
    be widened.
    """
    if len(result.grid) < 3:
        raise ValueError("need at least 3 grid points")
    if all(rec.diverged for rec in result.records):
        raise NoValidPointError("every run in the sweep diverged")
    k = int(np.argmax(result.mean_acc))  # first max: smaller batch wins ties
    grid = result.grid
    lower = grid[k] - grid[k - 1] if k > 0 else 0
    upper = grid[k + 1] - grid[k] if k < len(grid) - 1 else 0
    return BestBatch(grid[k], lower, upper, k == 0 or k == len(grid) - 1)


# ---------------------------------------------------------------------------
# Lambda sweeps (memorization experiments)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaRecord:
    lam: float
    train_acc: float
    test_acc: float
    train_xent: float  # per-example mean, nats
    test_xent: float
    margin: float
    report: evd.EvidenceReport


def run_lambda_sweep(
    labels_mode: str,
    lambdas=DEFAULT_LAMBDA_GRID,
    train_n: int = 800,
    seed: int = 0,
    source: dat.SplitPair | None = None,
    mnist_dir: str | None = None,
    randomize_test: bool = True,
    truncate: bool = False,
) -> list[LambdaRecord]:
    """Fit the two-class task at every regularization value and report
    accuracy, cross-entropy, margin and the evidence.

    ``labels_mode`` is ``"informative"`` (true digit labels) or ``"random"``
    (labels replaced by coin flips on both the train and, unless
    ``randomize_test=False``, the test set).
    """
    if labels_mode not in ("random", "informative"):
        raise ValueError("labels_mode must be 'random' or 'informative'")
    if source is None:
        source = _binary_source(seed, mnist_dir=mnist_dir)
    pair = dat.build_binary_mnist(source, train_n, seed)
    train, test = pair.train, pair.test
    if labels_mode == "random":
        train = dat.randomize_labels(train, seed + 1)
        if randomize_test:
            test = dat.randomize_labels(test, seed + 2)

    records = []
    for lam in lambdas:
        lam = float(lam)
        fitted = optim.minimize_full_batch(mdl.init_logreg(train.d), train, lam)
        report = evd.evidence_report(fitted, train, lam, truncate=truncate)
        # At a strict minimum of the regularized convex cost the data term is
        # PSD, so no eigenvalue can fall below the prior floor.
        assert report.eigenvalues[0] >= lam - 1e-6 * max(1.0, lam)
        _, train_acc = mdl.predict_and_accuracy(fitted, train)
        _, test_acc = mdl.predict_and_accuracy(fitted, test)
        records.append(
            LambdaRecord(
                lam=lam,
                train_acc=train_acc,
                test_acc=test_acc,
                train_xent=mdl.mean_xent(fitted, train),
                test_xent=mdl.mean_xent(fitted, test),
                margin=mdl.mean_margin(fitted, train),
                report=report,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Scaling experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingResult:
    axis: str
    values: tuple[float, ...]
    b_star: tuple[int, ...]
    gaps: tuple[tuple[int, int], ...]
    slope: float
    intercept: float
    r_squared: float
    sweeps: tuple[SweepResult, ...]


def scaling_experiment(
    axis: str,
    values,
    base_spec: SweepSpec,
    task: TaskSpec,
    batch_grid=None,
    workers: int = 1,
) -> ScalingResult:
    """Sweep batch size at each axis value and fit the predicted scaling.

    axis="lr":       steps scale as base.steps * base.epsilon / value; the fit
                     is log(B_opt) against log(epsilon).
    axis="trainset": the task is rebuilt at each training-set size (a uniform
                     subset of the largest); fit log(B_opt) vs log(N).
    axis="momentum": fit B_opt against 1/(1-m) on a linear scale.
    """
    if axis not in ("lr", "trainset", "momentum"):
        raise ValueError("axis must be lr, trainset or momentum")
    values = tuple(float(v) for v in values)
    if len(values) < 3:
        raise ValueError("need at least 3 axis values")
    grid = tuple(batch_grid) if batch_grid is not None else base_spec.grid

    sweeps, stars, gaps = [], [], []
    for v in values:
        spec, tsk = base_spec, task
        if axis == "lr":
            steps = max(1, round(base_spec.steps * base_spec.epsilon / v))
            spec = replace(base_spec, epsilon=v, steps=steps, grid=grid)
        elif axis == "trainset":
            n = int(round(v))
            pool = max(int(round(max(values))), task.train_n)
            tsk = replace(task, train_n=n, pool_n=pool)
            spec = replace(base_spec, grid=tuple(b for b in grid if b <= n))
        else:
            spec = replace(base_spec, momentum=v, grid=grid)
        spec = replace(spec, name=f"{base_spec.name}[{axis}={v:g}]")
        sweep = run_batch_sweep(spec, tsk, workers=workers)
        best = best_batch(sweep)
        sweeps.append(sweep)
        stars.append(best.b_star)
        gaps.append((best.lower_gap, best.upper_gap))

    slope, intercept, r2 = fit_scaling(axis, values, stars)
    return ScalingResult(
        axis, values, tuple(stars), tuple(gaps), slope, intercept, r2, tuple(sweeps)
    )


def fit_scaling(axis: str, values, b_stars) -> tuple[float, float, float]:
    """The scaling-rule fit: log-log for the lr and trainset axes, linear in
    1/(1-m) for the momentum axis."""
    if axis == "momentum":
        return fit_line([1.0 / (1.0 - m) for m in values], b_stars)
    return fit_line(np.log(np.asarray(values, float)),
                    np.log(np.asarray(b_stars, float)))


# ---------------------------------------------------------------------------
# Appendix-E style tuner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuneResult:
    epsilon: float
    batch: int
    momentum: float
    accuracy: float
    capped: bool
    audit: tuple[dict, ...]


def heuristic_tune(
    evaluator,
    hardware_max_b: int,
    initial_epsilon: float = 0.1,
    initial_momentum: float = 0.9,
    initial_batches=None,
    max_lr_retries: int = 8,
) -> TuneResult:
    """Three-phase batch-size/learning-rate/momentum tuning heuristic.

    1. At (eps=0.1, m=0.9), scan batch sizes on a log grid and take the
       accuracy argmax; if every evaluation fails, halve eps and rescan.
    2. Repeatedly triple B with eps proportional to B until accuracy falls,
       then repeatedly triple B with (1-m) inversely proportional to B until
       accuracy falls or the hardware cap is reached.
    3. Re-tune B on a local linear grid around the incumbent.

    ``evaluator(epsilon, batch, momentum) -> accuracy`` must be deterministic;
    a raised ``DivergedError``/``FloatingPointError`` or NaN marks the point
    unstable.  Every evaluation lands in the audit log.
    """
    if hardware_max_b < 1:
        raise ValueError("hardware_max_b must be >= 1")
    audit: list[dict] = []

    def evaluate(phase, eps, batch, m):
        try:
            acc = float(evaluator(eps, batch, m))
        except (optim.DivergedError, FloatingPointError) as err:
            audit.append(
                {"phase": phase, "epsilon": eps, "batch": batch, "momentum": m,
                 "accuracy": None, "note": f"unstable: {err}"}
            )
            return math.nan
        audit.append(
            {"phase": phase, "epsilon": eps, "batch": batch, "momentum": m,
             "accuracy": acc, "note": ""}
        )
        return acc

    if initial_batches is None:
        batches, b = [], 1
        while b <= hardware_max_b:
            batches.append(b)
            b *= 3
    else:
        batches = [b for b in initial_batches if b <= hardware_max_b]
    if not batches:
        raise ValueError("no admissible batch sizes under the hardware cap")

    # Phase 1: log-scale scan, halving the learning rate until something trains.
    eps, m = float(initial_epsilon), float(initial_momentum)
    for _ in range(max_lr_retries):
        accs = [evaluate("grid", eps, b, m) for b in batches]
        finite = [(a, b) for a, b in zip(accs, batches) if not math.isnan(a)]
        if finite:
            break
        eps *= 0.5
    else:
        raise RuntimeError("no stable configuration found in phase 1")
    best_acc, best_b = max(finite, key=lambda t: (t[0], -t[1]))
    capped = False

    # Phase 2a: triple B with eps proportional to B.
    while True:
        nb = best_b * 3
        if nb > hardware_max_b:
            capped = True
            break
        acc = evaluate("triple-lr", eps * 3, nb, m)
        if math.isnan(acc) or acc < best_acc:
            break
        eps, best_b, best_acc = eps * 3, nb, acc

    # Phase 2b: triple B shrinking (1 - m) by the same factor.
    while True:
        nb = best_b * 3
        if nb > hardware_max_b:
            capped = True
            break
        nm = 1.0 - (1.0 - m) / 3.0
        acc = evaluate("triple-momentum", eps, nb, nm)
        if math.isnan(acc) or acc < best_acc:
            break
        m, best_b, best_acc = nm, nb, acc

    # Phase 3: local linear re-tune of B.
    candidates = sorted(
        {
            min(hardware_max_b, max(1, int(round(best_b * f))))
            for f in (0.5, 0.75, 1.0, 1.25, 1.5)
        }
    )
    for b in candidates:
        if b == best_b:
            continue
        acc = evaluate("local", eps, b, m)
        if not math.isnan(acc) and (acc > best_acc or (acc == best_acc and b < best_b)):
            best_acc, best_b = acc, b

    return TuneResult(eps, best_b, m, best_acc, capped, tuple(audit))


# ---------------------------------------------------------------------------
# Double well + SGLD basin occupancy (posterior-sampling demo)
# ---------------------------------------------------------------------------


def double_well_cost(a: float, b: float):
    """The 1-D double well C(w) = a*(w**2 - 1)**2 + b*w and its derivative."""

    def cost(w):
        w = np.asarray(w, dtype=np.float64)
        return a * (w**2 - 1.0) ** 2 + b * w

    def grad(w):
        w = np.asarray(w, dtype=np.float64)
        return 4.0 * a * w * (w**2 - 1.0) + b

    return cost, grad


def _basin_split(cost_fn, lo=-2.0, hi=2.0) -> float:
    """Interior local maximum of the double well (the basin boundary)."""
    w = np.linspace(lo, hi, 20001)
    c = cost_fn(w)
    interior = slice(1, -1)
    is_max = (c[interior] >= c[:-2]) & (c[interior] >= c[2:])
    candidates = np.flatnonzero(is_max) + 1
    if candidates.size == 0:
        raise ValueError("no interior local maximum; not a double well?")
    return float(w[candidates[np.argmax(c[candidates])]])


def sgld_basin_occupancy(
    a: float = 1.0,
    b: float = 0.5,
    epsilon: float = 0.01,
    steps: int = 400_000,
    burn_in: float = 0.1,
    temperature: float = 1.0,
    seed: int = 0,
    chains: int = 4,
    box: float = 4.0,
) -> dict:
    """Long SGLD run on the double well vs quadrature basin evidence.

    Returns occupancy fractions of the two basins of attraction alongside the
    quadrature fractions of ``exp(-C/T)`` mass on each side of the interior
    barrier: posterior sampling visits a minimum in proportion to the local
    evidence in its favor.
    """
    cost_fn, grad_fn = double_well_cost(a, b)
    # The chains vector rides through sgld_step as one parameter vector: the
    # gradient acts elementwise and the injected noise is i.i.d. per entry.
    obj = optim.FunctionObjective(cost_fn, grad_fn)
    rng = RngStream(seed).split(47)
    w = rng.uniform(-1.5, 1.5, size=chains)
    skip = int(steps * burn_in)
    counts = np.zeros(2, dtype=np.int64)
    split = _basin_split(cost_fn)
    for t in range(steps):
        w = optim.sgld_step(w, obj, epsilon, temperature, rng)
        if t >= skip:
            right = np.count_nonzero(w > split)
            counts += (chains - right, right)
    occupancy = counts / counts.sum()

    grid = np.linspace(-box, box, 200_001)
    weight = np.exp(-(cost_fn(grid) - cost_fn(grid).min()) / temperature)
    mass_left = np.trapezoid(np.where(grid <= split, weight, 0.0), grid)
    mass_right = np.trapezoid(np.where(grid > split, weight, 0.0), grid)
    fractions = np.array([mass_left, mass_right]) / (mass_left + mass_right)
    return {
        "split": split,
        "occupancy": occupancy.tolist(),
        "evidence_fraction": fractions.tolist(),
        "params": {"a": a, "b": b, "epsilon": epsilon, "steps": steps,
                   "temperature": temperature, "seed": seed, "chains": chains},
    }


# ---------------------------------------------------------------------------
# Presets: one per figure/appendix experiment.  Each writes CSV artifacts plus
# a JSON summary embedding the resolved configuration, and returns the summary.
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def _finish(out_dir: Path, name: str, resolved: dict, summary: dict, files: list) -> dict:
    payload = {
        "preset": name,
        "summary": summary,
        "files": files,
        "metadata": _metadata(resolved),
    }
    path = out_dir / f"{name}_summary.json"
    path.write_text(json.dumps(payload, indent=2, default=str))
    payload["summary_path"] = str(path)
    return payload


def _task_from_config(cfg: dict) -> TaskSpec:
    return TaskSpec(
        train_n=int(cfg.get("train_n", 1000)),
        test_n=int(cfg.get("test_n", 2000)),
        side=int(cfg.get("side", 14)),
        hidden=int(cfg.get("hidden", 100)),
        data_seed=int(cfg.get("data_seed", 0)),
        pixel_noise=float(cfg.get("pixel_noise", 0.07)),
        distortion=float(cfg.get("distortion", 2.5)),
        mnist_dir=cfg.get("mnist_dir"),
    )


def _sweep_csv_rows(result: SweepResult):
    raw = [
        [r.batch, r.repeat, f"{r.final_test_acc:.10g}", int(r.diverged)]
        for r in result.records
    ]
    summary = [
        [b, f"{m:.10g}", f"{s:.10g}"]
        for b, m, s in zip(result.grid, result.mean_acc, result.std_acc)
    ]
    return raw, summary


def preset_fig1_2_lambda(out_dir: Path, cfg: dict) -> dict:
    """Memorization experiments: accuracy, margin, cross-entropy and evidence
    over the regularization grid for random and informative labels.

    CSV columns: lambda, train_acc, test_acc, train_xent, test_xent, margin,
    cost_at_min, occam, log_evidence_ratio.
    """
    seed = int(cfg.get("seed", 0))
    lambdas = cfg.get("lambda_grid", DEFAULT_LAMBDA_GRID)
    train_n = int(cfg.get("train_n", 800))
    files, summary = [], {}
    for mode in ("random", "informative"):
        records = run_lambda_sweep(
            mode, lambdas, train_n=train_n, seed=seed,
            mnist_dir=cfg.get("mnist_dir"),
            randomize_test=bool(cfg.get("randomize_test", True)),
        )
        rows = [
            [
                f"{r.lam:.10g}", f"{r.train_acc:.10g}", f"{r.test_acc:.10g}",
                f"{r.train_xent:.10g}", f"{r.test_xent:.10g}", f"{r.margin:.10g}",
                f"{r.report.cost_at_min:.10g}", f"{r.report.occam:.10g}",
                f"{r.report.log_evidence_ratio:.10g}",
            ]
            for r in records
        ]
        files.append(_write_csv(
            out_dir / f"fig1_2_{mode}.csv",
            ["lambda", "train_acc", "test_acc", "train_xent", "test_xent",
             "margin", "cost_at_min", "occam", "log_evidence_ratio"],
            rows,
        ))
        evalues = [r.report.log_evidence_ratio for r in records]
        summary[mode] = {
            "min_E": min(evalues),
            "max_E": max(evalues),
            "best_test_acc": max(r.test_acc for r in records),
            "weakest_lambda_train_acc": records[0].train_acc,
            "weakest_lambda_margin": records[0].margin,
        }
    resolved = {"seed": seed, "train_n": train_n, "lambda_grid": list(map(float, lambdas)),
                "mnist_dir": cfg.get("mnist_dir")}
    return _finish(out_dir, "fig1_2_lambda", resolved, summary, files)


def preset_fig3_curves(out_dir: Path, cfg: dict) -> dict:
    """Small-batch vs full-batch training curves on the ten-class task.

    CSV columns: batch, step, train_acc, test_acc, train_xent, test_xent.
    """
    seed = int(cfg.get("seed", 0))
    task = _task_from_config(cfg)
    steps = int(cfg.get("steps", 10000))
    small = int(cfg.get("small_batch", 30))
    rows, summary = [], {}
    pair = task.build()
    for batch in (small, task.train_n):
        run_seed = _seed_for(seed, batch, 0)
        model = mdl.init_mlp(task.d, task.hidden, 10, RngStream(run_seed).split(2))
        config = optim.TrainConfig(
            epsilon=float(cfg.get("epsilon", 1.0)), batch=batch, steps=steps,
            seed=run_seed, momentum=float(cfg.get("momentum", 0.9)),
            lam=float(cfg.get("lam", 0.0)), eval_every=int(cfg.get("eval_every", 250)),
        )
        _, trajectory = optim.train(model, pair, config, mode="momentum")
        rows += [
            [batch, r.step, f"{r.train_acc:.10g}", f"{r.test_acc:.10g}",
             f"{r.train_xent:.10g}", f"{r.test_xent:.10g}"]
            for r in trajectory
        ]
        summary[f"B={batch}"] = {"final_test_acc": trajectory[-1].test_acc,
                                 "final_test_xent": trajectory[-1].test_xent}
    files = [_write_csv(
        out_dir / "fig3_curves.csv",
        ["batch", "step", "train_acc", "test_acc", "train_xent", "test_xent"],
        rows,
    )]
    resolved = {"seed": seed, "task": asdict(task), "steps": steps, "small_batch": small}
    return _finish(out_dir, "fig3_curves", resolved, summary, files)


def preset_fig4_batch_peak(out_dir: Path, cfg: dict) -> dict:
    """Mean final test accuracy over the batch-size grid (the peak plot).

    Raw CSV columns: batch, repeat, final_test_acc, diverged.
    Summary CSV columns: batch, mean_test_acc, std_test_acc.
    """
    seed = int(cfg.get("seed", 0))
    task = _task_from_config(cfg)
    grid = tuple(int(b) for b in cfg.get("batch_grid", DEFAULT_BATCH_GRID)
                 if int(b) <= task.train_n)
    spec = SweepSpec(
        name="fig4_batch_peak", grid=grid, repeats=int(cfg.get("repeats", 5)),
        seed=seed, epsilon=float(cfg.get("epsilon", 1.0)),
        momentum=float(cfg.get("momentum", 0.9)), lam=float(cfg.get("lam", 0.0)),
        steps=int(cfg.get("steps", 10000)),
    )
    result = run_batch_sweep(spec, task, workers=int(cfg.get("workers", 1)))
    best = best_batch(result)
    raw, summary_rows = _sweep_csv_rows(result)
    files = [
        _write_csv(out_dir / "fig4_batch_peak.csv",
                   ["batch", "repeat", "final_test_acc", "diverged"], raw),
        _write_csv(out_dir / "fig4_batch_peak_summary.csv",
                   ["batch", "mean_test_acc", "std_test_acc"], summary_rows),
    ]
    summary = {"best_batch": asdict(best), "mean_acc": dict(zip(map(str, result.grid),
                                                                result.mean_acc))}
    resolved = {"seed": seed, "task": asdict(task), "spec": asdict(spec)}
    return _finish(out_dir, "fig4_batch_peak", resolved, summary, files)


def _scaling_preset(name: str, axis: str, values, out_dir: Path, cfg: dict) -> dict:
    """Shared driver for the three scaling-rule presets.

    Points CSV columns: axis_value, b_star, lower_gap, upper_gap.
    Sweeps CSV columns: axis_value, batch, mean_test_acc, std_test_acc.
    """
    seed = int(cfg.get("seed", 0))
    task = _task_from_config(cfg)
    grid = tuple(int(b) for b in cfg.get("batch_grid", LR_AXIS_BATCH_GRID))
    spec = SweepSpec(
        name=name, grid=grid, repeats=int(cfg.get("repeats", 3)), seed=seed,
        epsilon=float(cfg.get("epsilon", 1.0)),
        momentum=float(cfg.get("momentum", 0.9)), lam=float(cfg.get("lam", 0.0)),
        steps=int(cfg.get("steps", 10000)),
    )
    result = scaling_experiment(axis, values, spec, task,
                                workers=int(cfg.get("workers", 1)))
    point_rows = [
        [f"{v:.10g}", b, lo, hi]
        for v, b, (lo, hi) in zip(result.values, result.b_star, result.gaps)
    ]
    sweep_rows = []
    for v, sweep in zip(result.values, result.sweeps):
        sweep_rows += [
            [f"{v:.10g}", b, f"{m:.10g}", f"{s:.10g}"]
            for b, m, s in zip(sweep.grid, sweep.mean_acc, sweep.std_acc)
        ]
    files = [
        _write_csv(out_dir / f"{name}_points.csv",
                   ["axis_value", "b_star", "lower_gap", "upper_gap"], point_rows),
        _write_csv(out_dir / f"{name}_sweeps.csv",
                   ["axis_value", "batch", "mean_test_acc", "std_test_acc"], sweep_rows),
    ]
    summary = {
        "axis": axis, "values": list(result.values), "b_star": list(result.b_star),
        "slope": result.slope, "intercept": result.intercept,
        "r_squared": result.r_squared,
    }
    resolved = {"seed": seed, "task": asdict(task), "spec": asdict(spec),
                "axis_values": list(map(float, values))}
    return _finish(out_dir, name, resolved, summary, files)


def preset_fig5_lr_scaling(out_dir: Path, cfg: dict) -> dict:
    values = cfg.get("lr_values", (0.25, 0.5, 1.0, 2.0))
    return _scaling_preset("fig5_lr_scaling", "lr", values, out_dir, cfg)


def preset_fig6_N_scaling(out_dir: Path, cfg: dict) -> dict:
    values = cfg.get("n_values", (200, 500, 1000))
    return _scaling_preset("fig6_N_scaling", "trainset", values, out_dir, cfg)


def preset_fig7_momentum_scaling(out_dir: Path, cfg: dict) -> dict:
    values = cfg.get("m_values", (0.0, 0.5, 0.75, 0.9))
    return _scaling_preset("fig7_momentum_scaling", "momentum", values, out_dir, cfg)


def preset_appB_regularized_gap(out_dir: Path, cfg: dict) -> dict:
    """Small-vs-full-batch trajectories with and without L2 regularization.

    CSV columns: lam, batch, step, train_acc, test_acc, train_xent, test_xent.
    """
    seed = int(cfg.get("seed", 0))
    task = _task_from_config(cfg)
    steps = int(cfg.get("steps", 10000))
    small = int(cfg.get("small_batch", 30))
    lams = tuple(float(v) for v in cfg.get("lam_values", (0.0, 0.1)))
    pair = task.build()
    rows, summary = [], {}
    for lam in lams:
        finals = {}
        for batch in (small, task.train_n):
            run_seed = _seed_for(seed, batch, 0)  # same seeds across lam
            model = mdl.init_mlp(task.d, task.hidden, 10, RngStream(run_seed).split(2))
            config = optim.TrainConfig(
                epsilon=float(cfg.get("epsilon", 1.0)), batch=batch, steps=steps,
                seed=run_seed, momentum=float(cfg.get("momentum", 0.9)), lam=lam,
                eval_every=int(cfg.get("eval_every", 250)),
            )
            _, trajectory = optim.train(model, pair, config, mode="momentum")
            rows += [
                [f"{lam:g}", batch, r.step, f"{r.train_acc:.10g}",
                 f"{r.test_acc:.10g}", f"{r.train_xent:.10g}", f"{r.test_xent:.10g}"]
                for r in trajectory
            ]
            finals[batch] = trajectory
        gap = finals[small][-1].test_acc - finals[task.train_n][-1].test_acc
        summary[f"lam={lam:g}"] = {
            "gap_small_minus_full": gap,
            "final_small": finals[small][-1].test_acc,
            "final_full": finals[task.train_n][-1].test_acc,
        }
    files = [_write_csv(
        out_dir / "appB_regularized_gap.csv",
        ["lam", "batch", "step", "train_acc", "test_acc", "train_xent", "test_xent"],
        rows,
    )]
    resolved = {"seed": seed, "task": asdict(task), "steps": steps,
                "small_batch": small, "lam_values": list(lams)}
    return _finish(out_dir, "appB_regularized_gap", resolved, summary, files)


def preset_appA_sgld_basins(out_dir: Path, cfg: dict) -> dict:
    """Langevin basin occupancy vs quadrature local evidence on a double well.

    CSV columns: basin, occupancy, evidence_fraction.
    """
    result = sgld_basin_occupancy(
        a=float(cfg.get("a", 1.0)), b=float(cfg.get("b", 0.5)),
        epsilon=float(cfg.get("epsilon", 0.01)),
        steps=int(cfg.get("steps", 400_000)),
        temperature=float(cfg.get("temperature", 1.0)),
        seed=int(cfg.get("seed", 0)), chains=int(cfg.get("chains", 4)),
    )
    rows = [
        ["left", f"{result['occupancy'][0]:.10g}", f"{result['evidence_fraction'][0]:.10g}"],
        ["right", f"{result['occupancy'][1]:.10g}", f"{result['evidence_fraction'][1]:.10g}"],
    ]
    files = [_write_csv(out_dir / "appA_sgld_basins.csv",
                        ["basin", "occupancy", "evidence_fraction"], rows)]
    return _finish(out_dir, "appA_sgld_basins", result["params"], result, files)


def preset_fig9_gaussianity(out_dir: Path, cfg: dict) -> dict:
    """Gradient-noise Gaussianity diagnostics at random initialization.

    Histogram CSV columns: distribution, bin_left, bin_right, count.
    """
    seed = int(cfg.get("seed", 0))
    task = _task_from_config(cfg)
    batch = int(cfg.get("batch", 30))
    draws = int(cfg.get("draws", 20000))
    pair = task.build()
    rng = RngStream(seed).split(53)
    model = mdl.init_mlp(task.d, task.hidden, 10, rng.split(0))
    # A random softmax-layer weight, as in the figure.
    w2_start = (task.d + 1) * task.hidden
    index = w2_start + int(rng.split(1).integers(0, task.hidden * 10))
    single, batched = noi.gaussianity_report(model, pair.train, index, batch,
                                             draws, rng.split(2))
    g_single = mdl.per_example_grad_component(model, pair.train, index)
    means = np.empty(draws)
    sampler = rng.split(2)  # same stream id -> same batches as the report
    for k in range(draws):
        idx = optim.sample_minibatch(pair.train.n, batch, sampler)
        means[k] = g_single[idx].mean()
    rows = []
    for label, sample in (("single", g_single), ("minibatch", means)):
        counts, edges = np.histogram(sample, bins=int(cfg.get("bins", 60)))
        rows += [
            [label, f"{edges[i]:.10g}", f"{edges[i + 1]:.10g}", int(counts[i])]
            for i in range(counts.size)
        ]
    files = [_write_csv(out_dir / "fig9_gaussianity.csv",
                        ["distribution", "bin_left", "bin_right", "count"], rows)]
    summary = {
        "param_index": index,
        "single": asdict(single),
        "minibatch": asdict(batched),
        "skew_ratio": abs(batched.skewness) / abs(single.skewness)
        if single.skewness else None,
    }
    resolved = {"seed": seed, "task": asdict(task), "batch": batch, "draws": draws}
    return _finish(out_dir, "fig9_gaussianity", resolved, summary, files)


PRESETS = {
    "fig1_2_lambda": preset_fig1_2_lambda,
    "fig3_curves": preset_fig3_curves,
    "fig4_batch_peak": preset_fig4_batch_peak,
    "fig5_lr_scaling": preset_fig5_lr_scaling,
    "fig6_N_scaling": preset_fig6_N_scaling,
    "fig7_momentum_scaling": preset_fig7_momentum_scaling,
    "appB_regularized_gap": preset_appB_regularized_gap,
    "appA_sgld_basins": preset_appA_sgld_basins,
    "fig9_gaussianity": preset_fig9_gaussianity,
}
PRESET_NAMES = tuple(PRESETS)


def run_preset(name: str, out_dir, config: dict | None = None) -> dict:
    """Run one named experiment preset, writing its artifacts into ``out_dir``."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return PRESETS[name](out, dict(config or {}))
