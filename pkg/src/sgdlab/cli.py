"""Command-line front end.

Configuration is a flat ``key = value`` text file (``#`` comments allowed;
values parsed as JSON when possible, e.g. ``batch_grid = [10, 30, 100]``),
overridden by repeatable ``--set key=value`` flags.  Every run writes its
artifacts plus a JSON summary embedding the resolved configuration and seed
into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dat
from . import evidence as evd
from . import experiments as exp
from . import models as mdl
from . import noise as noi
from . import optim
from .numkit import RngStream


def parse_config_file(path) -> dict:
    """Parse ``key = value`` lines; values go through json.loads when they can."""
    config = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        config[key] = _coerce(value)
    return config


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _resolve_config(args) -> dict:
    config = parse_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        config[key.strip()] = _coerce(value.strip())
    if args.seed is not None:
        config["seed"] = args.seed
    return config


def _add_common(parser):
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out-dir", default="runs", help="artifact directory")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(out: Path, name: str, payload: dict) -> None:
    path = out / f"{name}_summary.json"
    path.write_text(json.dumps(payload, indent=2, default=str))
    print(json.dumps(payload.get("summary", payload), indent=2, default=str))
    print(f"summary: {path}")


def cmd_preset(args) -> int:
    config = _resolve_config(args)
    payload = exp.run_preset(args.name, _out_dir(args), config)
    print(json.dumps(payload["summary"], indent=2, default=str))
    for f in payload["files"]:
        print(f"wrote: {f}")
    print(f"summary: {payload['summary_path']}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    seed = int(config.get("seed", 0))
    task = exp._task_from_config(config)
    pair = task.build()
    model = mdl.init_mlp(task.d, task.hidden, 10, RngStream(seed).split(2))
    train_config = optim.TrainConfig(
        epsilon=float(config.get("epsilon", 1.0)),
        batch=int(config.get("batch", 30)),
        steps=int(config.get("steps", 10000)),
        seed=seed,
        momentum=float(config.get("momentum", 0.9)),
        lam=float(config.get("lam", 0.0)),
        temperature=float(config.get("temperature", 1.0)),
        eval_every=int(config.get("eval_every", 500)),
    )
    mode = str(config.get("mode", "momentum"))
    try:
        final, trajectory = optim.train(model, pair, train_config, mode=mode)
    except optim.DivergedError as err:
        print(f"run diverged at step {err.step}", file=sys.stderr)
        return 1
    csv_path = out / "trajectory.csv"
    optim.write_trajectory_csv(trajectory, csv_path)
    mdl.save_model(final, out / "model.json")
    _emit(out, "train", {
        "summary": {
            "final_test_acc": trajectory[-1].test_acc if trajectory else None,
            "final_test_xent": trajectory[-1].test_xent if trajectory else None,
            "steps": train_config.steps,
            "mode": mode,
        },
        "files": [str(csv_path), str(out / "model.json")],
        "metadata": exp._metadata({"config": config}),
    })
    return 0


def cmd_evidence_sweep(args) -> int:
    config = _resolve_config(args)
    config.setdefault("train_n", 800)
    payload = exp.run_preset("fig1_2_lambda", _out_dir(args), config)
    print(json.dumps(payload["summary"], indent=2, default=str))
    print(f"summary: {payload['summary_path']}")
    return 0


def cmd_batch_sweep(args) -> int:
    config = _resolve_config(args)
    payload = exp.run_preset("fig4_batch_peak", _out_dir(args), config)
    print(json.dumps(payload["summary"], indent=2, default=str))
    print(f"summary: {payload['summary_path']}")
    return 0


def cmd_scaling(args) -> int:
    config = _resolve_config(args)
    preset = {
        "lr": "fig5_lr_scaling",
        "trainset": "fig6_N_scaling",
        "momentum": "fig7_momentum_scaling",
    }[args.axis]
    payload = exp.run_preset(preset, _out_dir(args), config)
    print(json.dumps(payload["summary"], indent=2, default=str))
    print(f"summary: {payload['summary_path']}")
    return 0


def cmd_noise_check(args) -> int:
    """Exact minibatch-noise identity on random gradients, printed per (N, B)."""
    config = _resolve_config(args)
    out = _out_dir(args)
    seed = int(config.get("seed", 0))
    max_n = int(config.get("max_n", 8))
    p = int(config.get("p", 3))
    rng = RngStream(seed).split(59)
    rows, worst = [], 0.0
    for n in range(2, max_n + 1):
        grads = rng.normal((n, p))
        for batch in range(1, n + 1):
            report = noi.alpha_moments_bruteforce(grads, batch)
            err_mean = float(np.abs(report.alpha_mean).max())
            err_cov = float(np.abs(report.alpha_cov - report.formula_cov).max())
            worst = max(worst, err_mean, err_cov)
            rows.append([n, batch, f"{err_mean:.3e}", f"{err_cov:.3e}"])
    csv_path = out / "noise_check.csv"
    exp._write_csv(csv_path, ["n", "batch", "max_abs_mean", "max_abs_cov_err"], rows)
    _emit(out, "noise_check", {
        "summary": {"worst_abs_error": worst, "identity": "cov(alpha) == N*(N/B-1)*F"},
        "files": [str(csv_path)],
        "metadata": exp._metadata({"config": config}),
    })
    return 0 if worst < 1e-10 else 1


def cmd_gaussianity(args) -> int:
    config = _resolve_config(args)
    payload = exp.run_preset("fig9_gaussianity", _out_dir(args), config)
    print(json.dumps(payload["summary"], indent=2, default=str))
    print(f"summary: {payload['summary_path']}")
    return 0


def cmd_sgld_demo(args) -> int:
    config = _resolve_config(args)
    payload = exp.run_preset("appA_sgld_basins", _out_dir(args), config)
    print(json.dumps(payload["summary"], indent=2, default=str))
    print(f"summary: {payload['summary_path']}")
    return 0


def cmd_tune(args) -> int:
    """Run the tuning heuristic against a small real training evaluator."""
    config = _resolve_config(args)
    out = _out_dir(args)
    seed = int(config.get("seed", 0))
    task = exp._task_from_config(config)
    steps = int(config.get("steps", 2000))
    pair = task.build()

    def evaluator(epsilon, batch, momentum):
        run_seed = exp._seed_for(seed, batch, 0)
        model = mdl.init_mlp(task.d, task.hidden, 10, RngStream(run_seed).split(2))
        train_config = optim.TrainConfig(
            epsilon=epsilon, batch=min(batch, pair.train.n), steps=steps,
            seed=run_seed, momentum=momentum, lam=float(config.get("lam", 0.0)),
        )
        _, trajectory = optim.train(model, pair, train_config, mode="momentum")
        return trajectory[-1].test_acc

    result = exp.heuristic_tune(evaluator, int(config.get("hardware_max_b", pair.train.n)))
    audit_path = out / "tune_audit.csv"
    exp._write_csv(
        audit_path,
        ["phase", "epsilon", "batch", "momentum", "accuracy", "note"],
        [[a["phase"], a["epsilon"], a["batch"], a["momentum"], a["accuracy"], a["note"]]
         for a in result.audit],
    )
    _emit(out, "tune", {
        "summary": {"epsilon": result.epsilon, "batch": result.batch,
                    "momentum": result.momentum, "accuracy": result.accuracy,
                    "capped": result.capped, "evaluations": len(result.audit)},
        "files": [str(audit_path)],
        "metadata": exp._metadata({"config": config}),
    })
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sgdlab",
        description="Bayesian evidence, SGD noise-scale and batch-size scaling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "preset": (cmd_preset, "run a named figure/appendix preset"),
        "train": (cmd_train, "train one model and export its trajectory"),
        "evidence-sweep": (cmd_evidence_sweep, "lambda sweep with evidence reports"),
        "batch-sweep": (cmd_batch_sweep, "batch-size sweep (peak plot)"),
        "scaling": (cmd_scaling, "B_opt scaling vs lr / trainset / momentum"),
        "noise-check": (cmd_noise_check, "exact minibatch-noise identity check"),
        "gaussianity": (cmd_gaussianity, "gradient-noise Gaussianity diagnostics"),
        "sgld-demo": (cmd_sgld_demo, "double-well Langevin basin occupancy"),
        "tune": (cmd_tune, "three-phase batch/lr/momentum tuning heuristic"),
    }
    for name, (handler, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "preset":
            p.add_argument("name", choices=exp.PRESET_NAMES)
        if name == "scaling":
            p.add_argument("--axis", choices=("lr", "trainset", "momentum"),
                           required=True)
        p.set_defaults(handler=handler)

    args = parser.parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
