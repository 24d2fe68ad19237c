"""Command-line entry point: ``a2aopt <subcommand> [--config FILE] [overrides]``.

Exit codes: 0 success, 1 validation suite failure, 2 config error,
3 divergence, 4 backend failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .errors import (
    A2AError,
    ArgumentError,
    BackendError,
    ConfigError,
    DivergenceError,
    ParseFailureError,
    StatusError,
    TrainingDivergedError,
    TransportError,
)
from .harness import (
    ExperimentConfig,
    atomic_write,
    run_experiment,
    write_outputs,
    misaligned_prediction,
)
from .lsa import TrainConfig, train_lsa

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DIVERGED, EXIT_BACKEND = 0, 1, 2, 3, 4

KIND_FOR = {"simulate": "converge", "predict": "converge", "attack": "attack", "sweep-angle": "angle_sweep"}

log = logging.getLogger("a2aopt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="a2aopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "run the converge protocol and write trajectories"),
        ("predict", "closed-form plateau predictions and angle bounds, no simulation"),
        ("attack", "white-box attack experiment"),
        ("sweep-angle", "plateau versus objective angle"),
        ("train-lsa", "train an LSA gradient agent and write a JSON checkpoint"),
        ("validate", "run the invariant suites and print a pass/fail table"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="run a single seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--eta", type=float, help="step size")
        p.add_argument("--loss-mode", choices=["mean", "sum"], help="gradient normalization")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def resolve_experiment(args: argparse.Namespace) -> ExperimentConfig:
    data = _load_json(args.config)
    kind = KIND_FOR[args.command]
    allowed = ("converge", "angle_sweep") if args.command == "predict" else (kind,)
    if data.setdefault("kind", kind) not in allowed:
        raise ConfigError(f"config kind {data['kind']!r} does not match subcommand {args.command!r}")
    if args.seed is not None:
        data["seeds"] = [args.seed]
    if args.eta is not None:
        data["eta"] = args.eta
    if args.loss_mode is not None:
        data["loss_mode"] = args.loss_mode
    if args.out is not None:
        data["out"] = str(args.out)
    return ExperimentConfig.from_dict(data)


def resolve_training(args: argparse.Namespace) -> tuple[TrainConfig, Path]:
    data = _load_json(args.config)
    out = data.pop("out", None)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.eta is not None:
        data["eta"] = args.eta
    if args.loss_mode is not None:
        data["loss_mode"] = args.loss_mode
    try:
        cfg = TrainConfig.from_dict(data)
        cfg.validate()
    except (ArgumentError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    out_dir = args.out or Path(out or "runs/train-lsa")
    return cfg, Path(out_dir)


def _default_out(command: str, cfg: ExperimentConfig) -> Path:
    return Path(cfg.out) if cfg.out else Path("runs") / f"{command}-{cfg.hash()}"


def cmd_validate() -> int:
    from .validation import run_suites

    results = run_suites()
    width = max(len(r["suite"]) for r in results)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['suite']:<{width}}  {r['detail']}  ({r['seconds']}s)")
    ok = all(r["passed"] for r in results)
    print(f"{sum(r['passed'] for r in results)}/{len(results)} suites passed")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_predict(cfg: ExperimentConfig, out: Path) -> int:
    thetas = cfg.theta_grid() if cfg.kind == "angle_sweep" else [cfg.theta]
    rows = [misaligned_prediction(cfg, seed, t) for t in thetas for seed in cfg.seeds]
    atomic_write(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    report = {"kind": "predict", "config_hash": cfg.hash(), "config": cfg.to_dict(), "rows": rows}
    atomic_write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"theta {r['theta']:.4f} seed {r['seed']}: predicted |w-w*| = {r['predicted_abs_w']:.6g}, "
              f"|u-u*| = {r['predicted_abs_u']:.6g}")
    return EXIT_OK


def cmd_train(cfg: TrainConfig, out: Path) -> int:
    params = train_lsa(cfg)
    atomic_write(out / "config.json", json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    atomic_write(out / "lsa.json", params.to_json() + "\n")
    meta = params.train_meta
    print(f"final loss {meta['final_loss']:.6g}; held-out median relative gradient error "
          f"{meta['heldout_median_rel_err']:.4g}; checkpoint {out / 'lsa.json'}")
    return EXIT_OK


def run_config(args: argparse.Namespace) -> int:
    if args.command == "validate":
        return cmd_validate()
    if args.command == "train-lsa":
        cfg, out = resolve_training(args)
        return cmd_train(cfg, out)
    cfg = resolve_experiment(args)
    out = _default_out(args.command, cfg)
    if args.command == "predict":
        return cmd_predict(cfg, out)
    report = run_experiment(cfg)
    write_outputs(report, cfg, out)
    if report.success_rate is not None:
        print(f"success rate {report.success_rate:.3f} ({report.successes}/"
              f"{len(report.rows) - report.failed_construction}); "
              f"failed constructions {report.failed_construction}")
    print(f"wrote {out}")
    diverged = [r["seed"] for r in report.rows if r.get("diverged")]
    if diverged:
        print(f"diverged: {len(diverged)} run(s) hit a non-finite or exploding state "
              f"(seeds {sorted(set(diverged))}); rows are flagged in {out / 'report.json'}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run_config(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, TrainingDivergedError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (BackendError, ParseFailureError, TransportError, StatusError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except A2AError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
