"""Plateau error versus objective angle with the envelope bounds, written as plot-ready CSV."""
import argparse
from pathlib import Path

from a2aopt.harness import ExperimentConfig, run_experiment, write_outputs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/angle_sweep"))
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--n-thetas", type=int, default=20)
    ap.add_argument("--loss-mode", choices=["mean", "sum"], default="sum")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = ExperimentConfig.from_dict({
        "kind": "angle_sweep", "seeds": list(range(args.seeds)), "n_thetas": args.n_thetas,
        "loss_mode": args.loss_mode, "scale_mode": "unit", "turns": 20_000, "stop_tol": 1e-12,
        "workers": args.workers,
    })
    report = run_experiment(cfg)
    write_outputs(report, cfg, args.out)
    for agg in report.aggregates["per_theta"]:
        print(f"theta {agg['theta']:.3f}  plateau_w {agg['plateau_w']['mean']:.4f}  "
              f"plateau_u {agg['plateau_u']['mean']:.4f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
