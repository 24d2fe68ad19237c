"""Train an LSA gradient agent with the default recipe and attack it on all three gap types.

Writes ``<out>/lsa.json`` and one report directory per gap, then prints the
success rates.
"""
import argparse
import logging
from pathlib import Path

from a2aopt.harness import ExperimentConfig, atomic_write, run_experiment, write_outputs
from a2aopt.lsa import LsaParams, TrainConfig, train_lsa


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/lsa_attack"))
    ap.add_argument("--checkpoint", type=Path, help="reuse an existing lsa.json instead of training")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--turns", type=int, default=1000)
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    ckpt = args.checkpoint
    if ckpt is None:
        params = train_lsa(TrainConfig(seed=args.train_seed))
        ckpt = args.out / "lsa.json"
        atomic_write(ckpt, params.to_json() + "\n")
        print(f"held-out median relative gradient error {params.train_meta['heldout_median_rel_err']:.4f}")
    else:
        LsaParams.load(ckpt)  # fail early on a bad checkpoint

    for gap in ("orthogonal", "scaled", "opposite"):
        cfg = ExperimentConfig.from_dict({
            "kind": "attack", "gap_type": gap, "seeds": list(range(args.seeds)), "turns": args.turns,
            "stop_tol": None, "backend_w": "lsa", "backend_u": "lsa", "lsa_checkpoint": str(ckpt),
            "loss_mode": "sum", "scale_mode": "inv_dim", "workers": args.workers,
        })
        report = run_experiment(cfg)
        write_outputs(report, cfg, args.out / gap)
        print(f"{gap:>10}: success {100 * report.success_rate:.0f}% "
              f"({report.successes}/{len(report.rows) - report.failed_construction})")


if __name__ == "__main__":
    main()
