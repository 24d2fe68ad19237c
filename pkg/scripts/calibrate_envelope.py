"""Fit the slack constant C of the upper angle envelope on calibration seeds.

C is the largest excess of a normalized plateau over the leading-order upper
bound, divided by eta and clipped at zero.  Run once; the value is frozen in
the acceptance suite.
"""
import argparse
import json

from a2aopt.harness import ExperimentConfig, sweep_angles


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--first-seed", type=int, default=1000)
    ap.add_argument("--num-seeds", type=int, default=50)
    ap.add_argument("--n-thetas", type=int, default=20)
    args = ap.parse_args()
    cfg = ExperimentConfig.from_dict({
        "kind": "angle_sweep", "seeds": list(range(args.first_seed, args.first_seed + args.num_seeds)),
        "n_thetas": args.n_thetas, "loss_mode": "sum", "scale_mode": "unit", "turns": 20_000, "stop_tol": 1e-12,
    })
    rows = sweep_angles(cfg).rows
    excess = max(max(r["plateau_w"] - r["upper_w"], r["plateau_u"] - r["upper_u"]) for r in rows)
    slack = min(min(r["plateau_w"] - r["lower_w"], r["plateau_u"] - r["lower_u"]) for r in rows)
    print(json.dumps({
        "runs": len(rows),
        "max_excess_over_upper_in_eta_units": excess / cfg.eta,
        "min_margin_over_lower": slack,
        "C": max(0.0, excess / cfg.eta),
    }, indent=2))


if __name__ == "__main__":
    main()
