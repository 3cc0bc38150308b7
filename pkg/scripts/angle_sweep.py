"""Train and evaluate once per inter-view angle, with the lateral view held fixed."""

import argparse
from pathlib import Path

from ear3d.cli import format_table
from ear3d.config import TrainConfig
from ear3d.experiments import angle_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--angles", default="60,90,120")
    parser.add_argument("--count", type=int, default=10)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--profile", default="desk8")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    angles = [float(a) for a in args.angles.split(",")]
    cfg = TrainConfig.for_profile(args.profile, max_steps=args.steps, warmup_epochs=1, seed=args.seed)
    outcomes = angle_sweep(cfg, angles, args.out, n_samples=args.count, seed=args.seed)
    print(format_table([(o.name, o.report) for o in outcomes]))


if __name__ == "__main__":
    main()
