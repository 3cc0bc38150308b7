"""Run the 4 module rows and 4 loss rows for a fixed step budget and print the comparison table."""

import argparse
from pathlib import Path

from ear3d.cli import format_table
from ear3d.config import TrainConfig
from ear3d.dataset import make_dataset
from ear3d.experiments import ablation_matrix


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--count", type=int, default=10)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--profile", default="desk32")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    manifest = make_dataset(args.out / "data", args.count, seed=args.seed)
    base = TrainConfig.for_profile(args.profile, max_steps=args.steps, warmup_epochs=1, seed=args.seed)
    outcomes = ablation_matrix(base, manifest, args.out / "runs")
    for table in ("modules", "losses"):
        rows = [(o.name, o.report) for o in outcomes if o.flags["table"] == table]
        print(format_table(rows))
        print()


if __name__ == "__main__":
    main()
