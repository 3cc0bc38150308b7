"""Overfit desk32 on four phantoms and report loss, Dice and edge-attention contrast."""

import argparse
import tempfile
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ear3d.config import TrainConfig
from ear3d.dataset import make_dataset
from ear3d.metrics import surface_voxels
from ear3d.train import evaluate_model, train


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=None, help="keep outputs here (default: temp dir)")
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--profile", default="desk32")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = args.out or Path(tempfile.mkdtemp(prefix="overfit_"))
    manifest = make_dataset(out / "data", 6, split=(4 / 6, 1 / 6, 1 / 6), seed=args.seed)
    cfg = TrainConfig.for_profile(args.profile, max_epochs=150, warmup_epochs=10, max_steps=args.steps,
                                  lr_base=0.01, seed=args.seed)
    result = train(cfg, manifest, out / "run")
    recon = result.runlog.losses("recon")
    print(f"loss_recon {recon[0]:.4f} -> {recon[-1]:.4f} (ratio {recon[-1] / recon[0]:.3f})")
    print(f"train dice {evaluate_model(result.model, manifest, 'train').mean('dice'):.3f}")

    if cfg.network.enable_eam:
        model = result.model.eval()
        edge, inner = [], []
        for s in manifest.split("train"):
            sample = manifest.load_sample(s)
            with torch.no_grad():
                a_e = model(torch.from_numpy(sample["input"])[None])[1]
            a = F.interpolate(a_e, size=sample["mask"].shape, mode="trilinear")[0, 0].numpy()
            mask = sample["mask"].data > 0.5
            surf = surface_voxels(mask)
            edge.append(a[surf])
            inner.append(a[mask & ~surf])
        print(f"A_e edge {np.concatenate(edge).mean():.4f} interior {np.concatenate(inner).mean():.4f}")
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
