"""Training loop, learning-rate schedule and evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .checkpoint import Checkpoint, save_checkpoint
from .config import MetricOptions, TrainConfig
from .dataset import DatasetManifest
from .errors import ConfigurationError, InvalidArgumentError, NonFiniteLossError
from .losses import loss_total
from .metrics import MetricReport, sample_metrics
from .model import EARNet, parameter_checksum

log = logging.getLogger(__name__)


def lr_schedule(epoch_fraction: float, cfg: TrainConfig) -> float:
    """Linear warmup from 0 to ``lr_base`` then cosine decay to 0, over the fraction of training done."""
    frac = min(max(float(epoch_fraction), 0.0), 1.0)
    epoch = frac * cfg.max_epochs
    if epoch < cfg.warmup_epochs:
        return cfg.lr_base * epoch / cfg.warmup_epochs
    progress = (epoch - cfg.warmup_epochs) / (cfg.max_epochs - cfg.warmup_epochs)
    return cfg.lr_base * 0.5 * (1.0 + math.cos(math.pi * progress))


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def load_split(manifest: DatasetManifest, split: str):
    samples = [manifest.load_sample(s) for s in manifest.split(split)]
    if not samples:
        return [], None, None
    x = torch.from_numpy(np.stack([s["input"] for s in samples]))
    y = torch.from_numpy(np.stack([s["gt"].data for s in samples]))[:, None]
    return samples, x, y


@dataclass
class RunLog:
    steps: list[dict] = field(default_factory=list)
    validation: list[dict] = field(default_factory=list)
    path: Path | None = None

    def log_step(self, record: dict) -> None:
        if self.steps and record["step"] <= self.steps[-1]["step"]:
            raise RuntimeError("step counter must increase")
        self.steps.append(record)
        self._append({"kind": "step", **record})

    def log_validation(self, record: dict) -> None:
        self.validation.append(record)
        self._append({"kind": "val", **record})

    def _append(self, record: dict) -> None:
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record) + "\n")

    def losses(self, key: str = "total") -> list[float]:
        return [s[key] for s in self.steps]

    @classmethod
    def load(cls, path) -> "RunLog":
        out = cls()
        for line in Path(path).read_text().splitlines():
            rec = json.loads(line)
            kind = rec.pop("kind")
            (out.steps if kind == "step" else out.validation).append(rec)
        return out


@dataclass
class TrainResult:
    model: EARNet
    runlog: RunLog
    last: Checkpoint
    best_path: Path | None
    last_path: Path | None


def _norm_stats(manifest: DatasetManifest) -> dict:
    train = manifest.split("train")
    return {
        "mean": float(np.mean([s["norm"]["mean"] for s in train])),
        "std": float(np.mean([s["norm"]["std"] for s in train])),
    }


def _batch_loss(model, x, y, cfg: TrainConfig):
    pred, a_e = model(x)
    return loss_total(y, pred, cfg.loss, a_e=a_e, edge_source=cfg.edge_loss_source)


def train(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    out_dir=None,
    on_epoch: Callable[[int, EARNet], None] | None = None,
) -> TrainResult:
    """Adam with warmup + cosine schedule on the weighted objective.

    Deterministic for a fixed seed: initialisation and the per-epoch batch
    order are both derived from ``cfg.seed``. Checkpoints the best
    validation-loss and the last state when ``out_dir`` is given.
    """
    res = manifest.grid_shape
    if any(r != cfg.network.input_resolution for r in res):
        raise ConfigurationError(
            f"network input_resolution {cfg.network.input_resolution} does not match dataset grid {res}"
        )
    _, x_train, y_train = load_split(manifest, "train")
    val_samples, x_val, y_val = load_split(manifest, "val")
    if x_train is None or x_val is None:
        raise InvalidArgumentError("training needs non-empty train and val splits")
    bottleneck = cfg.network.input_resolution >> cfg.network.depth
    if min(cfg.batch_size, len(x_train)) < 2 and bottleneck <= 1:
        # batch norm at a 1-voxel bottleneck has a single value per channel
        raise ConfigurationError(
            f"resolution {cfg.network.input_resolution} needs at least 2 training volumes per batch"
        )

    out = Path(out_dir) if out_dir is not None else None
    runlog = RunLog()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        runlog.path = out / "runlog.jsonl"
        runlog.path.write_text("")
        (out / "train_config.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    seed_everything(cfg.seed)
    model = EARNet(cfg.network)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_base, weight_decay=cfg.weight_decay)

    n = len(x_train)
    bs = min(cfg.batch_size, n)
    per_epoch = max(1, n // bs)
    total_steps = per_epoch * cfg.max_epochs
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    n_epochs = math.ceil(total_steps / per_epoch)
    norm = _norm_stats(manifest)

    best = math.inf
    best_path = None
    stale = 0
    step = 0
    t0 = time.perf_counter()
    for epoch in range(n_epochs):
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        for b in range(per_epoch):
            if step >= total_steps:
                break
            idx = torch.from_numpy(order[b * bs:(b + 1) * bs])
            lr = lr_schedule(step / total_steps, cfg)
            for group in opt.param_groups:
                group["lr"] = lr
            parts = _batch_loss(model, x_train[idx], y_train[idx], cfg)
            values = parts.as_floats()
            if not all(math.isfinite(v) for v in values.values()):
                raise NonFiniteLossError(step, values)
            opt.zero_grad(set_to_none=True)
            parts.total.backward()
            opt.step()
            step += 1
            runlog.log_step({"step": step, "epoch": epoch, "lr": lr, **values,
                             "wall": time.perf_counter() - t0})

        model.eval()
        with torch.no_grad():
            val_parts = _batch_loss(model, x_val, y_val, cfg).as_floats()
        report = evaluate_model(model, manifest, "val", cfg.metrics, samples=val_samples)
        record = {"epoch": epoch, "step": step, "loss": val_parts,
                  "metrics": {k: v["mean"] for k, v in report.summary.items()}}
        runlog.log_validation(record)
        log.info("epoch %d step %d val total %.4f dice %.4f", epoch, step, val_parts["total"],
                 record["metrics"]["dice"])
        if on_epoch is not None:
            on_epoch(epoch, model)

        if val_parts["total"] < best:
            best, stale = val_parts["total"], 0
            if out is not None:
                best_path = save_checkpoint(_snapshot(model, opt, cfg, epoch, step, runlog, norm), out / "best.ckpt")
        else:
            stale += 1
        if cfg.early_stop_patience is not None and stale > cfg.early_stop_patience:
            log.info("early stop after epoch %d", epoch)
            break

    model.eval()
    last = _snapshot(model, opt, cfg, epoch, step, runlog, norm)
    last_path = save_checkpoint(last, out / "last.ckpt") if out is not None else None
    return TrainResult(model, runlog, last, best_path, last_path)


def _snapshot(model, opt, cfg, epoch, step, runlog, norm) -> Checkpoint:
    clone = lambda sd: {k: (v.detach().clone() if torch.is_tensor(v) else v) for k, v in sd.items()}
    opt_state = opt.state_dict()
    opt_state = {"state": {k: clone(v) for k, v in opt_state["state"].items()},
                 "param_groups": [dict(g) for g in opt_state["param_groups"]]}
    return Checkpoint(
        config=cfg,
        model_state=clone(model.state_dict()),
        optimizer_state=opt_state,
        epoch=epoch,
        step=step,
        metric_history=[dict(r) for r in runlog.validation],
        norm_stats=dict(norm),
    )


def evaluate_predictions(manifest: DatasetManifest, split: str, predict: Callable[[dict], np.ndarray],
                         opts: MetricOptions = MetricOptions(), samples=None, meta: dict | None = None) -> MetricReport:
    """Score ``predict(sample) -> z-scored volume`` on one split; mean and std over samples."""
    samples = samples if samples is not None else [manifest.load_sample(s) for s in manifest.split(split)]
    if not samples:
        raise InvalidArgumentError(f"split {split!r} is empty")
    max_value = opts.max_value if opts.max_value is not None else manifest.intensity_max
    rows = []
    for s in samples:
        gt_z = s["gt"].data.astype(np.float64)
        pred_z = np.asarray(predict(s), dtype=np.float64).reshape(gt_z.shape)
        rec = s["norm"]
        gt_raw = gt_z * rec.std + rec.mean
        pred_raw = pred_z * rec.std + rec.mean
        row = sample_metrics(gt_z, pred_z, gt_raw, pred_raw, dice_threshold=opts.dice_threshold,
                             fd_bounds=opts.fd_bounds, max_value=max_value)
        rows.append({"id": s["id"], **row})
    info = {"split": split, "n": len(rows), "max_value": max_value, **(meta or {})}
    return MetricReport.aggregate(rows, info)


def evaluate_model(model: EARNet, manifest: DatasetManifest, split: str, opts: MetricOptions = MetricOptions(),
                   samples=None, meta: dict | None = None) -> MetricReport:
    was_training = model.training
    model.eval()

    @torch.no_grad()
    def predict(sample):
        x = torch.from_numpy(sample["input"])[None].to(next(model.parameters()).dtype)
        return model(x)[0][0, 0].numpy()

    try:
        return evaluate_predictions(manifest, split, predict, opts, samples, meta)
    finally:
        model.train(was_training)


def evaluate(ckpt: Checkpoint, manifest: DatasetManifest, split: str = "test",
             opts: MetricOptions | None = None) -> MetricReport:
    """Metric report for a checkpoint on one split. Parameters are never modified."""
    if any(r != ckpt.config.network.input_resolution for r in manifest.grid_shape):
        raise ConfigurationError("checkpoint resolution does not match the dataset")
    model = ckpt.build_model()
    before = parameter_checksum(model)
    net = ckpt.config.network
    meta = {"enable_abs": net.enable_abs, "enable_fem": net.enable_fem, "enable_eam": net.enable_eam,
            **ckpt.config.loss.to_dict()}
    report = evaluate_model(model, manifest, split, opts or ckpt.config.metrics, meta=meta)
    assert parameter_checksum(model) == before
    return report
