"""Module/loss ablation matrix and inter-view angle sweep at desk scale."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .config import LossWeights, TrainConfig
from .dataset import DatasetManifest, make_dataset
from .errors import InvalidArgumentError
from .metrics import MetricReport
from .train import RunLog, evaluate_model, train

# (name, enable_abs, enable_fem, enable_eam)
MODULE_ROWS = (
    ("baseline", False, False, False),
    ("abs", True, False, False),
    ("abs_fem", True, True, False),
    ("abs_fem_eam", True, True, True),
)
# (name, recon, edge, freq, proj) on/off
LOSS_ROWS = (
    ("recon", True, False, False, False),
    ("recon_edge", True, True, False, False),
    ("recon_edge_freq", True, True, True, False),
    ("recon_edge_freq_proj", True, True, True, True),
)


@dataclass
class RunOutcome:
    name: str
    config: TrainConfig
    runlog: RunLog
    report: MetricReport
    flags: dict


def module_row_config(base: TrainConfig, abs_: bool, fem: bool, eam: bool) -> TrainConfig:
    net = replace(base.network, enable_abs=abs_, enable_fem=fem, enable_eam=eam)
    return replace(base, network=net)


def loss_row_config(base: TrainConfig, recon: bool, edge: bool, freq: bool, proj: bool) -> TrainConfig:
    w = base.loss
    weights = LossWeights(w.recon if recon else 0.0, w.edge if edge else 0.0,
                          w.freq if freq else 0.0, w.proj if proj else 0.0)
    return replace(base, loss=weights)


def ablation_configs(base: TrainConfig) -> list[tuple[str, TrainConfig, dict]]:
    """The four module rows then the four loss rows; each differs from ``base`` only in its toggles."""
    rows = []
    for name, a, f, e in MODULE_ROWS:
        flags = {"table": "modules", "Baseline": True, "ABS": a, "FEM": f, "EAM": e}
        rows.append((f"modules_{name}", module_row_config(base, a, f, e), flags))
    for name, r, ed, fr, pr in LOSS_ROWS:
        flags = {"table": "losses", "L_recon": r, "L_edge": ed, "L_freq": fr, "L_proj": pr}
        rows.append((f"losses_{name}", loss_row_config(base, r, ed, fr, pr), flags))
    return rows


def _run(name: str, cfg: TrainConfig, manifest: DatasetManifest, out_dir: Path, flags: dict,
         split: str) -> RunOutcome:
    run_dir = out_dir / name
    result = train(cfg, manifest, run_dir)
    losses = result.runlog.losses("total")
    if not all(math.isfinite(v) for v in losses):
        raise FloatingPointError(f"run {name} produced non-finite losses")
    report = evaluate_model(result.model, manifest, split, cfg.metrics, meta={"run": name, **flags})
    report.save(run_dir / "metric_report.json")
    return RunOutcome(name, cfg, result.runlog, report, flags)


def ablation_matrix(base_cfg: TrainConfig, manifest: DatasetManifest, out_dir, split: str = "test") -> list[RunOutcome]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = [_run(name, cfg, manifest, out, flags, split) for name, cfg, flags in ablation_configs(base_cfg)]
    (out / "ablation_index.json").write_text(json.dumps([o.name for o in outcomes], indent=2))
    return outcomes


def validate_angle(angle: float) -> float:
    angle = float(angle)
    if not 0.0 < angle < 180.0:
        raise InvalidArgumentError(f"inter-view angle must lie strictly between 0 and 180 degrees, got {angle}")
    return angle


def angle_sweep(base_cfg: TrainConfig, angles, out_dir, n_samples: int = 10, seed: int = 0,
                split: str = "test", distribution=None) -> list[RunOutcome]:
    """Regenerate the dataset with view 1 at each angle from the fixed lateral view 2, train, evaluate."""
    angles = [validate_angle(a) for a in angles]
    out = Path(out_dir)
    outcomes = []
    for angle in angles:
        tag = f"angle_{angle:g}"
        manifest = make_dataset(out / tag / "data", n_samples, distribution, angle_pair=(angle, 0.0), seed=seed)
        outcomes.append(_run(tag, base_cfg, manifest, out, {"angle_deg": angle}, split))
    return outcomes
