"""Evaluation metrics (numpy, float64) and the per-run metric report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, InvalidArgumentError
from .volume import Volume

PSNR_CAP_DB = 200.0
FD_EPS = 1e-8
REPORT_METRICS = ("mse", "mae", "dice", "psnr", "ssim", "fd")


def _arrays(gt, pred) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(gt.data if isinstance(gt, Volume) else gt, dtype=np.float64)
    b = np.asarray(pred.data if isinstance(pred, Volume) else pred, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def metric_mse(gt, pred) -> float:
    a, b = _arrays(gt, pred)
    return float(np.mean((a - b) ** 2))


def metric_mae(gt, pred) -> float:
    a, b = _arrays(gt, pred)
    return float(np.mean(np.abs(a - b)))


def metric_dice(gt, pred, threshold: float = 0.5) -> float:
    a, b = _arrays(gt, pred)
    a, b = a > threshold, b > threshold
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / denom)


def metric_psnr(gt, pred, max_value: float = 4096.0) -> float:
    mse = metric_mse(gt, pred)
    if mse < 1e-12:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * math.log10(max_value**2 / mse)))


@dataclass(frozen=True)
class SSIMParams:
    dynamic_range: float = 4096.0
    c1: float | None = None
    c2: float | None = None

    def constants(self) -> tuple[float, float]:
        c1 = (0.01 * self.dynamic_range) ** 2 if self.c1 is None else self.c1
        c2 = (0.03 * self.dynamic_range) ** 2 if self.c2 is None else self.c2
        if not (c1 > 0 and c2 > 0):
            raise InvalidArgumentError("SSIM constants must be positive")
        return c1, c2


def metric_ssim(gt, pred, params: SSIMParams = SSIMParams()) -> float:
    """SSIM from global statistics (means, variances, covariance over the whole volume)."""
    a, b = _arrays(gt, pred)
    c1, c2 = params.constants()
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = np.mean((a - mu_a) * (b - mu_b))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)


def freq_distances_np(gt, pred) -> tuple[float, float]:
    a, b = _arrays(gt, pred)
    fa = np.fft.fftn(a, norm="ortho")
    fb = np.fft.fftn(b, norm="ortho")
    return float(np.mean(np.abs(fa.real - fb.real))), float(np.mean(np.abs(fa.imag - fb.imag)))


def fd_raw(gt, pred) -> float:
    d_real, d_imag = freq_distances_np(gt, pred)
    return math.log10(d_real + d_imag + FD_EPS)


def metric_fd(gt, pred, norm_bounds=(-8.0, 2.0)) -> float:
    """Log frequency distance min-max mapped to [0, 1] with fixed bounds."""
    lo, hi = (float(x) for x in norm_bounds)
    if not lo < hi:
        raise InvalidArgumentError(f"fd bounds need lo < hi, got {norm_bounds}")
    return float(np.clip((fd_raw(gt, pred) - lo) / (hi - lo), 0.0, 1.0))


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with at least one 6-neighbour in the background (grid border counts as background)."""
    mask = np.asarray(mask, dtype=bool)
    return mask & ~ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(3, 1), border_value=0)


@dataclass
class SurfaceDistance:
    distance_map: np.ndarray  # mm at surface voxels of the prediction, 0 elsewhere
    surface: np.ndarray
    mean: float
    max: float
    p95: float

    def summary(self) -> dict:
        return {"mean_mm": self.mean, "max_mm": self.max, "p95_mm": self.p95}


def surface_distance_error(gt_bin, pred_bin, spacing=None) -> SurfaceDistance:
    """Distance from each predicted surface voxel to the nearest ground-truth surface voxel."""
    if spacing is None:
        spacing = gt_bin.spacing if isinstance(gt_bin, Volume) else (1.0, 1.0, 1.0)
    a, b = _arrays(gt_bin, pred_bin)
    gt_surf = surface_voxels(a > 0.5)
    pred_surf = surface_voxels(b > 0.5)
    if not gt_surf.any() or not pred_surf.any():
        raise DegenerateInputError("surface distance needs a non-empty surface in both inputs")
    dist = ndimage.distance_transform_edt(~gt_surf, sampling=spacing)
    out = np.where(pred_surf, dist, 0.0)
    values = dist[pred_surf]
    return SurfaceDistance(out, pred_surf, float(values.mean()), float(values.max()),
                           float(np.percentile(values, 95)))


def unit_rescale(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) if hi > lo else np.zeros_like(x, dtype=np.float64)


def sample_metrics(gt_z, pred_z, gt_raw, pred_raw, *, dice_threshold=0.5, fd_bounds=(-8.0, 2.0),
                   max_value=4096.0) -> dict[str, float]:
    """All report metrics for one sample.

    MSE/MAE/FD use the z-scored domain; PSNR/SSIM use raw intensities with
    ``max_value`` as dynamic range; Dice binarises both volumes after mapping
    the ground-truth raw range to [0, 1].
    """
    lo, hi = float(np.min(gt_raw)), float(np.max(gt_raw))
    return {
        "mse": metric_mse(gt_z, pred_z),
        "mae": metric_mae(gt_z, pred_z),
        "dice": metric_dice(unit_rescale(gt_raw, lo, hi), unit_rescale(pred_raw, lo, hi), dice_threshold),
        "psnr": metric_psnr(gt_raw, pred_raw, max_value),
        "ssim": metric_ssim(gt_raw, pred_raw, SSIMParams(dynamic_range=max_value)),
        "fd": metric_fd(gt_z, pred_z, fd_bounds),
        "mse_raw": metric_mse(gt_raw, pred_raw),
        "mae_raw": metric_mae(gt_raw, pred_raw),
    }


@dataclass
class MetricReport:
    per_sample: list[dict] = field(default_factory=list)
    summary: dict[str, dict[str, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def aggregate(cls, per_sample: list[dict], meta: dict | None = None) -> "MetricReport":
        keys = [k for k in per_sample[0] if k != "id"] if per_sample else []
        summary = {}
        for k in keys:
            vals = np.array([s[k] for s in per_sample], dtype=np.float64)
            summary[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
        return cls(per_sample=per_sample, summary=summary, meta=dict(meta or {}))

    def mean(self, key: str) -> float:
        return self.summary[key]["mean"]

    def to_dict(self) -> dict:
        return {"per_sample": self.per_sample, "summary": self.summary, "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(per_sample=d.get("per_sample", []), summary=d["summary"], meta=d.get("meta", {}))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path) -> "MetricReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for stats in self.summary.values() for v in stats.values())
