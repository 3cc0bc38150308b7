"""Volume data model, normalization, resampling and maximum intensity projection.

Grid axes follow a fixed anatomical convention (axis0 left-right, axis1
anterior-posterior, axis2 superior-inferior) unless a volume says otherwise.
``origin`` is the physical position (mm) of the centre of voxel (0, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, InvalidStateError, NotFoundError

Domain = Literal["raw", "zscored", "unit"]
DOMAINS = ("raw", "zscored", "unit")
ZSCORE_EPS = 1e-8

ANATOMICAL_AXES = ("LR", "AP", "SI")


@dataclass(frozen=True)
class AxisConvention:
    """Which anatomical direction each grid axis runs along."""

    labels: tuple[str, str, str] = ANATOMICAL_AXES

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != 3 or sorted(labels) != sorted(ANATOMICAL_AXES):
            raise InvalidArgumentError(f"axes must be a permutation of {ANATOMICAL_AXES}, got {labels}")

    def axis_of(self, direction: str) -> int:
        return self.labels.index(direction)


@dataclass(frozen=True)
class NormalizationRecord:
    mean: float
    std: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or not self.std > 0:
            raise InvalidArgumentError(f"normalization record needs finite mean and std > 0, got {self}")


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3-D scalar grid with physical metadata and an intensity-domain tag."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axes: AxisConvention = field(default_factory=AxisConvention)
    domain: Domain = "raw"

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidArgumentError(f"volume data must be a non-empty 3-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("volume data contains non-finite values")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise InvalidArgumentError(f"spacing must be three positive values, got {self.spacing}")
        if len(origin) != 3:
            raise InvalidArgumentError(f"origin must have three components, got {self.origin}")
        if self.domain not in DOMAINS:
            raise InvalidArgumentError(f"unknown intensity domain {self.domain!r}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(n * s for n, s in zip(self.shape, self.spacing))

    def with_data(self, data: np.ndarray, **changes) -> "Volume":
        return replace(self, data=data, **changes)

    def equals(self, other: "Volume") -> bool:
        """Bit-exact comparison of payload and metadata."""
        return (
            self.shape == other.shape
            and np.array_equal(self.data.view(np.uint32), other.data.view(np.uint32))
            and self.spacing == other.spacing
            and self.origin == other.origin
            and self.axes == other.axes
            and self.domain == other.domain
        )


def _positive_triple(values, name: str) -> tuple[float, float, float]:
    values = tuple(float(v) for v in values)
    if len(values) != 3 or not all(v > 0 for v in values):
        raise InvalidArgumentError(f"{name} must be three positive values, got {values}")
    return values


def _interp_axis(data: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation along one axis at fractional indices, clamped to the edge."""
    n = data.shape[axis]
    if n == 1:
        return np.repeat(data, len(coords), axis=axis)
    c = np.clip(coords, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(c).astype(np.int64), n - 2)
    w = c - i0
    shape = [1, 1, 1]
    shape[axis] = len(coords)
    w = w.reshape(shape)
    lo = np.take(data, i0, axis=axis)
    hi = np.take(data, i0 + 1, axis=axis)
    return lo * (1.0 - w) + hi * w


def trilinear_sample_grid(data: np.ndarray, coords: tuple[np.ndarray, np.ndarray, np.ndarray]) -> np.ndarray:
    """Evaluate the trilinear interpolant on the tensor grid ``coords[0] x coords[1] x coords[2]``.

    Trilinear interpolation on a tensor-product grid factorises into three
    one-dimensional linear passes.
    """
    out = np.asarray(data, dtype=np.float64)
    for axis in range(3):
        out = _interp_axis(out, np.asarray(coords[axis], dtype=np.float64), axis)
    return out


def resample(v: Volume, target_spacing) -> Volume:
    """Resample to a new voxel spacing, keeping voxel (0,0,0) at the same physical point."""
    target = _positive_triple(target_spacing, "target_spacing")
    if target == v.spacing:
        return v.with_data(v.data)
    shape = tuple(max(1, int(round(e / t))) for e, t in zip(v.extent, target))
    coords = tuple(np.arange(m) * t / s for m, t, s in zip(shape, target, v.spacing))
    data = trilinear_sample_grid(v.data, coords).astype(np.float32)
    return v.with_data(data, spacing=target)


def resize(v: Volume, target_shape) -> Volume:
    """Resize to a voxel count, preserving the physical extent (voxel-centre aligned)."""
    target_shape = tuple(int(t) for t in target_shape)
    if len(target_shape) != 3 or min(target_shape) < 1:
        raise InvalidArgumentError(f"target_shape must be three positive sizes, got {target_shape}")
    if target_shape == v.shape:
        return v.with_data(v.data)
    coords = tuple((np.arange(m) + 0.5) * n / m - 0.5 for m, n in zip(target_shape, v.shape))
    spacing = tuple(s * n / m for s, n, m in zip(v.spacing, v.shape, target_shape))
    # origin tracks the centre of the new first voxel
    origin = tuple(o - s / 2 + t / 2 for o, s, t in zip(v.origin, v.spacing, spacing))
    data = trilinear_sample_grid(v.data, coords).astype(np.float32)
    return v.with_data(data, spacing=spacing, origin=origin)


def zscore_normalize(v: Volume) -> tuple[Volume, NormalizationRecord]:
    if v.domain != "raw":
        raise InvalidStateError(f"z-score expects a raw volume, got domain {v.domain!r}")
    x = v.data.astype(np.float64)
    mean = float(x.mean())
    std = float(x.std())
    if std < ZSCORE_EPS:
        raise DegenerateInputError(f"cannot z-score a constant volume (std={std:.3g})")
    data = ((x - mean) / std).astype(np.float32)
    return v.with_data(data, domain="zscored"), NormalizationRecord(mean, std)


def denormalize(v: Volume, rec: NormalizationRecord) -> Volume:
    if not rec.std > 0:
        raise InvalidArgumentError(f"normalization std must be positive, got {rec.std}")
    if v.domain != "zscored":
        raise InvalidStateError(f"denormalize expects a z-scored volume, got domain {v.domain!r}")
    data = (v.data.astype(np.float64) * rec.std + rec.mean).astype(np.float32)
    return v.with_data(data, domain="raw")


def mip(v: Volume | np.ndarray, axis: int) -> np.ndarray:
    """Maximum intensity projection collapsing ``axis``."""
    if axis not in (0, 1, 2):
        raise InvalidArgumentError(f"axis must be 0, 1 or 2, got {axis}")
    data = v.data if isinstance(v, Volume) else np.asarray(v)
    return data.max(axis=axis)


def extract_labeled_region(ct: Volume, mask: Volume | np.ndarray, label: int, margin: int = 0) -> Volume:
    """Crop ``ct`` to the bounding box of ``mask == label`` grown by ``margin`` voxels.

    Voxels outside the label are set to 0 (air in attenuation terms).
    """
    labels = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    if labels.shape != ct.shape:
        raise InvalidArgumentError(f"mask shape {labels.shape} does not match volume shape {ct.shape}")
    if isinstance(mask, Volume) and mask.spacing != ct.spacing:
        raise InvalidArgumentError("mask and volume spacing differ")
    if margin < 0:
        raise InvalidArgumentError(f"margin must be non-negative, got {margin}")
    sel = np.rint(labels).astype(np.int64) == int(label)
    if not sel.any():
        raise NotFoundError(f"label {label} not present in mask")
    idx = np.nonzero(sel)
    lo = [max(0, int(i.min()) - margin) for i in idx]
    hi = [min(n, int(i.max()) + 1 + margin) for i, n in zip(idx, ct.shape)]
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    data = np.where(sel[box], ct.data[box], 0.0)
    origin = tuple(o + a * s for o, a, s in zip(ct.origin, lo, ct.spacing))
    return ct.with_data(data, origin=origin)
