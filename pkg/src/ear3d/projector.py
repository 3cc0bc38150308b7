"""Idealised line-integral DRR projector and dimension expansion.

Rays are marched uniformly and the volume is sampled with trilinear
interpolation (zero outside the grid). The projector returns the raw path
integral; ``to_display`` applies the Beer-Lambert intensity transform.

View convention: ``euler_alpha`` rotates the source-detector assembly about
the superior-inferior axis, ``euler_beta`` then tilts it about the
left-right axis. At alpha = 0 rays run along the left-right axis (lateral
view, detector u along anterior-posterior); at alpha = 90 rays run along
the anterior-posterior axis (AP view, detector u along left-right). The
detector v axis is superior-inferior in both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .volume import Volume

_CHUNK_POINTS = 2_000_000


@dataclass(frozen=True)
class ProjectionGeometry:
    sod: float = 600.0
    sdd: float = 1000.0
    euler_alpha: float = 0.0
    euler_beta: float = 0.0
    detector_shape: tuple[int, int] = (32, 32)
    pixel_pitch: float = 1.0
    beam: Literal["parallel", "cone"] = "parallel"

    def __post_init__(self):
        object.__setattr__(self, "detector_shape", tuple(int(n) for n in self.detector_shape))
        if self.beam not in ("parallel", "cone"):
            raise InvalidArgumentError(f"beam must be 'parallel' or 'cone', got {self.beam!r}")
        if len(self.detector_shape) != 2 or min(self.detector_shape) < 1:
            raise InvalidArgumentError(f"detector_shape must be at least 1x1, got {self.detector_shape}")
        if not self.pixel_pitch > 0:
            raise InvalidArgumentError(f"pixel_pitch must be > 0, got {self.pixel_pitch}")
        if self.beam == "cone" and not 0 < self.sod < self.sdd:
            raise InvalidArgumentError(f"cone beam needs 0 < sod < sdd, got sod={self.sod}, sdd={self.sdd}")

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit vectors (ray direction, detector u, detector v) in grid-axis coordinates."""
        a = math.radians(self.euler_alpha)
        b = math.radians(self.euler_beta)
        rz = np.array([[math.cos(-a), -math.sin(-a), 0.0], [math.sin(-a), math.cos(-a), 0.0], [0.0, 0.0, 1.0]])
        rx = np.array([[1.0, 0.0, 0.0], [0.0, math.cos(b), -math.sin(b)], [0.0, math.sin(b), math.cos(b)]])
        rot = rx @ rz
        return rot[:, 0], rot[:, 1], rot[:, 2]


def detector_for(volume_shape, spacing: float, beam: str = "cone", sod: float = 600.0, sdd: float = 1000.0,
                 alpha: float = 0.0, beta: float = 0.0) -> ProjectionGeometry:
    """Geometry whose detector maps one voxel at the isocentre to one pixel."""
    n = int(volume_shape[0])
    pitch = spacing * (sdd / sod if beam == "cone" else 1.0)
    return ProjectionGeometry(sod=sod, sdd=sdd, euler_alpha=alpha, euler_beta=beta,
                              detector_shape=(n, int(volume_shape[2])), pixel_pitch=pitch, beam=beam)


def _sample(padded: np.ndarray, spacing: np.ndarray, centre: np.ndarray, points: np.ndarray) -> np.ndarray:
    # world (mm, relative to the volume centroid) -> fractional index in the padded grid
    idx = points / spacing + centre + 1.0
    return ndimage.map_coordinates(padded, idx.reshape(-1, 3).T, order=1, mode="nearest").reshape(points.shape[:-1])


def project_drr(v: Volume, geom: ProjectionGeometry, step: float | None = None) -> np.ndarray:
    """Path integral of attenuation for every detector pixel, shape ``geom.detector_shape``."""
    if v.domain != "raw":
        raise InvalidArgumentError(f"projection expects raw attenuation values, got domain {v.domain!r}")
    spacing = np.asarray(v.spacing, dtype=np.float64)
    max_step = spacing.min() / 2
    step = max_step if step is None else min(float(step), max_step)
    if step <= 0:
        raise InvalidArgumentError("ray-march step must be positive")

    shape = np.asarray(v.shape)
    centre = (shape - 1) / 2
    # every ray segment that can touch the (padded) grid lies within this radius of the centroid
    radius = float(np.linalg.norm((shape + 2) * spacing) / 2)
    n_steps = max(1, math.ceil(2 * radius / step))
    dt = 2 * radius / n_steps
    offsets = -radius + (np.arange(n_steps) + 0.5) * dt

    d, u, w = geom.frame()
    nu, nv = geom.detector_shape
    us = (np.arange(nu) - (nu - 1) / 2) * geom.pixel_pitch
    vs = (np.arange(nv) - (nv - 1) / 2) * geom.pixel_pitch
    pix = us[:, None, None] * u + vs[None, :, None] * w  # (nu, nv, 3) on the plane through the isocentre

    if geom.beam == "parallel":
        origins = pix.reshape(-1, 3)
        dirs = np.broadcast_to(d, origins.shape)
    else:
        source = -geom.sod * d
        det = pix + (geom.sdd - geom.sod) * d
        dirs = det.reshape(-1, 3) - source
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        # closest approach of each ray to the centroid
        t_mid = -(source @ dirs.T)
        origins = source + t_mid[:, None] * dirs

    padded = np.pad(v.data.astype(np.float64), 1)
    out = np.empty(len(origins))
    chunk = max(1, _CHUNK_POINTS // n_steps)
    for s in range(0, len(origins), chunk):
        o = origins[s:s + chunk]
        dd = dirs[s:s + chunk]
        points = o[:, None, :] + offsets[None, :, None] * dd[:, None, :]
        out[s:s + chunk] = _sample(padded, spacing, centre, points).sum(axis=1) * dt
    return out.reshape(nu, nv).astype(np.float32)


def to_display(line_integral: np.ndarray) -> np.ndarray:
    """Beer-Lambert intensity 1 - exp(-integral)."""
    return 1.0 - np.exp(-np.asarray(line_integral, dtype=np.float64))


def minmax_rescale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi - lo <= 0:
        return np.zeros_like(image, dtype=np.float32)
    return ((image - lo) / (hi - lo)).astype(np.float32)


def _resize_image(image: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if image.shape == shape:
        return image
    coords = [(np.arange(m) + 0.5) * n / m - 0.5 for m, n in zip(shape, image.shape)]
    grid = np.meshgrid(*coords, indexing="ij")
    return ndimage.map_coordinates(image.astype(np.float64), grid, order=1, mode="nearest").astype(np.float32)


def expand_dimension(ap: np.ndarray, lat: np.ndarray, target_shape) -> np.ndarray:
    """Replicate the two views along their viewing axes into a (2, nx, ny, nz) array.

    Channel 0 repeats the AP image (indexed LR x SI) along the AP axis; channel
    1 repeats the lateral image (indexed AP x SI) along the LR axis.
    """
    nx, ny, nz = (int(n) for n in target_shape)
    ap = np.asarray(ap, dtype=np.float32)
    lat = np.asarray(lat, dtype=np.float32)
    if ap.ndim != 2 or lat.ndim != 2:
        raise InvalidArgumentError("projections must be 2-D images")
    ap = _resize_image(ap, (nx, nz))
    lat = _resize_image(lat, (ny, nz))
    if ap.shape != (nx, nz) or lat.shape != (ny, nz):
        raise InvalidArgumentError(f"projection shapes {ap.shape}, {lat.shape} do not fit target {target_shape}")
    out = np.empty((2, nx, ny, nz), dtype=np.float32)
    out[0] = ap[:, None, :]
    out[1] = lat[None, :, :]
    return out
