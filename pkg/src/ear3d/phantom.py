"""Procedural vertebra-like phantoms.

A phantom is an elliptic-cylinder body (cortical shell around a trabecular
core) plus rod-shaped posterior processes, optionally wobbled by a smooth
seeded radial deformation. Values are linear attenuation per mm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .volume import Volume


@dataclass(frozen=True)
class PhantomSpec:
    body_radius: float = 8.0
    body_height: float = 12.0
    process_count: int = 3
    process_length: float = 8.0
    cortical_density: float = 0.08
    trabecular_density: float = 0.05
    deformation_amplitude: float = 0.1
    seed: int = 0
    # anterior-posterior radius as a fraction of the left-right radius
    body_aspect: float = 0.8
    cortical_thickness: float = 1.5
    process_radius: float = 1.6
    grid_shape: tuple[int, int, int] = (32, 32, 32)
    spacing: float = 1.0

    def validate(self) -> None:
        positive = ("body_radius", "body_height", "process_length", "body_aspect", "cortical_thickness",
                    "process_radius", "spacing")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.process_count < 0:
            raise InvalidArgumentError(f"process_count must be >= 0, got {self.process_count}")
        if self.trabecular_density < 0 or self.cortical_density < 0:
            raise InvalidArgumentError("densities must be non-negative")
        if self.cortical_density < self.trabecular_density:
            raise InvalidArgumentError("cortical_density must be >= trabecular_density")
        if not 0 <= self.deformation_amplitude < 1:
            raise InvalidArgumentError("deformation_amplitude must lie in [0, 1)")
        if len(self.grid_shape) != 3 or min(self.grid_shape) < 1:
            raise InvalidArgumentError(f"invalid grid_shape {self.grid_shape}")


@dataclass(frozen=True)
class PhantomDistribution:
    """Uniform jitter around a base spec; each draw gets its own seed."""

    base: PhantomSpec = PhantomSpec()
    radius_jitter: float = 0.15
    height_jitter: float = 0.15
    length_jitter: float = 0.25
    deformation_range: tuple[float, float] = (0.0, 0.15)
    process_counts: tuple[int, ...] = (1, 2, 3)

    def sample(self, rng: np.random.Generator) -> PhantomSpec:
        b = self.base

        def jitter(value, rel):
            return float(value * (1 + rng.uniform(-rel, rel)))

        return replace(
            b,
            body_radius=jitter(b.body_radius, self.radius_jitter),
            body_height=jitter(b.body_height, self.height_jitter),
            process_length=jitter(b.process_length, self.length_jitter),
            process_count=int(rng.choice(self.process_counts)),
            deformation_amplitude=float(rng.uniform(*self.deformation_range)),
            seed=int(rng.integers(0, 2**31 - 1)),
        )


def _grid(spec: PhantomSpec):
    axes = [(np.arange(n) - (n - 1) / 2) * spec.spacing for n in spec.grid_shape]
    return np.meshgrid(*axes, indexing="ij")


def _radial_deformation(spec: PhantomSpec, theta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """Smooth field in [-1, 1] over (angle, normalised height)."""
    rng = np.random.default_rng(spec.seed)
    coef = rng.normal(size=(3, 3))
    field = np.zeros_like(theta)
    for k in range(1, 4):
        a, b, c = coef[k - 1]
        field += (a * np.cos(k * theta) + b * np.sin(k * theta)) * (1 + 0.5 * c * zeta)
    scale = np.abs(coef[:, :2]).sum() * (1 + 0.5 * np.abs(coef[:, 2]).max())
    return field / scale


def _capsule_distance(points: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    seg = end - start
    t = np.clip(((points - start) @ seg) / (seg @ seg), 0.0, 1.0)
    closest = start + t[..., None] * seg
    return np.linalg.norm(points - closest, axis=-1)


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, Volume]:
    """Rasterise a phantom by voxel-centre inclusion; returns (density, binary mask)."""
    spec.validate()
    x, y, z = _grid(spec)
    a = spec.body_radius
    b = spec.body_radius * spec.body_aspect
    half_h = spec.body_height / 2
    # posterior is +y; shift the body anteriorly to leave room for the processes
    yc = -spec.process_length / 2 if spec.process_count else 0.0
    yr = y - yc

    rho = np.sqrt((x / a) ** 2 + (yr / b) ** 2)
    if spec.deformation_amplitude > 0:
        theta = np.arctan2(yr / b, x / a)
        zeta = np.clip(z / half_h, -1, 1)
        rho = rho / (1 + spec.deformation_amplitude * _radial_deformation(spec, theta, zeta))
    in_body = (rho <= 1.0) & (np.abs(z) <= half_h)
    shell = (rho > 1.0 - spec.cortical_thickness / min(a, b)) | (np.abs(z) > half_h - spec.cortical_thickness)

    density = np.zeros(spec.grid_shape, dtype=np.float64)
    density[in_body] = spec.trabecular_density
    density[in_body & shell] = spec.cortical_density

    if spec.process_count:
        rng = np.random.default_rng(spec.seed + 1)
        spread = np.deg2rad(55.0)
        angles = np.linspace(-spread, spread, spec.process_count) if spec.process_count > 1 else np.zeros(1)
        points = np.stack([x, y, z], axis=-1)
        for phi in angles:
            direction = np.array([np.sin(phi), np.cos(phi), rng.uniform(-0.15, 0.15)])
            direction /= np.linalg.norm(direction)
            start = np.array([0.0, yc + 0.7 * b, 0.0])
            end = start + (spec.process_length + 0.3 * b) * direction
            inside = _capsule_distance(points, start, end) <= spec.process_radius
            density[inside] = np.maximum(density[inside], spec.cortical_density)

    spacing = (spec.spacing,) * 3
    origin = tuple(-(n - 1) / 2 * spec.spacing for n in spec.grid_shape)
    vol = Volume(density, spacing=spacing, origin=origin, domain="raw")
    mask = Volume((vol.data > 0).astype(np.float32), spacing=spacing, origin=origin, domain="unit")
    return vol, mask
