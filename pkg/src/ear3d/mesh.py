"""Iso-surface extraction and OBJ export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage import measure

from .volume import Volume


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (N, 3) mm
    faces: np.ndarray  # (M, 3) vertex indices

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def triangle_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum()) if len(self.faces) else 0.0

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return int(len(used) - len(self.edges()) + len(self.faces))

    def write_obj(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for x, y, z in self.vertices:
                fh.write(f"v {x:.6f} {y:.6f} {z:.6f}\n")
            for a, b, c in self.faces + 1:
                fh.write(f"f {a} {b} {c}\n")
        return path


def marching_cubes(v: Volume, iso: float) -> TriangleMesh:
    """Classic 256-case marching cubes with linear edge interpolation.

    The grid is padded by one voxel of its minimum value so surfaces touching
    the border are closed. An iso-value that no voxel pair straddles yields an
    empty mesh.
    """
    data = v.data.astype(np.float64)
    lo, hi = data.min(), data.max()
    if not lo < iso < hi:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    padded = np.pad(data, 1, mode="constant", constant_values=lo)
    verts, faces, _, _ = measure.marching_cubes(
        padded, level=iso, spacing=v.spacing, method="lorensen", allow_degenerate=False
    )
    verts = verts - np.asarray(v.spacing) + np.asarray(v.origin)
    mesh = TriangleMesh(verts, faces.astype(np.int64))
    keep = mesh.triangle_areas() > 1e-12
    return TriangleMesh(verts, mesh.faces[keep])
