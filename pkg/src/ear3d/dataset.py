"""Synthetic paired (bi-planar projection, volume) datasets on disk."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .io import load_expanded, load_volume, save_expanded, save_image, save_volume
from .phantom import PhantomDistribution, generate_phantom
from .projector import ProjectionGeometry, expand_dimension, minmax_rescale, project_drr
from .volume import NormalizationRecord, zscore_normalize

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")


def split_counts(n: int, ratios) -> tuple[int, int, int]:
    """Largest-remainder rounding; every split with a positive ratio gets at least one sample."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if len(ratios) != 3 or np.any(ratios < 0) or not np.isclose(ratios.sum(), 1.0, atol=1e-6):
        raise InvalidArgumentError(f"split must be three non-negative ratios summing to 1, got {tuple(ratios)}")
    exact = ratios * n
    counts = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    for i in range(3):
        if ratios[i] > 0 and counts[i] == 0:
            counts[np.argmax(counts)] -= 1
            counts[i] += 1
    return tuple(int(c) for c in counts)


@dataclass
class DatasetManifest:
    samples: list[dict]
    splits: dict[str, list[str]]
    angles_deg: tuple[float, float]
    seed: int
    geometry: dict = field(default_factory=dict)
    grid_shape: tuple[int, int, int] = (32, 32, 32)
    intensity_max: float = 1.0
    version: int = MANIFEST_VERSION
    root: Path | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("root")
        d["angles_deg"] = list(self.angles_deg)
        d["grid_shape"] = list(self.grid_shape)
        return d

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        d = json.loads(path.read_text())
        if d.get("version") != MANIFEST_VERSION:
            raise InvalidArgumentError(f"unsupported manifest version {d.get('version')}")
        d["angles_deg"] = tuple(d["angles_deg"])
        d["grid_shape"] = tuple(d["grid_shape"])
        return cls(**d, root=path.parent)

    def split(self, name: str) -> list[dict]:
        by_id = {s["id"]: s for s in self.samples}
        return [by_id[i] for i in self.splits.get(name, [])]

    def load_sample(self, sample: dict) -> dict:
        """Network input, z-scored ground truth, mask and normalisation record for one sample."""
        root = self.root or Path(".")
        return {
            "id": sample["id"],
            "input": load_expanded(root / sample["input"]),
            "gt": load_volume(root / sample["gt"]),
            "mask": load_volume(root / sample["mask"]),
            "norm": NormalizationRecord(**sample["norm"]),
        }


def make_sample(spec, angle_pair, geom: ProjectionGeometry):
    """Phantom -> two projections -> rescaled, expanded input; returns all intermediate products."""
    vol, mask = generate_phantom(spec)
    ap = project_drr(vol, replace(geom, euler_alpha=float(angle_pair[0])))
    lat = project_drr(vol, replace(geom, euler_alpha=float(angle_pair[1])))
    expanded = expand_dimension(minmax_rescale(ap), minmax_rescale(lat), vol.shape)
    gt, rec = zscore_normalize(vol)
    return {"raw": vol, "mask": mask, "ap": ap, "lat": lat, "input": expanded, "gt": gt, "norm": rec}


def default_geometry(grid_shape, spacing: float = 1.0, beam: str = "cone") -> ProjectionGeometry:
    sod, sdd = 600.0, 1000.0
    pitch = spacing * (sdd / sod if beam == "cone" else 1.0)
    return ProjectionGeometry(sod=sod, sdd=sdd, detector_shape=(grid_shape[0], grid_shape[2]),
                              pixel_pitch=pitch, beam=beam)


def make_dataset(
    out_dir: str | os.PathLike,
    n: int,
    distribution: PhantomDistribution | None = None,
    angle_pair=(90.0, 0.0),
    geom: ProjectionGeometry | None = None,
    split=(0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetManifest:
    """Generate ``n`` samples under ``out_dir`` and write ``manifest.json``.

    ``angle_pair`` gives the alpha angle of the view replicated along the AP
    axis and of the view replicated along the LR axis; (90, 0) is the
    orthogonal AP/lateral pair.
    """
    if n < 3:
        raise InvalidArgumentError(f"need at least 3 samples, got {n}")
    counts = split_counts(n, split)
    distribution = distribution or PhantomDistribution()
    grid = tuple(distribution.base.grid_shape)
    geom = geom or default_geometry(grid, distribution.base.spacing)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    samples = []
    intensity_max = 0.0
    for i in range(n):
        sid = f"s{i:04d}"
        spec = distribution.sample(np.random.default_rng([seed, i]))
        prod = make_sample(spec, angle_pair, geom)
        d = out / sid
        save_volume(prod["gt"], d / "gt.vol")
        save_volume(prod["mask"], d / "mask.vol")
        save_image(prod["ap"], d / "ap.img", spacing=(geom.pixel_pitch,) * 2, extra={"alpha_deg": angle_pair[0]})
        save_image(prod["lat"], d / "lat.img", spacing=(geom.pixel_pitch,) * 2, extra={"alpha_deg": angle_pair[1]})
        save_expanded(prod["input"], d / "input.vol")
        intensity_max = max(intensity_max, float(prod["raw"].data.max()))
        samples.append({
            "id": sid,
            "gt": f"{sid}/gt.vol",
            "mask": f"{sid}/mask.vol",
            "ap": f"{sid}/ap.img",
            "lat": f"{sid}/lat.img",
            "input": f"{sid}/input.vol",
            "norm": {"mean": prod["norm"].mean, "std": prod["norm"].std},
            "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        })

    order = np.random.default_rng(seed).permutation(n)
    ids = [samples[i]["id"] for i in order]
    bounds = np.cumsum((0,) + counts)
    splits = {name: sorted(ids[bounds[k]:bounds[k + 1]]) for k, name in enumerate(SPLITS)}
    for s in samples:
        s["split"] = next(name for name in SPLITS if s["id"] in splits[name])

    manifest = DatasetManifest(
        samples=samples,
        splits=splits,
        angles_deg=(float(angle_pair[0]), float(angle_pair[1])),
        seed=int(seed),
        geometry=asdict(geom) | {"detector_shape": list(geom.detector_shape)},
        grid_shape=grid,
        intensity_max=intensity_max,
        root=out,
    )
    manifest.save(out / "manifest.json")
    return manifest
