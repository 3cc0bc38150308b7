"""Raw float32 containers with a JSON sidecar manifest.

``<name>.vol`` / ``<name>.img`` hold little-endian float32 values in C order
(last axis fastest); ``<name>.vol.json`` / ``<name>.img.json`` hold the
metadata. The same scheme stores 3-D volumes, 2-D images, and the 4-D
channel-first expanded network input.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import FormatError
from .volume import AxisConvention, Volume

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")
REQUIRED_KEYS = ("shape", "spacing_mm", "origin_mm", "axes", "domain", "version")


def sidecar_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_array(path: str | os.PathLike, array: np.ndarray, meta: dict) -> Path:
    path = Path(path)
    array = np.ascontiguousarray(array, dtype=_DTYPE)
    header = dict(meta)
    header["shape"] = list(array.shape)
    header["version"] = FORMAT_VERSION
    header.setdefault("dtype", "float32-le")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(array.tobytes(order="C"))
    sidecar_path(path).write_text(json.dumps(header, indent=2, sort_keys=True))
    return path


def read_array(path: str | os.PathLike, required=REQUIRED_KEYS) -> tuple[np.ndarray, dict]:
    path = Path(path)
    side = sidecar_path(path)
    try:
        header = json.loads(side.read_text())
    except FileNotFoundError:
        raise FormatError(f"missing manifest {side}", field="manifest") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt manifest {side}: {exc}", field="manifest") from None
    if not isinstance(header, dict):
        raise FormatError(f"manifest {side} is not a JSON object", field="manifest")
    for key in required:
        if key not in header:
            raise FormatError(f"manifest {side} lacks required key", field=key)
    if header["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {header['version']}", field="version")
    shape = header["shape"]
    if not isinstance(shape, list) or not shape or not all(isinstance(n, int) and n >= 1 for n in shape):
        raise FormatError(f"invalid shape {shape!r}", field="shape")
    payload = path.read_bytes()
    expected = int(np.prod(shape)) * _DTYPE.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"payload of {path} has {len(payload)} bytes, shape {shape} needs {expected}", field="shape"
        )
    array = np.frombuffer(payload, dtype=_DTYPE).reshape(shape).astype(np.float32)
    return array, header


def _volume_meta(v: Volume) -> dict:
    return {
        "spacing_mm": list(v.spacing),
        "origin_mm": list(v.origin),
        "axes": list(v.axes.labels),
        "domain": v.domain,
    }


def save_volume(v: Volume, path: str | os.PathLike, extra: dict | None = None) -> Path:
    meta = _volume_meta(v)
    if extra:
        meta.update(extra)
    return write_array(path, v.data, meta)


def load_volume(path: str | os.PathLike) -> Volume:
    data, header = read_array(path)
    if data.ndim != 3:
        raise FormatError(f"{path} is not a 3-D volume", field="shape")
    try:
        return Volume(
            data,
            spacing=tuple(header["spacing_mm"]),
            origin=tuple(header["origin_mm"]),
            axes=AxisConvention(tuple(header["axes"])),
            domain=header["domain"],
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid metadata in {path}: {exc}", field="metadata") from None


def save_image(image: np.ndarray, path: str | os.PathLike, spacing=(1.0, 1.0), extra: dict | None = None) -> Path:
    image = np.asarray(image)
    if image.ndim != 2:
        raise FormatError(f"image must be 2-D, got shape {image.shape}", field="shape")
    meta = {"spacing_mm": [float(s) for s in spacing], "origin_mm": [0.0, 0.0], "axes": ["u", "v"], "domain": "raw"}
    if extra:
        meta.update(extra)
    return write_array(path, image, meta)


def load_image(path: str | os.PathLike) -> np.ndarray:
    data, _ = read_array(path)
    if data.ndim != 2:
        raise FormatError(f"{path} is not a 2-D image", field="shape")
    return data


def save_expanded(x: np.ndarray, path: str | os.PathLike, extra: dict | None = None) -> Path:
    x = np.asarray(x)
    if x.ndim != 4:
        raise FormatError(f"expanded input must be (channels, x, y, z), got {x.shape}", field="shape")
    meta = {
        "spacing_mm": [1.0, 1.0, 1.0],
        "origin_mm": [0.0, 0.0, 0.0],
        "axes": ["channel", "LR", "AP", "SI"],
        "domain": "unit",
    }
    if extra:
        meta.update(extra)
    return write_array(path, x, meta)


def load_expanded(path: str | os.PathLike) -> np.ndarray:
    data, _ = read_array(path)
    if data.ndim != 4:
        raise FormatError(f"{path} is not a channel-first 4-D array", field="shape")
    return data
