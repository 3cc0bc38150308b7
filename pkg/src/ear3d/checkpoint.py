"""Versioned checkpoint container: magic, version, JSON header, torch payload.

Layout: ``b"EAR3DCK\\0"`` | uint32 version | uint64 header length | header
JSON (utf-8) | payload (``torch.save`` of model and optimizer state).
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import NetworkConfig, TrainConfig, config_hash
from .errors import FormatError, IncompatibleCheckpointError
from .model import EARNet

MAGIC = b"EAR3DCK\0"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<IQ")


@dataclass
class Checkpoint:
    config: TrainConfig
    model_state: dict
    optimizer_state: dict | None = None
    epoch: int = 0
    step: int = 0
    metric_history: list = field(default_factory=list)
    norm_stats: dict = field(default_factory=lambda: {"mean": 0.0, "std": 1.0})

    def build_model(self) -> EARNet:
        model = EARNet(self.config.network)
        load_into(model, self)
        model.eval()
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    buf = io.BytesIO()
    torch.save({"model": ckpt.model_state, "optimizer": ckpt.optimizer_state}, buf)
    payload = buf.getvalue()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "config_hash": config_hash(ckpt.config),
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "metric_history": ckpt.metric_history,
        "norm_stats": ckpt.norm_stats,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_PREFIX.pack(CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    return path


def read_header(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path} is not a checkpoint", field="magic")
    off = len(MAGIC)
    if len(raw) < off + _PREFIX.size:
        raise FormatError(f"{path} is truncated", field="header")
    version, hlen = _PREFIX.unpack_from(raw, off)
    if version != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    off += _PREFIX.size
    try:
        header = json.loads(raw[off:off + hlen])
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", field="header") from None
    return header, raw[off + hlen:]


def load_checkpoint(path, expected_network: NetworkConfig | None = None) -> Checkpoint:
    header, payload = read_header(path)
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(f"unsupported checkpoint format {header.get('format_version')}")
    if config_hash(header["config"]) != header.get("config_hash"):
        raise IncompatibleCheckpointError("config hash does not match the stored configuration")
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise IncompatibleCheckpointError("checkpoint payload is corrupt")
    cfg = TrainConfig.from_dict(header["config"])
    if expected_network is not None and expected_network != cfg.network:
        raise IncompatibleCheckpointError(
            f"checkpoint network {cfg.network} does not match requested {expected_network}"
        )
    state = torch.load(io.BytesIO(payload), weights_only=True)
    return Checkpoint(
        config=cfg,
        model_state=state["model"],
        optimizer_state=state["optimizer"],
        epoch=header["epoch"],
        step=header["step"],
        metric_history=header["metric_history"],
        norm_stats=header["norm_stats"],
    )


def load_into(model: EARNet, ckpt: Checkpoint) -> None:
    if model.cfg != ckpt.config.network:
        raise IncompatibleCheckpointError(f"model config {model.cfg} differs from checkpoint {ckpt.config.network}")
    try:
        model.load_state_dict(ckpt.model_state)
    except RuntimeError as exc:
        raise IncompatibleCheckpointError(str(exc)) from None
