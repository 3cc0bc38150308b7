"""Dataclass configs for the network, the objective and training runs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigurationError, InvalidArgumentError

DEPTH = 5


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = DEPTH
    base_width: int = 16
    in_channels: int = 2
    enable_abs: bool = True
    enable_fem: bool = True
    enable_eam: bool = True
    input_resolution: int = 32

    def __post_init__(self):
        if self.depth != DEPTH:
            raise ConfigurationError(f"the backbone has exactly {DEPTH} levels, got depth={self.depth}")
        if self.base_width < 1 or self.in_channels < 1:
            raise ConfigurationError("base_width and in_channels must be positive")
        if self.input_resolution < 2**self.depth or self.input_resolution % 2**self.depth:
            raise ConfigurationError(
                f"input_resolution must be a positive multiple of {2**self.depth}, got {self.input_resolution}"
            )

    @property
    def width_per_level(self) -> tuple[int, ...]:
        return tuple(self.base_width * 2**level for level in range(self.depth))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LossWeights:
    recon: float = 1.0
    edge: float = 0.1
    freq: float = 0.1
    proj: float = 0.1

    def __post_init__(self):
        for name in ("recon", "edge", "freq", "proj"):
            # normalise to float so the config hash survives a JSON round trip
            object.__setattr__(self, name, float(getattr(self, name)))
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"loss weight {name} must be non-negative, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {f"lambda_{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        out = {}
        for key, value in d.items():
            name = key.removeprefix("lambda_")
            if name not in ("recon", "edge", "freq", "proj"):
                raise ConfigurationError(f"unknown loss config key {key!r}")
            out[name] = float(value)
        return cls(**out)


@dataclass(frozen=True)
class MetricOptions:
    dice_threshold: float = 0.5
    fd_bounds: tuple[float, float] = (-8.0, 2.0)
    # None: use the dataset's largest raw intensity as the PSNR/SSIM dynamic range
    max_value: float | None = 4096.0

    def __post_init__(self):
        lo, hi = (float(x) for x in self.fd_bounds)
        if not lo < hi:
            raise InvalidArgumentError(f"fd_bounds need lo < hi, got {self.fd_bounds}")
        object.__setattr__(self, "fd_bounds", (lo, hi))
        object.__setattr__(self, "dice_threshold", float(self.dice_threshold))
        if self.max_value is not None:
            object.__setattr__(self, "max_value", float(self.max_value))

    def to_dict(self) -> dict:
        return {"dice_threshold": self.dice_threshold, "fd_bounds": list(self.fd_bounds), "max_value": self.max_value}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricOptions":
        d = dict(d)
        if "fd_bounds" in d:
            d["fd_bounds"] = tuple(d["fd_bounds"])
        return cls(**d)


SCALE_PROFILES = {
    # module gradient checks run at 8^3; full networks still need 2^5 | resolution
    "desk8": {"base_width": 4, "input_resolution": 32},
    "desk32": {"base_width": 16, "input_resolution": 32},
    "paper128": {"base_width": 16, "input_resolution": 128},
}


@dataclass(frozen=True)
class TrainConfig:
    lr_base: float = 0.01
    batch_size: int = 2
    weight_decay: float = 1e-5
    warmup_epochs: int = 10
    max_epochs: int = 100
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    scale_profile: str = "desk32"
    max_steps: int | None = None
    edge_loss_source: str = "sobel"
    early_stop_patience: int | None = None
    metrics: MetricOptions = field(default_factory=MetricOptions)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.warmup_epochs < self.max_epochs:
            raise ConfigurationError("need 0 <= warmup_epochs < max_epochs")
        if self.scale_profile not in SCALE_PROFILES:
            raise ConfigurationError(f"unknown scale profile {self.scale_profile!r}")
        if self.edge_loss_source not in ("sobel", "attention"):
            raise ConfigurationError(f"edge_loss_source must be 'sobel' or 'attention', got {self.edge_loss_source!r}")
        if self.lr_base <= 0 or self.weight_decay < 0:
            raise ConfigurationError("lr_base must be > 0 and weight_decay >= 0")

    @classmethod
    def for_profile(cls, profile: str, **overrides) -> "TrainConfig":
        if profile not in SCALE_PROFILES:
            raise ConfigurationError(f"unknown scale profile {profile!r}")
        network = overrides.pop("network", None) or NetworkConfig(**SCALE_PROFILES[profile])
        return cls(scale_profile=profile, network=network, **overrides)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["loss"] = self.loss.to_dict()
        d["network"] = self.network.to_dict()
        d["metrics"] = self.metrics.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown train config keys: {sorted(unknown)}")
        if "loss" in d:
            d["loss"] = LossWeights.from_dict(d["loss"])
        if "network" in d:
            d["network"] = NetworkConfig.from_dict(d["network"])
        if "metrics" in d:
            d["metrics"] = MetricOptions.from_dict(d["metrics"])
        return cls(**d)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def config_hash(cfg: TrainConfig | dict) -> str:
    d = cfg.to_dict() if isinstance(cfg, TrainConfig) else cfg
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_dict(json.load(fh))
