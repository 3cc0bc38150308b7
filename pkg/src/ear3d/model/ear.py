"""The five-level encoder/decoder with optional FEM, EAM and attention-based shortcuts."""

import torch
import torch.nn as nn

from ..config import NetworkConfig
from ..errors import ConfigurationError
from .attention import CBAM3d, EdgeAttentionModule
from .layers import DecoderLayer, EncoderLayer, FrequencyEnhancement

FEM_LEVELS = 3


class EARNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.width_per_level
        cins = (cfg.in_channels,) + w[:-1]
        self.encoders = nn.ModuleList(EncoderLayer(ci, co) for ci, co in zip(cins, w))
        self.fems = nn.ModuleList(FrequencyEnhancement(c) for c in w[:FEM_LEVELS]) if cfg.enable_fem else None
        self.shortcuts = nn.ModuleList(CBAM3d(c) for c in w[:-1]) if cfg.enable_abs else None
        self.eam = EdgeAttentionModule(*w[:FEM_LEVELS]) if cfg.enable_eam else None
        # decoders[l] lifts level l+1 features to level l and fuses the level-l skip
        self.decoders = nn.ModuleList(DecoderLayer(w[l + 1], w[l], w[l]) for l in range(cfg.depth - 1))
        self.final_up = DecoderLayer(w[0], 0, w[0])
        self.head = nn.Conv3d(w[0], 1, 1)
        self.reset_parameters()

    def reset_parameters(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
                nn.init.kaiming_uniform_(m.weight, a=0.01, nonlinearity="leaky_relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, (nn.BatchNorm3d, nn.InstanceNorm3d)) and m.affine:
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        """Returns (reconstruction (B,1,r,r,r), edge attention map or None when EAM is off)."""
        factor = 2**self.cfg.depth
        if x.dim() != 5 or x.shape[1] != self.cfg.in_channels or any(s % factor for s in x.shape[2:]):
            raise ConfigurationError(
                f"input must be (B, {self.cfg.in_channels}, r, r, r) with r divisible by {factor}, got {tuple(x.shape)}"
            )
        feats = []
        h = x
        for level, enc in enumerate(self.encoders):
            h = enc(h)
            if self.fems is not None and level < FEM_LEVELS:
                h = self.fems[level](h)
            feats.append(h)

        a_e = self.eam(*feats[:FEM_LEVELS]) if self.eam is not None else None
        use_eam = a_e is not None
        d = feats[-1]
        for level in reversed(range(self.cfg.depth - 1)):
            skip = feats[level]
            if self.shortcuts is not None:
                skip = self.shortcuts[level](skip)
            d = self.decoders[level](d, skip, a_e, use_eam)
        d = self.final_up(d, None, a_e, use_eam)
        return self.head(d), a_e


def parameter_checksum(model: nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


@torch.no_grad()
def predict(model: EARNet, x):
    model.eval()
    return model(x)
