"""Attention blocks: 3-D CBAM for the shortcuts and the gated-convolution edge attention module."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigurationError, InvalidArgumentError


class ChannelAttention3d(nn.Module):
    def __init__(self, channels, reduction=8):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(
            nn.Conv3d(channels, hidden, 1, bias=False),
            nn.ReLU(),
            nn.Conv3d(hidden, channels, 1, bias=False),
        )

    def forward(self, x):
        avg = self.mlp(F.adaptive_avg_pool3d(x, 1))
        mx = self.mlp(F.adaptive_max_pool3d(x, 1))
        return torch.sigmoid(avg + mx)


class SpatialAttention3d(nn.Module):
    def __init__(self, kernel_size=7):
        super().__init__()
        self.conv = nn.Conv3d(2, 1, kernel_size, padding=kernel_size // 2)

    def forward(self, x):
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


class CBAM3d(nn.Module):
    """Channel attention then spatial attention, both multiplicative."""

    def __init__(self, channels, reduction=8, kernel_size=7):
        super().__init__()
        self.channel = ChannelAttention3d(channels, reduction)
        self.spatial = SpatialAttention3d(kernel_size)

    def attention_maps(self, x):
        a_c = self.channel(x)
        a_s = self.spatial(x * a_c)
        return a_c, a_s

    def forward(self, x):
        x = x * self.channel(x)
        return self.spatial(x) * x


class GatedConvBlock(nn.Module):
    """Residual gating: ``f_cur * sigmoid(gate(f_cur ++ f_prev)) + f_cur``.

    The gate is two conv blocks over the concatenated features; the second
    ends in BN + sigmoid.
    """

    def __init__(self, cur_channels, prev_channels):
        super().__init__()
        self.gate_net = nn.Sequential(
            nn.Conv3d(cur_channels + prev_channels, cur_channels, 3, padding=1),
            nn.BatchNorm3d(cur_channels),
            nn.ReLU(),
            nn.Conv3d(cur_channels, cur_channels, 1),
            nn.BatchNorm3d(cur_channels),
        )

    def gate(self, f_cur, f_prev):
        return torch.sigmoid(self.gate_net(torch.cat([f_cur, f_prev], dim=1)))

    def forward(self, f_cur, f_prev):
        if f_cur.shape[0] != f_prev.shape[0] or f_cur.shape[2:] != f_prev.shape[2:]:
            raise InvalidArgumentError(
                f"gated block inputs are not aligned: {tuple(f_cur.shape)} vs {tuple(f_prev.shape)}"
            )
        return f_cur * self.gate(f_cur, f_prev) + f_cur


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv3d(channels, channels, 3, padding=1), nn.BatchNorm3d(channels), nn.ReLU(),
            nn.Conv3d(channels, channels, 3, padding=1), nn.BatchNorm3d(channels), nn.ReLU(),
        )

    def forward(self, x):
        return x + self.body(x)


def _upsample_to(x, ref):
    return F.interpolate(x, size=ref.shape[2:], mode="trilinear", align_corners=False)


class EdgeAttentionModule(nn.Module):
    """Cascade e3 -> e2 -> e1 of residual blocks with gated fusion, ending in a 1-channel sigmoid map."""

    def __init__(self, c1, c2, c3):
        super().__init__()
        self.res2 = ResidualBlock(c2)
        self.gate2 = GatedConvBlock(c2, c3)
        self.res1 = ResidualBlock(c1)
        self.gate1 = GatedConvBlock(c1, c2)
        self.head = nn.Conv3d(c1, 1, 1)

    def forward(self, e1, e2, e3):
        s1, s2, s3 = (tuple(e.shape[2:]) for e in (e1, e2, e3))
        if any(a != 2 * b for a, b in zip(s1, s2)) or any(a != 2 * b for a, b in zip(s2, s3)):
            raise ConfigurationError(f"edge attention expects a halving resolution chain, got {s1}, {s2}, {s3}")
        h2 = self.gate2(self.res2(e2), _upsample_to(e3, e2))
        h1 = self.gate1(self.res1(e1), _upsample_to(h2, e1))
        return torch.sigmoid(self.head(h1))
