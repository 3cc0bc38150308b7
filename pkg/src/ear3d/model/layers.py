"""Backbone building blocks: encoder/decoder layers and the frequency enhancement module."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigurationError

LEAKY_SLOPE = 0.01


def conv_bn_act(cin, cout, stride=1, act="lrelu"):
    layers = [nn.Conv3d(cin, cout, 3, stride=stride, padding=1), nn.BatchNorm3d(cout)]
    if act == "lrelu":
        layers.append(nn.LeakyReLU(LEAKY_SLOPE))
    elif act == "relu":
        layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class EncoderLayer(nn.Module):
    """Stride-2 3x3x3 conv then stride-1 3x3x3 conv, each followed by BN + leaky ReLU."""

    def __init__(self, cin, cout):
        super().__init__()
        self.down = conv_bn_act(cin, cout, stride=2)
        self.conv = conv_bn_act(cout, cout)

    def forward(self, x):
        if any(s % 2 for s in x.shape[2:]):
            raise ConfigurationError(f"encoder layer needs even spatial dims, got {tuple(x.shape[2:])}")
        return self.conv(self.down(x))


class FrequencyEnhancement(nn.Module):
    """Convolve the real and imaginary spectra of instance-normalised features.

    The spatial signal recovered by the inverse FFT is fused with the module
    input through Conv3d + IN + ReLU, so the output shape equals the input shape.
    """

    def __init__(self, channels, kernel_size=1):
        super().__init__()
        self.norm = nn.InstanceNorm3d(channels, affine=False)
        self.conv_real = nn.Conv3d(channels, channels, kernel_size, padding=kernel_size // 2)
        self.conv_imag = nn.Conv3d(channels, channels, kernel_size, padding=kernel_size // 2)
        self.fuse = nn.Sequential(
            nn.Conv3d(2 * channels, channels, 3, padding=1),
            nn.InstanceNorm3d(channels, affine=True),
            nn.ReLU(),
        )

    def frequency_branch(self, f):
        spec = torch.fft.fftn(self.norm(f), dim=(-3, -2, -1))
        real = self.conv_real(spec.real)
        imag = self.conv_imag(spec.imag)
        # real part of the inverse transform; the imaginary residue is discarded
        return torch.fft.ifftn(torch.complex(real, imag), dim=(-3, -2, -1)).real

    def forward(self, f):
        return self.fuse(torch.cat([self.frequency_branch(f), f], dim=1))


class DecoderLayer(nn.Module):
    """Transposed conv (2x2x2, stride 2), skip concatenation, conv block, optional edge modulation."""

    def __init__(self, cin, skip_channels, cout):
        super().__init__()
        self.up = nn.ConvTranspose3d(cin, cout, 2, stride=2)
        self.conv = conv_bn_act(cout + skip_channels, cout)
        self.skip_channels = skip_channels

    def forward(self, f, skip=None, a_e=None, use_eam=False):
        x = self.up(f)
        if self.skip_channels:
            if skip is None or skip.shape[1] != self.skip_channels or skip.shape[2:] != x.shape[2:]:
                got = None if skip is None else tuple(skip.shape)
                raise ConfigurationError(f"skip feature {got} does not match upsampled {tuple(x.shape)}")
            x = torch.cat([x, skip], dim=1)
        x = self.conv(x)
        if use_eam and a_e is not None:
            a = F.interpolate(a_e, size=x.shape[2:], mode="trilinear", align_corners=False)
            x = x * (1 + a)
        return x
