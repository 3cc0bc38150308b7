"""Training objective: reconstruction, edge, frequency and projection terms.

All functions take (B, 1, X, Y, Z) tensors, ground truth first.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import InvalidArgumentError

BCE_CLAMP = 1e-7
FREQ_EPS = 1e-8
_SPATIAL = (-3, -2, -1)


def _check_pair(g, v):
    if g.shape != v.shape:
        raise InvalidArgumentError(f"shape mismatch: {tuple(g.shape)} vs {tuple(v.shape)}")


def sobel_kernels(dtype=torch.float32, device=None) -> torch.Tensor:
    """The three 3x3x3 Sobel derivative kernels, shape (3, 1, 3, 3, 3)."""
    deriv = torch.tensor([-1.0, 0.0, 1.0], dtype=dtype, device=device)
    smooth = torch.tensor([1.0, 2.0, 1.0], dtype=dtype, device=device)
    kx = torch.einsum("i,j,k->ijk", deriv, smooth, smooth)
    ky = torch.einsum("i,j,k->ijk", smooth, deriv, smooth)
    kz = torch.einsum("i,j,k->ijk", smooth, smooth, deriv)
    return torch.stack([kx, ky, kz])[:, None]


def edge_extract(v: torch.Tensor) -> torch.Tensor:
    """Sobel gradient magnitude scaled by its per-volume maximum, in [0, 1]."""
    b, c = v.shape[:2]
    flat = v.reshape(b * c, 1, *v.shape[2:])
    grads = F.conv3d(F.pad(flat, (1,) * 6, mode="replicate"), sobel_kernels(v.dtype, v.device))
    # shifted sqrt keeps the gradient finite where the magnitude is zero
    mag = (torch.sqrt(grads.pow(2).sum(dim=1, keepdim=True) + 1e-12) - 1e-6).clamp_min(0)
    peak = mag.amax(dim=(2, 3, 4), keepdim=True)
    return (mag / (peak + 1e-8)).clamp(0, 1).reshape(v.shape)


def bce(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = pred.clamp(BCE_CLAMP, 1 - BCE_CLAMP)
    return -(target * torch.log(p) + (1 - target) * torch.log(1 - p)).mean()


def loss_recon(g, v):
    _check_pair(g, v)
    return (g - v).abs().mean()


def loss_edge(g, v, a_e=None):
    """BCE with the edges of ``v`` as prediction and the edges of ``g`` as target.

    If ``a_e`` is given it replaces the extracted edges of ``v`` (upsampled to full resolution).
    """
    _check_pair(g, v)
    if a_e is None:
        pred = edge_extract(v)
    else:
        pred = F.interpolate(a_e, size=g.shape[2:], mode="trilinear", align_corners=False)
    return bce(pred, edge_extract(g))


def freq_distances(g, v):
    """Mean per-bin distance of the real and of the imaginary spectra (orthonormal 3-D FFT)."""
    _check_pair(g, v)
    fg = torch.fft.fftn(g, dim=_SPATIAL, norm="ortho")
    fv = torch.fft.fftn(v, dim=_SPATIAL, norm="ortho")
    return (fg.real - fv.real).abs().mean(), (fg.imag - fv.imag).abs().mean()


def loss_freq(g, v):
    d_real, d_imag = freq_distances(g, v)
    return torch.log10(d_real + d_imag + FREQ_EPS)


def loss_proj(g, v):
    """Mean L1 distance between maximum intensity projections along the three spatial axes."""
    _check_pair(g, v)
    terms = [(g.amax(dim=k) - v.amax(dim=k)).abs().mean() for k in _SPATIAL]
    return sum(terms) / 3


@dataclass
class LossBreakdown:
    recon: torch.Tensor
    edge: torch.Tensor
    freq: torch.Tensor
    proj: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("recon", "edge", "freq", "proj", "total")}


def loss_total(g, v, weights: LossWeights = LossWeights(), a_e=None, edge_source: str = "sobel") -> LossBreakdown:
    _check_pair(g, v)
    for name in ("recon", "edge", "freq", "proj"):
        if getattr(weights, name) < 0:
            raise InvalidArgumentError(f"negative loss weight {name}")
    terms = {
        "recon": loss_recon(g, v),
        "edge": loss_edge(g, v, a_e if edge_source == "attention" else None),
        "freq": loss_freq(g, v),
        "proj": loss_proj(g, v),
    }
    total = None
    for name, value in terms.items():
        w = getattr(weights, name)
        if w == 0:
            continue
        total = w * value if total is None else total + w * value
    if total is None:
        total = torch.zeros((), dtype=g.dtype, device=g.device)
    return LossBreakdown(total=total, **terms)
