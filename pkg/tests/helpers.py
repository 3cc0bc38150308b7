"""Shared oracles for the test-suite."""

import numpy as np
import torch


def fd_gradient_check(objective, leaves, n_probes=12, eps=1e-6, seed=0):
    """Compare autograd with central differences at randomly chosen entries of ``leaves``.

    ``objective()`` must return a scalar tensor and be a pure function of the
    leaf tensors. Returns a list of (analytic, numeric) pairs.
    """
    for t in leaves:
        t.requires_grad_(True)
        t.grad = None
    objective().backward()
    grads = [t.grad.detach().clone() for t in leaves]

    rng = np.random.default_rng(seed)
    sizes = np.array([t.numel() for t in leaves], dtype=np.float64)
    pairs = []
    for _ in range(n_probes):
        k = int(rng.choice(len(leaves), p=sizes / sizes.sum()))
        flat_idx = int(rng.integers(leaves[k].numel()))
        idx = np.unravel_index(flat_idx, tuple(leaves[k].shape))
        with torch.no_grad():
            orig = leaves[k][idx].item()
            leaves[k][idx] = orig + eps
            up = objective().item()
            leaves[k][idx] = orig - eps
            down = objective().item()
            leaves[k][idx] = orig
        pairs.append((grads[k][idx].item(), (up - down) / (2 * eps)))
    return pairs


def max_relative_error(pairs, floor=1e-8):
    return max(abs(a - n) / max(abs(a), abs(n), floor) for a, n in pairs)


def projected(fn, shape_like, seed=1):
    """Scalar objective ``sum(w * fn())`` with fixed random weights, so no gradient is trivially zero."""
    gen = torch.Generator().manual_seed(seed)
    w = torch.randn(shape_like, generator=gen, dtype=torch.float64)
    return lambda: (w * fn()).sum()


# criterion number -> PASS/FAIL line, filled by the acceptance suite
ACCEPTANCE = {}
