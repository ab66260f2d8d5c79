"""Finite-difference gradient checks shared by the test suite.

Each check reduces a module's output to a scalar with a fixed random
projection, takes autograd gradients, and compares sampled coordinates
against central differences computed by re-running the forward pass.
Everything runs in float64.
"""

from __future__ import annotations

import numpy as np
import torch


def _projection(shape, seed: int) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return torch.randn(shape, generator=g, dtype=torch.float64)


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return np.abs(analytic - numeric) / scale


def check_input_gradients(
    fn,
    x: torch.Tensor,
    n_coords: int = 20,
    eps: float = 1e-4,
    rtol: float = 1e-3,
    seed: int = 0,
) -> float:
    """Compare autograd input gradients against central differences.

    ``fn`` maps a tensor to a tensor. Returns the worst relative error and
    asserts it is below ``rtol``.
    """
    x = x.detach().double()
    proj = _projection(fn(x).shape, seed)

    def scalar(t: torch.Tensor) -> torch.Tensor:
        return (fn(t) * proj).sum()

    leaf = x.clone().requires_grad_(True)
    scalar(leaf).backward()
    analytic_full = leaf.grad.reshape(-1).numpy()

    rng = np.random.default_rng(seed)
    coords = rng.choice(x.numel(), size=min(n_coords, x.numel()), replace=False)
    numeric = np.empty(len(coords))
    with torch.no_grad():
        work = x.clone()
        flat = work.reshape(-1)
        for i, c in enumerate(coords):
            orig = flat[c].item()
            flat[c] = orig + eps
            hi = float(scalar(work))
            flat[c] = orig - eps
            lo = float(scalar(work))
            flat[c] = orig
            numeric[i] = (hi - lo) / (2 * eps)

    worst = float(_relative_errors(analytic_full[coords], numeric).max())
    assert worst < rtol, f"input gradient mismatch: worst relative error {worst:.3e}"
    return worst


def check_parameter_gradients(
    module: torch.nn.Module,
    x: torch.Tensor,
    n_coords: int = 20,
    eps: float = 1e-4,
    rtol: float = 1e-3,
    seed: int = 0,
) -> float:
    """Compare autograd parameter gradients against central differences.

    Coordinates are sampled uniformly over the concatenation of all
    parameters. Returns the worst relative error and asserts it is below
    ``rtol``.
    """
    module = module.double()
    x = x.detach().double()
    proj = _projection(module(x).shape, seed)

    def scalar() -> torch.Tensor:
        return (module(x) * proj).sum()

    module.zero_grad()
    scalar().backward()

    params = list(module.parameters())
    sizes = np.array([p.numel() for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    coords = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)

    analytic = np.empty(len(coords))
    numeric = np.empty(len(coords))
    with torch.no_grad():
        for i, c in enumerate(coords):
            p_idx = int(np.searchsorted(offsets, c, side="right") - 1)
            local = int(c - offsets[p_idx])
            p = params[p_idx]
            analytic[i] = float(p.grad.reshape(-1)[local])
            flat = p.reshape(-1)
            orig = flat[local].item()
            flat[local] = orig + eps
            hi = float(scalar())
            flat[local] = orig - eps
            lo = float(scalar())
            flat[local] = orig
            numeric[i] = (hi - lo) / (2 * eps)

    worst = float(_relative_errors(analytic, numeric).max())
    assert worst < rtol, f"parameter gradient mismatch: worst relative error {worst:.3e}"
    return worst
