"""PGD-based training-data selection and boundary sampling.

Interior points are pushed into the current ROA estimate (the sublevel set
V <= c), outside points toward the V ~ 1 region, both by signed-gradient
descent with projection (clamping) onto the training box.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from .boxes import Box


def _box_tensors(box: Box):
    lo = torch.as_tensor(box.lo, dtype=torch.float64)
    hi = torch.as_tensor(box.hi, dtype=torch.float64)
    return lo, hi


def uniform_in_box(box: Box, n: int, gen: torch.Generator) -> torch.Tensor:
    lo, hi = _box_tensors(box)
    r = torch.rand((n, box.dim), generator=gen, dtype=torch.float64)
    return lo + r * (hi - lo)


def pgd_descent(objective: Callable[[torch.Tensor], torch.Tensor], box: Box,
                x0: torch.Tensor, steps: int, step_frac: float) -> torch.Tensor:
    """Minimize a pointwise objective by signed-gradient steps in the box.

    Points where the objective is flat (zero gradient) are fixed points.
    """
    lo, hi = _box_tensors(box)
    step = step_frac * (hi - lo)
    x = x0.clone()
    for _ in range(steps):
        x = x.detach().requires_grad_(True)
        val = objective(x).sum()
        (g,) = torch.autograd.grad(val, [x])
        with torch.no_grad():
            x = torch.clamp(x - step * torch.sign(g), lo, hi)
    return x.detach()


def pgd_ascent(objective, box, x0, steps, step_frac) -> torch.Tensor:
    return pgd_descent(lambda x: -objective(x), box, x0, steps, step_frac)


def sample_interior(V, box: Box, n: int, c: float, pgd_steps: int = 20,
                    step_frac: float = 0.05,
                    gen: torch.Generator = None) -> torch.Tensor:
    """n points driven toward the sublevel set V <= c by minimizing ReLU(V - c)."""
    gen = gen or torch.Generator().manual_seed(0)
    x0 = uniform_in_box(box, n, gen)
    return pgd_descent(lambda x: torch.relu(V(x) - c), box, x0, pgd_steps, step_frac)


def sample_outside(V, box: Box, n: int, pgd_steps: int = 20,
                   step_frac: float = 0.05,
                   gen: torch.Generator = None) -> torch.Tensor:
    """n points driven toward V ~ 1 by minimizing |V - 1|."""
    gen = gen or torch.Generator().manual_seed(0)
    x0 = uniform_in_box(box, n, gen)
    return pgd_descent(lambda x: (V(x) - 1.0).abs(), box, x0, pgd_steps, step_frac)


def sample_training_batch(V, box: Box, n: int, c: float, pgd_steps: int = 20,
                          step_frac: float = 0.05,
                          gen: torch.Generator = None) -> torch.Tensor:
    """Half interior / half outside points, driven by one fused PGD run."""
    gen = gen or torch.Generator().manual_seed(0)
    half = n // 2
    inside = torch.zeros(n, dtype=torch.bool)
    inside[:half] = True
    x0 = uniform_in_box(box, n, gen)

    def obj(x):
        v = V(x)
        return torch.where(inside, torch.relu(v - c), (v - 1.0).abs())

    return pgd_descent(obj, box, x0, pgd_steps, step_frac)


def sample_boundary(box: Box, n: int, scale: float = 2.0,
                    gen: torch.Generator = None) -> torch.Tensor:
    """Uniform sample of the faces of the box scaled by `scale` about its center.

    Every sample has exactly one coordinate pinned to a scaled face; faces are
    weighted by their area.
    """
    gen = gen or torch.Generator().manual_seed(0)
    big = box.scaled(scale)
    lo, hi = _box_tensors(big)
    dim = box.dim
    w = big.width
    areas = np.array([np.prod(np.delete(w, d)) for d in range(dim)])
    probs = torch.as_tensor(np.repeat(areas, 2) / (2 * areas.sum()))
    face = torch.multinomial(probs, n, replacement=True, generator=gen)
    d = face // 2
    side = (face % 2).to(torch.float64)
    x = lo + torch.rand((n, dim), generator=gen, dtype=torch.float64) * (hi - lo)
    pinned = lo[d] + side * (hi[d] - lo[d])
    x[torch.arange(n), d] = pinned
    return x
