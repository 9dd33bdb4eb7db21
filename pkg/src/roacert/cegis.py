"""Stage 2: counterexample-guided refinement of the stage-1 model.

A cheap PGD attack searches the band c' <= V <= c for points violating the
Lyapunov decrease condition; violations accumulate in a bounded buffer
(sorted by violation, top-k kept) and are trained away together with a
regularizer that pins V(0) and the boundary levelset.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np
import torch

from .boxes import Box
from .sampling import pgd_ascent, sample_boundary, uniform_in_box
from .systems import SystemSpec


@dataclass
class CegisConfig:
    c: float = 0.9                  # outer threshold (matches stage 1)
    c_prime_offset: float = 0.005   # c' = V(0) + offset at stage-2 start
    c_prime: Optional[float] = None
    pgd_points: int = 500           # P: points per attack round
    pgd_steps: int = 500            # PGD iterations per round (P in the paper)
    pgd_step_frac: float = 0.02     # alpha_1, relative to box width
    lr: float = 1e-4                # alpha_2
    epochs: int = 20                # K
    max_rounds: int = 200           # M2
    clean_rounds: int = 10          # n
    beta1: float = 1.0
    beta2: float = 0.5
    hinge_margin: float = 2e-3      # train violations to -margin so they stay gone
    buffer_cap: int = 10000         # k
    boundary_points: int = 1024

    def to_dict(self):
        return asdict(self)


class CexBuffer:
    """Bounded counterexample store, sorted descending by violation."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.points = torch.zeros((0, dim), dtype=torch.float64)
        self.violations = torch.zeros(0, dtype=torch.float64)

    def __len__(self):
        return self.points.shape[0]

    def add(self, points: torch.Tensor, violations: torch.Tensor):
        self.points = torch.cat([self.points, points.detach()], dim=0)
        self.violations = torch.cat([self.violations, violations.detach()])
        self._sort_truncate()

    def _sort_truncate(self):
        order = torch.argsort(self.violations, descending=True)
        order = order[: self.capacity]
        self.points = self.points[order]
        self.violations = self.violations[order]

    def refresh(self, violation_fn):
        """Re-rank the stored points under the current model."""
        if len(self) == 0:
            return
        self.violations = violation_fn(self.points).detach()
        self._sort_truncate()

    def dump(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i}" for i in range(self.points.shape[1])] + ["violation"])
            for p, v in zip(self.points.tolist(), self.violations.tolist()):
                wr.writerow(p + [v])

    @classmethod
    def restore(cls, path, capacity: int) -> "CexBuffer":
        rows = []
        with open(path) as fh:
            rd = csv.reader(fh)
            header = next(rd)
            for row in rd:
                rows.append([float(v) for v in row])
        dim = len(header) - 1
        buf = cls(capacity, dim)
        if rows:
            arr = torch.tensor(rows, dtype=torch.float64)
            buf.add(arr[:, :dim], arr[:, dim])
        return buf


def lyapunov_decrease(V, ctrl, sys: SystemSpec, x: torch.Tensor,
                      create_graph: bool = False) -> torch.Tensor:
    """V-dot(x) = grad V(x) . g(x, u(x))."""
    gv = V.grad_x(x, create_graph=create_graph)
    f = sys.graph.eval([x, ctrl.eval(x)])
    return (gv * f).sum(dim=1)


def cex_objective(V, ctrl, sys, c_prime: float, c: float):
    """min(V-dot, V - c', c - V): positive exactly on band violations."""
    def obj(x):
        vdot = lyapunov_decrease(V, ctrl, sys, x, create_graph=True)
        v = V(x)
        return torch.minimum(vdot, torch.minimum(v - c_prime, c - v))
    return obj


def find_cex(V, ctrl, sys: SystemSpec, box: Box, cfg: CegisConfig,
             gen: torch.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
    """PGD ascent on the counterexample objective; returns true violations."""
    obj = cex_objective(V, ctrl, sys, cfg.c_prime, cfg.c)
    x0 = uniform_in_box(box, cfg.pgd_points, gen)
    x = pgd_ascent(obj, box, x0, cfg.pgd_steps, cfg.pgd_step_frac)
    vdot = lyapunov_decrease(V, ctrl, sys, x).detach()
    with torch.no_grad():
        v = V(x)
    mask = (vdot > 0) & (v > cfg.c_prime) & (v < cfg.c)
    return x[mask], vdot[mask]


def cegis_step(V, ctrl, sys: SystemSpec, buffer: CexBuffer, box: Box,
               cfg: CegisConfig, opt: torch.optim.Optimizer, v0: float,
               gen: torch.Generator) -> dict:
    """One epoch of elimination + regularization training."""
    if len(buffer) > 0:
        vdot = lyapunov_decrease(V, ctrl, sys, buffer.points)
        l_cegis = torch.relu(vdot + cfg.hinge_margin).mean()
    else:
        l_cegis = torch.zeros((), dtype=torch.float64)
    x_star = torch.as_tensor(sys.x_star, dtype=torch.float64).unsqueeze(0)
    v_at_0 = V(x_star)[0]
    l_reg = torch.maximum(torch.relu(v0 - v_at_0), torch.relu(v_at_0 - cfg.c_prime))
    bpts = sample_boundary(box, cfg.boundary_points, 1.0, gen)
    l_reg = l_reg + (V(bpts) - 1.0).abs().mean()
    loss = cfg.beta1 * l_cegis + cfg.beta2 * l_reg
    if not torch.isfinite(loss):
        raise RuntimeError("non-finite CEGIS loss")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return {"cegis": float(l_cegis), "reg": float(l_reg)}


def train_stage2(V, ctrl, sys: SystemSpec, box: Box, cfg: CegisConfig,
                 seed: int = 0, callback=None):
    """Alternate attack and elimination until n consecutive clean rounds.

    Returns (V, ctrl, rounds_used, success). Failure (max_rounds exhausted
    with live counterexamples) is not fatal: verification may still succeed
    with adjusted thresholds.
    """
    gen = torch.Generator().manual_seed(seed)
    x_star = torch.as_tensor(sys.x_star, dtype=torch.float64).unsqueeze(0)
    with torch.no_grad():
        v0 = float(V(x_star)[0])
    if cfg.c_prime is None:
        cfg.c_prime = v0 + cfg.c_prime_offset
    if not (v0 < cfg.c_prime < cfg.c < 1.0):
        raise ValueError(f"need V(0)={v0:.4f} < c'={cfg.c_prime:.4f} < c={cfg.c} < 1")
    buffer = CexBuffer(cfg.buffer_cap, sys.state_dim)
    opt = torch.optim.Adam(ctrl.parameters() + V.parameters(), lr=cfg.lr)
    clean = 0
    rounds = 0
    for rounds in range(1, cfg.max_rounds + 1):
        pts, viols = find_cex(V, ctrl, sys, box, cfg, gen)
        if pts.shape[0] == 0:
            clean += 1
        else:
            clean = 0
            buffer.add(pts, viols)
        for _ in range(cfg.epochs):
            stats = cegis_step(V, ctrl, sys, buffer, box, cfg, opt, v0, gen)
        buffer.refresh(lambda x: lyapunov_decrease(V, ctrl, sys, x).detach())
        if callback is not None:
            callback({"round": rounds, "new_cex": int(pts.shape[0]),
                      "clean_streak": clean, "buffer": len(buffer), **stats})
        if clean >= cfg.clean_rounds:
            return V, ctrl, rounds, True
    return V, ctrl, rounds, False
