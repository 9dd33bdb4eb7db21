"""Stage 1: ROA estimation with Zubov-guided sampling and domain expansion."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np
import torch

from .boxes import Box
from .losses import LossWeights, zubov_losses
from .nets import Controller, LyapunovNet
from .sampling import (sample_boundary, sample_interior, sample_outside,
                       sample_training_batch, uniform_in_box)
from .simulate import closed_loop_fn, rollout_summary
from .systems import SystemSpec


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    # Zubov constants and thresholds
    a: float = 0.1
    p: float = 2.0
    c: float = 0.9
    c_z: float = 1e-4
    # data-loss integration horizon (forward Euler)
    T: float = 0.05
    dt: float = 0.001
    data_loss_form: str = "bellman"
    # optimization
    max_iters: int = 4000          # M1
    lr: float = 1e-3
    batch: int = 1024              # N
    data_batch: int = 512          # k2: rollout targets are the expensive part
    pgd_steps: int = 15
    pgd_step_frac: float = 0.05
    boundary_scale: float = 2.0
    # domain updates
    domain_update_every: int = 200  # gamma
    n_trajectories: int = 256       # N_T
    expansion_factor: float = 1.2   # beta
    stall_limit: int = 5
    sim_dt: float = 0.005
    sim_T: float = 30.0
    conv_tol: float = 1e-2
    domain_replace: bool = False    # literal hull-replacement domain update
    scale_about_origin: bool = False
    # architecture
    controller_hidden: Tuple[int, ...] = (32, 32)
    lyapunov_hidden: Tuple[int, ...] = (64, 64)
    # learnable loss weights: initial log-variances
    s_init: Tuple[float, ...] = (-2.0, 2.0, 0.0, 0.0, -2.0)

    def to_dict(self):
        return asdict(self)


@dataclass
class DomainUpdateState:
    stalls: int = 0


def update_domain(V, ctrl, sys: SystemSpec, box: Box, cfg: TrainConfig,
                  gen: torch.Generator,
                  state: Optional[DomainUpdateState] = None) -> Box:
    """Grow the training domain to cover everything converged trajectories visit.

    Seeds from the current ROA estimate, simulates, and takes the per-dimension
    hull of converged trajectories scaled by the expansion factor. By default
    the result is unioned with the current box (monotone growth); the literal
    hull-replacement update is available via cfg.domain_replace. With no
    convergent trajectory for stall_limit consecutive updates, the box is
    enlarged manually.
    """
    state = state if state is not None else DomainUpdateState()
    x0 = sample_interior(V, box, cfg.n_trajectories, cfg.c,
                         cfg.pgd_steps, cfg.pgd_step_frac, gen)
    steps = max(1, int(round(cfg.sim_T / cfg.sim_dt)))
    summary = rollout_summary(closed_loop_fn(sys, ctrl), x0, cfg.sim_dt, steps,
                              conv_tol=cfg.conv_tol,
                              x_star=torch.as_tensor(sys.x_star),
                              early_stop=True)
    conv = summary["converged"]
    if not bool(conv.any()):
        state.stalls += 1
        if state.stalls >= cfg.stall_limit:
            state.stalls = 0
            return box.scaled(cfg.expansion_factor, cfg.scale_about_origin)
        return box
    state.stalls = 0
    hull_lo = summary["min_visited"][conv].amin(dim=0).numpy()
    hull_hi = summary["max_visited"][conv].amax(dim=0).numpy()
    # keep the equilibrium strictly interior
    pad = 1e-3 * np.maximum(1.0, np.abs(sys.x_star))
    hull_lo = np.minimum(hull_lo, sys.x_star - pad)
    hull_hi = np.maximum(hull_hi, sys.x_star + pad)
    hull = Box(hull_lo, hull_hi).scaled(cfg.expansion_factor, cfg.scale_about_origin)
    if cfg.domain_replace:
        return hull
    return box.union(hull)


def train_stage1(sys: SystemSpec, cfg: TrainConfig, seed: int = 0,
                 callback=None) -> Tuple[Controller, LyapunovNet, Box, List[dict]]:
    """Alternate Zubov-guided sampling, domain updates, and gradient steps."""
    torch.manual_seed(seed)
    ctrl = sys.make_controller(hidden=cfg.controller_hidden, seed=seed)
    V = LyapunovNet.init_random(sys.state_dim, hidden=cfg.lyapunov_hidden,
                                seed=seed + 1)
    weights = LossWeights.init(*cfg.s_init)
    gen = torch.Generator().manual_seed(seed + 2)
    params = ctrl.parameters() + V.parameters() + [weights.s]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    box = sys.default_start_domain
    dstate = DomainUpdateState()
    history: List[dict] = []
    t0 = time.time()

    for it in range(1, cfg.max_iters + 1):
        if cfg.domain_update_every > 0 and it % cfg.domain_update_every == 0:
            box = update_domain(V, ctrl, sys, box, cfg, gen, dstate)

        batch = sample_training_batch(V, box, cfg.batch, cfg.c, cfg.pgd_steps,
                                      cfg.pgd_step_frac, gen)
        boundary = sample_boundary(box, cfg.batch, cfg.boundary_scale, gen)

        losses = zubov_losses(V, ctrl, sys, batch, boundary, cfg)
        total = weights.combine(losses)
        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss at iteration {it}: "
                + ", ".join(f"{k}={float(v):.3e}" for k, v in losses.items()))
        opt.zero_grad()
        total.backward()
        opt.step()
        weights.project()
        for t in params:
            if not torch.isfinite(t).all():
                raise TrainingDiverged(f"non-finite parameters at iteration {it}")

        if it % 50 == 0 or it == 1:
            row = {"iter": it, "total": float(total.detach()),
                   "elapsed": time.time() - t0,
                   "box_lo": box.lo.tolist(), "box_hi": box.hi.tolist()}
            row.update({k: float(v.detach()) for k, v in losses.items()})
            row.update({f"s_{n}": v for n, v in
                        zip(LossWeights.NAMES, weights.values())})
            history.append(row)
            if callback is not None:
                callback(row)
    return ctrl, V, box, history
