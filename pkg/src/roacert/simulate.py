"""ODE rollout: forward Euler (default) and RK4.

Rollouts serve three purposes: the Bellman-style data loss (short horizon,
small dt), the domain-expansion trajectories, and Monte-Carlo trajectory
verification. The batched summary variant streams min/max visited states
instead of storing full paths.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch

from .graph import ExprGraph


@dataclass
class Trajectory:
    states: np.ndarray          # [steps_taken + 1, n]
    dt: float
    converged: bool
    diverged: bool
    min_visited: np.ndarray
    max_visited: np.ndarray

    @property
    def sup_norm_per_dim(self) -> np.ndarray:
        return np.maximum(np.abs(self.min_visited), np.abs(self.max_visited))


def _stepper(method: str):
    if method == "euler":
        def step(f, x, dt):
            return x + dt * f(x)
    elif method == "rk4":
        def step(f, x, dt):
            k1 = f(x)
            k2 = f(x + 0.5 * dt * k1)
            k3 = f(x + 0.5 * dt * k2)
            k4 = f(x + dt * k3)
            return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown integrator {method!r}")
    return step


def simulate(f: ExprGraph, x0, dt: float, steps: int, conv_tol: float = 1e-2,
             method: str = "euler", x_star=None) -> Trajectory:
    """Roll out the closed-loop graph from a single initial state.

    A non-finite state truncates the trajectory and flags it diverged.
    """
    if dt <= 0 or steps < 1:
        raise ValueError("need dt > 0 and steps >= 1")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    n = x0.shape[0]
    x_star = np.zeros(n) if x_star is None else np.asarray(x_star, dtype=np.float64)
    fn = lambda x: f.eval([x])
    step = _stepper(method)
    states = [x0.copy()]
    x = torch.as_tensor(x0[None, :], dtype=torch.float64)
    diverged = False
    with torch.no_grad():
        for _ in range(steps):
            x = step(fn, x, dt)
            row = x[0].numpy()
            if not np.isfinite(row).all():
                diverged = True
                break
            states.append(row.copy())
    arr = np.asarray(states)
    converged = (not diverged) and bool(np.abs(arr[-1] - x_star).max() < conv_tol)
    return Trajectory(arr, dt, converged, diverged,
                      arr.min(axis=0), arr.max(axis=0))


def rollout_summary(fn: Callable[[torch.Tensor], torch.Tensor], x0: torch.Tensor,
                    dt: float, steps: int, conv_tol: float = 1e-2,
                    x_star: Optional[torch.Tensor] = None, method: str = "euler",
                    early_stop: bool = False, track_range: bool = True) -> dict:
    """Batched rollout returning per-trajectory summaries (no full paths).

    With `early_stop`, trajectories that come within conv_tol/4 of the
    equilibrium are frozen (and reported converged); this keeps huge
    Monte-Carlo sweeps tractable.
    """
    x = x0.to(torch.float64)
    batch, n = x.shape
    xs = torch.zeros(n, dtype=torch.float64) if x_star is None else x_star.to(torch.float64)
    step = _stepper(method)
    mn = x.clone() if track_range else None
    mx = x.clone() if track_range else None
    active = torch.ones(batch, dtype=torch.bool)
    diverged = torch.zeros(batch, dtype=torch.bool)
    settle_tol = 0.25 * conv_tol
    with torch.no_grad():
        for _ in range(steps):
            if early_stop:
                near = (x - xs).abs().amax(dim=1) < settle_tol
                active &= ~near
                if not active.any():
                    break
                idx = active.nonzero(as_tuple=True)[0]
                xa = step(fn, x[idx], dt)
                bad = ~torch.isfinite(xa).all(dim=1)
                if bad.any():
                    diverged[idx[bad]] = True
                    active[idx[bad]] = False
                    xa = torch.where(bad.unsqueeze(1), x[idx], xa)
                x = x.clone()
                x[idx] = xa
            else:
                xn = step(fn, x, dt)
                bad = ~torch.isfinite(xn).all(dim=1)
                if bad.any():
                    newly = bad & active
                    diverged |= newly
                    active &= ~bad
                    xn = torch.where(bad.unsqueeze(1), x, xn)
                x = xn
                if not active.any():
                    break
            if track_range:
                mn = torch.minimum(mn, x)
                mx = torch.maximum(mx, x)
    final_err = (x - xs).abs().amax(dim=1)
    converged = (~diverged) & (final_err < conv_tol)
    return {
        "final": x,
        "converged": converged,
        "diverged": diverged,
        "min_visited": mn,
        "max_visited": mx,
    }


def closed_loop_fn(sys, ctrl) -> Callable[[torch.Tensor], torch.Tensor]:
    """g(x, u(x)) with the live controller (weights not frozen)."""
    return lambda x: sys.graph.eval([x, ctrl.eval(x)])


def graph_fn(f: ExprGraph) -> Callable[[torch.Tensor], torch.Tensor]:
    return lambda x: f.eval([x])
