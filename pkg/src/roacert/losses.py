"""The five-term training loss with learnable weighting.

zero:       hinge on V(0)^2, pinning the Lyapunov value at the equilibrium.
pde:        squared residual of the Zubov equation
            grad V . f(x, detach(u)) = -a (1+V)(1-V) ||x||^p,
            training only the Lyapunov network.
data:       squared Bellman consistency against the short-horizon rollout
            target tanh(a * int_0^T ||phi||^p dt + atanh(V(phi(T,x)))),
            with the target treated as a constant.
controller: detach(grad V) . f(x, u(x)), training only the controller.
boundary:   (V - 1)^2 on the doubled-domain boundary.

Each term i carries a trainable log-variance s_i; the total is
sum_i exp(-s_i) L_i + s_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import torch

from .simulate import _stepper


@dataclass
class LossWeights:
    """Trainable log-variance per loss term, clamped to a sane range."""
    s: torch.Tensor
    clamp: float = 8.0

    NAMES = ("zero", "pde", "data", "controller", "boundary")

    @classmethod
    def init(cls, zero=-2.0, pde=2.0, data=0.0, controller=0.0, boundary=-2.0):
        s = torch.tensor([zero, pde, data, controller, boundary],
                         dtype=torch.float64, requires_grad=True)
        return cls(s)

    def combine(self, losses: Dict[str, torch.Tensor]) -> torch.Tensor:
        total = 0.0
        for i, name in enumerate(self.NAMES):
            total = total + torch.exp(-self.s[i]) * losses[name] + self.s[i]
        return total

    def project(self):
        with torch.no_grad():
            self.s.clamp_(-self.clamp, self.clamp)

    def values(self):
        return self.s.detach().tolist()


def state_norm_pow(x: torch.Tensor, p: float) -> torch.Tensor:
    sq = (x * x).sum(dim=-1)
    if p == 2:
        return sq
    return sq ** (p / 2.0)


def bellman_target(V, ctrl, sys, x: torch.Tensor, a: float, p: float,
                   T: float, dt: float, x_star: torch.Tensor,
                   form: str = "bellman") -> torch.Tensor:
    """Rollout-based regression target for V; no gradients flow through it."""
    steps = max(1, int(round(T / dt)))
    step = _stepper("euler")
    with torch.no_grad():
        y = x - x_star  # integrate deviations from the equilibrium
        integral = torch.zeros(x.shape[0], dtype=torch.float64)
        cur = x
        fn = lambda z: sys.graph.eval([z, ctrl.eval(z)])
        ok = torch.ones(x.shape[0], dtype=torch.bool)
        for _ in range(steps):
            integral = integral + dt * state_norm_pow(cur - x_star, p)
            cur = step(fn, cur, dt)
            fin = torch.isfinite(cur).all(dim=1)
            ok &= fin
            cur = torch.where(fin.unsqueeze(1), cur, torch.zeros_like(cur))
        v_end = torch.clamp(V(cur), 1e-12, 1.0 - 1e-12)
        if form == "bellman":
            target = torch.tanh(torch.clamp(a * integral + torch.atanh(v_end), max=20.0))
        elif form == "outer":
            # literal alternative where atanh sits outside the tanh
            target = torch.tanh(torch.clamp(a * integral, max=20.0)) + torch.atanh(v_end)
        else:
            raise ValueError(f"unknown data loss form {form!r}")
        # non-finite rollouts have left every bounded set: V target is 1
        target = torch.where(ok, target, torch.ones_like(target))
    return target


def zubov_losses(V, ctrl, sys, batch: torch.Tensor, boundary_batch: torch.Tensor,
                 cfg) -> Dict[str, torch.Tensor]:
    """All five loss terms; see the module docstring for gradient routing."""
    x_star = torch.as_tensor(sys.x_star, dtype=torch.float64)
    x = batch.detach().requires_grad_(True)

    v = V(x)
    (grad_v,) = torch.autograd.grad(v.sum(), [x], create_graph=True)
    u = ctrl.eval(x)

    f_pde = sys.graph.eval([x, u.detach()])
    residual = (grad_v * f_pde).sum(dim=1) \
        + cfg.a * (1.0 + v) * (1.0 - v) * state_norm_pow(x - x_star, cfg.p)
    l_pde = (residual ** 2).mean()

    f_ctl = sys.graph.eval([x.detach(), u])
    l_controller = (grad_v.detach() * f_ctl).sum(dim=1).mean()

    # strided subset keeps the interior/outside mix of the batch
    k2 = min(getattr(cfg, "data_batch", batch.shape[0]), batch.shape[0])
    stride = max(1, batch.shape[0] // k2)
    target = bellman_target(V, ctrl, sys, batch[::stride], cfg.a, cfg.p, cfg.T,
                            cfg.dt, x_star, form=cfg.data_loss_form)
    l_data = ((v[::stride] - target) ** 2).mean()

    v0 = V(x_star.unsqueeze(0))[0]
    l_zero = torch.relu(v0 * v0 - cfg.c_z)

    l_boundary = ((V(boundary_batch) - 1.0) ** 2).mean()

    return {"zero": l_zero, "pde": l_pde, "data": l_data,
            "controller": l_controller, "boundary": l_boundary}
