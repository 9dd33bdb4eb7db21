"""Empirical verification schemes and Monte-Carlo ROA volume estimation.

Scheme 2 (PGD): a strong multi-restart attack on the band and boundary
conditions; passing means no counterexample was found, which is evidence,
not proof. Scheme 3 (trajectories): sample starts in the sublevel set
V <= c2 and check convergence to the equilibrium. Formal verification
implies both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .boxes import Box
from .nets import Controller, LyapunovNet
from .sampling import uniform_in_box
from .simulate import closed_loop_fn, rollout_summary
from .systems import SystemSpec
from .verify import VerificationGraph, VerifyTask, _pgd_cex, make_verification_graph


@dataclass
class EmpiricalReport:
    scheme: str                  # "pgd" | "trajectory"
    samples: int
    violations: int
    worst_violation: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scheme": self.scheme, "samples": self.samples,
                "violations": self.violations,
                "worst_violation": self.worst_violation,
                "passed": self.passed, "detail": self.detail}


@dataclass
class VolumeEstimate:
    level: float
    fraction: float
    box_volume: float
    volume: float
    stderr: float
    samples: int

    def to_json(self) -> dict:
        return {"level": self.level, "fraction": self.fraction,
                "box_volume": self.box_volume, "volume": self.volume,
                "stderr": self.stderr, "samples": self.samples}


def pgd_verify(V: LyapunovNet, ctrl: Controller, sys: SystemSpec, omega: Box,
               c1: float, c2: float, restarts: int = 10000, steps: int = 100,
               step_frac: float = 0.03, seed: int = 0,
               vgraph: Optional[VerificationGraph] = None,
               chunk: int = 2000) -> EmpiricalReport:
    """Multi-restart PGD attack on the band condition and on every face.

    Ascends min(Vdot, V - c1, c2 - V) over the domain and
    min(sign * f_d, c2 - V) over each face; any positive value is a
    counterexample to the certified conditions.
    """
    vg = vgraph or make_verification_graph(V, ctrl, sys)
    gen = torch.Generator().manual_seed(seed)
    lo = torch.as_tensor(omega.lo)
    hi = torch.as_tensor(omega.hi)
    n = omega.dim
    worst = -np.inf
    worst_x = None
    violations = 0
    total = 0

    def attack(face_dim=None, face_sign=0.0, n_starts=restarts):
        nonlocal worst, worst_x, violations, total
        flo = lo.clone()
        fhi_ = hi.clone()
        if face_dim is not None:
            pin = hi[face_dim] if face_sign > 0 else lo[face_dim]
            flo[face_dim] = pin
            fhi_[face_dim] = pin
        step = step_frac * (fhi_ - flo)
        done = 0
        while done < n_starts:
            m = min(chunk, n_starts - done)
            done += m
            total += m
            x = flo + torch.rand((m, n), generator=gen, dtype=torch.float64) \
                * (fhi_ - flo)
            for _ in range(steps):
                x = x.detach().requires_grad_(True)
                v, vdot, f = vg.torch_outputs(x)
                if face_dim is None:
                    obj = torch.minimum(vdot, torch.minimum(v - c1, c2 - v))
                else:
                    obj = torch.minimum(face_sign * f[:, face_dim], c2 - v)
                (gx,) = torch.autograd.grad(obj.sum(), [x])
                with torch.no_grad():
                    x = torch.clamp(x + step * torch.sign(gx), flo, fhi_)
            with torch.no_grad():
                v, vdot, f = vg.torch_outputs(x)
                if face_dim is None:
                    obj = torch.minimum(vdot, torch.minimum(v - c1, c2 - v))
                else:
                    obj = torch.minimum(face_sign * f[:, face_dim], c2 - v)
                violations += int((obj > 0).sum())
                k = int(torch.argmax(obj))
                if float(obj[k]) > worst:
                    worst = float(obj[k])
                    worst_x = x[k].tolist()

    attack()
    face_budget = max(200, restarts // (4 * n))
    for d in range(n):
        for s in (+1.0, -1.0):
            attack(face_dim=d, face_sign=s, n_starts=face_budget)
    return EmpiricalReport("pgd", total, violations, float(worst),
                           violations == 0,
                           detail={"worst_point": worst_x, "c1": c1, "c2": c2})


def sample_sublevel(V: LyapunovNet, omega: Box, c: float, n: int, seed: int = 0,
                    max_tries: int = 2000, pgd_assist=None) -> torch.Tensor:
    """Rejection-sample uniform starts from {V <= c} inside the box.

    If acceptance drops below 0.1% an adaptive proposal takes over (PGD
    interior samples, available via pgd_assist); if even that cannot fill
    the request, the sublevel set is effectively empty: hard error.
    """
    gen = torch.Generator().manual_seed(seed)
    out = []
    got = 0
    tried = 0
    batch = max(4 * n, 4096)
    for it in range(max_tries):
        x = uniform_in_box(omega, batch, gen)
        with torch.no_grad():
            keep = V(x) <= c
        tried += batch
        if keep.any():
            out.append(x[keep])
            got += int(keep.sum())
        if got >= n:
            break
        if it >= 4 and got < 1e-3 * tried and pgd_assist is not None:
            extra = pgd_assist(n - got, gen)
            with torch.no_grad():
                keep = V(extra) <= c
            out.append(extra[keep])
            got += int(keep.sum())
            if got >= n:
                break
    if got < n:
        raise RuntimeError(
            f"sublevel set V<={c} too small to sample: {got}/{n} after "
            f"{tried} proposals")
    return torch.cat(out)[:n]


def trajectory_verify(V: LyapunovNet, ctrl: Controller, sys: SystemSpec,
                      omega: Box, c2: float, n_traj: int = 100000,
                      horizon: float = 30.0, dt: float = 0.005,
                      conv_tol: float = 1e-2, seed: int = 0,
                      chunk: int = 20000) -> EmpiricalReport:
    """Monte-Carlo scheme: do all trajectories from V <= c2 converge to x*?"""
    from .sampling import sample_interior
    pgd_assist = lambda k, gen: sample_interior(V, omega, k, c2, 30, 0.05, gen)
    starts = sample_sublevel(V, omega, c2, n_traj, seed=seed,
                             pgd_assist=pgd_assist)
    steps = max(1, int(round(horizon / dt)))
    fn = closed_loop_fn(sys, ctrl)
    xs = torch.as_tensor(sys.x_star)
    fails = 0
    worst = 0.0
    done = 0
    while done < n_traj:
        xb = starts[done:done + chunk]
        done += xb.shape[0]
        summ = rollout_summary(fn, xb, dt, steps, conv_tol=conv_tol, x_star=xs,
                               early_stop=True, track_range=False)
        bad = ~summ["converged"]
        fails += int(bad.sum())
        if bad.any():
            err = (summ["final"] - xs).abs().amax(dim=1)
            worst = max(worst, float(err[bad].max()))
    return EmpiricalReport("trajectory", n_traj, fails, worst, fails == 0,
                           detail={"c2": c2, "horizon": horizon, "dt": dt,
                                   "conv_tol": conv_tol})


def estimate_volume(V: LyapunovNet, omega: Box, c: float, n_samples: int,
                    seed: int = 0, chunk: int = 500000) -> VolumeEstimate:
    """Monte-Carlo fraction of the box inside {V <= c}, times box volume."""
    if n_samples < 10000:
        raise ValueError("volume estimation needs at least 1e4 samples")
    gen = torch.Generator().manual_seed(seed)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        done += m
        x = uniform_in_box(omega, m, gen)
        with torch.no_grad():
            hits += int((V(x) <= c).sum())
    frac = hits / n_samples
    se = float(np.sqrt(max(frac * (1 - frac), 1e-300) / n_samples))
    return VolumeEstimate(c, frac, omega.volume, frac * omega.volume,
                          se * omega.volume, n_samples)


def unverifiable_hole_report(V: LyapunovNet, omega: Box, c1: float, c2: float,
                             n_samples: int = 1000000, seed: int = 0) -> dict:
    """Volume of the excluded hole V <= c1 relative to the certified ROA."""
    gen = torch.Generator().manual_seed(seed)
    hole = 0
    roa = 0
    done = 0
    chunk = 500000
    while done < n_samples:
        m = min(chunk, n_samples - done)
        done += m
        x = uniform_in_box(omega, m, gen)
        with torch.no_grad():
            v = V(x)
        hole += int((v <= c1).sum())
        roa += int((v <= c2).sum())
    hole_vol = hole / n_samples * omega.volume
    roa_vol = roa / n_samples * omega.volume
    fraction = hole / roa if roa else float("nan")
    return {"hole_volume": hole_vol, "roa_volume": roa_vol,
            "fraction": fraction, "samples": n_samples,
            "c1": c1, "c2": c2}
