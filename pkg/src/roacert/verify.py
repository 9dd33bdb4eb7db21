"""Formal verification: input-split branch-and-bound over the band and
boundary conditions, with adaptive levelset adjustment.

The certified claim: with 0 < c1 < c2,
  (i)  grad V . f < 0 on (V<=c2 \\ V<=c1) within the domain, and
  (ii) f . n < 0 on each domain face intersected with V<=c2,
which makes both sublevel sets forward invariant and drives every
trajectory from V<=c2 into V<=c1 in finite time.

Instead of bisecting for the tightest thresholds, counterexamples found by
cheap PGD inside the worst unverified subdomain move c1 up or c2 down
mid-run; subdomains already verified stay verified because the band only
shrinks.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from .boxes import Box
from .bound import OutputBounds, VerificationInfeasible, bound_graph
from .graph import ExprGraph, Node, compose_closed_loop, controller_to_graph, \
    gradient_graph, lyapunov_to_graph
from .nets import Controller, LyapunovNet
from .systems import SystemSpec

CERTIFICATE_SCHEMA = "roacert.certificate.v1"


@dataclass
class VerificationGraph:
    """Single graph exposing V, V-dot and the closed-loop field components."""
    graph: ExprGraph
    v_node: int
    vdot_node: int
    f_nodes: List[int]

    def torch_outputs(self, x: torch.Tensor):
        out = self.graph.eval([x])
        v = out[:, 0]
        vdot = out[:, 1]
        f = out[:, 2:]
        return v, vdot, f


def _splice(dst: ExprGraph, src: ExprGraph, xin) -> List[int]:
    m = {src.inputs[0]: xin.i}
    for i, nd in enumerate(src.nodes):
        if nd.op == "input":
            continue
        m[i] = dst._push(Node(nd.op, tuple(m[j] for j in nd.operands),
                              nd.width, nd.data))
    return [m[o] for o in src.outputs]


def assemble_verification_graph(v_graph: ExprGraph,
                                f_graph: ExprGraph) -> VerificationGraph:
    """Combine a scalar V graph and a closed-loop f graph over one input."""
    n = v_graph.nodes[v_graph.inputs[0]].width
    gg = gradient_graph(v_graph)
    g = ExprGraph([n])
    xin = g.input(0)
    (v_idx,) = _splice(g, v_graph, xin)
    (grad_idx,) = _splice(g, gg, xin)
    f_idx = _splice(g, f_graph, xin)
    fvec = g.concat([g.ref(i) for i in f_idx])
    vdot = g.sum(g.binary("mul", g.ref(grad_idx), fvec))
    f_scalars = [g.pick(fvec, d).i for d in range(n)]
    g.set_outputs([g.ref(v_idx), vdot] + [g.ref(i) for i in f_scalars])
    return VerificationGraph(g, v_idx, vdot.i, f_scalars)


def make_verification_graph(V: LyapunovNet, ctrl: Controller,
                            sys: SystemSpec) -> VerificationGraph:
    """Freeze the networks and assemble V, grad V . f, and f in one DAG."""
    vg = lyapunov_to_graph(V)
    fg = compose_closed_loop(sys.graph, controller_to_graph(ctrl))
    return assemble_verification_graph(vg, fg)


@dataclass
class VerifyTask:
    vgraph: VerificationGraph
    omega: Box
    c1: float = 0.01
    c2: float = 0.99
    eps: float = 1e-4
    batch: int = 512
    timeout: float = 3600.0
    max_subdomains: int = 5_000_000
    adaptive: bool = True
    falsify_on_cex: bool = False     # for fixed-threshold baseline runs
    pgd_restarts: int = 5
    pgd_steps: int = 50
    pgd_step_frac: float = 0.05
    min_rel_width: float = 1e-9

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError("thresholds must satisfy 0 < c1 < c2 < 1")


@dataclass
class Subdomain:
    lo: np.ndarray
    hi: np.ndarray
    v_lo: float = np.nan
    v_hi: float = np.nan
    du: float = np.nan
    status: str = "unknown"


@dataclass
class VerdictReport:
    status: str                      # VERIFIED | FALSIFIED | TIMEOUT
    c1: float
    c2: float
    subdomains_processed: int = 0
    boundings: int = 0
    counterexamples_applied: int = 0
    wall_time: float = 0.0
    band_verified: bool = False
    faces_verified: int = 0
    faces_total: int = 0
    detail: dict = field(default_factory=dict)


def check_band_condition(task: VerifyTask, sub: Subdomain,
                         c1: Optional[float] = None,
                         c2: Optional[float] = None) -> str:
    """Bound one subdomain and discharge the decrease condition on it."""
    c1 = task.c1 if c1 is None else c1
    c2 = task.c2 if c2 is None else c2
    g = task.vgraph
    res = bound_graph(g.graph, sub.lo[None], sub.hi[None],
                      outputs=[g.graph.outputs[0], g.graph.outputs[1]])
    vb = res[g.graph.outputs[0]]
    db = res[g.graph.outputs[1]]
    sub.v_lo, sub.v_hi = float(vb.lo[0]), float(vb.hi[0])
    sub.du = float(db.hi[0])
    ok = (sub.v_hi < c1) or (sub.v_lo > c2) or (sub.du < 0)
    sub.status = "verified" if ok else "unknown"
    return sub.status


def check_boundary_condition(task: VerifyTask, face: Tuple[int, int],
                             c2: Optional[float] = None) -> str:
    """Discharge the outflow condition on one whole face (dim, side)."""
    rep = _verify_faces(task, [face], time.time(), _Counters(),
                        c1=task.c1, c2=task.c2 if c2 is None else c2,
                        allow_updates=False)
    return "verified" if rep == "VERIFIED" else rep.lower()


class _Counters:
    def __init__(self):
        self.processed = 0
        self.boundings = 0
        self.cex = 0


def _split(lo: np.ndarray, hi: np.ndarray, ref_width: np.ndarray):
    d = int(np.argmax((hi - lo) / ref_width))
    mid = 0.5 * (lo[d] + hi[d])
    lo2 = lo.copy()
    lo2[d] = mid
    hi1 = hi.copy()
    hi1[d] = mid
    return (lo, hi1), (lo2, hi)


def _pgd_cex(task: VerifyTask, lo: np.ndarray, hi: np.ndarray, c1: float,
             c2: float, face_dim: Optional[int] = None, face_sign: float = 0.0,
             gen: Optional[torch.Generator] = None):
    """Maximize the violation objective inside one box; None if no violation.

    Band mode: min(Vdot, V - c1, c2 - V) > 0 is a genuine violation.
    Face mode: min(sign * f_d, c2 - V) > 0 violates the outflow condition.
    """
    gen = gen or torch.Generator().manual_seed(0)
    tlo = torch.as_tensor(lo, dtype=torch.float64)
    thi = torch.as_tensor(hi, dtype=torch.float64)
    step = task.pgd_step_frac * (thi - tlo)
    best_x, best_v = None, 0.0
    for _ in range(task.pgd_restarts):
        x = tlo + torch.rand((16, lo.shape[0]), generator=gen,
                             dtype=torch.float64) * (thi - tlo)
        for _ in range(task.pgd_steps):
            x = x.detach().requires_grad_(True)
            v, vdot, f = task.vgraph.torch_outputs(x)
            if face_dim is None:
                obj = torch.minimum(vdot, torch.minimum(v - c1, c2 - v))
            else:
                obj = torch.minimum(face_sign * f[:, face_dim], c2 - v)
            (gx,) = torch.autograd.grad(obj.sum(), [x])
            with torch.no_grad():
                x = torch.clamp(x + step * torch.sign(gx), tlo, thi)
        with torch.no_grad():
            v, vdot, f = task.vgraph.torch_outputs(x)
            if face_dim is None:
                obj = torch.minimum(vdot, torch.minimum(v - c1, c2 - v))
            else:
                obj = torch.minimum(face_sign * f[:, face_dim], c2 - v)
            k = int(torch.argmax(obj))
            if float(obj[k]) > best_v:
                best_v = float(obj[k])
                best_x = x[k].detach().clone()
    return best_x, best_v


def _update_thresholds(v_ce: float, c1: float, c2: float, eps: float,
                       face_mode: bool) -> Tuple[float, float]:
    if face_mode:
        return c1, v_ce - eps  # only shrinking c2 can exclude a face violation
    if abs(v_ce - c1) < abs(v_ce - c2):
        return v_ce + eps, c2
    return c1, v_ce - eps


def _verify_band(task: VerifyTask, t_start: float, ctr: _Counters,
                 state: dict) -> str:
    g = task.vgraph.graph
    out_v, out_d = g.outputs[0], g.outputs[1]
    ref_width = np.maximum(task.omega.width, 1e-12)
    stack: List[Tuple[np.ndarray, np.ndarray]] = [(task.omega.lo.copy(),
                                                   task.omega.hi.copy())]
    gen = torch.Generator().manual_seed(0)
    while stack:
        if state["c1"] >= state["c2"]:
            return "FALSIFIED"
        if time.time() - t_start > task.timeout:
            return "TIMEOUT"
        if ctr.processed > task.max_subdomains:
            return "TIMEOUT"
        batch = [stack.pop() for _ in range(min(task.batch, len(stack)))]
        lo = np.stack([b[0] for b in batch])
        hi = np.stack([b[1] for b in batch])
        ctr.processed += len(batch)
        ctr.boundings += len(batch)
        c1, c2 = state["c1"], state["c2"]  # snapshot per batch
        res = bound_graph(g, lo, hi, outputs=[out_v, out_d])
        vb, db = res[out_v], res[out_d]
        need = ~((vb.hi < c1) | (vb.lo > c2))
        du = np.where(need, db.hi, -np.inf)
        unknown = need & (du >= 0)
        if not unknown.any():
            continue
        idx = np.where(unknown)[0]
        if task.adaptive or task.falsify_on_cex:
            worst = idx[int(np.argmax(du[idx]))]
            x_ce, value = _pgd_cex(task, lo[worst], hi[worst],
                                   c1, c2, gen=gen)
            if x_ce is not None and value > 0:
                if task.falsify_on_cex and not task.adaptive:
                    state["cex"] = x_ce.numpy()
                    return "FALSIFIED"
                with torch.no_grad():
                    v_ce = float(task.vgraph.torch_outputs(x_ce[None])[0][0])
                state["c1"], state["c2"] = _update_thresholds(
                    v_ce, state["c1"], state["c2"], task.eps, False)
                ctr.cex += 1
                if state["c1"] >= state["c2"]:
                    return "FALSIFIED"
                # re-check this batch against the shrunk band before splitting
                c1n, c2n = state["c1"], state["c2"]
                unknown = need & (du >= 0) & ~((vb.hi < c1n) | (vb.lo > c2n))
                idx = np.where(unknown)[0]
        for i in idx:
            w = (hi[i] - lo[i]) / ref_width
            if w.max() < task.min_rel_width:
                return "TIMEOUT"  # cannot split further: give up soundly
            (l1, h1), (l2, h2) = _split(lo[i], hi[i], ref_width)
            stack.append((l1, h1))
            stack.append((l2, h2))
    return "VERIFIED"


def _verify_faces(task: VerifyTask, faces, t_start: float, ctr: _Counters,
                  c1: float, c2: float, allow_updates: bool,
                  state: Optional[dict] = None) -> str:
    g = task.vgraph.graph
    out_v = g.outputs[0]
    n = task.omega.dim
    ref_width = np.maximum(task.omega.width, 1e-12)
    gen = torch.Generator().manual_seed(1)
    for (d, side) in faces:
        f_out = g.outputs[2 + d]
        sign = 1.0 if side > 0 else -1.0
        lo0 = task.omega.lo.copy()
        hi0 = task.omega.hi.copy()
        if side > 0:
            lo0[d] = hi0[d] = task.omega.hi[d]
        else:
            lo0[d] = hi0[d] = task.omega.lo[d]
        stack = [(lo0, hi0)]
        while stack:
            if state is not None:
                c1, c2 = state["c1"], state["c2"]
            if c1 >= c2:
                return "FALSIFIED"
            if time.time() - t_start > task.timeout:
                return "TIMEOUT"
            if ctr.processed > task.max_subdomains:
                return "TIMEOUT"
            batch = [stack.pop() for _ in range(min(task.batch, len(stack)))]
            lo = np.stack([b[0] for b in batch])
            hi = np.stack([b[1] for b in batch])
            ctr.processed += len(batch)
            ctr.boundings += len(batch)
            res = bound_graph(g, lo, hi, outputs=[out_v, f_out])
            vb, fb = res[out_v], res[f_out]
            need = ~(vb.lo > c2)
            # outflow requires sign * f_d < 0
            worst = sign * fb.hi if sign > 0 else sign * fb.lo
            unknown = need & (worst >= 0)
            if not unknown.any():
                continue
            idx = np.where(unknown)[0]
            if allow_updates and (task.adaptive or task.falsify_on_cex):
                i0 = idx[0]
                x_ce, value = _pgd_cex(task, lo[i0], hi[i0], c1, c2,
                                       face_dim=d, face_sign=sign, gen=gen)
                if x_ce is not None and value > 0:
                    if task.falsify_on_cex and not task.adaptive:
                        return "FALSIFIED"
                    with torch.no_grad():
                        v_ce = float(task.vgraph.torch_outputs(x_ce[None])[0][0])
                    nc1, nc2 = _update_thresholds(v_ce, c1, c2, task.eps, True)
                    ctr.cex += 1
                    if state is not None:
                        state["c1"], state["c2"] = nc1, nc2
                    c1, c2 = nc1, nc2
                    if c1 >= c2:
                        return "FALSIFIED"
            for i in idx:
                w = (hi[i] - lo[i]) / ref_width
                if w.max() < task.min_rel_width:
                    return "TIMEOUT"
                (l1, h1), (l2, h2) = _split(lo[i], hi[i], ref_width)
                stack.append((l1, h1))
                stack.append((l2, h2))
    return "VERIFIED"


def bab_verify(task: VerifyTask) -> VerdictReport:
    """Discharge the band condition, then every face, adjusting thresholds.

    VERIFIED requires all stacks drained; FALSIFIED means the thresholds
    collapsed (c1 >= c2): the levelset band was excluded entirely.
    """
    t0 = time.time()
    ctr = _Counters()
    state = {"c1": task.c1, "c2": task.c2}
    n = task.omega.dim
    rep = VerdictReport(status="TIMEOUT", c1=task.c1, c2=task.c2,
                        faces_total=2 * n)
    try:
        band = _verify_band(task, t0, ctr, state)
        rep.band_verified = band == "VERIFIED"
        status = band
        if band == "VERIFIED":
            faces = [(d, s) for d in range(n) for s in (+1, -1)]
            status = _verify_faces(task, faces, t0, ctr,
                                   state["c1"], state["c2"],
                                   allow_updates=True, state=state)
            if status == "VERIFIED":
                rep.faces_verified = 2 * n
    except VerificationInfeasible as exc:
        status = "TIMEOUT"
        rep.detail["infeasible"] = str(exc)
    rep.status = status
    rep.c1, rep.c2 = state["c1"], state["c2"]
    rep.subdomains_processed = ctr.processed
    rep.boundings = ctr.boundings
    rep.counterexamples_applied = ctr.cex
    rep.wall_time = time.time() - t0
    if "cex" in state:
        rep.detail["counterexample"] = state["cex"].tolist()
    return rep


def _weights_hash(net) -> str:
    ws, bs = net.state_arrays()
    h = hashlib.sha256()
    for w in ws + bs:
        h.update(w.tobytes())
    return h.hexdigest()


def certify_theorem(sys: SystemSpec, ctrl: Controller, V: LyapunovNet,
                    omega: Box, report: VerdictReport) -> dict:
    """Bundle a successful verification run into a checkable certificate."""
    if report.status != "VERIFIED":
        raise ValueError(f"cannot certify: verifier returned {report.status}")
    return {
        "schema": CERTIFICATE_SCHEMA,
        "system": sys.name,
        "scheme": "formal",
        "c1": report.c1,
        "c2": report.c2,
        "domain": omega.to_json(),
        "hashes": {
            "system_graph": sys.graph.content_hash(),
            "controller": _weights_hash(ctrl.net),
            "lyapunov": _weights_hash(V.net),
        },
        "stats": {
            "subdomains_processed": report.subdomains_processed,
            "boundings": report.boundings,
            "counterexamples_applied": report.counterexamples_applied,
            "wall_time": report.wall_time,
        },
    }


def validate_certificate(cert: dict, sys: SystemSpec, ctrl: Controller,
                         V: LyapunovNet) -> bool:
    """Integrity check: tampered weights or dynamics invalidate the bundle."""
    if cert.get("schema") != CERTIFICATE_SCHEMA:
        return False
    h = cert.get("hashes", {})
    return (h.get("system_graph") == sys.graph.content_hash()
            and h.get("controller") == _weights_hash(ctrl.net)
            and h.get("lyapunov") == _weights_hash(V.net))
