"""Linear bound propagation over expression graphs, batched over boxes.

A forward pass maintains, for every node, affine lower/upper envelopes in
the graph input together with interval bounds (the intersection of the
concretized envelopes and exact interval arithmetic). The envelopes of the
requested output nodes are then recomputed by a backward (output-to-input)
pass that composes the per-node linear relaxations, which is how the final
certificates are concretized. Everything operates on [B, ...] numpy arrays
so branch-and-bound can bound whole batches of subdomains at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .graph import ExprGraph
from .relax import _sigmoid, _sin_minmax, bilinear_planes, relax_unary_arrays


class VerificationInfeasible(Exception):
    """The graph cannot be bounded on this box (e.g. reciprocal spans zero)."""


@dataclass
class OutputBounds:
    """Affine envelopes al@x+bl <= out <= au@x+bu plus interval bounds."""
    al: np.ndarray   # [B, n]
    bl: np.ndarray   # [B]
    au: np.ndarray   # [B, n]
    bu: np.ndarray   # [B]
    lo: np.ndarray   # [B]
    hi: np.ndarray   # [B]


def _dtanh_np(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _dsigmoid_np(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _interval_unary(op: str, lo, hi, power: int = 0):
    """Exact range of a unary primitive over [lo, hi]."""
    if op == "neg":
        return -hi, -lo
    if op == "tanh":
        return np.tanh(lo), np.tanh(hi)
    if op == "sigmoid":
        return _sigmoid(lo), _sigmoid(hi)
    if op in ("dtanh", "dsigmoid"):
        f = _dtanh_np if op == "dtanh" else _dsigmoid_np
        far = np.where(np.abs(lo) > np.abs(hi), lo, hi)
        near = np.where(np.abs(lo) > np.abs(hi), hi, lo)
        mx = np.where((lo <= 0) & (hi >= 0), f(np.zeros_like(lo)), f(near))
        return f(far), mx
    if op == "sin":
        return _sin_minmax(lo, hi)
    if op == "cos":
        return _sin_minmax(lo + math.pi / 2, hi + math.pi / 2)
    if op == "relu":
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    if op == "reciprocal":
        return np.reciprocal(hi), np.reciprocal(lo)
    if op == "power":
        plo, phi = lo ** power, hi ** power
        if power % 2 == 0:
            mx = np.maximum(plo, phi)
            mn = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(plo, phi))
            return mn, mx
        return plo, phi
    raise ValueError(f"no interval rule for {op!r}")


class _NodeState:
    __slots__ = ("lw", "lb", "uw", "ub", "cl", "cu", "relax", "pending")

    def __init__(self):
        self.lw = self.lb = self.uw = self.ub = None
        self.cl = self.cu = None
        self.relax = None
        self.pending = 0


def _concretize(lw, lb, lo, hi):
    pos = np.maximum(lw, 0.0)
    neg = np.minimum(lw, 0.0)
    return lb + np.einsum("bwn,bn->bw", pos, lo) + np.einsum("bwn,bn->bw", neg, hi)


def _concretize_hi(uw, ub, lo, hi):
    pos = np.maximum(uw, 0.0)
    neg = np.minimum(uw, 0.0)
    return ub + np.einsum("bwn,bn->bw", pos, hi) + np.einsum("bwn,bn->bw", neg, lo)


def bound_graph(graph: ExprGraph, lo, hi,
                outputs: Optional[Sequence[int]] = None) -> Dict[int, OutputBounds]:
    """Sound affine envelopes + intervals for the requested output nodes.

    lo/hi: [B, n] box endpoints (degenerate widths allowed, e.g. on faces).
    Raises VerificationInfeasible if a reciprocal operand's interval spans
    zero, which no linear relaxation can bound.
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
    if lo.shape != hi.shape:
        raise ValueError("lo/hi shape mismatch")
    if np.any(lo > hi):
        raise ValueError("box requires lo <= hi")
    if len(graph.inputs) != 1:
        raise ValueError("bounding requires a single-input graph")
    n = graph.nodes[graph.inputs[0]].width
    if lo.shape[1] != n:
        raise ValueError(f"box dimension {lo.shape[1]} != graph input width {n}")
    B = lo.shape[0]
    if outputs is None:
        outputs = list(graph.outputs)

    nodes = graph.nodes
    state = [_NodeState() for _ in nodes]
    for node in nodes:
        for j in node.operands:
            state[j].pending += 1
    for i in outputs:
        state[i].pending += 1  # outputs keep their forward state alive

    eye = np.broadcast_to(np.eye(n), (B, n, n))

    # ---- forward pass: affine envelopes intersected with interval arithmetic
    for i, node in enumerate(nodes):
        st = state[i]
        op = node.op
        w = node.width
        if op == "input":
            st.lw = eye.copy()
            st.uw = eye.copy()
            st.lb = np.zeros((B, n))
            st.ub = np.zeros((B, n))
            st.cl, st.cu = lo.copy(), hi.copy()
        elif op == "const":
            v = np.broadcast_to(np.asarray(node.data), (B, w))
            st.lw = np.zeros((B, w, n))
            st.uw = np.zeros((B, w, n))
            st.lb, st.ub = v.copy(), v.copy()
            st.cl, st.cu = v.copy(), v.copy()
        elif op == "linear":
            W, bvec = node.data
            x = state[node.operands[0]]
            Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
            st.lw = np.einsum("ow,bwn->bon", Wp, x.lw) + np.einsum("ow,bwn->bon", Wn, x.uw)
            st.uw = np.einsum("ow,bwn->bon", Wp, x.uw) + np.einsum("ow,bwn->bon", Wn, x.lw)
            st.lb = x.lb @ Wp.T + x.ub @ Wn.T
            st.ub = x.ub @ Wp.T + x.lb @ Wn.T
            ivl = x.cl @ Wp.T + x.cu @ Wn.T
            ivu = x.cu @ Wp.T + x.cl @ Wn.T
            if bvec is not None:
                st.lb = st.lb + bvec
                st.ub = st.ub + bvec
                ivl = ivl + bvec
                ivu = ivu + bvec
            st.cl = np.maximum(_concretize(st.lw, st.lb, lo, hi), ivl)
            st.cu = np.minimum(_concretize_hi(st.uw, st.ub, lo, hi), ivu)
        elif op in ("add", "sub"):
            x, y = (state[j] for j in node.operands)
            if op == "add":
                st.lw, st.lb = x.lw + y.lw, x.lb + y.lb
                st.uw, st.ub = x.uw + y.uw, x.ub + y.ub
                ivl, ivu = x.cl + y.cl, x.cu + y.cu
            else:
                st.lw, st.lb = x.lw - y.uw, x.lb - y.ub
                st.uw, st.ub = x.uw - y.lw, x.ub - y.lb
                ivl, ivu = x.cl - y.cu, x.cu - y.cl
            st.cl = np.maximum(_concretize(st.lw, st.lb, lo, hi), ivl)
            st.cu = np.minimum(_concretize_hi(st.uw, st.ub, lo, hi), ivu)
        elif op == "mul":
            x, y = (state[j] for j in node.operands)
            axl, ayl, cl3, axu, ayu, cu3 = bilinear_planes(x.cl, x.cu, y.cl, y.cu)
            st.relax = (axl, ayl, cl3, axu, ayu, cu3)

            def mix(ax, ay, xlw, xlb, xuw, xub, ylw, ylb, yuw, yub):
                axp, axn = np.maximum(ax, 0.0), np.minimum(ax, 0.0)
                ayp, ayn = np.maximum(ay, 0.0), np.minimum(ay, 0.0)
                wout = (axp[..., None] * xlw + axn[..., None] * xuw
                        + ayp[..., None] * ylw + ayn[..., None] * yuw)
                bout = axp * xlb + axn * xub + ayp * ylb + ayn * yub
                return wout, bout

            st.lw, st.lb = mix(axl, ayl, x.lw, x.lb, x.uw, x.ub, y.lw, y.lb, y.uw, y.ub)
            st.lb = st.lb + cl3
            uw_, ub_ = mix(axu, ayu, x.uw, x.ub, x.lw, x.lb, y.uw, y.ub, y.lw, y.lb)
            st.uw, st.ub = uw_, ub_ + cu3
            corners = np.stack([x.cl * y.cl, x.cl * y.cu, x.cu * y.cl, x.cu * y.cu])
            st.cl = np.maximum(_concretize(st.lw, st.lb, lo, hi), corners.min(axis=0))
            st.cu = np.minimum(_concretize_hi(st.uw, st.ub, lo, hi), corners.max(axis=0))
        else:
            # unary nonlinear
            x = state[node.operands[0]]
            if op == "reciprocal" and np.any((x.cl <= 0) & (x.cu >= 0)):
                raise VerificationInfeasible(
                    "reciprocal operand interval spans zero on this box")
            k = node.data if op == "power" else 0
            flat_l, flat_u = x.cl.reshape(-1), x.cu.reshape(-1)
            al, bl, au, bu = relax_unary_arrays(op, flat_l, flat_u, power=k)
            al, bl = al.reshape(B, w), bl.reshape(B, w)
            au, bu = au.reshape(B, w), bu.reshape(B, w)
            st.relax = (al, bl, au, bu)
            alp, aln = np.maximum(al, 0.0), np.minimum(al, 0.0)
            aup, aun = np.maximum(au, 0.0), np.minimum(au, 0.0)
            st.lw = alp[..., None] * x.lw + aln[..., None] * x.uw
            st.lb = alp * x.lb + aln * x.ub + bl
            st.uw = aup[..., None] * x.uw + aun[..., None] * x.lw
            st.ub = aup * x.ub + aun * x.lb + bu
            ivl, ivu = _interval_unary(op, x.cl, x.cu, power=k)
            st.cl = np.maximum(_concretize(st.lw, st.lb, lo, hi), ivl)
            st.cu = np.minimum(_concretize_hi(st.uw, st.ub, lo, hi), ivu)
        # free forward envelopes of operands nobody else needs
        for j in node.operands:
            state[j].pending -= 1
            if state[j].pending <= 0:
                state[j].lw = state[j].lb = state[j].uw = state[j].ub = None

    # ---- backward passes for the requested outputs
    results: Dict[int, OutputBounds] = {}
    for out in outputs:
        if nodes[out].width != 1:
            raise ValueError("backward pass expects scalar output nodes")
        res = _backward(graph, state, out, lo, hi, B, n)
        st = state[out]
        res.lo = np.maximum(res.lo, st.cl[:, 0])
        res.hi = np.minimum(res.hi, st.cu[:, 0])
        results[out] = res
    return results


def _backward(graph: ExprGraph, state, out: int, lo, hi, B, n) -> OutputBounds:
    nodes = graph.nodes
    coeff_l: Dict[int, np.ndarray] = {out: np.ones((B, 1))}
    coeff_u: Dict[int, np.ndarray] = {out: np.ones((B, 1))}
    cst_l = np.zeros(B)
    cst_u = np.zeros(B)
    in_l = np.zeros((B, n))
    in_u = np.zeros((B, n))

    def add(d, i, v):
        d[i] = d[i] + v if i in d else v

    for i in range(out, -1, -1):
        if i not in coeff_l and i not in coeff_u:
            continue
        al_ = coeff_l.pop(i, None)
        au_ = coeff_u.pop(i, None)
        node = nodes[i]
        op = node.op
        if op == "input":
            if al_ is not None:
                in_l += al_
            if au_ is not None:
                in_u += au_
            continue
        if op == "const":
            v = np.asarray(node.data)
            if al_ is not None:
                cst_l += al_ @ v
            if au_ is not None:
                cst_u += au_ @ v
            continue
        if op == "linear":
            W, bvec = node.data
            j = node.operands[0]
            if al_ is not None:
                add(coeff_l, j, al_ @ W)
                if bvec is not None:
                    cst_l += al_ @ bvec
            if au_ is not None:
                add(coeff_u, j, au_ @ W)
                if bvec is not None:
                    cst_u += au_ @ bvec
            continue
        if op in ("add", "sub"):
            j, k = node.operands
            sgn = -1.0 if op == "sub" else 1.0
            if al_ is not None:
                add(coeff_l, j, al_)
                add(coeff_l, k, sgn * al_)
            if au_ is not None:
                add(coeff_u, j, au_)
                add(coeff_u, k, sgn * au_)
            continue
        if op == "neg":
            j = node.operands[0]
            if al_ is not None:
                add(coeff_l, j, -al_)
            if au_ is not None:
                add(coeff_u, j, -au_)
            continue
        if op == "mul":
            j, k = node.operands
            axl, ayl, cl3, axu, ayu, cu3 = state[i].relax
            if al_ is not None:
                ap, an = np.maximum(al_, 0.0), np.minimum(al_, 0.0)
                add(coeff_l, j, ap * axl + an * axu)
                add(coeff_l, k, ap * ayl + an * ayu)
                cst_l += (ap * cl3 + an * cu3).sum(axis=1)
            if au_ is not None:
                ap, an = np.maximum(au_, 0.0), np.minimum(au_, 0.0)
                add(coeff_u, j, ap * axu + an * axl)
                add(coeff_u, k, ap * ayu + an * ayl)
                cst_u += (ap * cu3 + an * cl3).sum(axis=1)
            continue
        # unary nonlinear
        j = node.operands[0]
        al, bl, au, bu = state[i].relax
        if al_ is not None:
            ap, an = np.maximum(al_, 0.0), np.minimum(al_, 0.0)
            add(coeff_l, j, ap * al + an * au)
            cst_l += (ap * bl + an * bu).sum(axis=1)
        if au_ is not None:
            ap, an = np.maximum(au_, 0.0), np.minimum(au_, 0.0)
            add(coeff_u, j, ap * au + an * al)
            cst_u += (ap * bu + an * bl).sum(axis=1)

    lo_out = cst_l + (np.maximum(in_l, 0.0) * lo + np.minimum(in_l, 0.0) * hi).sum(axis=1)
    hi_out = cst_u + (np.maximum(in_u, 0.0) * hi + np.minimum(in_u, 0.0) * lo).sum(axis=1)
    return OutputBounds(in_l, cst_l, in_u, cst_u, lo_out, hi_out)
