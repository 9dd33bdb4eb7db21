"""Expression graphs for closed-loop dynamics and Lyapunov gradients.

A graph is a DAG of vector-valued primitive nodes over one or more input
slots (slot 0: state, slot 1: control for open-loop systems). The same
object is evaluated by the trainer/simulator (torch) and bound-propagated
by the verifier, so there is a single source of truth for the dynamics.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

UNARY_OPS = ("neg", "reciprocal", "sin", "cos", "tanh", "sigmoid", "relu",
             "dtanh", "dsigmoid")
BINARY_OPS = ("add", "sub", "mul")

GRAPH_SCHEMA = "roacert.graph.v1"


@dataclass
class Node:
    op: str
    operands: Tuple[int, ...] = ()
    width: int = 0
    # op-specific payload: input -> (slot, width); const -> vector;
    # linear -> (W, b|None); power -> exponent
    data: object = None
    _torch_cache: object = field(default=None, repr=False, compare=False)


def _dtanh(t: torch.Tensor) -> torch.Tensor:
    th = torch.tanh(t)
    return 1.0 - th * th


def _dsigmoid(t: torch.Tensor) -> torch.Tensor:
    s = torch.sigmoid(t)
    return s * (1.0 - s)


_TORCH_UNARY = {
    "neg": torch.neg,
    "reciprocal": torch.reciprocal,
    "sin": torch.sin,
    "cos": torch.cos,
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
    "relu": torch.relu,
    "dtanh": _dtanh,
    "dsigmoid": _dsigmoid,
}


class Ex:
    """Node handle with operator sugar for building graphs."""

    __slots__ = ("g", "i")
    __array_priority__ = 100  # keep numpy from hijacking reflected ops

    def __init__(self, g: "ExprGraph", i: int):
        self.g = g
        self.i = i

    @property
    def width(self) -> int:
        return self.g.nodes[self.i].width

    def _coerce(self, other) -> "Ex":
        if isinstance(other, Ex):
            return other
        return self.g.const(np.broadcast_to(np.asarray(other, dtype=np.float64),
                                            (self.width,)))

    def __add__(self, o):
        return self.g.binary("add", self, self._coerce(o))

    def __radd__(self, o):
        return self._coerce(o).__add__(self)

    def __sub__(self, o):
        return self.g.binary("sub", self, self._coerce(o))

    def __rsub__(self, o):
        return self._coerce(o).__sub__(self)

    def __mul__(self, o):
        return self.g.binary("mul", self, self._coerce(o))

    def __rmul__(self, o):
        return self._coerce(o).__mul__(self)

    def __neg__(self):
        return self.g.unary("neg", self)

    def __pow__(self, k):
        return self.g.power(self, k)

    def __truediv__(self, o):
        return self * self.g.unary("reciprocal", self._coerce(o))


class ExprGraph:
    """DAG of primitives; nodes are stored in topological order."""

    def __init__(self, input_widths: Sequence[int]):
        self.nodes: List[Node] = []
        self.inputs: List[int] = []
        self.outputs: List[int] = []
        for slot, w in enumerate(input_widths):
            idx = self._push(Node("input", (), int(w), (slot, int(w))))
            self.inputs.append(idx)

    # -- construction ------------------------------------------------------

    def _push(self, node: Node) -> int:
        for j in node.operands:
            if not (0 <= j < len(self.nodes)):
                raise ValueError("operand index out of range (graph must stay acyclic)")
        self.nodes.append(node)
        return len(self.nodes) - 1

    def ref(self, i: int) -> Ex:
        return Ex(self, i)

    def input(self, slot: int = 0) -> Ex:
        return Ex(self, self.inputs[slot])

    def const(self, value) -> Ex:
        v = np.atleast_1d(np.array(value, dtype=np.float64))
        return Ex(self, self._push(Node("const", (), v.shape[0], v)))

    def linear(self, x: Ex, W, b=None) -> Ex:
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != x.width:
            raise ValueError("linear weight shape mismatch")
        if b is not None:
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if b.shape[0] != W.shape[0]:
                raise ValueError("linear bias shape mismatch")
        return Ex(self, self._push(Node("linear", (x.i,), W.shape[0], (W, b))))

    def unary(self, op: str, x: Ex) -> Ex:
        if op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {op!r}")
        return Ex(self, self._push(Node(op, (x.i,), x.width)))

    def binary(self, op: str, x: Ex, y: Ex) -> Ex:
        if op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        if x.width != y.width:
            raise ValueError(f"{op} operands must have equal width")
        return Ex(self, self._push(Node(op, (x.i, y.i), x.width)))

    def power(self, x: Ex, k: int) -> Ex:
        k = int(k)
        if k < 2:
            raise ValueError("power exponent must be an integer >= 2")
        return Ex(self, self._push(Node("power", (x.i,), x.width, k)))

    def pick(self, x: Ex, idx: int) -> Ex:
        """Extract one coordinate as a width-1 node."""
        row = np.zeros((1, x.width))
        row[0, idx] = 1.0
        return self.linear(x, row)

    def sum(self, x: Ex) -> Ex:
        return self.linear(x, np.ones((1, x.width)))

    def concat(self, parts: Sequence[Ex]) -> Ex:
        """Stack width-w_i nodes into one node via padded linear maps."""
        total = sum(p.width for p in parts)
        acc = None
        off = 0
        for p in parts:
            W = np.zeros((total, p.width))
            W[off:off + p.width] = np.eye(p.width)
            lifted = self.linear(p, W)
            acc = lifted if acc is None else self.binary("add", acc, lifted)
            off += p.width
        return acc

    def sin(self, x: Ex) -> Ex:
        return self.unary("sin", x)

    def cos(self, x: Ex) -> Ex:
        return self.unary("cos", x)

    def tanh(self, x: Ex) -> Ex:
        return self.unary("tanh", x)

    def sigmoid(self, x: Ex) -> Ex:
        return self.unary("sigmoid", x)

    def relu(self, x: Ex) -> Ex:
        return self.unary("relu", x)

    def reciprocal(self, x: Ex) -> Ex:
        return self.unary("reciprocal", x)

    def set_outputs(self, outs: Sequence[Ex]):
        self.outputs = [o.i for o in outs]

    @property
    def output_width(self) -> int:
        return sum(self.nodes[i].width for i in self.outputs)

    # -- evaluation --------------------------------------------------------

    def _node_torch_data(self, node: Node):
        if node._torch_cache is None:
            if node.op == "const":
                node._torch_cache = torch.as_tensor(node.data, dtype=torch.float64)
            elif node.op == "linear":
                W, b = node.data
                node._torch_cache = (
                    torch.as_tensor(W, dtype=torch.float64),
                    None if b is None else torch.as_tensor(b, dtype=torch.float64),
                )
        return node._torch_cache

    def eval(self, inputs) -> torch.Tensor:
        """Evaluate on torch tensors; differentiable w.r.t. the inputs.

        `inputs` is one tensor, or a list with one [batch, width] tensor per
        input slot. Returns the concatenated outputs, [batch, out_width].
        """
        if isinstance(inputs, (torch.Tensor, np.ndarray)):
            inputs = [inputs]
        bound = [torch.as_tensor(np.asarray(t), dtype=torch.float64)
                 if not isinstance(t, torch.Tensor) else t.to(torch.float64)
                 for t in inputs]
        if len(bound) != len(self.inputs):
            raise ValueError(f"graph expects {len(self.inputs)} input slots")
        vals: List[Optional[torch.Tensor]] = [None] * len(self.nodes)
        batch = bound[0].shape[0]
        for i, node in enumerate(self.nodes):
            op = node.op
            if op == "input":
                slot, w = node.data
                t = bound[slot]
                if t.shape[1] != w:
                    raise ValueError(f"input slot {slot} expects width {w}")
                vals[i] = t
            elif op == "const":
                vals[i] = self._node_torch_data(node).expand(batch, node.width)
            elif op == "linear":
                W, b = self._node_torch_data(node)
                y = vals[node.operands[0]] @ W.T
                vals[i] = y if b is None else y + b
            elif op == "add":
                vals[i] = vals[node.operands[0]] + vals[node.operands[1]]
            elif op == "sub":
                vals[i] = vals[node.operands[0]] - vals[node.operands[1]]
            elif op == "mul":
                vals[i] = vals[node.operands[0]] * vals[node.operands[1]]
            elif op == "power":
                vals[i] = vals[node.operands[0]] ** node.data
            elif op in _TORCH_UNARY:
                vals[i] = _TORCH_UNARY[op](vals[node.operands[0]])
            else:
                raise ValueError(f"unknown op {op!r}")
        return torch.cat([vals[i] for i in self.outputs], dim=1)

    def eval_np(self, inputs) -> np.ndarray:
        with torch.no_grad():
            return self.eval(inputs).numpy()

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        nodes = []
        for node in self.nodes:
            entry = {"op": node.op, "operands": list(node.operands), "width": node.width}
            if node.op == "input":
                entry["slot"] = node.data[0]
            elif node.op == "const":
                entry["value"] = np.asarray(node.data).tolist()
            elif node.op == "linear":
                W, b = node.data
                entry["W"] = W.tolist()
                entry["b"] = None if b is None else b.tolist()
            elif node.op == "power":
                entry["exponent"] = node.data
            nodes.append(entry)
        return {
            "schema": GRAPH_SCHEMA,
            "input_widths": [self.nodes[i].width for i in self.inputs],
            "nodes": nodes,
            "outputs": list(self.outputs),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExprGraph":
        if obj.get("schema") != GRAPH_SCHEMA:
            raise ValueError(f"unrecognized graph schema: {obj.get('schema')!r}")
        g = cls(obj["input_widths"])
        seen_inputs = 0
        for entry in obj["nodes"]:
            op = entry["op"]
            if op == "input":
                # input nodes were created by the constructor, in slot order
                if entry["slot"] != seen_inputs:
                    raise ValueError("input nodes must appear first, in slot order")
                seen_inputs += 1
                continue
            ops = tuple(entry["operands"])
            if op == "const":
                g._push(Node(op, (), entry["width"], np.asarray(entry["value"])))
            elif op == "linear":
                W = np.asarray(entry["W"])
                b = None if entry["b"] is None else np.asarray(entry["b"])
                g._push(Node(op, ops, entry["width"], (W, b)))
            elif op == "power":
                g._push(Node(op, ops, entry["width"], entry["exponent"]))
            elif op in UNARY_OPS or op in BINARY_OPS:
                g._push(Node(op, ops, entry["width"]))
            else:
                raise ValueError(f"unknown op {op!r}")
        g.outputs = list(obj["outputs"])
        return g

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def compose_closed_loop(open_loop: ExprGraph, controller_graph: ExprGraph) -> ExprGraph:
    """Substitute the control input slot with a controller subgraph of x.

    Both graphs take the state in slot 0; the open-loop graph additionally
    takes the control in slot 1. The result is a single-slot graph f(x).
    """
    if len(open_loop.inputs) != 2:
        raise ValueError("open-loop graph must have (state, control) input slots")
    if len(controller_graph.inputs) != 1:
        raise ValueError("controller graph must have a single state input slot")
    if len(controller_graph.outputs) != 1:
        raise ValueError("controller graph must have a single output node")
    n = open_loop.nodes[open_loop.inputs[0]].width
    if controller_graph.nodes[controller_graph.inputs[0]].width != n:
        raise ValueError("state widths disagree")
    m = open_loop.nodes[open_loop.inputs[1]].width
    if controller_graph.nodes[controller_graph.outputs[0]].width != m:
        raise ValueError("control width disagrees with controller output")

    g = ExprGraph([n])
    # splice in the controller graph
    cmap: Dict[int, int] = {controller_graph.inputs[0]: g.inputs[0]}
    for i, node in enumerate(controller_graph.nodes):
        if node.op == "input":
            continue
        cmap[i] = g._push(Node(node.op, tuple(cmap[j] for j in node.operands),
                               node.width, node.data))
    u_idx = cmap[controller_graph.outputs[0]]
    # splice in the open-loop graph with the control slot rebound
    smap: Dict[int, int] = {open_loop.inputs[0]: g.inputs[0],
                            open_loop.inputs[1]: u_idx}
    for i, node in enumerate(open_loop.nodes):
        if node.op == "input":
            continue
        smap[i] = g._push(Node(node.op, tuple(smap[j] for j in node.operands),
                               node.width, node.data))
    g.outputs = [smap[i] for i in open_loop.outputs]
    return g


def controller_to_graph(ctrl) -> ExprGraph:
    """Freeze a Controller's current weights into a graph of x.

    The constant NN(x_star) and atanh(u_star/c) terms are folded into the
    last layer bias, so the graph is exact for the frozen weights.
    """
    net = ctrl.net
    with torch.no_grad():
        shift = (torch.atanh(ctrl.u_star / ctrl.limit)
                 - net(ctrl.x_star.unsqueeze(0)).squeeze(0)).numpy()
    ws, bs = net.state_arrays()
    g = ExprGraph([net.input_dim])
    h = g.input(0)
    for k, (w, b, act) in enumerate(zip(ws, bs, net.activations)):
        bias = b + shift if k == len(ws) - 1 else b
        h = g.linear(h, w, bias)
        if act != "identity":
            h = g.unary(act, h)
    u = g.tanh(h)
    limit = ctrl.limit.numpy()
    u = g.const(limit) * u
    mask = ctrl.asym_relu_mask.numpy().astype(np.float64)
    if mask.any():
        u = g.const(1.0 - mask) * u + g.const(mask) * g.relu(u)
    g.set_outputs([u])
    return g


def lyapunov_to_graph(V) -> ExprGraph:
    """Freeze a LyapunovNet's current weights into a scalar graph of x."""
    net = V.net
    ws, bs = net.state_arrays()
    g = ExprGraph([net.input_dim])
    h = g.input(0)
    for w, b, act in zip(ws, bs, net.activations):
        h = g.linear(h, w, b)
        if act != "identity":
            h = g.unary(act, h)
    g.set_outputs([h])
    return g


_GRAD_UNSUPPORTED = ("relu", "dtanh", "dsigmoid")


def gradient_graph(graph: ExprGraph) -> ExprGraph:
    """Symbolic reverse-mode gradient of a scalar-output single-slot graph.

    Returns a new graph mapping x to d(out)/dx (width n). Activations
    differentiate into explicit dtanh/dsigmoid nodes, which the verifier
    relaxes with the dedicated bell-shaped envelopes.
    """
    if len(graph.inputs) != 1:
        raise ValueError("gradient requires a single-input graph")
    if len(graph.outputs) != 1 or graph.nodes[graph.outputs[0]].width != 1:
        raise ValueError("gradient requires a single scalar output")

    g = ExprGraph([graph.nodes[graph.inputs[0]].width])
    fmap: Dict[int, int] = {graph.inputs[0]: g.inputs[0]}
    for i, node in enumerate(graph.nodes):
        if node.op == "input":
            continue
        fmap[i] = g._push(Node(node.op, tuple(fmap[j] for j in node.operands),
                               node.width, node.data))

    def fx(i: int) -> Ex:
        return Ex(g, fmap[i])

    adjoint: Dict[int, Ex] = {graph.outputs[0]: g.const(np.ones(1))}

    def accumulate(i: int, contrib: Ex):
        adjoint[i] = contrib if i not in adjoint else g.binary("add", adjoint[i], contrib)

    for i in range(len(graph.nodes) - 1, -1, -1):
        if i not in adjoint:
            continue
        node = graph.nodes[i]
        lam = adjoint[i]
        op = node.op
        if op in ("input", "const"):
            continue
        a = node.operands[0]
        if op == "linear":
            W, _ = node.data
            accumulate(a, g.linear(lam, W.T))
        elif op == "add":
            accumulate(a, lam)
            accumulate(node.operands[1], lam)
        elif op == "sub":
            accumulate(a, lam)
            accumulate(node.operands[1], g.unary("neg", lam))
        elif op == "neg":
            accumulate(a, g.unary("neg", lam))
        elif op == "mul":
            b = node.operands[1]
            accumulate(a, g.binary("mul", lam, fx(b)))
            accumulate(b, g.binary("mul", lam, fx(a)))
        elif op == "tanh":
            accumulate(a, g.binary("mul", lam, g.unary("dtanh", fx(a))))
        elif op == "sigmoid":
            accumulate(a, g.binary("mul", lam, g.unary("dsigmoid", fx(a))))
        elif op == "sin":
            accumulate(a, g.binary("mul", lam, g.unary("cos", fx(a))))
        elif op == "cos":
            accumulate(a, g.binary("mul", lam, g.unary("neg", g.unary("sin", fx(a)))))
        elif op == "reciprocal":
            r = g.unary("reciprocal", fx(a))
            accumulate(a, g.unary("neg", g.binary("mul", lam, g.binary("mul", r, r))))
        elif op == "power":
            k = node.data
            dk = fx(a) if k == 2 else g.power(fx(a), k - 1)
            accumulate(a, g.binary("mul", lam, g.const(np.full(node.width, float(k))) * dk))
        else:
            raise NotImplementedError(f"gradient of op {op!r} is not supported")

    if graph.inputs[0] not in adjoint:
        # output does not depend on the input: gradient is identically zero
        zero = g.const(np.zeros(g.nodes[g.inputs[0]].width))
        g.set_outputs([zero])
        return g
    g.outputs = [adjoint[graph.inputs[0]].i]
    return g
