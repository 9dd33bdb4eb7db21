"""MLPs, the controller/Lyapunov parametrizations, and checkpoint I/O.

All tensors are 64-bit floats: the verifier's soundness margins are ~1e-9,
which float32 cannot support.
"""
from __future__ import annotations

import json
from typing import List, Optional, Sequence

import numpy as np
import torch

DTYPE = torch.float64

ACTIVATIONS = {
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
    "relu": torch.relu,
    "identity": lambda t: t,
}

CHECKPOINT_SCHEMA = "roacert.checkpoint.v1"


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x), dtype=DTYPE)


class Mlp:
    """Fully connected network: alternating affine maps and activations.

    `dims` chains input through hidden widths to the output width; every
    hidden layer uses `hidden_act`, the final layer `out_act`.
    """

    def __init__(self, weights: List[torch.Tensor], biases: List[torch.Tensor],
                 activations: List[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("layer lists must have equal length")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unsupported activation {act!r}")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError("weight/bias shape mismatch")
            if k > 0 and w.shape[1] != weights[k - 1].shape[0]:
                raise ValueError("consecutive layer dims must chain")
            if not (torch.isfinite(w).all() and torch.isfinite(b).all()):
                raise ValueError("weights must be finite")
        self.weights = weights
        self.biases = biases
        self.activations = list(activations)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @classmethod
    def init_random(cls, dims: Sequence[int], hidden_act: str = "tanh",
                    out_act: str = "identity", seed: int = 0) -> "Mlp":
        """Uniform init scaled by 1/sqrt(fan_in), seeded."""
        gen = torch.Generator().manual_seed(seed)
        ws, bs, acts = [], [], []
        for k in range(len(dims) - 1):
            fan_in = dims[k]
            bound = 1.0 / float(np.sqrt(fan_in))
            w = (torch.rand((dims[k + 1], dims[k]), generator=gen, dtype=DTYPE) * 2 - 1) * bound
            b = (torch.rand((dims[k + 1],), generator=gen, dtype=DTYPE) * 2 - 1) * bound
            w.requires_grad_(True)
            b.requires_grad_(True)
            ws.append(w)
            bs.append(b)
            acts.append(hidden_act if k < len(dims) - 2 else out_act)
        return cls(ws, bs, acts)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected input of shape [batch, {self.input_dim}], got {tuple(x.shape)}")
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = ACTIVATIONS[act](h @ w.T + b)
        return h

    __call__ = forward

    def parameters(self) -> List[torch.Tensor]:
        return list(self.weights) + list(self.biases)

    def dims(self) -> List[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def state_arrays(self):
        """Weights/biases as numpy copies, layer order."""
        return ([w.detach().numpy().copy() for w in self.weights],
                [b.detach().numpy().copy() for b in self.biases])


def forward(net: Mlp, x) -> torch.Tensor:
    return net.forward(as_tensor(x))


def grad(scalar_output: torch.Tensor, wrt, create_graph: bool = False):
    """Reverse-mode gradient of a recorded scalar w.r.t. tensors `wrt`."""
    if scalar_output.numel() != 1:
        raise ValueError("output must be scalar")
    wrt_list = list(wrt) if isinstance(wrt, (list, tuple)) else [wrt]
    try:
        grads = torch.autograd.grad(scalar_output, wrt_list, create_graph=create_graph)
    except RuntimeError as exc:
        raise ValueError(f"gradient unavailable: {exc}") from exc
    return grads if isinstance(wrt, (list, tuple)) else grads[0]


class Controller:
    """Saturated state-feedback policy that hits u_star exactly at x_star.

    u(x) = c * tanh(NN(x) - NN(x_star) + atanh(u_star / c)), with an extra
    ReLU on coordinates flagged in `asym_relu_mask` for one-sided [0, c]
    limits.
    """

    def __init__(self, net: Mlp, limit, u_star, x_star, asym_relu_mask=None):
        self.net = net
        self.limit = as_tensor(limit).reshape(-1)
        self.u_star = as_tensor(u_star).reshape(-1)
        self.x_star = as_tensor(x_star).reshape(-1)
        m = net.output_dim
        if self.limit.shape[0] != m or self.u_star.shape[0] != m:
            raise ValueError("limit/u_star width must match net output")
        if self.x_star.shape[0] != net.input_dim:
            raise ValueError("x_star width must match net input")
        if (self.limit <= 0).any():
            raise ValueError("control limits must be positive")
        if (self.u_star.abs() >= self.limit).any():
            raise ValueError("|u_star| must be strictly below the limit")
        if asym_relu_mask is None:
            asym_relu_mask = [False] * m
        self.asym_relu_mask = torch.as_tensor(asym_relu_mask, dtype=torch.bool).reshape(-1)
        if self.asym_relu_mask.shape[0] != m:
            raise ValueError("mask width must match net output")
        if (self.asym_relu_mask & (self.u_star < 0)).any():
            raise ValueError("one-sided coordinates require u_star >= 0")

    @property
    def state_dim(self) -> int:
        return self.net.input_dim

    @property
    def control_dim(self) -> int:
        return self.net.output_dim

    def eval(self, x: torch.Tensor) -> torch.Tensor:
        x = as_tensor(x)
        shift = torch.atanh(self.u_star / self.limit)
        base = self.net(x) - self.net(self.x_star.unsqueeze(0)) + shift
        u = self.limit * torch.tanh(base)
        if self.asym_relu_mask.any():
            u = torch.where(self.asym_relu_mask, torch.relu(u), u)
        return u

    __call__ = eval

    def parameters(self) -> List[torch.Tensor]:
        return self.net.parameters()


class LyapunovNet:
    """Candidate Lyapunov function V(x) = sigmoid(NN(x)), valued in (0, 1)."""

    def __init__(self, net: Mlp):
        if net.output_dim != 1:
            raise ValueError("Lyapunov net must have scalar output")
        if net.activations[-1] != "sigmoid":
            raise ValueError("Lyapunov net must end in a sigmoid")
        self.net = net

    @classmethod
    def init_random(cls, state_dim: int, hidden: Sequence[int] = (64, 64),
                    seed: int = 0) -> "LyapunovNet":
        dims = [state_dim] + list(hidden) + [1]
        return cls(Mlp.init_random(dims, hidden_act="tanh", out_act="sigmoid", seed=seed))

    def eval(self, x: torch.Tensor) -> torch.Tensor:
        """V values, shape [batch]."""
        return self.net(as_tensor(x)).squeeze(-1)

    __call__ = eval

    def grad_x(self, x: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        """dV/dx at each row of x, shape [batch, n]."""
        x = as_tensor(x)
        with torch.enable_grad():
            if not x.requires_grad:
                x = x.detach().requires_grad_(True)
            v = self.eval(x)
            (g,) = torch.autograd.grad(v.sum(), [x], create_graph=create_graph)
        return g

    def parameters(self) -> List[torch.Tensor]:
        return self.net.parameters()


def controller_eval(ctrl: Controller, x) -> torch.Tensor:
    return ctrl.eval(as_tensor(x))


def lyapunov_eval(V: LyapunovNet, x) -> torch.Tensor:
    return V.eval(as_tensor(x))


def default_controller(state_dim: int, control_dim: int, limit, u_star,
                       asym_relu_mask=None, hidden: Sequence[int] = (32, 32),
                       seed: int = 0) -> Controller:
    dims = [state_dim] + list(hidden) + [control_dim]
    net = Mlp.init_random(dims, hidden_act="tanh", out_act="identity", seed=seed)
    return Controller(net, limit, u_star, np.zeros(state_dim), asym_relu_mask)


def _mlp_to_json(net: Mlp) -> dict:
    ws, bs = net.state_arrays()
    return {
        "dims": net.dims(),
        "activations": net.activations,
        "weights": [w.reshape(-1).tolist() for w in ws],
        "biases": [b.tolist() for b in bs],
    }


def _mlp_from_json(obj: dict, trainable: bool = True) -> Mlp:
    dims = obj["dims"]
    ws, bs = [], []
    for k in range(len(dims) - 1):
        w = torch.tensor(obj["weights"][k], dtype=DTYPE).reshape(dims[k + 1], dims[k])
        b = torch.tensor(obj["biases"][k], dtype=DTYPE)
        if trainable:
            w.requires_grad_(True)
            b.requires_grad_(True)
        ws.append(w)
        bs.append(b)
    return Mlp(ws, bs, obj["activations"])


def save_checkpoint(path, ctrl: Controller, V: LyapunovNet, extra: Optional[dict] = None):
    """Versioned JSON checkpoint; floats round-trip bit-exactly."""
    obj = {
        "schema": CHECKPOINT_SCHEMA,
        "controller": {
            **_mlp_to_json(ctrl.net),
            "limit": ctrl.limit.tolist(),
            "u_star": ctrl.u_star.tolist(),
            "x_star": ctrl.x_star.tolist(),
            "asym_relu_mask": [bool(v) for v in ctrl.asym_relu_mask],
        },
        "lyapunov": _mlp_to_json(V.net),
    }
    if extra:
        obj["extra"] = extra
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_checkpoint(path):
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unrecognized checkpoint schema: {obj.get('schema')!r}")
    c = obj["controller"]
    ctrl = Controller(_mlp_from_json(c), c["limit"], c["u_star"], c["x_star"],
                      c["asym_relu_mask"])
    V = LyapunovNet(_mlp_from_json(obj["lyapunov"]))
    return ctrl, V, obj.get("extra", {})
