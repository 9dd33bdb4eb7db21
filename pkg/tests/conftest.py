import numpy as np
import pytest
import torch

import roacert as rc
from roacert.boxes import Box
from roacert.graph import ExprGraph
from roacert.nets import Controller, LyapunovNet, Mlp

torch.set_num_threads(2)


def bell_v_graph(gain=4.0, offset=2.0) -> ExprGraph:
    """V = sigmoid(gain*(tanh^2(x1)+tanh^2(x2)) - offset): radial, analytic."""
    g = ExprGraph([2])
    x = g.input(0)
    t1, t2 = g.tanh(g.pick(x, 0)), g.tanh(g.pick(x, 1))
    v = g.sigmoid(gain * (t1 ** 2) + gain * (t2 ** 2) - offset)
    g.set_outputs([v])
    return g


def contraction_f_graph(bump=0.0, center=(1.2, 1.2), k=3.0) -> ExprGraph:
    """f = -x, optionally with a localized outward bump on the first component."""
    g = ExprGraph([2])
    y = g.input(0)
    y1, y2 = g.pick(y, 0), g.pick(y, 1)
    f1 = -y1
    if bump:
        b1 = g.unary("dtanh", k * (y1 - center[0]))
        b2 = g.unary("dtanh", k * (y2 - center[1]))
        f1 = f1 + bump * (b1 * b2)
    f2 = -y2
    g.set_outputs([f1, f2])
    return g


def make_linear_controller(sys, gains) -> Controller:
    """Controller whose inner net is exactly x -> gains @ x (no hidden layer)."""
    W = torch.as_tensor(np.asarray(gains, dtype=np.float64))
    net = Mlp([W.clone().requires_grad_(True)],
              [torch.zeros(W.shape[0], dtype=torch.float64, requires_grad=True)],
              ["identity"])
    return Controller(net, sys.control_limits, sys.u_star, sys.x_star,
                      sys.asym_relu_mask)


def fit_lyapunov_to(target_fn, state_dim=2, hidden=(24, 24), box_half=2.0,
                    steps=400, seed=0) -> LyapunovNet:
    """Regress a LyapunovNet onto an analytic target over a box."""
    torch.manual_seed(seed)
    V = LyapunovNet.init_random(state_dim, hidden=hidden, seed=seed)
    opt = torch.optim.Adam(V.parameters(), lr=5e-3)
    gen = torch.Generator().manual_seed(seed)
    for _ in range(steps):
        x = (torch.rand((512, state_dim), generator=gen, dtype=torch.float64)
             * 2 - 1) * box_half
        loss = ((V(x) - target_fn(x)) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    return V


@pytest.fixture(scope="session")
def di_system():
    return rc.build_system("double_integrator")


@pytest.fixture(scope="session")
def di_stable_model(di_system):
    """Double integrator + saturated linear controller + fitted quadratic V.

    The controller u = tanh(-1.5 x1 - 1.5 x2) stabilizes the closed loop;
    V approximates sigmoid(1.8 (x1^2 + 1.2 x1 x2 + x2^2) - 2.2), a Lyapunov
    function of the linearized closed loop.
    """
    sys = di_system
    ctrl = make_linear_controller(sys, [[-1.5, -1.5]])

    def target(x):
        q = (1.8 * (x[:, 0] ** 2 + 1.2 * x[:, 0] * x[:, 1] + x[:, 1] ** 2))
        return torch.sigmoid(q - 2.2)

    V = fit_lyapunov_to(target, steps=600, seed=3)
    return sys, ctrl, V


@pytest.fixture(scope="session")
def planted_model(di_stable_model):
    """The stable model with a bump trained into V so that V-dot > 0 in a
    small region of the band; the bump is verified by a dense grid."""
    sys, ctrl, V_clean = di_stable_model
    V = LyapunovNet(
        Mlp([w.detach().clone().requires_grad_(True) for w in V_clean.net.weights],
            [b.detach().clone().requires_grad_(True) for b in V_clean.net.biases],
            list(V_clean.net.activations)))
    opt = torch.optim.Adam(V.parameters(), lr=2e-3)
    xb = torch.tensor([[0.8, 0.3]], dtype=torch.float64)
    gen = torch.Generator().manual_seed(9)
    from roacert.cegis import lyapunov_decrease
    for _ in range(250):
        anchors = (torch.rand((256, 2), generator=gen, dtype=torch.float64)
                   * 2 - 1) * 1.5
        keep = ((V_clean(anchors) - V(anchors)) ** 2).mean()
        vd = lyapunov_decrease(V, ctrl, sys, xb, create_graph=True)
        loss = torch.relu(0.2 - vd).sum() + 30.0 * keep
        opt.zero_grad()
        loss.backward()
        opt.step()
    # confirm the plant took: dense grid around the bump
    gx = torch.linspace(0.5, 1.1, 40, dtype=torch.float64)
    gy = torch.linspace(0.0, 0.6, 40, dtype=torch.float64)
    grid = torch.cartesian_prod(gx, gy)
    vd = lyapunov_decrease(V, ctrl, sys, grid).detach()
    vv = V(grid).detach()
    band = (vv > 0.25) & (vv < 0.9)
    assert bool(((vd > 0) & band).any()), "fixture failed to plant a violation"
    return sys, ctrl, V


def grid_max_violation(fn, r: "rc.relax.LinearRelaxation", l: float, u: float,
                       n: int = 1000) -> float:
    xs = np.linspace(l, u, n)
    fx = fn(xs)
    return float(max(np.max(r.al * xs + r.bl - fx),
                     np.max(fx - (r.au * xs + r.bu))))
