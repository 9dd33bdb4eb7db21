import numpy as np
import pytest
import torch

import roacert as rc
from roacert.graph import (ExprGraph, compose_closed_loop, controller_to_graph,
                           gradient_graph, lyapunov_to_graph)


def test_graph_eval_matches_torch_ops():
    g = ExprGraph([2])
    x = g.input(0)
    a = g.sin(g.pick(x, 0)) * g.cos(g.pick(x, 1))
    b = g.tanh(g.pick(x, 0) + 2.0) - g.reciprocal(g.pick(x, 1) + 5.0)
    g.set_outputs([a, b])
    X = torch.randn(200, 2, dtype=torch.float64)
    out = g.eval([X])
    expect0 = torch.sin(X[:, 0]) * torch.cos(X[:, 1])
    expect1 = torch.tanh(X[:, 0] + 2) - 1.0 / (X[:, 1] + 5)
    assert torch.allclose(out[:, 0], expect0)
    assert torch.allclose(out[:, 1], expect1)


def test_graph_acyclic_enforced():
    g = ExprGraph([1])
    with pytest.raises(ValueError):
        g._push(rc.graph.Node("tanh", (5,), 1))


def test_graph_json_roundtrip_and_hash():
    g = rc.build_system("cartpole").graph
    obj = g.to_json()
    g2 = ExprGraph.from_json(obj)
    X = torch.randn(50, 4, dtype=torch.float64)
    U = torch.randn(50, 1, dtype=torch.float64)
    assert np.allclose(g.eval_np([X, U]), g2.eval_np([X, U]))
    assert g.content_hash() == g2.content_hash()
    # tampering changes the hash
    obj2 = g2.to_json()
    for node in obj2["nodes"]:
        if node["op"] == "const":
            node["value"][0] += 1e-9
            break
    assert ExprGraph.from_json(obj2).content_hash() != g.content_hash()


def test_gradient_graph_matches_autodiff_on_mlp():
    V = rc.LyapunovNet.init_random(3, hidden=(16, 16), seed=2)
    gg = gradient_graph(lyapunov_to_graph(V))
    X = torch.randn(10000, 3, dtype=torch.float64) * 3
    ref = V.grad_x(X).detach().numpy()
    got = gg.eval_np(X)
    assert np.abs(ref - got).max() < 1e-12


def test_gradient_graph_handles_all_primitives():
    g = ExprGraph([2])
    x = g.input(0)
    x1, x2 = g.pick(x, 0), g.pick(x, 1)
    expr = (g.sin(x1) * g.cos(x2) + g.sigmoid(x2) ** 2
            + g.reciprocal(x1 + 4.0) - g.tanh(x2) * x1 + x2 ** 3)
    g.set_outputs([expr])
    gg = gradient_graph(g)
    X = (torch.rand(500, 2, dtype=torch.float64) * 2 - 1)
    Xr = X.clone().requires_grad_(True)
    out = g.eval([Xr])
    (ref,) = torch.autograd.grad(out.sum(), [Xr])
    got = gg.eval_np(X)
    assert np.abs(ref.numpy() - got).max() < 1e-12


def test_gradient_graph_rejects_relu():
    g = ExprGraph([1])
    y = g.relu(g.input(0))
    g.set_outputs([g.sum(y)])
    with pytest.raises(NotImplementedError):
        gradient_graph(g)


def test_controller_graph_equals_eval():
    sys = rc.build_system("ducted_fan")  # mixed symmetric/one-sided limits
    ctrl = sys.make_controller(seed=8)
    cg = controller_to_graph(ctrl)
    X = torch.randn(4000, 6, dtype=torch.float64) * 4
    ref = ctrl.eval(X).detach().numpy()
    assert np.abs(ref - cg.eval_np(X)).max() < 1e-12


def test_closed_loop_composition_oracle():
    sys = rc.build_system("van_der_pol")
    ctrl = sys.make_controller(seed=1)
    f = rc.closed_loop(sys, ctrl)
    X = torch.randn(10000, 2, dtype=torch.float64) * 3
    ref = sys.graph.eval([X, ctrl.eval(X)]).detach().numpy()
    assert np.abs(ref - f.eval_np(X)).max() < 1e-12


def test_closed_loop_equilibrium_zero():
    for name in ("van_der_pol", "pendulum_small", "quadrotor_2d", "pvtol"):
        sys = rc.build_system(name)
        ctrl = sys.make_controller(seed=0)
        f = rc.closed_loop(sys, ctrl)
        res = np.abs(f.eval_np(sys.x_star[None, :])).max()
        assert res < 1e-10, name
