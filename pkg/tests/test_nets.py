import json

import numpy as np
import pytest
import torch

import roacert as rc
from roacert.nets import (ACTIVATIONS, Controller, LyapunovNet, Mlp,
                          controller_eval, forward, grad, load_checkpoint,
                          lyapunov_eval, save_checkpoint)


def scalar_forward_oracle(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Layer-by-layer recomputation with plain Python loops."""
    acts = {"tanh": np.tanh, "relu": lambda v: max(v, 0.0),
            "sigmoid": lambda v: 1.0 / (1.0 + np.exp(-v)),
            "identity": lambda v: v}
    h = list(x)
    ws, bs = net.state_arrays()
    for W, b, act in zip(ws, bs, net.activations):
        out = []
        for row, bias in zip(W, b):
            s = bias
            for wij, hj in zip(row, h):
                s += wij * hj
            out.append(np.tanh(s) if act == "tanh" else acts[act](s))
        h = out
    return np.array(h)


def test_forward_zero_weights_pass_bias_through():
    w = torch.zeros((3, 2), dtype=torch.float64)
    b = torch.tensor([0.1, -0.2, 0.3], dtype=torch.float64)
    net = Mlp([w], [b], ["tanh"])
    x = torch.randn(5, 2, dtype=torch.float64)
    out = forward(net, x)
    assert torch.allclose(out, torch.tanh(b).expand(5, 3))


def test_forward_single_tanh_identity_at_zero():
    net = Mlp([torch.eye(2, dtype=torch.float64)],
              [torch.zeros(2, dtype=torch.float64)], ["tanh"])
    out = forward(net, torch.zeros(1, 2, dtype=torch.float64))
    assert torch.all(out == 0)


def test_forward_matches_scalar_oracle():
    net = Mlp.init_random([2, 16, 16, 1], seed=11)
    x = np.array([0.3, -0.7])
    expected = scalar_forward_oracle(net, x)
    got = forward(net, x[None, :]).detach().numpy()[0]
    assert np.abs(got - expected).max() < 1e-12


def test_forward_shape_mismatch_raises():
    net = Mlp.init_random([2, 4, 1], seed=0)
    with pytest.raises(ValueError):
        forward(net, torch.zeros(3, 5, dtype=torch.float64))


def test_grad_tanh_and_sigmoid_at_zero():
    x = torch.zeros(1, requires_grad=True, dtype=torch.float64)
    assert float(grad(torch.tanh(x).sum(), x)) == pytest.approx(1.0)
    x = torch.zeros(1, requires_grad=True, dtype=torch.float64)
    assert float(grad(torch.sigmoid(x).sum(), x)) == pytest.approx(0.25)


def test_grad_unrecorded_tensor_raises():
    x = torch.zeros(1, dtype=torch.float64)  # no grad recording
    y = torch.ones(1, requires_grad=True, dtype=torch.float64)
    with pytest.raises(ValueError):
        grad((y * 2).sum(), x)


@pytest.mark.parametrize("act", ["tanh", "sigmoid", "relu", "identity"])
def test_grad_matches_finite_differences(act):
    # central finite differences, h = 1e-5 (the stated oracle)
    h = 1e-5
    worst = 0.0
    for seed in range(10):
        net = Mlp.init_random([3, 8, 8, 1], hidden_act=act, seed=seed)
        x = torch.randn(1, 3, dtype=torch.float64).requires_grad_(True)
        g = grad(net(x).sum(), x).detach().numpy()[0]
        for d in range(3):
            xp = x.detach().clone()
            xm = x.detach().clone()
            xp[0, d] += h
            xm[0, d] -= h
            fd = float((net(xp) - net(xm)) / (2 * h))
            denom = max(abs(fd), 1e-8)
            worst = max(worst, abs(g[d] - fd) / denom)
    assert worst < 1e-4


def test_controller_returns_u_star_at_x_star():
    for seed in range(20):
        ctrl = rc.build_system("van_der_pol").make_controller(seed=seed)
        u = controller_eval(ctrl, np.zeros((1, 2)))
        assert float((u - ctrl.u_star).abs().max()) < 1e-12


def test_controller_saturation_cartpole_limit():
    sys = rc.build_system("cartpole")
    assert sys.control_limits[0] == 30.0
    ctrl = sys.make_controller(seed=4)
    x = torch.randn(10000, 4, dtype=torch.float64) * 10
    u = controller_eval(ctrl, x)
    assert float(u.abs().max()) <= 30.0


def test_controller_one_sided_limits_quadrotor():
    sys = rc.build_system("quadrotor_2d")
    ctrl = sys.make_controller(seed=7)
    u0 = controller_eval(ctrl, np.zeros((1, 6)))
    assert float((u0 - ctrl.u_star).abs().max()) < 1e-12
    assert float(ctrl.u_star[0]) == pytest.approx(0.486 * 9.81 / 2)
    x = torch.randn(10000, 6, dtype=torch.float64) * 5
    u = controller_eval(ctrl, x)
    assert float(u.min()) >= 0.0
    assert float((u - ctrl.limit).max()) <= 1e-12


def test_controller_invariant_u_star_inside_limits():
    net = Mlp.init_random([2, 4, 1], seed=0)
    with pytest.raises(ValueError):
        Controller(net, [1.0], [1.0], np.zeros(2))  # |u*| == c


def test_lyapunov_output_range():
    V = LyapunovNet.init_random(2, hidden=(8, 8), seed=0)
    x = torch.randn(100000, 2, dtype=torch.float64) * 50
    v = lyapunov_eval(V, x)
    assert float(v.min()) > 0.0 and float(v.max()) < 1.0


def test_lyapunov_zero_final_weights_is_half():
    V = LyapunovNet.init_random(2, hidden=(8,), seed=0)
    with torch.no_grad():
        V.net.weights[-1].zero_()
        V.net.biases[-1].zero_()
    v = lyapunov_eval(V, torch.randn(50, 2, dtype=torch.float64))
    assert torch.allclose(v, torch.full_like(v, 0.5))


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    sys = rc.build_system("quadrotor_2d")
    ctrl = sys.make_controller(seed=3)
    V = LyapunovNet.init_random(6, seed=4)
    p = tmp_path / "ckpt.json"
    save_checkpoint(p, ctrl, V, extra={"note": 1})
    ctrl2, V2, extra = load_checkpoint(p)
    for a, b in zip(ctrl.parameters() + V.parameters(),
                    ctrl2.parameters() + V2.parameters()):
        assert torch.equal(a, b)
    assert torch.equal(ctrl.limit, ctrl2.limit)
    assert torch.equal(ctrl.asym_relu_mask, ctrl2.asym_relu_mask)
    assert extra == {"note": 1}
    p2 = tmp_path / "ckpt2.json"
    save_checkpoint(p2, ctrl2, V2, extra={"note": 1})
    assert p.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_unknown_schema(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema": "other"}))
    with pytest.raises(ValueError):
        load_checkpoint(p)
