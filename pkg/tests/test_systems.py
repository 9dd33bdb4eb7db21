import numpy as np
import pytest
import torch

import roacert as rc
from roacert.systems import SYSTEM_NAMES, build_system, load_system, save_system


def f_at(sys, x, u):
    return sys.graph.eval_np([np.atleast_2d(np.asarray(x, dtype=np.float64)),
                              np.atleast_2d(np.asarray(u, dtype=np.float64))])[0]


@pytest.mark.parametrize("name", SYSTEM_NAMES)
def test_equilibrium_is_zero(name):
    sys = build_system(name)
    res = np.abs(f_at(sys, sys.x_star, sys.u_star)).max()
    assert res < 1e-10


def test_unknown_name_raises():
    with pytest.raises(KeyError):
        build_system("segway")


def test_van_der_pol_hand_values():
    sys = build_system("van_der_pol")
    assert np.allclose(f_at(sys, [0, 0], [0]), [0, 0])
    # direct substitution: x2_dot = -x1 + (1 - x1^2) x2 + u
    assert np.allclose(f_at(sys, [1, 0], [0]), [0, -1])
    assert np.allclose(f_at(sys, [0.5, 2.0], [0.3]),
                       [2.0, -0.5 + (1 - 0.25) * 2.0 + 0.3])


def test_double_integrator_affine_field():
    sys = build_system("double_integrator")
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(100, 2))
    us = rng.uniform(-1, 1, size=(100, 1))
    got = sys.graph.eval_np([pts, us])
    expect = np.stack([pts[:, 1], us[:, 0]], axis=1)
    assert np.abs(got - expect).max() < 1e-12


def test_cartpole_upright_equilibrium_and_formula():
    sys = build_system("cartpole")
    assert np.allclose(f_at(sys, [0, 0, 0, 0], [0]), np.zeros(4))
    # hand-coded formula oracle on random points
    rng = np.random.default_rng(1)
    mc, mp, l, g = 1.0, 0.1, 1.0, 9.81
    for _ in range(100):
        x, th, xd, thd = rng.uniform(-2, 2, 4)
        (u,) = rng.uniform(-30, 30, 1)
        den = mc + mp * np.sin(th) ** 2
        acc_x = (u + mp * np.sin(th) * (l * thd ** 2 - g * np.cos(th))) / den
        acc_t = (-u * np.cos(th) - mp * l * thd ** 2 * np.cos(th) * np.sin(th)
                 + (mc + mp) * g * np.sin(th)) / (l * den)
        got = f_at(sys, [x, th, xd, thd], [u])
        assert np.abs(got - [xd, thd, acc_x, acc_t]).max() < 1e-12


def test_pendulum_formula_and_limits():
    big = build_system("pendulum_big")
    small = build_system("pendulum_small")
    m, l, beta, g = 0.15, 0.5, 0.1, 9.81
    assert big.control_limits[0] == pytest.approx(8.15 * m * g * l)
    assert small.control_limits[0] == pytest.approx(1.02 * m * g * l)
    rng = np.random.default_rng(2)
    for _ in range(50):
        th, om = rng.uniform(-3, 3, 2)
        (u,) = rng.uniform(-1, 1, 1)
        expect = [om, -beta / (m * l ** 2) * om + g / l * np.sin(th)
                  + u / (m * l ** 2)]
        assert np.abs(f_at(big, [th, om], [u]) - expect).max() < 1e-12


def test_path_tracking_formula_and_equilibrium_input():
    sys = build_system("path_tracking_big")
    v, l, r = 2.0, 1.0, 10.0
    assert sys.u_star[0] == pytest.approx(l / r)
    assert sys.control_limits[0] == pytest.approx(1.68 * l / v)
    rng = np.random.default_rng(3)
    for _ in range(50):
        de, te = rng.uniform(-1.4, 1.4, 2)
        (u,) = rng.uniform(-0.8, 0.8, 1)
        expect = [v * np.sin(te),
                  (v / l) * u - np.cos(te) / (r / v - np.sin(te))]
        assert np.abs(f_at(sys, [de, te], [u]) - expect).max() < 1e-12


def test_quadrotor_2d_constants_and_formula():
    sys = build_system("quadrotor_2d")
    m, l, inertia, g = 0.486, 0.25, 0.00383, 9.81
    assert sys.control_limits[0] == pytest.approx(1.25 * m * g)
    assert list(sys.asym_relu_mask) == [True, True]
    rng = np.random.default_rng(4)
    for _ in range(50):
        st = rng.uniform(-2, 2, 6)
        u = rng.uniform(0, 5, 2)
        th = st[2]
        expect = [st[3], st[4], st[5],
                  -np.sin(th) * (u[0] + u[1]) / m,
                  np.cos(th) * (u[0] + u[1]) / m - g,
                  l / inertia * (u[0] - u[1])]
        assert np.abs(f_at(sys, st, u) - expect).max() < 1e-11


def test_pvtol_formula():
    sys = build_system("pvtol")
    g, m, l, J = 9.8, 4.0, 0.25, 0.0475
    rng = np.random.default_rng(5)
    for _ in range(50):
        st = rng.uniform(-1, 1, 6)
        u = rng.uniform(0, 39, 2)
        x, y, phi, vx, vz, om = st
        expect = [vx * np.cos(phi) - vz * np.sin(phi),
                  vx * np.sin(phi) + vz * np.cos(phi),
                  om,
                  vz * om - g * np.sin(phi),
                  -vx * om - g * np.cos(phi) + (u[0] + u[1]) / m,
                  l / J * (u[0] - u[1])]
        assert np.abs(f_at(sys, st, u) - expect).max() < 1e-11


def test_ducted_fan_printed_constants():
    sys = build_system("ducted_fan")
    assert sys.params["g"] == 0.28  # printed value, unusual but as specified
    assert sys.u_star[1] == pytest.approx(11.2 * 0.28)
    assert list(sys.asym_relu_mask) == [False, True]


def test_quadrotor_3d_equilibrium_and_hover():
    sys = build_system("quadrotor_3d")
    assert sys.state_dim == 12 and sys.control_dim == 4
    assert sys.u_star[0] == pytest.approx(0.486 * 9.81 / 4)
    # off-equilibrium sanity: positive yaw rate enters psi-dot via cos(theta)
    x = np.zeros(12)
    x[11] = 0.5  # wz
    got = f_at(sys, x, sys.u_star)
    assert got[5] == pytest.approx(0.5)  # psi_dot = wz at zero angles


def test_system_params_override():
    sys = rc.build_system("van_der_pol", {"mu": 2.0})
    assert np.allclose(f_at(sys, [0.5, 1.0], [0.0]),
                       [1.0, -0.5 + 2.0 * (1 - 0.25) * 1.0])


def test_system_file_roundtrip(tmp_path):
    sys = build_system("pvtol")
    p = tmp_path / "pvtol.json"
    save_system(p, sys)
    sys2 = load_system(p)
    X = np.random.default_rng(0).uniform(-1, 1, (20, 6))
    U = np.random.default_rng(1).uniform(0, 30, (20, 2))
    assert np.allclose(sys.graph.eval_np([X, U]), sys2.graph.eval_np([X, U]))
    assert sys2.default_start_domain.dim == 6
