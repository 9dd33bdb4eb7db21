"""Benchmark control systems as expression graphs.

Each builder produces the open-loop dynamics g(x, u) over two input slots
(state, control) together with the equilibrium, per-coordinate control
limits, and the default starting training domain. Physical constants can
be overridden through the `params` dict; the pendulum and path-tracking
mass/geometry values are our defaults (the torque limits are specified
only as multiples of them).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import torch

from .boxes import Box
from .graph import ExprGraph, GRAPH_SCHEMA, compose_closed_loop, controller_to_graph
from .nets import Controller, default_controller


@dataclass
class SystemSpec:
    name: str
    state_dim: int
    control_dim: int
    graph: ExprGraph
    x_star: np.ndarray
    u_star: np.ndarray
    control_limits: np.ndarray          # per-coordinate bound c_d > 0
    asym_relu_mask: List[bool]          # True: limit is one-sided [0, c_d]
    default_start_domain: Box
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.x_star = np.asarray(self.x_star, dtype=np.float64)
        self.u_star = np.asarray(self.u_star, dtype=np.float64)
        self.control_limits = np.asarray(self.control_limits, dtype=np.float64)
        inside = np.abs(self.u_star) < self.control_limits
        if not inside.all():
            raise ValueError("u_star must lie strictly inside the control limits")

    def open_loop(self, x: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        return self.graph.eval([x, u])

    def make_controller(self, hidden=(32, 32), seed: int = 0) -> Controller:
        return default_controller(self.state_dim, self.control_dim,
                                  self.control_limits, self.u_star,
                                  self.asym_relu_mask, hidden=hidden, seed=seed)


def closed_loop(sys: SystemSpec, ctrl: Controller) -> ExprGraph:
    """Single graph for f(x) = g(x, u(x)) with the controller's weights frozen."""
    if ctrl.state_dim != sys.state_dim or ctrl.control_dim != sys.control_dim:
        raise ValueError("controller dims do not match the system")
    f = compose_closed_loop(sys.graph, controller_to_graph(ctrl))
    residual = np.abs(f.eval_np(sys.x_star[None, :])).max()
    if residual > 1e-8:
        raise ValueError(f"closed loop is not at equilibrium at x_star "
                         f"(residual {residual:.3e})")
    return f


def _finish(name, g, outs, x_star, u_star, limits, mask, start, params) -> SystemSpec:
    g.set_outputs(outs)
    spec = SystemSpec(name, len(x_star), len(u_star), g, x_star, u_star,
                      np.asarray(limits, dtype=np.float64), mask,
                      Box.symmetric(start), dict(params))
    residual = np.abs(g.eval_np([spec.x_star[None, :], spec.u_star[None, :]])).max()
    if residual > 1e-10:
        raise ValueError(f"{name}: equilibrium residual {residual:.3e}")
    return spec


def _van_der_pol(p) -> SystemSpec:
    mu = p.setdefault("mu", 1.0)
    g = ExprGraph([2, 1])
    x, u = g.input(0), g.input(1)
    x1, x2 = g.pick(x, 0), g.pick(x, 1)
    u1 = g.pick(u, 0)
    f1 = x2
    f2 = -x1 + mu * (1.0 - x1 ** 2) * x2 + u1
    return _finish("van_der_pol", g, [f1, f2], np.zeros(2), np.zeros(1),
                   [p.setdefault("u_max", 1.0)], [False], [1.0, 1.0], p)


def _double_integrator(p) -> SystemSpec:
    g = ExprGraph([2, 1])
    x, u = g.input(0), g.input(1)
    f1 = g.pick(x, 1)
    f2 = g.pick(u, 0)
    return _finish("double_integrator", g, [f1, f2], np.zeros(2), np.zeros(1),
                   [p.setdefault("u_max", 1.0)], [False], [1.0, 1.0], p)


def _pendulum(p, torque_mult: float, name: str) -> SystemSpec:
    m = p.setdefault("m", 0.15)
    length = p.setdefault("l", 0.5)
    beta = p.setdefault("beta", 0.1)
    grav = p.setdefault("g", 9.81)
    u_max = p.setdefault("u_max", torque_mult * m * grav * length)
    g = ExprGraph([2, 1])
    x, u = g.input(0), g.input(1)
    th, om = g.pick(x, 0), g.pick(x, 1)
    u1 = g.pick(u, 0)
    f1 = om
    f2 = (-beta / (m * length ** 2)) * om + (grav / length) * g.sin(th) \
        + (1.0 / (m * length ** 2)) * u1
    return _finish(name, g, [f1, f2], np.zeros(2), np.zeros(1),
                   [u_max], [False], [1.0, 2.0], p)


def _path_tracking(p, torque_mult: float, name: str) -> SystemSpec:
    v = p.setdefault("v", 2.0)
    length = p.setdefault("l", 1.0)
    radius = p.setdefault("r", 10.0)
    u_max = p.setdefault("u_max", torque_mult * length / v)
    g = ExprGraph([2, 1])
    x, u = g.input(0), g.input(1)
    de, te = g.pick(x, 0), g.pick(x, 1)
    u1 = g.pick(u, 0)
    f1 = v * g.sin(te)
    # r/v - sin(theta_e) >= r/v - 1 > 0, so the reciprocal is always defined
    f2 = (v / length) * u1 - g.cos(te) * g.reciprocal(radius / v - g.sin(te))
    u_star = np.array([length / radius])
    return _finish(name, g, [f1, f2], np.zeros(2), u_star,
                   [u_max], [False], [2.0, 2.0], p)


def _cartpole(p) -> SystemSpec:
    mc = p.setdefault("m_c", 1.0)
    mp = p.setdefault("m_p", 0.1)
    length = p.setdefault("l", 1.0)
    grav = p.setdefault("g", 9.81)
    u_max = p.setdefault("u_max", 30.0)
    g = ExprGraph([4, 1])
    x, u = g.input(0), g.input(1)
    th, xd, thd = g.pick(x, 1), g.pick(x, 2), g.pick(x, 3)
    u1 = g.pick(u, 0)
    sth, cth = g.sin(th), g.cos(th)
    # m_c + m_p sin^2(theta) >= m_c > 0
    inv = g.reciprocal(mc + mp * sth ** 2)
    acc_x = (u1 + mp * sth * (length * thd ** 2 - grav * cth)) * inv
    acc_t = (-u1 * cth - mp * length * thd ** 2 * cth * sth
             + (mc + mp) * grav * sth) * inv * (1.0 / length)
    return _finish("cartpole", g, [xd, thd, acc_x, acc_t], np.zeros(4), np.zeros(1),
                   [u_max], [False], [0.4, 0.4, 0.4, 0.4], p)


def _quadrotor_2d(p) -> SystemSpec:
    m = p.setdefault("m", 0.486)
    length = p.setdefault("l", 0.25)
    inertia = p.setdefault("I", 0.00383)
    grav = p.setdefault("g", 9.81)
    u_max = p.setdefault("u_max", 1.25 * m * grav)
    g = ExprGraph([6, 2])
    x, u = g.input(0), g.input(1)
    th, xd, yd, thd = g.pick(x, 2), g.pick(x, 3), g.pick(x, 4), g.pick(x, 5)
    u1, u2 = g.pick(u, 0), g.pick(u, 1)
    thrust = u1 + u2
    f4 = (-1.0 / m) * g.sin(th) * thrust
    f5 = (1.0 / m) * g.cos(th) * thrust - grav
    f6 = (length / inertia) * (u1 - u2)
    hover = m * grav / 2.0
    return _finish("quadrotor_2d", g, [xd, yd, thd, f4, f5, f6], np.zeros(6),
                   [hover, hover], [u_max, u_max], [True, True],
                   [0.3, 0.3, 0.2 * np.pi, 1.6, 1.6, 1.2], p)


def _pvtol(p) -> SystemSpec:
    grav = p.setdefault("g", 9.8)
    m = p.setdefault("m", 4.0)
    length = p.setdefault("l", 0.25)
    J = p.setdefault("J", 0.0475)
    u_max = p.setdefault("u_max", 39.2)
    g = ExprGraph([6, 2])
    x, u = g.input(0), g.input(1)
    phi, vx, vz, om = g.pick(x, 2), g.pick(x, 3), g.pick(x, 4), g.pick(x, 5)
    u1, u2 = g.pick(u, 0), g.pick(u, 1)
    sphi, cphi = g.sin(phi), g.cos(phi)
    f1 = vx * cphi - vz * sphi
    f2 = vx * sphi + vz * cphi
    f3 = om
    f4 = vz * om - grav * sphi
    f5 = -1.0 * vx * om - grav * cphi + (1.0 / m) * (u1 + u2)
    f6 = (length / J) * (u1 - u2)
    hover = m * grav / 2.0
    return _finish("pvtol", g, [f1, f2, f3, f4, f5, f6], np.zeros(6),
                   [hover, hover], [u_max, u_max], [True, True],
                   [0.4] * 6, p)


def _ducted_fan(p) -> SystemSpec:
    m = p.setdefault("m", 11.2)
    r = p.setdefault("r", 0.156)
    inertia = p.setdefault("I", 0.0462)
    d = p.setdefault("d", 0.1)
    grav = p.setdefault("g", 0.28)  # as printed in the benchmark description
    g = ExprGraph([6, 2])
    x, u = g.input(0), g.input(1)
    th, xd, yd, thd = g.pick(x, 2), g.pick(x, 3), g.pick(x, 4), g.pick(x, 5)
    u0, u1 = g.pick(u, 0), g.pick(u, 1)
    sth, cth = g.sin(th), g.cos(th)
    f4 = (1.0 / m) * (-d * xd + u0 * cth - u1 * sth)
    f5 = (1.0 / m) * (-d * yd + u0 * sth + u1 * cth) - grav
    f6 = (r / inertia) * u0
    return _finish("ducted_fan", g, [xd, yd, thd, f4, f5, f6], np.zeros(6),
                   [0.0, m * grav], [10.0, 10.0], [False, True],
                   [0.4] * 6, p)


def _quadrotor_3d(p) -> SystemSpec:
    m = p.setdefault("m", 0.486)
    arm = p.setdefault("l", 0.225)
    grav = p.setdefault("g", 9.81)
    ix = p.setdefault("I_x", 0.0049)
    iy = p.setdefault("I_y", 0.0049)
    iz = p.setdefault("I_z", 0.0088)
    cq = p.setdefault("c", 1.1 / 29)
    u_max = p.setdefault("u_max", 3.6)
    g = ExprGraph([12, 4])
    x, u = g.input(0), g.input(1)
    # state: (x, y, z, phi, theta, psi, vx, vy, vz, wx, wy, wz)
    phi, th, psi = g.pick(x, 3), g.pick(x, 4), g.pick(x, 5)
    vx, vy, vz = g.pick(x, 6), g.pick(x, 7), g.pick(x, 8)
    wx, wy, wz = g.pick(x, 9), g.pick(x, 10), g.pick(x, 11)
    u1, u2, u3, u4 = (g.pick(u, k) for k in range(4))
    sphi, cphi = g.sin(phi), g.cos(phi)
    sth, cth = g.sin(th), g.cos(th)
    spsi, cpsi = g.sin(psi), g.cos(psi)
    thrust = u1 + u2 + u3 + u4
    tau_x = arm * (u2 - u4)
    tau_y = arm * (u3 - u1)
    tau_z = cq * (u1 - u2 + u3 - u4)
    rx = spsi * sphi + cpsi * sth * cphi
    ry = -1.0 * cpsi * sphi + spsi * sth * cphi
    rz = cth * cphi
    f_v = [(1.0 / m) * rx * thrust,
           (1.0 / m) * ry * thrust,
           (1.0 / m) * rz * thrust - grav]
    sec = g.reciprocal(cth)  # requires |theta| < pi/2
    gyro = sphi * wy + cphi * wz
    f_phi = wx + sth * sec * gyro
    f_th = cphi * wy - sphi * wz
    f_psi = sec * gyro
    f_wx = (1.0 / ix) * ((iy - iz) * wy * wz + tau_x)
    f_wy = (1.0 / iy) * ((iz - ix) * wz * wx + tau_y)
    f_wz = (1.0 / iz) * ((ix - iy) * wx * wy + tau_z)
    hover = m * grav / 4.0
    return _finish("quadrotor_3d", g,
                   [vx, vy, vz, f_phi, f_th, f_psi] + f_v + [f_wx, f_wy, f_wz],
                   np.zeros(12), [hover] * 4, [u_max] * 4, [True] * 4,
                   [0.4] * 12, p)


_REGISTRY: Dict[str, Callable] = {
    "van_der_pol": _van_der_pol,
    "double_integrator": _double_integrator,
    "pendulum_big": lambda p: _pendulum(p, 8.15, "pendulum_big"),
    "pendulum_small": lambda p: _pendulum(p, 1.02, "pendulum_small"),
    "path_tracking_big": lambda p: _path_tracking(p, 1.68, "path_tracking_big"),
    "path_tracking_small": lambda p: _path_tracking(p, 1.0, "path_tracking_small"),
    "cartpole": _cartpole,
    "quadrotor_2d": _quadrotor_2d,
    "pvtol": _pvtol,
    "ducted_fan": _ducted_fan,
    "quadrotor_3d": _quadrotor_3d,
}

SYSTEM_NAMES = tuple(_REGISTRY)


def build_system(name: str, params: Optional[dict] = None) -> SystemSpec:
    if name not in _REGISTRY:
        raise KeyError(f"unknown system {name!r}; available: {', '.join(SYSTEM_NAMES)}")
    return _REGISTRY[name](dict(params or {}))


SYSTEM_FILE_SCHEMA = "roacert.system.v1"


def save_system(path, sys: SystemSpec):
    obj = {
        "schema": SYSTEM_FILE_SCHEMA,
        "name": sys.name,
        "state_dim": sys.state_dim,
        "control_dim": sys.control_dim,
        "graph": sys.graph.to_json(),
        "x_star": sys.x_star.tolist(),
        "u_star": sys.u_star.tolist(),
        "control_limits": sys.control_limits.tolist(),
        "asym_relu_mask": list(sys.asym_relu_mask),
        "start_domain": sys.default_start_domain.to_json(),
        "params": sys.params,
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_system(path) -> SystemSpec:
    """Load a custom system from a declarative graph file."""
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("schema") != SYSTEM_FILE_SCHEMA:
        raise ValueError(f"unrecognized system schema: {obj.get('schema')!r}")
    return SystemSpec(obj["name"], obj["state_dim"], obj["control_dim"],
                      ExprGraph.from_json(obj["graph"]),
                      np.asarray(obj["x_star"]), np.asarray(obj["u_star"]),
                      np.asarray(obj["control_limits"]),
                      [bool(v) for v in obj["asym_relu_mask"]],
                      Box.from_json(obj["start_domain"]),
                      obj.get("params", {}))


def resolve_system(name_or_path: str, params: Optional[dict] = None) -> SystemSpec:
    """Look up a registry name, or load a JSON system file."""
    if name_or_path in _REGISTRY:
        return build_system(name_or_path, params)
    return load_system(name_or_path)
