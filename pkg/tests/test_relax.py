import math

import numpy as np
import pytest

from roacert import relax
from roacert.relax import (Interval, LinearRelaxation, Z_DSIGMOID, Z_DTANH,
                           composite_bell_relaxation, relax_bell,
                           relax_bilinear, relax_power, relax_reciprocal,
                           relax_relu, relax_sshape, relax_trig)
from conftest import grid_max_violation

TOL = 1e-9

FUNCS = {
    "tanh": np.tanh,
    "sigmoid": lambda x: 1 / (1 + np.exp(-np.asarray(x, dtype=np.float64))),
    "dtanh": lambda x: 1 - np.tanh(x) ** 2,
    "dsigmoid": lambda x: relax._dsigmoid_fn(x),
    "sin": np.sin,
    "cos": np.cos,
}


def test_inflection_points_solve_second_derivative():
    # z solves sigma''(z) = 0, derived in closed form
    assert Z_DTANH == pytest.approx(math.atanh(1 / math.sqrt(3)), abs=1e-15)
    assert Z_DSIGMOID == pytest.approx(math.log(2 + math.sqrt(3)), abs=1e-15)
    for kind, z in (("dtanh", Z_DTANH), ("dsigmoid", Z_DSIGMOID)):
        f = FUNCS[kind]
        h = 1e-5
        second = (f(z + h) - 2 * f(z) + f(z - h)) / h ** 2
        assert abs(second) < 1e-5


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(float("nan"), 0.0)


def test_bell_dtanh_concave_case_exact_lines():
    r = relax_bell("dtanh", Interval(-0.5, 0.5))
    dt = FUNCS["dtanh"]
    assert r.al == pytest.approx(0.0, abs=1e-11)
    assert r.bl == pytest.approx(dt(0.5), abs=1e-9)
    assert r.au == pytest.approx(0.0, abs=1e-11)
    assert r.bu == pytest.approx(1.0, abs=1e-9)


def test_bell_degenerate_interval_collapses():
    for kind in ("dtanh", "dsigmoid"):
        r = relax_bell(kind, Interval(0.3, 0.3))
        val = FUNCS[kind](0.3)
        assert r.al * 0.3 + r.bl == pytest.approx(val, abs=1e-9)
        assert r.au * 0.3 + r.bu == pytest.approx(val, abs=1e-9)


def test_bell_dsigmoid_mixed_case_grid_sound():
    r = relax_bell("dsigmoid", Interval(1.0, 4.0))  # spans the inflection
    assert grid_max_violation(FUNCS["dsigmoid"], r, 1.0, 4.0, 10000) <= TOL


@pytest.mark.parametrize("kind,lim", [("dtanh", 6), ("dsigmoid", 9)])
def test_bell_soundness_random(kind, lim):
    rng = np.random.default_rng(0)
    f = FUNCS[kind]
    for _ in range(1500):
        a, b = np.sort(rng.uniform(-lim, lim, 2))
        r = relax_bell(kind, Interval(a, b))
        assert grid_max_violation(f, r, a, b, 500) <= TOL


@pytest.mark.parametrize("kind", ["dtanh", "dsigmoid"])
def test_bell_mirror_symmetry(kind):
    rng = np.random.default_rng(1)
    for _ in range(300):
        a, b = np.sort(rng.uniform(-5, 5, 2))
        r = relax_bell(kind, Interval(a, b))
        m = relax_bell(kind, Interval(-b, -a))
        assert m.al == pytest.approx(-r.al, abs=1e-15)
        assert m.bl == pytest.approx(r.bl, abs=1e-15)
        assert m.au == pytest.approx(-r.au, abs=1e-15)
        assert m.bu == pytest.approx(r.bu, abs=1e-15)


def test_sshape_tanh_spanning_interval_sound():
    r = relax_sshape("tanh", Interval(-1.0, 1.0))
    assert grid_max_violation(np.tanh, r, -1.0, 1.0, 10000) <= TOL


def test_sshape_sigmoid_concave_side():
    # [0, 2] is concave: chord below, midpoint tangent above
    r = relax_sshape("sigmoid", Interval(0.0, 2.0))
    sig = FUNCS["sigmoid"]
    chord_slope = (sig(2.0) - 0.5) / 2.0
    assert r.al == pytest.approx(chord_slope, abs=1e-9)
    assert r.bl == pytest.approx(0.5, abs=1e-9)
    ds = sig(1.0) * (1 - sig(1.0))
    assert r.au == pytest.approx(ds, abs=1e-9)


def test_sshape_zero_width():
    r = relax_sshape("tanh", Interval(0.7, 0.7))
    assert r.al * 0.7 + r.bl == pytest.approx(np.tanh(0.7), abs=1e-9)
    assert r.au * 0.7 + r.bu == pytest.approx(np.tanh(0.7), abs=1e-9)


@pytest.mark.parametrize("kind", ["tanh", "sigmoid"])
def test_sshape_soundness_random(kind):
    rng = np.random.default_rng(2)
    f = FUNCS[kind]
    for _ in range(1500):
        a, b = np.sort(rng.uniform(-6, 6, 2))
        r = relax_sshape(kind, Interval(a, b))
        assert grid_max_violation(f, r, a, b, 500) <= TOL


def test_trig_single_arc_constructions():
    r = relax_trig("sin", Interval(0.0, math.pi / 2))  # concave arc
    assert grid_max_violation(np.sin, r, 0, math.pi / 2, 5000) <= TOL
    assert r.au == pytest.approx(math.cos(math.pi / 4), abs=1e-9)
    r = relax_trig("cos", Interval(-0.1, 0.1))
    assert r.au == pytest.approx(0.0, abs=1e-11)
    assert r.bu == pytest.approx(1.0, abs=1e-9)
    assert grid_max_violation(np.cos, r, -0.1, 0.1, 5000) <= TOL


def test_trig_full_range_constant_bounds():
    r = relax_trig("sin", Interval(-10.0, 10.0))
    assert r.al == 0.0 and r.au == 0.0
    assert r.bl == pytest.approx(-1.0, abs=1e-9)
    assert r.bu == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("kind", ["sin", "cos"])
def test_trig_soundness_random(kind):
    rng = np.random.default_rng(3)
    f = FUNCS[kind]
    for _ in range(1500):
        a, b = np.sort(rng.uniform(-12, 12, 2))
        r = relax_trig(kind, Interval(a, b))
        assert grid_max_violation(f, r, a, b, 500) <= TOL


def test_reciprocal_positive_interval():
    r = relax_reciprocal(Interval(1.0, 2.0))
    # upper chord, lower tangent at 1.5
    assert r.au == pytest.approx(-0.5, abs=1e-9)
    assert r.bu == pytest.approx(1.5, abs=1e-9)
    assert r.al == pytest.approx(-1 / 1.5 ** 2, abs=1e-9)
    assert grid_max_violation(np.reciprocal, r, 1.0, 2.0, 5000) <= TOL


def test_reciprocal_rejects_zero_spanning():
    with pytest.raises(ValueError):
        relax_reciprocal(Interval(-1.0, 1.0))


def test_reciprocal_soundness_both_signs():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        a, b = np.sort(rng.uniform(0.01, 8, 2))
        r = relax_reciprocal(Interval(a, b))
        assert grid_max_violation(np.reciprocal, r, a, b, 400) <= TOL
        r = relax_reciprocal(Interval(-b, -a))
        assert grid_max_violation(np.reciprocal, r, -b, -a, 400) <= TOL


def test_power_square_symmetric():
    r = relax_power(Interval(-1.0, 1.0), 2)
    assert r.al == pytest.approx(0.0, abs=1e-11)
    assert r.bl == pytest.approx(0.0, abs=1e-9)
    assert r.au == pytest.approx(0.0, abs=1e-11)
    assert r.bu == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_power_soundness_random(k):
    rng = np.random.default_rng(5 + k)
    for _ in range(800):
        a, b = np.sort(rng.uniform(-3, 3, 2))
        r = relax_power(Interval(a, b), k)
        assert grid_max_violation(lambda x: x ** k, r, a, b, 400) <= 1e-8


def test_relu_triangle():
    r = relax_relu(Interval(-1.0, 2.0))
    assert r.au == pytest.approx(2 / 3, abs=1e-12)
    assert r.bu == pytest.approx(2 / 3, abs=1e-9)
    f = lambda x: np.maximum(x, 0)
    assert grid_max_violation(f, r, -1, 2, 5000) <= TOL
    assert relax_relu(Interval(0.5, 2.0)).al == 1.0
    assert relax_relu(Interval(-2.0, -0.5)).au == 0.0


def test_bilinear_mccormick_corners():
    (axl, ayl, cl), (axu, ayu, cu) = relax_bilinear(Interval(0, 1), Interval(0, 1))
    assert (axl, ayl, cl) == pytest.approx((0, 0, 0), abs=1e-11)
    # degenerate second factor: exact linearization 2x
    (axl, ayl, cl), (axu, ayu, cu) = relax_bilinear(Interval(-3, 4), Interval(2, 2))
    xs = np.linspace(-3, 4, 100)
    assert np.abs(axl * xs + ayl * 2 + cl - 2 * xs).max() < 1e-9
    assert np.abs(axu * xs + ayu * 2 + cu - 2 * xs).max() < 1e-9


def test_bilinear_soundness_random():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        xl, xu = np.sort(rng.uniform(-4, 4, 2))
        yl, yu = np.sort(rng.uniform(-4, 4, 2))
        (axl, ayl, cl), (axu, ayu, cu) = relax_bilinear(Interval(xl, xu),
                                                        Interval(yl, yu))
        xs = rng.uniform(xl, xu, 300)
        ys = rng.uniform(yl, yu, 300)
        prod = xs * ys
        assert np.max(axl * xs + ayl * ys + cl - prod) <= TOL
        assert np.max(prod - (axu * xs + ayu * ys + cu)) <= TOL


@pytest.mark.parametrize("kind,lim", [("dtanh", 5), ("dsigmoid", 8)])
def test_bell_tighter_than_composite(kind, lim):
    """The dedicated relaxation beats the composite construction on >= 95%
    of random intervals by envelope-gap integral."""
    rng = np.random.default_rng(7)
    f = FUNCS[kind]
    wins = 0
    n = 1000
    for _ in range(n):
        a, b = np.sort(rng.uniform(-lim, lim, 2))
        ded = relax_bell(kind, Interval(a, b))
        comp = composite_bell_relaxation(kind, Interval(a, b))
        assert grid_max_violation(f, comp, a, b, 200) <= 1e-8  # baseline sound
        mid = 0.5 * (a + b)
        gap_d = (ded.au - ded.al) * mid + (ded.bu - ded.bl)
        gap_c = (comp.au - comp.al) * mid + (comp.bu - comp.bl)
        wins += gap_d < gap_c
    assert wins / n >= 0.95
