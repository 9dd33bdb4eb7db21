"""Sound linear envelopes of the primitive operators over an interval.

Every function here returns coefficients (al, bl, au, bu) with the defining
contract

    al*x + bl <= sigma(x) <= au*x + bu   for all x in [l, u].

The derivative operators d/dx tanh and d/dx sigmoid are "bell-shaped":
even, unimodal, concave between their inflection points +-z and convex
outside. They get a dedicated three-case relaxation (concave segment,
convex segment, and a mixed segment handled like an S-shaped function)
that is much tighter than composing the envelopes of tanh, x^2 and affine
ops. All constructors are vectorized over numpy arrays of interval
endpoints, and every envelope is nudged outward by 1e-12*max(1,|b|) so
float rounding cannot flip soundness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NUDGE = 1e-12

# inflection points z of the bell-shaped derivative operators: sigma''(z) = 0
Z_DTANH = math.atanh(1.0 / math.sqrt(3.0))      # ~0.658479
Z_DSIGMOID = math.log(2.0 + math.sqrt(3.0))     # ~1.316958


@dataclass(frozen=True)
class Interval:
    l: float
    u: float

    def __post_init__(self):
        if not (math.isfinite(self.l) and math.isfinite(self.u)):
            raise ValueError("interval endpoints must be finite")
        if self.l > self.u:
            raise ValueError("interval requires l <= u")


@dataclass(frozen=True)
class LinearRelaxation:
    al: float
    bl: float
    au: float
    bu: float

    def lower(self, x):
        return self.al * np.asarray(x) + self.bl

    def upper(self, x):
        return self.au * np.asarray(x) + self.bu


# -- elementary function tables ---------------------------------------------

def _tanh(x):
    return np.tanh(x)


def _dtanh_fn(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _ddtanh(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def _dsigmoid_fn(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _ddsigmoid(x):
    s = _sigmoid(x)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


_FUNCS = {
    "tanh": (_tanh, _dtanh_fn),
    "sigmoid": (_sigmoid, _dsigmoid_fn),
    "dtanh": (_dtanh_fn, _ddtanh),
    "dsigmoid": (_dsigmoid_fn, _ddsigmoid),
}

_BELL_Z = {"dtanh": Z_DTANH, "dsigmoid": Z_DSIGMOID}


def _nudge(al, bl, au, bu):
    bl = bl - NUDGE * np.maximum(1.0, np.abs(bl))
    bu = bu + NUDGE * np.maximum(1.0, np.abs(bu))
    return al, bl, au, bu


def _chord(f, l, u):
    """Slope/intercept of the secant; degenerates to a point value at l == u."""
    w = u - l
    fl, fu = f(l), f(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(w > 0, (fu - fl) / np.where(w > 0, w, 1.0), 0.0)
    return a, fl - a * l


def _tangent(f, df, d):
    a = df(d)
    return a, f(d) - a * d


def _bisect(fn, lo, hi, iters: int = 70):
    """Vectorized bisection for a root of fn (sign change assumed on [lo, hi])."""
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        take_lo = (fm > 0) == (flo > 0)
        lo = np.where(take_lo, mid, lo)
        flo = np.where(take_lo, fm, flo)
        hi = np.where(take_lo, hi, mid)
    return 0.5 * (lo + hi)


# -- S-shaped operators (tanh, sigmoid) --------------------------------------

def _sshape_arrays(kind: str, l, u):
    """Classic S-shape relaxation: convex left of 0, concave right.

    On sign-definite intervals: chord on the side where it is valid, tangent
    at the midpoint on the other. On intervals spanning the inflection the
    chord may cut the curve; then the bound is the tangent line through the
    far endpoint, with the tangent point found by bisection.
    """
    f, df = _FUNCS[kind]
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    mid = 0.5 * (l + u)
    ca, cb = _chord(f, l, u)
    ta, tb = _tangent(f, df, mid)

    al = np.where(l >= 0, ca, ta)
    bl = np.where(l >= 0, cb, tb)
    au = np.where(l >= 0, ta, ca)
    bu = np.where(l >= 0, tb, cb)

    span = (l < 0) & (u > 0)
    if span.any():
        ls, us = l[span], u[span]
        cas, cbs = ca[span], cb[span]
        # lower: chord valid iff sigma'(l) >= chord slope, else tangent
        # through (u, f(u)) touching the convex left branch
        ok = df(ls) >= cas
        d = _bisect(lambda dd: f(dd) + df(dd) * (us - dd) - f(us),
                    np.where(ok, ls, ls), np.zeros_like(ls))
        a_t, b_t = _tangent(f, df, d)
        al_s = np.where(ok, cas, a_t)
        bl_s = np.where(ok, cbs, b_t)
        # upper: mirrored construction on the concave right branch
        ok_u = df(us) >= cas
        d_u = _bisect(lambda dd: f(dd) + df(dd) * (ls - dd) - f(ls),
                      np.zeros_like(us), us)
        a_tu, b_tu = _tangent(f, df, d_u)
        au_s = np.where(ok_u, cas, a_tu)
        bu_s = np.where(ok_u, cbs, b_tu)
        al[span], bl[span], au[span], bu[span] = al_s, bl_s, au_s, bu_s
    return _nudge(al, bl, au, bu)


# -- bell-shaped operators (d/dx tanh, d/dx sigmoid) --------------------------

def _bell_arrays(kind: str, l, u):
    """Three-case relaxation of an even bell with inflections at +-z.

    The interval is first mirrored so l + u >= 0 (slopes negate back).
    Case a (-z <= l <= u <= z): concave; chord below, midpoint tangent above.
    Case b (z <= l): convex; midpoint tangent below, chord above.
    Case c (l < z < u): like an S-shape.
      lower: tangent point d_l of the line through (l, f(l)); chord if
             u <= d_l, else tangent at the midpoint of [d_l, u].
      upper: tangent point d_u of the line through (u, f(u)); chord if
             l >= d_u, else tangent at a point interpolated from 0 (when
             l = -u) to d_u (when l = d_u), checked a posteriori.
    """
    f, df = _FUNCS[kind]
    z = _BELL_Z[kind]
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    mirror = (l + u) < 0
    lm = np.where(mirror, -u, l)
    um = np.where(mirror, -l, u)

    al = np.zeros_like(lm)
    bl = np.zeros_like(lm)
    au = np.zeros_like(lm)
    bu = np.zeros_like(lm)
    mid = 0.5 * (lm + um)

    case_a = um <= z
    case_b = lm >= z
    case_c = ~(case_a | case_b)

    if case_a.any():
        la, ua, ma = lm[case_a], um[case_a], mid[case_a]
        al[case_a], bl[case_a] = _chord(f, la, ua)
        au[case_a], bu[case_a] = _tangent(f, df, ma)
    if case_b.any():
        lb, ub, mb = lm[case_b], um[case_b], mid[case_b]
        al[case_b], bl[case_b] = _tangent(f, df, mb)
        au[case_b], bu[case_b] = _chord(f, lb, ub)
    if case_c.any():
        lc, uc = lm[case_c], um[case_c]
        alc, blc = _bell_case_c_lower(f, df, z, lc, uc)
        auc, buc = _bell_case_c_upper(f, df, z, lc, uc)
        al[case_c], bl[case_c] = alc, blc
        au[case_c], bu[case_c] = auc, buc

    al = np.where(mirror, -al, al)
    au_m = np.where(mirror, -au, au)
    # mirroring swaps which line is which only in slope; intercepts persist
    return _nudge(al, bl, au_m, bu)


def _bell_case_c_lower(f, df, z, l, u):
    # t(d) = value of the tangent line at d, evaluated at l, minus f(l);
    # the tangency point d_l through (l, f(l)) is its root on [z, u]
    def t(d):
        return f(d) + df(d) * (l - d) - f(l)

    chord_ok = t(u) >= 0  # tangency point beyond u: the chord is sound
    a, b = _chord(f, l, u)
    need = ~chord_ok
    if need.any():
        ln, un = l[need], u[need]
        d_l = _bisect(lambda dd: f(dd) + df(dd) * (ln - dd) - f(ln),
                      np.full_like(un, z), un)
        d = 0.5 * (d_l + un)
        a[need], b[need] = _tangent(f, df, d)
    return a, b


def _bell_case_c_upper(f, df, z, l, u):
    def s(d):
        return f(d) + df(d) * (u - d) - f(u)

    # tangency point of the line through (u, f(u)) on the concave cap [0, z]
    d_u = _bisect(lambda dd: f(dd) + df(dd) * (u - dd) - f(u),
                  np.zeros_like(u), np.full_like(u, z))
    chord_ok = l >= d_u
    a, b = _chord(f, l, u)
    need = ~chord_ok
    if need.any():
        ln, un, dn = l[need], u[need], d_u[need]
        # interpolate the tangent point from 0 (at l = -u) to d_u (at l = d_u)
        frac = np.clip((ln + un) / np.maximum(dn + un, 1e-300), 0.0, 1.0)
        d = frac * dn
        at, bt = _tangent(f, df, d)
        # a posteriori check at the points where f - line can peak:
        # the endpoints and the solutions of f'(x) = slope
        viol = line_max_violation(f, df, [-z, z], ln, un, at, bt)
        bad = viol > 0
        if bad.any():
            # fall back to the constant bound at the segment maximum, which
            # is always sound (the interior chord would not be)
            peak = np.where(ln[bad] <= 0, f(np.zeros(int(bad.sum()))), f(ln[bad]))
            at[bad] = 0.0
            bt[bad] = peak + 1e-12
        a[need], b[need] = at, bt
    return a, b


def line_max_violation(f, df, branch_points, l, u, a, b):
    """max over [l,u] of f(x) - (a*x + b): bound-line soundness residual.

    Evaluates the difference at the endpoints and at the critical points
    f'(x) = a, with f' assumed monotone between consecutive branch_points.
    """
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    best = np.maximum(f(l) - (a * l + b), f(u) - (a * u + b))
    cuts = [-np.inf] + list(branch_points) + [np.inf]
    brackets = [(np.maximum(l, cuts[i]), np.minimum(u, cuts[i + 1]))
                for i in range(len(cuts) - 1)]
    for blo, bhi in brackets:
        ok = blo < bhi
        if not ok.any():
            continue
        lo = np.where(ok, blo, 0.0)
        hi = np.where(ok, bhi, 1.0)
        glo = df(lo) - a
        ghi = df(hi) - a
        has_root = ok & (np.sign(glo) != np.sign(ghi))
        if has_root.any():
            root = _bisect(lambda dd: df(dd) - a[has_root],
                           lo[has_root], hi[has_root])
            cand = f(root) - (a[has_root] * root + b[has_root])
            tmp = np.full_like(best, -np.inf)
            tmp[has_root] = cand
            best = np.maximum(best, tmp)
    return best


# -- trigonometric, reciprocal, power, relu ----------------------------------

_TWO_PI = 2.0 * math.pi


def _sin_minmax(l, u):
    """Exact range of sin over [l, u]."""
    smin = np.minimum(np.sin(l), np.sin(u))
    smax = np.maximum(np.sin(l), np.sin(u))
    # does [l, u] contain a point of the form pi/2 + 2k pi (max) / -pi/2 + 2k pi?
    kmax = np.floor((u - math.pi / 2) / _TWO_PI) - np.floor((l - math.pi / 2) / _TWO_PI)
    kmin = np.floor((u + math.pi / 2) / _TWO_PI) - np.floor((l + math.pi / 2) / _TWO_PI)
    smax = np.where(kmax >= 1, 1.0, smax)
    smin = np.where(kmin >= 1, -1.0, smin)
    return smin, smax


def _sin_arrays(l, u):
    """Chord/tangent within a single concave or convex arc, else the exact
    constant range. Arcs of sin: concave on [2k pi, (2k+1) pi], convex on
    [(2k-1) pi, 2k pi]."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    k = np.floor(l / math.pi)
    same_arc = u <= (k + 1) * math.pi
    concave = np.mod(k, 2.0) == 0  # sin >= 0 on the arc
    mid = 0.5 * (l + u)
    ca, cb = _chord(np.sin, l, u)
    ta, tb = _tangent(np.sin, np.cos, mid)
    al = np.where(same_arc & concave, ca, np.where(same_arc, ta, 0.0))
    bl = np.where(same_arc & concave, cb, np.where(same_arc, tb, 0.0))
    au = np.where(same_arc & concave, ta, np.where(same_arc, ca, 0.0))
    bu = np.where(same_arc & concave, tb, np.where(same_arc, cb, 0.0))
    multi = ~same_arc
    if multi.any():
        smin, smax = _sin_minmax(l[multi], u[multi])
        bl[multi] = smin
        bu[multi] = smax
    return _nudge(al, bl, au, bu)


def _cos_arrays(l, u):
    al, bl, au, bu = _sin_arrays(np.asarray(l) + math.pi / 2,
                                 np.asarray(u) + math.pi / 2)
    # cos(x) = sin(x + pi/2): shift the lines back
    return al, bl + al * (math.pi / 2), au, bu + au * (math.pi / 2)


def _reciprocal_arrays(l, u):
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any((l <= 0) & (u >= 0)):
        raise ValueError("reciprocal requires a sign-definite interval")
    mid = 0.5 * (l + u)
    f = np.reciprocal
    df = lambda d: -1.0 / (d * d)
    ca, cb = _chord(f, l, u)
    ta, tb = _tangent(f, df, mid)
    pos = l > 0  # convex on positives: tangent below, chord above
    al = np.where(pos, ta, ca)
    bl = np.where(pos, tb, cb)
    au = np.where(pos, ca, ta)
    bu = np.where(pos, cb, tb)
    return _nudge(al, bl, au, bu)


def _power_arrays(l, u, k: int):
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    f = lambda x: x ** k
    df = lambda x: k * x ** (k - 1)
    mid = 0.5 * (l + u)
    ca, cb = _chord(f, l, u)
    ta, tb = _tangent(f, df, mid)
    if k % 2 == 0:
        # globally convex
        return _nudge(ta, tb, ca, cb)
    # odd power: concave on negatives, convex on positives, monotone
    al, bl = np.where(l >= 0, ta, ca), np.where(l >= 0, tb, cb)
    au, bu = np.where(l >= 0, ca, ta), np.where(l >= 0, cb, tb)
    span = (l < 0) & (u > 0)
    if span.any():
        ls, us = l[span], u[span]
        cas, cbs = ca[span], cb[span]
        # chord is a lower bound iff it enters the right convex branch from
        # above and clears the origin; otherwise take the tangent through
        # (l, f(l)) touching the right branch
        ok_l = (df(us) <= cas) & (cbs <= 0)
        d_l = _bisect(lambda dd: f(dd) + df(dd) * (ls - dd) - f(ls),
                      np.zeros_like(us), us)
        a_tl, b_tl = _tangent(f, df, d_l)
        # mirror image for the upper bound
        ok_u = (df(ls) <= cas) & (cbs >= 0)
        d_u = _bisect(lambda dd: f(dd) + df(dd) * (us - dd) - f(us),
                      ls, np.zeros_like(ls))
        a_tu, b_tu = _tangent(f, df, d_u)
        al_s = np.where(ok_l, cas, a_tl)
        bl_s = np.where(ok_l, cbs, b_tl)
        au_s = np.where(ok_u, cas, a_tu)
        bu_s = np.where(ok_u, cbs, b_tu)
        # belt and braces: verify at the critical points, fall back to the
        # constant range bounds of the monotone function if anything slipped
        bad_l = line_max_violation(lambda x: -f(x), lambda x: -df(x), [0.0],
                                   ls, us, -al_s, -bl_s) > 0
        bad_u = line_max_violation(f, df, [0.0], ls, us, au_s, bu_s) > 0
        al_s[bad_l], bl_s[bad_l] = 0.0, f(ls[bad_l])
        au_s[bad_u], bu_s[bad_u] = 0.0, f(us[bad_u])
        al[span], bl[span], au[span], bu[span] = al_s, bl_s, au_s, bu_s
    return _nudge(al, bl, au, bu)


def _relu_arrays(l, u):
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    pos = l >= 0
    neg = u <= 0
    mixed = ~(pos | neg)
    w = np.where(mixed, u - l, 1.0)
    slope = np.where(mixed, u / w, 0.0)
    au = np.where(pos, 1.0, np.where(neg, 0.0, slope))
    bu = np.where(mixed, -l * slope, 0.0)
    # adaptive lower slope: follow the dominant side of the interval
    al = np.where(pos, 1.0, np.where(neg, 0.0, (u >= -l).astype(np.float64)))
    bl = np.zeros_like(al)
    return al, bl, au, bu + NUDGE


_UNARY_RELAX = {
    "tanh": lambda l, u: _sshape_arrays("tanh", l, u),
    "sigmoid": lambda l, u: _sshape_arrays("sigmoid", l, u),
    "dtanh": lambda l, u: _bell_arrays("dtanh", l, u),
    "dsigmoid": lambda l, u: _bell_arrays("dsigmoid", l, u),
    "sin": _sin_arrays,
    "cos": _cos_arrays,
    "reciprocal": _reciprocal_arrays,
    "relu": _relu_arrays,
}


def relax_unary_arrays(op: str, l, u, power: int = 0):
    """Vectorized envelopes for a unary primitive over [l, u] arrays."""
    if op == "power":
        return _power_arrays(l, u, power)
    if op == "neg":
        ones = np.ones_like(np.asarray(l, dtype=np.float64))
        return -ones, np.zeros_like(ones), -ones, np.zeros_like(ones)
    if op not in _UNARY_RELAX:
        raise ValueError(f"no relaxation for primitive {op!r}")
    return _UNARY_RELAX[op](l, u)


def bilinear_planes(xl, xu, yl, yu):
    """McCormick envelope of x*y, one supporting plane per side.

    Of the two candidate planes per side, the one tighter at the interval
    midpoint is selected. Returns (axl, ayl, cl, axu, ayu, cu) with
    axl*x + ayl*y + cl <= x*y <= axu*x + ayu*y + cu.
    """
    xl, xu = np.asarray(xl, dtype=np.float64), np.asarray(xu, dtype=np.float64)
    yl, yu = np.asarray(yl, dtype=np.float64), np.asarray(yu, dtype=np.float64)
    xm, ym = 0.5 * (xl + xu), 0.5 * (yl + yu)
    # lower candidates: yl*x + xl*y - xl*yl  and  yu*x + xu*y - xu*yu
    v1 = yl * xm + xl * ym - xl * yl
    v2 = yu * xm + xu * ym - xu * yu
    pick2 = v2 > v1
    axl = np.where(pick2, yu, yl)
    ayl = np.where(pick2, xu, xl)
    cl = np.where(pick2, -xu * yu, -xl * yl)
    # upper candidates: yu*x + xl*y - xl*yu  and  yl*x + xu*y - xu*yl
    w1 = yu * xm + xl * ym - xl * yu
    w2 = yl * xm + xu * ym - xu * yl
    pick2u = w2 < w1
    axu = np.where(pick2u, yl, yu)
    ayu = np.where(pick2u, xu, xl)
    cu = np.where(pick2u, -xu * yl, -xl * yu)
    return axl, ayl, cl - NUDGE, axu, ayu, cu + NUDGE


# -- scalar public API --------------------------------------------------------

def _scalar(arrays) -> LinearRelaxation:
    al, bl, au, bu = arrays
    return LinearRelaxation(float(al), float(bl), float(au), float(bu))


def relax_bell(kind: str, iv: Interval) -> LinearRelaxation:
    if kind not in ("dtanh", "dsigmoid"):
        raise ValueError("kind must be 'dtanh' or 'dsigmoid'")
    return _scalar(_bell_arrays(kind, np.array([iv.l]), np.array([iv.u])))


def relax_sshape(kind: str, iv: Interval) -> LinearRelaxation:
    if kind not in ("tanh", "sigmoid"):
        raise ValueError("kind must be 'tanh' or 'sigmoid'")
    return _scalar(_sshape_arrays(kind, np.array([iv.l]), np.array([iv.u])))


def relax_trig(kind: str, iv: Interval) -> LinearRelaxation:
    if kind == "sin":
        return _scalar(_sin_arrays(np.array([iv.l]), np.array([iv.u])))
    if kind == "cos":
        return _scalar(_cos_arrays(np.array([iv.l]), np.array([iv.u])))
    raise ValueError("kind must be 'sin' or 'cos'")


def relax_reciprocal(iv: Interval) -> LinearRelaxation:
    return _scalar(_reciprocal_arrays(np.array([iv.l]), np.array([iv.u])))


def relax_power(iv: Interval, k: int) -> LinearRelaxation:
    if int(k) < 2:
        raise ValueError("power exponent must be >= 2")
    return _scalar(_power_arrays(np.array([iv.l]), np.array([iv.u]), int(k)))


def relax_relu(iv: Interval) -> LinearRelaxation:
    return _scalar(_relu_arrays(np.array([iv.l]), np.array([iv.u])))


def relax_bilinear(iv_x: Interval, iv_y: Interval):
    """Lower/upper supporting planes of x*y over a rectangle, as two
    (ax, ay, c) triples."""
    axl, ayl, cl, axu, ayu, cu = bilinear_planes(
        np.array([iv_x.l]), np.array([iv_x.u]), np.array([iv_y.l]), np.array([iv_y.u]))
    return ((float(axl), float(ayl), float(cl)),
            (float(axu), float(ayu), float(cu)))


def composite_bell_relaxation(kind: str, iv: Interval) -> LinearRelaxation:
    """Envelope of d/dx tanh or d/dx sigmoid built only from the generic
    envelopes of tanh/sigmoid, squaring and affine ops -- the baseline the
    dedicated bell relaxation is measured against."""
    l, u = np.array([iv.l]), np.array([iv.u])
    if kind == "dtanh":
        # 1 - t^2 with t = tanh(x); t-range is exact (tanh is monotone)
        tal, tbl, tau, tbu = _sshape_arrays("tanh", l, u)
        tl, tu = np.tanh(l), np.tanh(u)
        qal, qbl, qau, qbu = _power_arrays(tl, tu, 2)
        # compose: lower of 1 - q needs upper of q(t(x)); q envelopes are in t
        zal = np.where(qau >= 0, qau * tau, qau * tal)
        zbl_ = np.where(qau >= 0, qau * tbu, qau * tbl) + qbu
        zau = np.where(qal >= 0, qal * tal, qal * tau)
        zbu_ = np.where(qal >= 0, qal * tbl, qal * tbu) + qbl
        return _scalar((-zal, 1.0 - zbl_, -zau, 1.0 - zbu_))
    if kind == "dsigmoid":
        # s - s^2 with s = sigmoid(x); s-range is exact (sigmoid is monotone)
        sal, sbl, sau, sbu = _sshape_arrays("sigmoid", l, u)
        slo, shi = _sigmoid(l), _sigmoid(u)
        qal, qbl, qau, qbu = _power_arrays(slo, shi, 2)
        # lower(s - s^2) = lower(s) - upper(s^2)
        sq_u_a = np.where(qau >= 0, qau * sau, qau * sal)
        sq_u_b = np.where(qau >= 0, qau * sbu, qau * sbl) + qbu
        sq_l_a = np.where(qal >= 0, qal * sal, qal * sau)
        sq_l_b = np.where(qal >= 0, qal * sbl, qal * sbu) + qbl
        return _scalar((sal - sq_u_a, sbl - sq_u_b, sau - sq_l_a, sbu - sq_l_b))
    raise ValueError("kind must be 'dtanh' or 'dsigmoid'")
