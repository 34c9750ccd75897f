"""Pointwise algebraic identities behind the decomposition of the dt(phi)
representation, the momentum-ball integrals B_ab(R) and the angular kernel.

All identity functions broadcast over leading axes, so a sweep of random
trials is a single call.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

UNIT_TOL = 1e-10


class QuadratureError(RuntimeError):
    pass


class LemmaInapplicable(ValueError):
    pass


def _unit(omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) > UNIT_TOL):
        raise ValueError("omega must be a unit vector")
    return omega


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _hat(p):
    p = np.asarray(p, dtype=float)
    gamma = np.sqrt(1.0 + _dot(p, p))
    return p / gamma[..., None], gamma


def kernel_identity_1(omega, p):
    """(omega + p_hat) . p_hat - [(1 + omega . p_hat) - 1/(1 + |p|^2)]."""
    w = _unit(omega)
    v, gamma = _hat(p)
    return _dot(w + v, v) - ((1.0 + _dot(w, v)) - 1.0 / gamma**2)


def kernel_identity_2(omega, p):
    """|omega + p_hat|^2 - [2 (1 + omega . p_hat) - 1/(1 + |p|^2)]."""
    w = _unit(omega)
    v, gamma = _hat(p)
    s = w + v
    return _dot(s, s) - (2.0 * (1.0 + _dot(w, v)) - 1.0 / gamma**2)


def grad_decomposition(omega, g):
    """Split g into (omega . g) omega and -omega ^ (omega ^ g)."""
    w = _unit(omega)
    g = np.asarray(g, dtype=float)
    parallel = _dot(w, g)[..., None] * w
    transverse = -np.cross(w, np.cross(w, g))
    return parallel, transverse, g - (parallel + transverse)


def sphi_decomposition(dphi_dt, g, omega, p):
    """Residuals of the two rewritings of S phi and (omega + p_hat) . grad phi."""
    w = _unit(omega)
    g = np.asarray(g, dtype=float)
    dphi_dt = np.asarray(dphi_dt, dtype=float)
    v, _ = _hat(p)
    wv = _dot(w, v)
    wg = _dot(w, g)
    cross = _dot(np.cross(w, g), np.cross(w, v))
    s_phi = dphi_dt + _dot(v, g)
    r1 = s_phi - (dphi_dt * (1.0 + wv) - (dphi_dt - wg) * wv + cross)
    r2 = _dot(w + v, g) - (wg * (1.0 + wv) + cross)
    return r1, r2


def representation_integrands(omega, p, dphi_dt, g, f_val):
    """Momentum-space integrands of the original and the rewritten representation.

    Returns two dicts of pointwise values (per unit dp). Terms carrying the
    1/|x-y|^2 kernel: I, Z1, Z2. Terms carrying 1/|x-y|: II, III, Z0, Z3, Z4, Z5.
    """
    w = _unit(omega)
    g = np.asarray(g, dtype=float)
    dphi_dt = np.asarray(dphi_dt, dtype=float)
    f_val = np.asarray(f_val, dtype=float)
    v, gamma = _hat(p)
    c = 1.0 + _dot(w, v)
    if np.any(c <= 0):
        raise ValueError("1 + omega . p_hat must be positive")
    s_phi = dphi_dt + _dot(v, g)
    wv = w + v
    d = dphi_dt - _dot(w, g)
    cross = _dot(np.cross(w, g), np.cross(w, v))
    fg = f_val / gamma
    fg3 = f_val / gamma**3
    original = {
        "I": _dot(wv, v) / c**2 * fg,
        "II": -_dot(wv, wv) / c**2 * s_phi * fg,
        "III": -_dot(wv, g) / c**2 * fg3,
    }
    rewritten = {
        "Z0": -2.0 * dphi_dt * fg,
        "Z1": fg / c,
        "Z2": -fg3 / c**2,
        "Z3": 2.0 * d * _dot(w, v) * fg / c,
        "Z4": d * fg3 / c**2,
        "Z5": -2.0 * cross * fg / c,
    }
    return original, rewritten


def z_decomposition_residual(omega, p, dphi_dt, g, f_val, return_scale=False):
    """Largest of |I - (Z1 + Z2)| and |II + III - (Z0 + Z3 + Z4 + Z5)|.

    The two groups carry different spatial kernels, so they are compared
    separately. With ``return_scale`` also returns the sum of absolute
    values of all terms, for relative comparisons.
    """
    orig, new = representation_integrands(omega, p, dphi_dt, g, f_val)
    r_sq = orig["I"] - (new["Z1"] + new["Z2"])
    r_lin = orig["II"] + orig["III"] - (new["Z0"] + new["Z3"] + new["Z4"] + new["Z5"])
    res = np.maximum(np.abs(r_sq), np.abs(r_lin))
    if return_scale:
        scale = sum(np.abs(a) for a in orig.values()) + sum(np.abs(a) for a in new.values())
        return res, scale
    return res


def energy_density_point(moments, dphi_dt, g):
    """(e, pflux) from the kinetic moments (int gamma f dp, int p f dp) and field values."""
    m0, m1 = moments
    g = np.asarray(g, dtype=float)
    dphi_dt = np.asarray(dphi_dt, dtype=float)
    e = np.asarray(m0) + 0.5 * dphi_dt**2 + 0.5 * _dot(g, g)
    pflux = np.asarray(m1) - dphi_dt[..., None] * g
    return e, pflux


def cone_integrand_expansion(e, pflux, omega, moments, dphi_dt, grad_phi):
    """(e + pflux . omega) minus its expansion into kinetic, transverse and null parts."""
    w = _unit(omega)
    g = np.asarray(grad_phi, dtype=float)
    m0, m1 = moments
    wg = np.cross(w, g)
    lhs = np.asarray(e) + _dot(np.asarray(pflux), w)
    rhs_ = (np.asarray(m0) + _dot(w, np.asarray(m1)) + 0.5 * _dot(wg, wg)
            + 0.5 * (np.asarray(dphi_dt) - _dot(w, g)) ** 2)
    return lhs - rhs_


# --------------------------------------------------------------------------
# momentum-ball integrals

def _inner_u(r, a):
    """Integral over u in [-1, 1] of (gamma + r u)^(-a), by quadrature in w = log(gamma + r u).

    In w the integrand is exp((1 - a) w) / r, smooth even when (gamma - r)
    is tiny.
    """
    if r == 0.0:
        return 2.0
    gamma = np.hypot(1.0, r)
    lo = -np.log(gamma + r)  # log(gamma - r), cancellation-free
    hi = np.log(gamma + r)
    val, err = integrate.quad(lambda w: np.exp((1.0 - a) * w), lo, hi, epsabs=0.0, epsrel=1e-12,
                              limit=200)
    return val / r


def b_ab(R: float, a: float, b: float, omega=(0.0, 0.0, 1.0), rtol: float = 1e-8) -> float:
    """Integral over |p| <= R of (sqrt(1+|p|^2) + omega . p)^(-a) (1+|p|^2)^(-b) dp.

    Polar coordinates about omega: the azimuth gives 2 pi, the remaining
    (r, u) integral is done by nested adaptive quadrature.
    """
    _unit(omega)
    if not R > 0:
        raise ValueError("R must be positive")
    if a < 0 or b < 0:
        raise ValueError("a and b must be non-negative")

    def radial(r):
        return r * r * (1.0 + r * r) ** (-b) * _inner_u(r, a)

    # split the radial range geometrically so large R stays well resolved
    edges = [0.0, 1.0]
    while edges[-1] * 10.0 < R:
        edges.append(edges[-1] * 10.0)
    edges.append(R)
    total = 0.0
    err_total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(radial, lo, hi, epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        total += val
        err_total += err
    if err_total > rtol * abs(total):
        raise QuadratureError(f"b_ab quadrature reached only {err_total / abs(total):.3e} relative")
    return 2.0 * np.pi * total


def b_ab_regime(a: float, b: float):
    """Growth envelope R -> value for the applicable regime of (a, b)."""
    if a == 1 and b < 1:
        return "a=1", lambda R: R ** (2.0 - 2.0 * b) * np.log(R)
    if a < 1 and b < (3.0 - a) / 2.0:
        return "a<1", lambda R: R ** (3.0 - 2.0 * b - a)
    if a > 1 and b < (1.0 + a) / 2.0:
        return "a>1", lambda R: R ** (1.0 + a - 2.0 * b)
    raise LemmaInapplicable(f"lemma inapplicable for (a, b) = ({a}, {b})")


def b_ab_bound_check(a: float, b: float, ladder=(10.0, 1e2, 1e3, 1e4)) -> np.ndarray:
    """Ratios B_ab(R) / envelope(R) along a ladder of radii."""
    _, env = b_ab_regime(a, b)
    return np.array([b_ab(R, a, b) / env(R) for R in ladder])


def angular_kernel(v_mag: float):
    """Closed form and quadrature of 2 pi * int_{-1}^{1} du / (1 - v u).

    Returns (closed_form, quadrature, residual). Also checks the bound
    closed_form <= 4 pi (1 - log(1 - v)).
    """
    v = float(v_mag)
    if not 0.0 <= v < 1.0:
        raise ValueError("v_mag must lie in [0, 1)")
    closed = 4.0 * np.pi if v == 0.0 else 2.0 * np.pi / v * np.log1p(2.0 * v / (1.0 - v))
    quad, _ = integrate.quad(lambda u: 1.0 / (1.0 - v * u), -1.0, 1.0, epsabs=0.0, epsrel=1e-13,
                             limit=200)
    quad *= 2.0 * np.pi
    if closed > 4.0 * np.pi * (1.0 - np.log1p(-v)) * (1 + 1e-14):
        raise AssertionError(f"angular kernel bound violated at v={v}")
    return closed, quad, closed - quad
