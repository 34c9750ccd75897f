import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nordvlas.field import FieldSampler
from nordvlas.pusher import push_step, rhs, rk4_step, trajectory
from nordvlas.state import CausalityError, Ensemble, GridSpec

# Frozen analytic field: smooth, time dependent, nonzero gradient everywhere.
K = np.array([0.9, -0.6, 0.4])


def phi_exact(t, x):
    x = np.asarray(x, float)
    return 0.15 * np.sin(x @ K + 0.7 * t) + 0.05 * np.cos(x[..., 1] - 0.3 * t) + 0.02 * x[..., 2]


def analytic_sampler(t, x):
    x = np.asarray(x, float)
    s = x @ K + 0.7 * t
    c = np.cos(s)
    sn = np.sin(x[..., 1] - 0.3 * t)
    dt = 0.15 * 0.7 * c + 0.05 * 0.3 * sn
    grad = 0.15 * c[..., None] * K
    grad = grad + np.stack([np.zeros_like(sn), -0.05 * sn, np.full_like(sn, 0.02)], axis=-1)
    return phi_exact(t, x), dt, grad


X0 = np.array([[0.1, -0.2, 0.3], [0.0, 0.5, -0.4], [-0.3, 0.1, 0.0]])
P0 = np.array([[0.5, 0.2, -0.3], [-1.5, 0.8, 0.1], [0.0, 0.0, 0.0]])


def _lhs(x, p, t):
    return np.exp(2 * phi_exact(t, x)) * (1.0 + np.sum(p * p, axis=-1))


def _rhs_density(x, t):
    _, dt, _ = analytic_sampler(t, x)
    return 2.0 * np.exp(2 * phi_exact(t, x)) * dt


def test_rhs_examples():
    v, dp = rhs(None, np.zeros(3), 0.0, np.zeros(3))
    assert np.all(v == 0) and np.all(dp == 0)
    v, dp = rhs(None, np.zeros(3), 0.0, np.array([1.0, 0, 0]))
    np.testing.assert_allclose(dp, [-1.0, 0, 0])
    v, dp = rhs(None, np.array([1.0, 0, 0]), 2.0, np.zeros(3))
    np.testing.assert_allclose(v, [1 / math.sqrt(2), 0, 0])
    np.testing.assert_allclose(dp, [-2.0, 0, 0])


def test_rhs_parallel_gradient():
    e = np.array([1.0, 2.0, -2.0]) / 3.0
    q, a = 2.5, 0.7
    _, dp = rhs(None, q * e, 0.0, a * e)
    np.testing.assert_allclose(dp, -a * e * math.sqrt(1 + q * q), rtol=1e-14)


def test_free_streaming_exact():
    g = GridSpec((0, 0, 0), 2.0, 16)
    s = FieldSampler(g, g.zeros(), g.zeros())
    x = X0.copy()
    p = P0.copy()
    ens = Ensemble(x.copy(), p.copy(), np.ones(3), np.zeros(3), np.ones(3), x.copy(), p.copy())
    for _ in range(10):
        push_step(ens, s, 0.05)
    gam = np.sqrt(1 + np.sum(P0**2, axis=1))[:, None]
    np.testing.assert_allclose(ens.x, X0 + 0.5 * P0 / gam, atol=1e-14)
    assert np.array_equal(ens.p, P0)
    assert ens.time == pytest.approx(0.5)


def test_compiled_push_matches_reference():
    g = GridSpec((0, 0, 0), 2.0, 32)
    Xg, Yg, Zg = g.coords()
    pts = np.stack(np.broadcast_arrays(Xg, Yg, Zg), axis=-1)
    _, dt_l, _ = analytic_sampler(0.0, pts)
    s = FieldSampler(g, phi_exact(0.0, pts), dt_l)
    ens = Ensemble(X0.copy(), P0.copy(), np.ones(3), np.zeros(3), np.ones(3), X0.copy(), P0.copy())
    push_step(ens, s, 0.01)
    xr, pr = rk4_step(X0, P0, s, 0.0, 0.01)
    np.testing.assert_allclose(ens.x, xr, atol=1e-14)
    np.testing.assert_allclose(ens.p, pr, atol=1e-13)


def test_push_leaving_grid_raises():
    g = GridSpec((0, 0, 0), 1.0, 8)
    s = FieldSampler(g, g.zeros(), g.zeros())
    x = np.array([[0.74, 0.0, 0.0]])
    p = np.array([[5.0, 0.0, 0.0]])
    ens = Ensemble(x, p, np.ones(1), np.zeros(1), np.ones(1), x.copy(), p.copy())
    with pytest.raises(CausalityError):
        push_step(ens, s, 0.1)


def test_push_rejects_bad_dt():
    with pytest.raises(ValueError):
        push_step(Ensemble.empty(), analytic_sampler, 0.0)


def test_rk4_matches_high_order_reference():
    def f(t, y):
        x, p = y[:3], y[3:]
        _, dt, grad = analytic_sampler(t, x)
        v, dp = rhs(x, p, dt, grad)
        return np.concatenate([v, dp])

    for x0, p0 in zip(X0, P0):
        ref = solve_ivp(f, (0.0, 1.0), np.concatenate([x0, p0]), method="DOP853", rtol=1e-13, atol=1e-13).y[:, -1]
        xs, ps = trajectory(x0[None], p0[None], analytic_sampler, 0.0, 1e-3, 1000)
        got = np.concatenate([xs[-1, 0], ps[-1, 0]])
        assert np.max(np.abs(got - ref)) <= 1e-8 * max(1.0, np.max(np.abs(ref)))


def _identity_residuals(dt, t_end=1.0):
    n = round(t_end / dt)
    xs, ps = trajectory(X0, P0, analytic_sampler, 0.0, dt, n)
    ts = dt * np.arange(n + 1)
    q = np.array([_lhs(xs[k], ps[k], ts[k]) for k in range(n + 1)])
    r = np.array([_rhs_density(xs[k], ts[k]) for k in range(n + 1)])
    # pointwise: centred difference against the mid-step average
    local = np.max(np.abs((q[1:] - q[:-1]) / dt - 0.5 * (r[1:] + r[:-1])))
    # accumulated: trapezoid sum against the change of the left side
    acc = np.concatenate([np.zeros((1, len(X0))), np.cumsum(0.5 * dt * (r[1:] + r[:-1]), axis=0)])
    integral = np.max(np.abs(q - q[0] - acc))
    return local, integral


def test_along_characteristic_identities_second_order():
    local, accumulated = identity_orders()
    assert np.all(local >= 1.9), local
    assert np.all(accumulated >= 1.9), accumulated


def flow_jacobian_errors(dt=1e-3, t_end=1.0, eps=1e-6):
    """Relative gap between det(flow Jacobian) and exp(-3 dphi), per start point."""
    n = round(t_end / dt)
    errs = []
    for x0, p0 in zip(X0, P0):
        ys = np.tile(np.concatenate([x0, p0]), (7, 1))
        ys[1:] += eps * np.eye(6)
        xs, ps = trajectory(ys[:, :3], ys[:, 3:], analytic_sampler, 0.0, dt, n)
        yt = np.concatenate([xs[-1], ps[-1]], axis=1)
        det = np.linalg.det((yt[1:] - yt[0]).T / eps)
        expect = math.exp(-3 * (phi_exact(t_end, xs[-1, 0]) - phi_exact(0.0, x0)))
        errs.append(abs(det - expect) / expect)
    return errs


def identity_orders(dts=(0.04, 0.02, 0.01, 0.005)):
    """Observed orders of the pointwise and accumulated residuals under dt halving."""
    res = np.array([_identity_residuals(h) for h in dts])
    orders = np.log2(res[:-1] / res[1:])
    return orders[:, 0], orders[:, 1]


def test_flow_jacobian_matches_field_factor():
    assert max(flow_jacobian_errors()) <= 1e-3
