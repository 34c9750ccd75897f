"""Characteristic flow of the Vlasov equation: x' = p_hat, p' = -(S phi) p - grad phi / gamma."""

from __future__ import annotations

import numpy as np

from . import kernels
from .field import FieldSampler
from .state import CausalityError, Ensemble


def rhs(x, p, dphi_dt, grad_phi):
    """Right-hand side of the characteristic system; broadcasts over leading axes.

    ``x`` is unused (the field sample already encodes position) but kept so
    the signature mirrors the state.
    """
    p = np.asarray(p, dtype=float)
    grad_phi = np.asarray(grad_phi, dtype=float)
    gamma = np.sqrt(1.0 + np.sum(p * p, axis=-1))
    v = p / gamma[..., None]
    s_phi = np.asarray(dphi_dt) + np.sum(v * grad_phi, axis=-1)
    dp = -s_phi[..., None] * p - grad_phi / gamma[..., None]
    return v, dp


def rk4_step(x, p, sampler, t, dt):
    """One classical RK4 step for states (n, 3) in a field given by ``sampler(t, x)``."""

    def f(tt, xx, pp):
        _, dtphi, grad = sampler(tt, xx)
        return rhs(xx, pp, dtphi, grad)

    h = 0.5 * dt
    k1x, k1p = f(t, x, p)
    k2x, k2p = f(t + h, x + h * k1x, p + h * k1p)
    k3x, k3p = f(t + h, x + h * k2x, p + h * k2p)
    k4x, k4p = f(t + dt, x + dt * k3x, p + dt * k3p)
    c = dt / 6.0
    return (x + c * (k1x + 2 * k2x + 2 * k3x + k4x),
            p + c * (k1p + 2 * k2p + 2 * k3p + k4p))


def push_step(ensemble: Ensemble, sampler, dt: float) -> Ensemble:
    """Advance every particle by dt with RK4.

    A :class:`FieldSampler` runs on the compiled path with the field frozen
    over the step; any other callable ``sampler(t, x) -> (phi, dphi_dt, grad)``
    is treated as a prescribed space-time field and sampled at the stage times.
    The ensemble is updated in place and returned.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if len(ensemble) == 0:
        ensemble.time += dt
        return ensemble
    if isinstance(sampler, FieldSampler):
        g = sampler.grid
        lat = np.ascontiguousarray(sampler.lattices[1:])
        bad = kernels.rk4_push(ensemble.x, ensemble.p, lat, g.lo, 1.0 / g.dx, g.cells_per_axis, dt)
        if bad:
            raise CausalityError(f"causal domain violated: {bad} particle(s) left the grid interior")
    else:
        ensemble.x, ensemble.p = rk4_step(ensemble.x, ensemble.p, sampler, ensemble.time, dt)
    ensemble.time += dt
    return ensemble


def trajectory(x0, p0, sampler, t0: float, dt: float, n_steps: int):
    """Positions and momenta at every step (n_steps + 1, ..., 3) in a prescribed field."""
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    xs = [x.copy()]
    ps = [p.copy()]
    t = t0
    for _ in range(n_steps):
        x, p = rk4_step(x, p, sampler, t, dt)
        t += dt
        xs.append(x.copy())
        ps.append(p.copy())
    return np.array(xs), np.array(ps)
