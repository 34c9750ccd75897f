"""Wave-equation field solver: source deposition, leapfrog stepping, interpolation,
and the Kirchhoff evaluation of the homogeneous solution."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .state import (
    CausalityError,
    Ensemble,
    GridSpec,
    InstabilityError,
    ScalarFieldState,
    gradient_lattice,
)


@dataclass(frozen=True)
class SourceLattice:
    mu: np.ndarray


def initial_field(grid: GridSpec, params) -> ScalarFieldState:
    """phi0 and phi1 sampled on the nodes, boundary layer zeroed."""
    X, Y, Z = grid.coords()
    pts = np.stack(np.broadcast_arrays(X, Y, Z), axis=-1)
    phi = params.phi0(pts)
    dphi = params.phi1(pts)
    for a in (phi, dphi):
        _zero_boundary(a)
    return ScalarFieldState(grid, phi, dphi, None, 0.0)


def _zero_boundary(a: np.ndarray) -> None:
    a[0], a[-1] = 0.0, 0.0
    a[:, 0], a[:, -1] = 0.0, 0.0
    a[:, :, 0], a[:, :, -1] = 0.0, 0.0


def interpolate(lattices: np.ndarray, grid: GridSpec, x) -> np.ndarray:
    """Trilinear interpolation of a (q, m, m, m) stack at points x (..., 3) -> (..., q)."""
    x = np.asarray(x, dtype=float)
    pts = np.ascontiguousarray(x.reshape(-1, 3))
    vals, bad = kernels.gather(np.ascontiguousarray(lattices), pts, grid.lo, 1.0 / grid.dx,
                               grid.cells_per_axis)
    if bad:
        raise CausalityError(f"causal domain violated: {bad} sample point(s) outside the grid interior")
    return vals.reshape(x.shape[:-1] + (lattices.shape[0],))


def particle_weights(ensemble: Ensemble, phi_here: np.ndarray) -> np.ndarray:
    """f * V for every particle, i.e. f_birth * vol_birth * exp(phi - phi_birth).

    The phase-space volume of a sample shrinks like exp(-3 dphi) along the
    flow while f grows like exp(4 dphi).
    """
    return ensemble.f_birth * ensemble.vol_birth * np.exp(phi_here - ensemble.phi_birth)


def deposit(ensemble: Ensemble, weights: np.ndarray, grid: GridSpec, n_chunks: int = 1) -> np.ndarray:
    """Cloud-in-cell density of per-particle weights; returns (q, m, m, m) lattices / dx^3."""
    w = np.ascontiguousarray(weights.reshape(len(ensemble), -1))
    out, bad = kernels.scatter(np.ascontiguousarray(ensemble.x), w, grid.lo, 1.0 / grid.dx,
                               grid.cells_per_axis, int(n_chunks))
    if bad:
        raise CausalityError(f"causal domain violated: {bad} particle(s) outside the grid interior")
    return out / grid.dx**3


def phi_at_particles(ensemble: Ensemble, field: ScalarFieldState) -> np.ndarray:
    if len(ensemble) == 0:
        return np.zeros(0)
    return interpolate(field.phi[None], field.grid, ensemble.x)[:, 0]


def deposit_mu(ensemble: Ensemble, field: ScalarFieldState, grid: GridSpec,
               n_chunks: int = 1, phi_here: np.ndarray | None = None) -> SourceLattice:
    if len(ensemble) == 0:
        return SourceLattice(grid.zeros())
    if phi_here is None:
        phi_here = phi_at_particles(ensemble, field)
    w = particle_weights(ensemble, phi_here) / ensemble.gamma
    return SourceLattice(deposit(ensemble, w, grid, n_chunks)[0])


def step_wave(field: ScalarFieldState, source: SourceLattice, dt: float) -> ScalarFieldState:
    """Advance phi one leapfrog step of the sourced wave equation.

    The returned level carries a provisional dphi_dt (one-sided, second order);
    the centred value for a level becomes available one step later, see
    :func:`centered_dphi_dt`.
    """
    g = field.grid
    inv_dx2 = 1.0 / g.dx**2
    mu = source.mu
    if field.phi_prev is None:
        lap0 = kernels.laplacian(field.phi, inv_dx2)
        new = field.phi + dt * field.dphi_dt + 0.5 * dt * dt * (lap0 - mu)
        _zero_boundary(new)
    else:
        new = kernels.leapfrog(field.phi, field.phi_prev, mu, dt, inv_dx2)
    if not np.isfinite(new).all():
        raise InstabilityError("field blow-up or instability")
    lap1 = kernels.laplacian(new, inv_dx2)
    dphi = (new - field.phi) / dt + 0.5 * dt * (lap1 - mu)
    _zero_boundary(dphi)
    return ScalarFieldState(g, new, dphi, field.phi, field.time + dt)


def centered_dphi_dt(old: ScalarFieldState, new: ScalarFieldState) -> np.ndarray:
    """(phi^{n+1} - phi^{n-1}) / (2 dt) at the level of ``old``.

    On the initial level the Taylor bootstrap makes this exactly phi1.
    """
    if old.phi_prev is None:
        return old.dphi_dt
    dt = new.time - old.time
    return (new.phi - old.phi_prev) / (2.0 * dt)


class FieldSampler:
    """Interpolates (phi, dphi_dt, grad phi) from one field level.

    The gradient is the trilinear interpolant of node-centred differences.
    """

    def __init__(self, grid: GridSpec, phi: np.ndarray, dphi_dt: np.ndarray):
        self.grid = grid
        stack = np.empty((5,) + grid.shape)
        stack[0] = phi
        stack[1] = dphi_dt
        stack[2:] = gradient_lattice(phi, grid.dx)
        self.lattices = stack

    @classmethod
    def from_state(cls, field: ScalarFieldState) -> "FieldSampler":
        return cls(field.grid, field.phi, field.dphi_dt)

    @classmethod
    def midpoint(cls, old: ScalarFieldState, new: ScalarFieldState) -> "FieldSampler":
        """Time-centred field between two consecutive levels."""
        dt = new.time - old.time
        return cls(old.grid, 0.5 * (old.phi + new.phi), (new.phi - old.phi) / dt)

    def __call__(self, t, x):
        vals = interpolate(self.lattices, self.grid, x)
        return vals[..., 0], vals[..., 1], vals[..., 2:]


def sample_field(field: ScalarFieldState, grid: GridSpec, x):
    """(phi, dphi_dt, grad_phi) at x by trilinear interpolation."""
    return FieldSampler(grid, field.phi, field.dphi_dt)(field.time, x)


@lru_cache(maxsize=16)
def sphere_rule(order: int = 24):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), uniform in azimuth.

    Returns (directions (m, 3), weights (m,)) with weights summing to 1, i.e.
    a spherical-mean rule. Exact for spherical harmonics of degree < 2*order.
    """
    if order < 3:
        raise ValueError("order must be >= 3")
    u, wu = np.polynomial.legendre.leggauss(order)
    naz = 2 * order
    az = 2.0 * np.pi * (np.arange(naz) + 0.5) / naz
    s = np.sqrt(1.0 - u * u)
    dirs = np.stack(
        [np.outer(s, np.cos(az)), np.outer(s, np.sin(az)), np.outer(u, np.ones(naz))], axis=-1
    ).reshape(-1, 3)
    w = np.repeat(wu / 2.0, naz) / naz
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w


def spherical_mean(func, x, r: float, order: int = 24):
    """Mean of func over the sphere |y - x| = r."""
    dirs, w = sphere_rule(order)
    vals = func(np.asarray(x, dtype=float) + r * dirs)
    return np.tensordot(w, vals, axes=(0, 0))


def eval_phi_hom(phi0, phi1, t: float, x, order: int = 24) -> float:
    """Kirchhoff solution of the free wave equation with data (phi0, phi1)."""
    if t == 0.0:
        return float(phi0(np.asarray(x, dtype=float)))
    dirs, _ = sphere_rule(order)
    m1 = spherical_mean(phi1, x, t, order)
    m0 = spherical_mean(phi0, x, t, order)
    mr = spherical_mean(lambda y: np.einsum("ij,ij->i", phi0.gradient(y), dirs), x, t, order)
    return float(t * m1 + m0 + t * mr)


def eval_dtphi_hom(phi0, phi1, t: float, x, order: int = 24) -> float:
    """Time derivative of the Kirchhoff solution.

    d/dt [t M_t phi1] = M_t phi1 + t M_t (omega . grad phi1) and
    d/dt^2 [t M_t phi0] = t M_t (lap phi0), since t M_t phi0 itself solves the
    wave equation. ``phi0`` must provide ``laplacian`` and ``phi1`` ``gradient``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        return float(phi1(x))
    dirs, _ = sphere_rule(order)
    m1 = spherical_mean(phi1, x, t, order)
    mr = spherical_mean(lambda y: np.einsum("ij,ij->i", phi1.gradient(y), dirs), x, t, order)
    ml = spherical_mean(phi0.laplacian, x, t, order)
    return float(m1 + t * mr + t * ml)
