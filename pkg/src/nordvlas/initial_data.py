"""Compactly supported initial data and their deterministic particle sampling.

All profiles are radial polynomial bumps ``A * (1 - |x - c|^2 / R^2)^k`` on
the ball of radius R, zero outside. The exponent fixes the smoothness class:
k = 4 gives C^3 (used for f0 and phi0), k = 3 gives C^2 (phi1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import Ensemble, GridSpec

F0_POWER = 4
PHI0_POWER = 4
PHI1_POWER = 3


@dataclass(frozen=True)
class Bump:
    amplitude: float
    radius: float
    center: tuple = (0.0, 0.0, 0.0)
    power: int = 4

    def _s(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return np.sum(d * d, axis=-1) / self.radius**2, d

    def __call__(self, x):
        s, _ = self._s(x)
        return self.amplitude * np.where(s < 1.0, np.clip(1.0 - s, 0.0, None) ** self.power, 0.0)

    def gradient(self, x):
        s, d = self._s(x)
        k = self.power
        dq = np.where(s < 1.0, -k * np.clip(1.0 - s, 0.0, None) ** (k - 1), 0.0)
        return (self.amplitude * dq * 2.0 / self.radius**2)[..., None] * d

    def laplacian(self, x):
        s, _ = self._s(x)
        k = self.power
        one = np.clip(1.0 - s, 0.0, None)
        inside = s < 1.0
        dq = np.where(inside, -k * one ** (k - 1), 0.0)
        d2q = np.where(inside, k * (k - 1) * one ** (k - 2), 0.0)
        r2 = s * self.radius**2
        return self.amplitude * (d2q * 4.0 * r2 / self.radius**4 + dq * 6.0 / self.radius**2)

    def reach(self, origin) -> float:
        """Largest distance from ``origin`` to a point of the support (0 if identically zero)."""
        if self.amplitude == 0.0:
            return 0.0
        return float(np.linalg.norm(np.asarray(self.center) - np.asarray(origin))) + self.radius


@dataclass(frozen=True)
class DataParams:
    A_f: float = 0.0
    R_x: float = 1.0
    R_p: float = 1.0
    A_phi: float = 0.0
    R_phi: float = 1.0
    A_pi: float = 0.0
    R_pi: float = 1.0
    x_off: tuple = (0.0, 0.0, 0.0)
    phi_off: tuple = (0.0, 0.0, 0.0)
    pi_off: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("R_x", "R_p", "R_phi", "R_pi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("A_f", "A_phi", "A_pi"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.A_f < 0:
            raise ValueError("A_f must be non-negative")
        for name in ("x_off", "phi_off", "pi_off"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @property
    def rho_x(self) -> Bump:
        """Spatial factor of f0 (carries the amplitude)."""
        return Bump(self.A_f, self.R_x, self.x_off, F0_POWER)

    @property
    def rho_p(self) -> Bump:
        """Momentum factor of f0 (unit amplitude)."""
        return Bump(1.0, self.R_p, (0.0, 0.0, 0.0), F0_POWER)

    @property
    def phi0(self) -> Bump:
        return Bump(self.A_phi, self.R_phi, self.phi_off, PHI0_POWER)

    @property
    def phi1(self) -> Bump:
        return Bump(self.A_pi, self.R_pi, self.pi_off, PHI1_POWER)

    def support_reach(self, origin) -> float:
        return max(self.rho_x.reach(origin), self.phi0.reach(origin), self.phi1.reach(origin))

    def vacuum(self) -> "DataParams":
        """Same field data, no matter."""
        from dataclasses import replace

        return replace(self, A_f=0.0)


def f0_eval(x, p, params: DataParams):
    return params.rho_x(x) * params.rho_p(p)


def phi0_eval(x, params: DataParams):
    return params.phi0(x)


def phi1_eval(x, params: DataParams):
    return params.phi1(x)


def bump_l2_squared(bump: Bump) -> float:
    """Closed form of the integral of bump^2 over R^3 (Beta function)."""
    from scipy.special import beta

    k2 = 2 * bump.power
    return bump.amplitude**2 * 4.0 * np.pi * bump.radius**3 * 0.5 * beta(1.5, k2 + 1)


def bump_integral(bump: Bump, weight=None) -> float:
    """Integral of the bump over R^3, optionally with a radial weight w(r)."""
    from scipy.integrate import quad

    w = weight or (lambda r: 1.0)
    val, _ = quad(
        lambda r: 4.0 * np.pi * r * r * (1.0 - (r / bump.radius) ** 2) ** bump.power * w(r),
        0.0, bump.radius, epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return bump.amplitude * val


def _midpoints(center: float, radius: float, n: int) -> np.ndarray:
    h = 2.0 * radius / n
    return center - radius + h * (np.arange(n) + 0.5)


def sample_ensemble(params: DataParams, nx_per_axis: int, np_per_axis: int,
                    grid: GridSpec | None = None) -> Ensemble:
    """Midpoint-rule lattice over supp f0, dropping points where f0 vanishes.

    Ordering is x-major, then p, both in C order, so identical inputs give
    bit-identical ensembles.
    """
    if nx_per_axis < 4 or np_per_axis < 4:
        raise ValueError("sampling needs at least 4 points per axis")
    if params.A_f == 0.0:
        return Ensemble.empty()

    ax = [_midpoints(params.x_off[i], params.R_x, nx_per_axis) for i in range(3)]
    ap = [_midpoints(0.0, params.R_p, np_per_axis) for _ in range(3)]
    xs = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
    ps = np.stack(np.meshgrid(*ap, indexing="ij"), axis=-1).reshape(-1, 3)
    fx = params.rho_x(xs)
    fp = params.rho_p(ps)
    keep_x = fx > 0
    keep_p = fp > 0
    xs, fx = xs[keep_x], fx[keep_x]
    ps, fp = ps[keep_p], fp[keep_p]
    nxk, npk = len(xs), len(ps)

    x = np.repeat(xs, npk, axis=0)
    p = np.tile(ps, (nxk, 1))
    f_birth = np.outer(fx, fp).ravel()
    phi_birth = np.repeat(params.phi0(xs), npk)
    vol = (2.0 * params.R_x / nx_per_axis) ** 3 * (2.0 * params.R_p / np_per_axis) ** 3
    vol_birth = np.full(f_birth.shape, vol)

    if grid is not None and len(x) and not grid.is_interior(xs).all():
        raise ValueError("support of f0 is not inside the grid interior")
    return Ensemble(x, p, f_birth, phi_birth, vol_birth, x.copy(), p.copy(), 0.0)
