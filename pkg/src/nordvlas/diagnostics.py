"""Energy bookkeeping, support suprema, and the past-light-cone checks
(null-cone energy identity and the dt(phi) representation).

Cone integrals use concentric spherical shells of thickness dx/2 around the
vertex. Shell k is sampled on an area-uniform point set at its mid radius,
at retarded time t - r (the innermost shell is frozen at the vertex time),
and weighted with the exact radial integral of r^(2 - kernel_power).
Values between stored history slices are interpolated linearly in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate

from .field import (
    SourceLattice,
    deposit,
    eval_dtphi_hom,
    interpolate,
    particle_weights,
    phi_at_particles,
    spherical_mean,
)
from .identities import cone_integrand_expansion  # noqa: F401  (re-exported)
from .state import (
    CausalityError,
    Ensemble,
    FieldHistory,
    GridSpec,
    ScalarFieldState,
    gradient_lattice,
    reconstruct_f,
)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class EnergyLattices:
    e_kin: np.ndarray
    e_field: np.ndarray
    pflux: np.ndarray  # (3, m, m, m)

    @property
    def e(self) -> np.ndarray:
        return self.e_kin + self.e_field


def energy_lattices(ensemble: Ensemble, field_state: ScalarFieldState, grid: GridSpec,
                    n_chunks: int = 1, phi_here=None) -> EnergyLattices:
    """Energy density e and momentum density pflux on the nodes.

    Kinetic parts are CIC deposits of f V gamma and f V p; field parts use
    node values of dphi_dt and central-difference gradients.
    """
    grad = gradient_lattice(field_state.phi, grid.dx)
    dtphi = field_state.dphi_dt
    e_field = 0.5 * dtphi**2 + 0.5 * np.sum(grad * grad, axis=0)
    pflux = -dtphi[None] * grad
    if len(ensemble):
        if phi_here is None:
            phi_here = phi_at_particles(ensemble, field_state)
        fv = particle_weights(ensemble, phi_here)
        w = np.empty((len(ensemble), 4))
        w[:, 0] = fv * ensemble.gamma
        w[:, 1:] = fv[:, None] * ensemble.p
        kin = deposit(ensemble, w, grid, n_chunks)
        e_kin = kin[0]
        pflux = pflux + kin[1:]
    else:
        e_kin = grid.zeros()
    return EnergyLattices(e_kin, e_field, pflux)


def total_energy(energy: EnergyLattices, grid: GridSpec):
    """(total, kinetic, field) by midpoint sums over the nodes."""
    vol = grid.dx**3
    kinetic = float(np.sum(energy.e_kin) * vol)
    field_part = float(np.sum(energy.e_field) * vol)
    return kinetic + field_part, kinetic, field_part


@dataclass
class SupportTracker:
    """Running suprema over the support of f.

    ``P_max`` = sup e^phi sqrt(1 + |p|^2), ``Ptilde_max`` = sup |p|, plus the
    running extremes of e^{+-phi} over occupied positions used by the
    equivalence inequalities. All zero for an empty ensemble.
    """

    P_max: float = 0.0
    Ptilde_max: float = 0.0
    exp_phi_max: float = 0.0
    exp_mphi_max: float = 0.0

    def update(self, ensemble: Ensemble, phi_here: np.ndarray):
        if len(ensemble):
            live = reconstruct_f(ensemble, phi_here) > 0
            if live.any():
                ph = phi_here[live]
                gamma = ensemble.gamma[live]
                pm = np.sqrt(np.maximum(gamma**2 - 1.0, 0.0))
                self.P_max = max(self.P_max, float(np.max(np.exp(ph) * gamma)))
                self.Ptilde_max = max(self.Ptilde_max, float(np.max(pm)))
                self.exp_phi_max = max(self.exp_phi_max, float(np.exp(ph.max())))
                self.exp_mphi_max = max(self.exp_mphi_max, float(np.exp(-ph.min())))
        return self.P_max, self.Ptilde_max

    def equivalence_holds(self, rtol: float = 1e-12) -> bool:
        """P <= max e^phi sqrt(1 + Ptilde^2) and Ptilde <= max e^-phi P."""
        a = self.P_max <= self.exp_phi_max * math.sqrt(1.0 + self.Ptilde_max**2) * (1 + rtol)
        b = self.Ptilde_max <= self.exp_mphi_max * self.P_max * (1 + rtol)
        return a and b


def support_suprema(ensemble: Ensemble, field_state: ScalarFieldState, tracker: SupportTracker | None = None):
    """(P_max, Ptilde_max) including the current snapshot."""
    tracker = tracker if tracker is not None else SupportTracker()
    phi_here = phi_at_particles(ensemble, field_state)
    return tracker.update(ensemble, phi_here)


def char_invariant_residual(ensemble: Ensemble, phi_here: np.ndarray) -> float:
    """max |e^{-4 phi} f - f_birth e^{-4 phi_birth}|, relative to the largest birth value."""
    if len(ensemble) == 0:
        return 0.0
    f = reconstruct_f(ensemble, phi_here)
    birth = ensemble.f_birth * np.exp(-4.0 * ensemble.phi_birth)
    scale = float(np.max(birth))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(np.exp(-4.0 * phi_here) * f - birth)) / scale)


# --------------------------------------------------------------------------
# cone quadrature

def fibonacci_sphere(n: int) -> np.ndarray:
    """n area-uniform unit vectors (golden-angle spiral)."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    az = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.stack([r * np.cos(az), r * np.sin(az), z], axis=-1)


@dataclass(frozen=True)
class Shell:
    r: float       # evaluation radius
    s: float       # retarded time
    dirs: np.ndarray
    r_in: float
    r_out: float

    def weight(self, kernel_power: int) -> float:
        """4 pi * int r^(2 - k) dr over the shell, shared equally by its points."""
        q = 3 - kernel_power
        return FOUR_PI * (self.r_out**q - self.r_in**q) / q / len(self.dirs)


def cone_shells(t: float, dx: float, points_per_area: float = 1.0):
    """Shell decomposition of the ball |y - x| <= t, thickness dx/2."""
    h = 0.5 * dx
    n = max(1, int(math.ceil(t / h - 1e-9)))
    edges = np.minimum(h * np.arange(n + 1), t)
    shells = []
    for i in range(n):
        r_in, r_out = float(edges[i]), float(edges[i + 1])
        r = 0.5 * (r_in + r_out)
        npts = max(16, int(math.ceil(points_per_area * FOUR_PI * r * r / (h * h))))
        s = t if i == 0 else t - r
        shells.append(Shell(r, s, fibonacci_sphere(npts), r_in, r_out))
    return shells


class HistoryInterpolator:
    """Lazily builds per-slice lattice stacks and interpolates them in space and time."""

    def __init__(self, history: FieldHistory, builder, grid: GridSpec | None = None):
        self.history = history
        self.builder = builder
        self.grid = grid or history.grid
        self._cache = {}

    def _stack(self, j):
        if j not in self._cache:
            if len(self._cache) >= 4:  # shells sweep time monotonically
                self._cache.pop(next(iter(self._cache)))
            self._cache[j] = np.ascontiguousarray(self.builder(self.history.slices[j]))
        return self._cache[j]

    def __call__(self, s, y):
        j0, j1, theta = self.history.bracket(s)
        v0 = interpolate(self._stack(j0), self.grid, y)
        if theta == 0.0 or j0 == j1:
            return v0
        v1 = interpolate(self._stack(j1), self.grid, y)
        return (1.0 - theta) * v0 + theta * v1


def _check_cone(t, x, history: FieldHistory, grid: GridSpec):
    if not history.covers(t):
        raise ValueError(f"insufficient history: need [0, {t}]")
    x = np.asarray(x, dtype=float)
    lo = grid.lo + grid.dx
    hi = grid.lo + 2 * grid.half_width - grid.dx
    if np.any(x - t < lo - 1e-12) or np.any(x + t > hi + 1e-12):
        raise CausalityError("cone exits grid")
    return x


def null_cone_check(t: float, x, history: FieldHistory, grid: GridSpec):
    """Both sides of the null-cone energy identity in volume form.

    lhs = int_{|x-y|<=t} (e + pflux . omega)(t - |x-y|, y) dy,
    rhs = int_{|x-y|<=t} e(0, y) dy. Returns (lhs, rhs, relative residual).
    """
    if t == 0.0:
        return 0.0, 0.0, 0.0
    x = _check_cone(t, x, history, grid)

    def build(sl):
        return np.concatenate([sl.e[None], sl.pflux], axis=0)

    interp = HistoryInterpolator(history, build, grid)
    lhs = 0.0
    rhs = 0.0
    base = build(history.slices[0])
    for sh in cone_shells(t, grid.dx):
        y = x + sh.r * sh.dirs
        v = interp(sh.s, y)
        w = sh.weight(0)
        lhs += w * float(np.sum(v[:, 0] + np.sum(v[:, 1:] * sh.dirs, axis=1)))
        rhs += w * float(np.sum(interpolate(base[:1], grid, y)[:, 0]))
    if rhs == 0.0:
        return lhs, rhs, 0.0 if lhs == 0.0 else math.inf
    return lhs, rhs, abs(lhs - rhs) / abs(rhs)


# --------------------------------------------------------------------------
# dt(phi) representation

@njit(cache=True)
def _cone_moment_scatter(pos, p, w, lo, inv_dx, n_cells, vertex, box0, nb, out):
    # out: (6, nb, nb, nb) = M1, M2, M3, M5x, M5y, M5z for nodes box0 + [0, nb)
    dx = 1.0 / inv_dx
    for n in range(pos.shape[0]):
        ux = (pos[n, 0] - lo[0]) * inv_dx
        uy = (pos[n, 1] - lo[1]) * inv_dx
        uz = (pos[n, 2] - lo[2]) * inv_dx
        i0 = int(np.floor(ux))
        j0 = int(np.floor(uy))
        k0 = int(np.floor(uz))
        if i0 + 1 < box0[0] or j0 + 1 < box0[1] or k0 + 1 < box0[2]:
            continue
        if i0 >= box0[0] + nb or j0 >= box0[1] + nb or k0 >= box0[2] + nb:
            continue
        fr = (ux - i0, uy - j0, uz - k0)
        gam = np.sqrt(1.0 + p[n, 0] ** 2 + p[n, 1] ** 2 + p[n, 2] ** 2)
        v0 = p[n, 0] / gam
        v1 = p[n, 1] / gam
        v2 = p[n, 2] / gam
        for a in range(2):
            ia = i0 + a - box0[0]
            if ia < 0 or ia >= nb:
                continue
            wa = fr[0] if a else 1.0 - fr[0]
            for b in range(2):
                jb = j0 + b - box0[1]
                if jb < 0 or jb >= nb:
                    continue
                wb = fr[1] if b else 1.0 - fr[1]
                for c in range(2):
                    kc = k0 + c - box0[2]
                    if kc < 0 or kc >= nb:
                        continue
                    wc = fr[2] if c else 1.0 - fr[2]
                    wt = w[n] * wa * wb * wc
                    if wt == 0.0:
                        continue
                    d0 = lo[0] + (i0 + a) * dx - vertex[0]
                    d1 = lo[1] + (j0 + b) * dx - vertex[1]
                    d2 = lo[2] + (k0 + c) * dx - vertex[2]
                    r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                    if r < 1e-12 * dx:
                        d0 = pos[n, 0] - vertex[0]
                        d1 = pos[n, 1] - vertex[1]
                        d2 = pos[n, 2] - vertex[2]
                        r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                        if r == 0.0:
                            d0, d1, d2, r = 0.0, 0.0, 1.0, 1.0
                    o0 = d0 / r
                    o1 = d1 / r
                    o2 = d2 / r
                    ov = o0 * v0 + o1 * v1 + o2 * v2
                    cc = 1.0 + ov
                    base = wt / (gam * cc)
                    out[0, ia, jb, kc] += base
                    out[1, ia, jb, kc] += wt / (gam**3 * cc * cc)
                    out[2, ia, jb, kc] += base * ov
                    out[3, ia, jb, kc] += base * (o1 * v2 - o2 * v1)
                    out[4, ia, jb, kc] += base * (o2 * v0 - o0 * v2)
                    out[5, ia, jb, kc] += base * (o0 * v1 - o1 * v0)


@dataclass
class ConeMomentHistory:
    """Direction-dependent momentum moments of f recorded around one cone vertex.

    At every recorded level the moments
    M1 = int f / (gamma c) dp, M2 = int f / (gamma^3 c^2) dp,
    M3 = int (omega . p_hat) f / (gamma c) dp, M5 = int (omega ^ p_hat) f / (gamma c) dp,
    with c = 1 + omega . p_hat and omega the unit vector from the vertex to the
    node, are deposited (cloud-in-cell, from the particles) on a cubic box of
    nodes that contains the whole cone.
    """

    vertex: np.ndarray
    t_vertex: float
    grid: GridSpec
    box: GridSpec = None
    box0: np.ndarray = None
    times: list = field(default_factory=list)
    moments: list = field(default_factory=list)

    def __post_init__(self):
        g = self.grid
        self.vertex = np.asarray(self.vertex, dtype=float)
        c_idx = np.rint((self.vertex - g.lo) / g.dx).astype(np.int64)
        k = max(4, int(math.ceil(self.t_vertex / g.dx)) + 3)
        self.box0 = c_idx - k
        if np.any(self.box0 < 0) or np.any(c_idx + k > g.cells_per_axis):
            raise CausalityError("cone exits grid")
        self.box = GridSpec(tuple(g.lo + c_idx * g.dx), k * g.dx, 2 * k)

    def wants(self, t: float) -> bool:
        """True until a level at or beyond the vertex time has been recorded."""
        return not self.times or self.times[-1] < self.t_vertex - 1e-12

    def record(self, t: float, ensemble: Ensemble, phi_here: np.ndarray) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("times must increase")
        nb = self.box.nodes
        out = np.zeros((6, nb, nb, nb))
        if len(ensemble):
            w = particle_weights(ensemble, phi_here)
            g = self.grid
            _cone_moment_scatter(np.ascontiguousarray(ensemble.x), np.ascontiguousarray(ensemble.p),
                                 w, g.lo, 1.0 / g.dx, g.cells_per_axis, self.vertex, self.box0, nb, out)
            out /= g.dx**3
        self.times.append(float(t))
        self.moments.append(out)

    def as_history(self) -> FieldHistory:
        """View as a FieldHistory-like sequence usable by the interpolators."""
        return _MomentSeq(self)


class _MomentSeq(FieldHistory):
    def __init__(self, mh: ConeMomentHistory):
        super().__init__(stride=1, slices=[_MomentSlice(t, m) for t, m in zip(mh.times, mh.moments)])


@dataclass(frozen=True)
class _MomentSlice:
    time: float
    moments: np.ndarray


def _data_momentum_factor(params) -> float:
    """int q_p(|p|^2) / (gamma (1 + omega . p_hat)) dp, which does not depend on omega."""
    Rp = params.R_p
    k = params.rho_p.power

    def radial(r):
        gam = math.hypot(1.0, r)
        v = r / gam
        ang = 2.0 if v == 0.0 else math.log1p(2.0 * v / (1.0 - v)) / v
        return 2.0 * math.pi * r * r * (1.0 - (r / Rp) ** 2) ** k / gam * ang

    val, _ = integrate.quad(radial, 0.0, Rp, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def data_surface_term(t: float, x, params, order: int = 24) -> float:
    """-(1/(4 pi t)) int_{|x-y|=t} int f0(y,p) / (1 + omega . p_hat) dp / gamma dS_y."""
    if t == 0.0 or params.A_f == 0.0:
        return 0.0
    mean_rho = float(spherical_mean(params.rho_x, x, t, order))
    return -t * mean_rho * _data_momentum_factor(params)


@dataclass
class RepresentationResult:
    t: float
    x: np.ndarray
    value_repr: float
    value_grid: float
    Z: np.ndarray          # Z0..Z5
    D_term: float          # dt(phi_hom) plus the data surface term
    dtphi_hom: float

    @property
    def rel_error(self) -> float:
        return abs(self.value_repr - self.value_grid) / max(abs(self.value_grid), 0.1)


def grid_value(history: FieldHistory, t: float, x, which: str = "dphi_dt") -> float:
    interp = HistoryInterpolator(history, lambda sl: getattr(sl.field, which)[None])
    return float(interp(t, np.asarray(x, dtype=float)[None])[0, 0])


def dtphi_representation(t: float, x, history: FieldHistory, moments: ConeMomentHistory | None,
                         params, order: int = 24) -> RepresentationResult:
    """Rebuild dt(phi)(t, x) from the data term plus the six cone integrals Z0..Z5.

    Every term carries the Kirchhoff factor 1/(4 pi). ``moments`` may be None
    only when f0 vanishes, in which case the Z terms are zero by definition.
    """
    x = np.asarray(x, dtype=float)
    grid = history.grid
    if t > 0.0:
        _check_cone(t, x, history, grid)
        slices_in = np.sum(history.times <= t + 1e-12)
        if slices_in < 8:
            raise ValueError(f"insufficient history: {slices_in} slices cover [0, {t}], need >= 8")
    hom = eval_dtphi_hom(params.phi0, params.phi1, t, x, order)
    d_term = hom + data_surface_term(t, x, params, order)
    z = np.zeros(6)
    if t > 0.0 and moments is None and params.A_f != 0.0:
        raise ValueError("moment history required when f0 is non-zero")
    if t > 0.0 and moments is not None:
        if abs(moments.t_vertex - t) > 1e-12 or np.any(np.abs(moments.vertex - x) > 1e-12):
            raise ValueError("moment history was recorded for a different vertex")
        dx = grid.dx

        def build(sl):
            g = gradient_lattice(sl.field.phi, dx)
            return np.concatenate([sl.mu[None], sl.field.dphi_dt[None], g], axis=0)

        fld = HistoryInterpolator(history, build, grid)
        mom = HistoryInterpolator(moments.as_history(), lambda sl: sl.moments, moments.box)
        for sh in cone_shells(t, dx):
            w = sh.dirs
            y = x + sh.r * w
            a = fld(sh.s, y)
            m = mom(sh.s, y)
            mu, dtphi, gr = a[:, 0], a[:, 1], a[:, 2:]
            d = dtphi - np.sum(w * gr, axis=1)
            cross = np.cross(w, gr)
            w1 = sh.weight(1)
            w2 = sh.weight(2)
            z[0] += w1 * np.sum(-2.0 * dtphi * mu)
            z[1] += w2 * np.sum(m[:, 0])
            z[2] += w2 * np.sum(-m[:, 1])
            z[3] += w1 * np.sum(2.0 * d * m[:, 2])
            z[4] += w1 * np.sum(d * m[:, 1])
            z[5] += w1 * np.sum(-2.0 * np.sum(cross * m[:, 3:], axis=1))
        z /= FOUR_PI
    value_repr = d_term + float(np.sum(z))
    value_grid = grid_value(history, t, x)
    return RepresentationResult(t, x, value_repr, value_grid, z, d_term, hom)


def energy_l2_norms(field_state: ScalarFieldState):
    """Discrete L2 norms of dt(phi) and grad(phi)."""
    g = field_state.grid
    vol = g.dx**3
    grad = gradient_lattice(field_state.phi, g.dx)
    return (float(np.sqrt(np.sum(field_state.dphi_dt**2) * vol)),
            float(np.sqrt(np.sum(grad * grad) * vol)))


__all__ = [
    "EnergyLattices", "energy_lattices", "total_energy", "SupportTracker", "support_suprema",
    "char_invariant_residual", "null_cone_check", "cone_integrand_expansion", "ConeMomentHistory",
    "dtphi_representation", "RepresentationResult", "data_surface_term", "cone_shells",
    "energy_l2_norms", "SourceLattice",
]
