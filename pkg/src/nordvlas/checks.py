"""Self-checks shared by the command line and the test suite.

* identity sweeps over seeded random inputs,
* the momentum-ball ladder and spot values,
* refinement ladders for the wave solver and for energy conservation.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import identities as ids
from .field import SourceLattice, step_wave
from .state import GridSpec, RunConfig, ScalarFieldState

DEFAULT_SEED = 20240601


# --------------------------------------------------------------------------
# identity sweeps

def _random_unit(rng, n):
    w = rng.normal(size=(n, 3))
    return w / np.linalg.norm(w, axis=1)[:, None]


def _random_momenta(rng, n, p_max=10.0):
    d = _random_unit(rng, n)
    r = p_max * rng.random(n) ** (1.0 / 3.0)
    return d * r[:, None]


def identity_sweep(n_trials: int = 1000, seed: int = DEFAULT_SEED) -> dict:
    """Largest relative residual of every algebraic identity over random inputs.

    Each residual is divided by the sum of magnitudes of the terms that
    enter it, so 1e-15 means agreement to rounding.
    """
    rng = np.random.default_rng(seed)
    n = n_trials
    w = _random_unit(rng, n)
    p = _random_momenta(rng, n)
    g = rng.normal(size=(n, 3))
    dt = rng.normal(size=n)
    f = rng.random(n)
    v = p / np.sqrt(1.0 + np.sum(p * p, axis=1))[:, None]
    gam2 = 1.0 + np.sum(p * p, axis=1)
    wv = np.sum(w * v, axis=1)
    out = {}

    scale = np.abs(np.sum((w + v) * v, axis=1)) + np.abs(1.0 + wv) + 1.0 / gam2
    out["kernel_identity_1"] = float(np.max(np.abs(ids.kernel_identity_1(w, p)) / scale))
    s = w + v
    scale = np.sum(s * s, axis=1) + 2.0 * np.abs(1.0 + wv) + 1.0 / gam2
    out["kernel_identity_2"] = float(np.max(np.abs(ids.kernel_identity_2(w, p)) / scale))

    par, tr, res = ids.grad_decomposition(w, g)
    scale = np.linalg.norm(g, axis=1) + np.linalg.norm(par, axis=1) + np.linalg.norm(tr, axis=1)
    out["grad_decomposition"] = float(np.max(np.linalg.norm(res, axis=1) / scale))

    r1, r2 = ids.sphi_decomposition(dt, g, w, p)
    gn = np.linalg.norm(g, axis=1)
    scale = np.abs(dt) * (2.0 + 2.0 * np.abs(wv)) + 3.0 * gn + gn
    out["sphi_decomposition"] = float(np.max(np.maximum(np.abs(r1), np.abs(r2)) / scale))

    res, scale = ids.z_decomposition_residual(w, p, dt, g, f, return_scale=True)
    out["z_decomposition"] = float(np.max(res / scale))

    m0 = rng.random(n) * 5.0
    m1 = rng.normal(size=(n, 3))
    e, pflux = ids.energy_density_point((m0, m1), dt, g)
    res = ids.cone_integrand_expansion(e, pflux, w, (m0, m1), dt, g)
    scale = np.abs(e) + np.linalg.norm(pflux, axis=1) + m0 + np.linalg.norm(m1, axis=1) + dt**2 + gn**2
    out["cone_integrand_expansion"] = float(np.max(np.abs(res) / scale))

    vs = np.concatenate([np.linspace(0.0, 0.99, 100), rng.random(max(0, n - 100)) * 0.999])
    worst = 0.0
    for vm in vs:
        closed, quad, r = ids.angular_kernel(float(vm))
        worst = max(worst, abs(r) / closed)
    out["angular_kernel"] = worst
    return out


# --------------------------------------------------------------------------
# momentum-ball integrals

BAB_PAIRS = ((1.0, 0.0), (1.0, 0.5), (0.5, 0.0), (2.0, 0.5), (2.0, 0.0))
BAB_LADDER = (10.0, 1e2, 1e3, 1e4)


@dataclass
class BabReport:
    ratios: dict            # (a, b) -> ratios along the ladder
    spot_value: float       # B_00(2)
    spot_rel_error: float   # against 32 pi / 3

    @property
    def worst_rung(self) -> float:
        """Largest rung divided by the first rung, over all pairs."""
        return max(float(np.max(r) / r[0]) for r in self.ratios.values())

    @property
    def passed(self) -> bool:
        return self.worst_rung <= 2.0 and self.spot_rel_error <= 1e-8


def bab_report(pairs=BAB_PAIRS, ladder=BAB_LADDER) -> BabReport:
    ratios = {ab: ids.b_ab_bound_check(ab[0], ab[1], ladder) for ab in pairs}
    spot = ids.b_ab(2.0, 0.0, 0.0)
    exact = 32.0 * math.pi / 3.0
    return BabReport(ratios, spot, abs(spot - exact) / exact)


# --------------------------------------------------------------------------
# wave-solver ladder

def wave_profile(s, amplitude=1.0, width=0.4):
    """C^3 profile (1 - (s/width)^2)^4 on |s| < width."""
    u = np.clip(1.0 - (np.asarray(s) / width) ** 2, 0.0, None)
    return amplitude * u**4


def wave_profile_deriv(s, amplitude=1.0, width=0.4):
    s = np.asarray(s)
    u = np.clip(1.0 - (s / width) ** 2, 0.0, None)
    return amplitude * 4.0 * u**3 * (-2.0 * s / width**2)


def traveling_wave_error(cells: int, t_end: float = 0.5, half_width: float = 1.0,
                         shift: float = -0.25, cfl: float = 0.4, n_steps: int | None = None) -> float:
    """Max error of a plane wave g(x1 - t) after t_end on the nodes the x2/x3 faces cannot reach.

    The faces are pinned to zero while a plane wave is not. The grid
    smears that front across the light cone, so only nodes in the inner
    half of the causally safe band, |x2|, |x3| <= (half_width - t_end) / 2,
    are scored.
    """
    grid = GridSpec((0.0, 0.0, 0.0), half_width, cells)
    x1, x2, x3 = grid.coords()
    phi0 = np.broadcast_to(wave_profile(x1 - shift), grid.shape).copy()
    phi1 = np.broadcast_to(-wave_profile_deriv(x1 - shift), grid.shape).copy()
    for a in (phi0, phi1):
        a[0, :, :] = a[-1, :, :] = a[:, 0, :] = a[:, -1, :] = a[:, :, 0] = a[:, :, -1] = 0.0
    if n_steps is None:
        n_steps = math.ceil(t_end / (cfl * grid.dx / math.sqrt(3.0)))
    dt = t_end / n_steps
    source = SourceLattice(grid.zeros())
    field = ScalarFieldState(grid, phi0, phi1, None, 0.0)
    for _ in range(n_steps):
        field = step_wave(field, source, dt)
    exact = wave_profile(x1 - shift - t_end)
    safe = 0.5 * (half_width - t_end)
    mask = (np.abs(x2) <= safe) & (np.abs(x3) <= safe) & np.ones_like(x1, dtype=bool)
    err = np.abs(field.phi - exact)
    return float(np.max(err[mask]))


@dataclass
class LadderReport:
    levels: list     # resolution labels
    errors: list

    @property
    def orders(self) -> list:
        return [math.log2(a / b) if a > 0 and b > 0 else math.nan
                for a, b in zip(self.errors[:-1], self.errors[1:])]

    @property
    def fitted_order(self) -> float:
        if not all(e > 0 for e in self.errors):
            return math.nan
        h = np.log2([lv / self.levels[0] for lv in self.levels])
        return float(-np.polyfit(h, np.log2(self.errors), 1)[0])

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.errors[:-1], self.errors[1:]))


def wave_ladder(levels=(24, 48, 96, 192), t_end: float = 0.5) -> LadderReport:
    """Traveling-wave errors with dx and dt halved together."""
    base = math.ceil(t_end / (0.4 * (2.0 / levels[0]) / math.sqrt(3.0)))
    errs = [traveling_wave_error(c, t_end, n_steps=base * c // levels[0]) for c in levels]
    return LadderReport(list(levels), errs)


# --------------------------------------------------------------------------
# energy ladder

ENERGY_LEVELS = ((32, 8, 8), (48, 12, 12), (64, 16, 16))


def ladder_config(cfg: RunConfig, cells: int, nx: int, np_: int) -> RunConfig:
    """Copy of ``cfg`` at another resolution, with the commensurate causal box and auto dt."""
    from .io import auto_half_width

    hw = auto_half_width(cfg.data, cfg.grid.center, cfg.t_end, cells, nx)
    grid = GridSpec(cfg.grid.center, hw, cells)
    dt_max = cfg.cfl_safety * grid.dx / math.sqrt(3.0)
    dt = cfg.t_end / max(1, math.ceil(cfg.t_end / dt_max - 1e-9))
    return dataclasses.replace(cfg, grid=grid, dt=dt, nx_per_axis=nx, np_per_axis=np_,
                               history_t_max=0.0)


def energy_drift(cfg: RunConfig, n_threads: int = 1) -> float:
    """Largest relative energy drift over the run."""
    from .simulation import Simulation

    sim = Simulation(cfg, n_threads=n_threads)
    worst = 0.0
    for level in sim.iterate():
        worst = max(worst, level.record.energy_drift_rel)
    return worst


def energy_ladder(cfg: RunConfig, levels=ENERGY_LEVELS, n_threads: int = 1,
                  known: dict | None = None) -> LadderReport:
    """Energy drift on a ladder of (cells, nx, np); ``known`` maps cells to a drift already measured."""
    known = known or {}
    drifts = []
    for cells, nx, np_ in levels:
        if cells in known:
            drifts.append(known[cells])
        else:
            drifts.append(energy_drift(ladder_config(cfg, cells, nx, np_), n_threads))
    return LadderReport([lv[0] for lv in levels], drifts)


__all__ = [
    "identity_sweep", "bab_report", "BabReport", "traveling_wave_error", "wave_ladder",
    "energy_ladder", "energy_drift", "ladder_config", "LadderReport", "DEFAULT_SEED",
]
