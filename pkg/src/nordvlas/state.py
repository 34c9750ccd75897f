"""Shared data model: grids, field states, particles, histories and run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np


class CausalityError(RuntimeError):
    """A particle or a cone left the region where the grid is trustworthy."""


class InstabilityError(RuntimeError):
    """Non-finite values appeared in the field."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centred cubic lattice on [center - half_width, center + half_width]^3.

    There are ``cells_per_axis + 1`` nodes per axis; node ``i`` sits at
    ``lo + i * dx``.
    """

    center: tuple = (0.0, 0.0, 0.0)
    half_width: float = 1.0
    cells_per_axis: int = 16

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("center must be a 3-vector")
        n = int(self.cells_per_axis)
        if n < 8 or n % 2:
            raise ValueError(f"cells_per_axis must be even and >= 8, got {n}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.cells_per_axis

    @property
    def nodes(self) -> int:
        return self.cells_per_axis + 1

    @property
    def shape(self) -> tuple:
        return (self.nodes,) * 3

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_width

    @property
    def center_index(self) -> tuple:
        m = self.cells_per_axis // 2
        return (m, m, m)

    def axis(self, i: int) -> np.ndarray:
        return self.lo[i] + self.dx * np.arange(self.nodes)

    def coords(self) -> tuple:
        """Broadcastable node coordinate arrays (X, Y, Z)."""
        return np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij", sparse=True)

    def node_position(self, idx) -> np.ndarray:
        return self.lo + self.dx * np.asarray(idx, dtype=float)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def is_interior(self, x, margin_cells: float = 1.0) -> np.ndarray:
        """True where ``x`` lies at least ``margin_cells`` cells inside every face."""
        u = (np.asarray(x, dtype=float) - self.lo) / self.dx
        ok = (u >= margin_cells) & (u <= self.cells_per_axis - margin_cells)
        return np.all(ok, axis=-1)


@dataclass(frozen=True)
class ScalarFieldState:
    """Lattice values of phi and its time derivative at one time level.

    ``phi_prev`` is phi one step earlier (None on the initial level, where the
    first step is bootstrapped from ``dphi_dt``).
    """

    grid: GridSpec
    phi: np.ndarray
    dphi_dt: np.ndarray
    phi_prev: Optional[np.ndarray] = None
    time: float = 0.0

    def __post_init__(self):
        for name in ("phi", "dphi_dt", "phi_prev"):
            a = getattr(self, name)
            if a is not None and a.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {a.shape}, grid needs {self.grid.shape}")

    def with_dphi_dt(self, dphi_dt: np.ndarray) -> "ScalarFieldState":
        return replace(self, dphi_dt=dphi_dt)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.phi).all() and np.isfinite(self.dphi_dt).all())


@dataclass
class PhaseParticle:
    """One weighted sample of f, with the data needed to rebuild f along its path."""

    x: np.ndarray
    p: np.ndarray
    f_birth: float
    phi_birth: float
    vol_birth: float
    x_birth: np.ndarray
    p_birth: np.ndarray

    def __post_init__(self):
        if self.f_birth < 0:
            raise ValueError("f_birth must be non-negative")
        if not self.vol_birth > 0:
            raise ValueError("vol_birth must be positive")


@dataclass
class Ensemble:
    """Structure-of-arrays particle population.

    Arrays: ``x``, ``p``, ``x_birth``, ``p_birth`` are (n, 3); ``f_birth``,
    ``phi_birth``, ``vol_birth`` are (n,).
    """

    x: np.ndarray
    p: np.ndarray
    f_birth: np.ndarray
    phi_birth: np.ndarray
    vol_birth: np.ndarray
    x_birth: np.ndarray
    p_birth: np.ndarray
    time: float = 0.0

    @classmethod
    def empty(cls) -> "Ensemble":
        v3 = np.zeros((0, 3))
        v1 = np.zeros(0)
        return cls(v3, v3.copy(), v1, v1.copy(), v1.copy(), v3.copy(), v3.copy())

    def __len__(self) -> int:
        return self.f_birth.shape[0]

    def particle(self, i: int) -> PhaseParticle:
        return PhaseParticle(
            self.x[i].copy(), self.p[i].copy(), float(self.f_birth[i]), float(self.phi_birth[i]),
            float(self.vol_birth[i]), self.x_birth[i].copy(), self.p_birth[i].copy(),
        )

    def copy(self) -> "Ensemble":
        return Ensemble(
            self.x.copy(), self.p.copy(), self.f_birth, self.phi_birth, self.vol_birth,
            self.x_birth, self.p_birth, self.time,
        )

    @property
    def gamma(self) -> np.ndarray:
        return np.sqrt(1.0 + np.einsum("ij,ij->i", self.p, self.p))


@dataclass(frozen=True)
class HistorySlice:
    time: float
    field: ScalarFieldState
    mu: np.ndarray
    e: np.ndarray
    pflux: np.ndarray


@dataclass
class FieldHistory:
    """Every ``stride``-th completed time level, oldest first."""

    stride: int = 1
    slices: list = field(default_factory=list)

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be a positive integer")

    def append(self, item: HistorySlice) -> None:
        if self.slices and not item.time > self.slices[-1].time:
            raise ValueError("history times must be strictly increasing")
        self.slices.append(item)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.slices])

    @property
    def grid(self) -> GridSpec:
        return self.slices[0].field.grid

    def covers(self, t: float) -> bool:
        if not self.slices:
            return False
        return self.slices[0].time <= 1e-12 and self.slices[-1].time >= t - 1e-12

    def bracket(self, t: float) -> tuple:
        """Indices (j, j+1) and blend weight for linear interpolation at time ``t``."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"time {t} outside recorded history [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return 0, 0, 0.0
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        theta = (t - times[j]) / (times[j + 1] - times[j])
        return j, j + 1, float(np.clip(theta, 0.0, 1.0))


DIAGNOSTIC_COLUMNS = (
    "time",
    "total_energy",
    "kinetic_energy",
    "field_energy",
    "P_max",
    "Ptilde_max",
    "phi_min",
    "phi_max",
    "char_invariant_residual_max",
    "energy_drift_rel",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    total_energy: float
    kinetic_energy: float
    field_energy: float
    P_max: float
    Ptilde_max: float
    phi_min: float
    phi_max: float
    char_invariant_residual_max: float
    energy_drift_rel: float

    def as_row(self) -> tuple:
        return tuple(getattr(self, c) for c in DIAGNOSTIC_COLUMNS)


@dataclass
class RunConfig:
    grid: GridSpec
    data: "DataParams"  # noqa: F821  (initial_data.DataParams)
    t_end: float
    dt: float
    cfl_safety: float = 0.4
    nx_per_axis: int = 16
    np_per_axis: int = 16
    history_stride: int = 1
    history_t_max: Optional[float] = None
    output_every: int = 1
    snapshot_every: int = 0
    out_dir: Path = Path("out")
    seed: int = 0

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def validate(self) -> None:
        """Raise ValueError naming the violated bound."""
        g = self.grid
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        bound = self.cfl_safety * g.dx / np.sqrt(3.0)
        if not self.dt > 0 or self.dt > bound * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt!r} violates the CFL bound dt <= cfl_safety*dx/sqrt(3) = {bound!r}"
            )
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        reach = self.data.support_reach(g.center) + self.t_end
        if g.half_width < reach - 1e-12:
            raise ValueError(
                f"half_width={g.half_width!r} is smaller than data support reach + t_end = {reach!r}"
            )
        if self.nx_per_axis < 4 or self.np_per_axis < 4:
            raise ValueError("sampling counts must be >= 4 per axis")
        if self.history_stride < 1 or self.output_every < 1:
            raise ValueError("history_stride and output_every must be positive")


def grad_phi(field_state: ScalarFieldState, idx) -> np.ndarray:
    """Central-difference gradient of phi at an interior node."""
    g = field_state.grid
    i, j, k = (int(v) for v in idx)
    n = g.cells_per_axis
    if not all(1 <= v <= n - 1 for v in (i, j, k)):
        raise ValueError("gradient undefined at boundary")
    phi = field_state.phi
    h2 = 2.0 * g.dx
    return np.array(
        [
            (phi[i + 1, j, k] - phi[i - 1, j, k]) / h2,
            (phi[i, j + 1, k] - phi[i, j - 1, k]) / h2,
            (phi[i, j, k + 1] - phi[i, j, k - 1]) / h2,
        ]
    )


def gradient_lattice(phi: np.ndarray, dx: float) -> np.ndarray:
    """Central differences on interior nodes, zero on the boundary layer; shape (3, *phi.shape)."""
    out = np.zeros((3,) + phi.shape)
    h2 = 2.0 * dx
    out[0, 1:-1, 1:-1, 1:-1] = (phi[2:, 1:-1, 1:-1] - phi[:-2, 1:-1, 1:-1]) / h2
    out[1, 1:-1, 1:-1, 1:-1] = (phi[1:-1, 2:, 1:-1] - phi[1:-1, :-2, 1:-1]) / h2
    out[2, 1:-1, 1:-1, 1:-1] = (phi[1:-1, 1:-1, 2:] - phi[1:-1, 1:-1, :-2]) / h2
    return out


def reconstruct_f(particle, phi_here):
    """f at the particle from its birth data: f_birth * exp(4 (phi_here - phi_birth)).

    Works on a PhaseParticle or an Ensemble (then ``phi_here`` is an array).
    """
    return particle.f_birth * np.exp(4.0 * (np.asarray(phi_here) - particle.phi_birth))
