"""Coupled time loop: deposit, wave step, diagnostics, push.

Level n holds particles at t_n, phi^n and the centred dt(phi)^n, which is
only known once phi^{n+1} exists; so every level is reported right after the
wave step that follows it. Particles then move from t_n to t_{n+1} in the
time-centred field between phi^n and phi^{n+1}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .diagnostics import (
    ConeMomentHistory,
    EnergyLattices,
    SupportTracker,
    char_invariant_residual,
    energy_lattices,
    total_energy,
)
from .field import (
    FieldSampler,
    SourceLattice,
    centered_dphi_dt,
    deposit_mu,
    initial_field,
    phi_at_particles,
    step_wave,
)
from .initial_data import sample_ensemble
from .pusher import push_step
from .state import (
    DiagnosticsRecord,
    Ensemble,
    FieldHistory,
    HistorySlice,
    RunConfig,
    ScalarFieldState,
)

log = logging.getLogger(__name__)


@dataclass
class Level:
    """Everything known about one completed time level."""

    index: int
    field: ScalarFieldState
    source: SourceLattice
    energy: EnergyLattices
    ensemble: Ensemble
    phi_here: np.ndarray
    record: DiagnosticsRecord
    tracker: SupportTracker

    @property
    def time(self) -> float:
        return self.field.time


class Simulation:
    def __init__(self, config: RunConfig, n_threads: int = 1, cone_vertices=(),
                 ensemble: Ensemble | None = None):
        config.validate()
        self.config = config
        self.grid = config.grid
        self.n_chunks = max(1, int(n_threads))
        self.ensemble = ensemble if ensemble is not None else sample_ensemble(
            config.data, config.nx_per_axis, config.np_per_axis, config.grid)
        self.history = FieldHistory(stride=config.history_stride)
        self.moment_histories = [ConeMomentHistory(np.asarray(x, float), float(t), self.grid)
                                 for t, x in cone_vertices]
        self.tracker = SupportTracker()
        self.records: list[DiagnosticsRecord] = []
        self._e0 = None

    def _wants_history(self, n: int, t: float) -> bool:
        t_max = self.config.history_t_max
        if t_max is None:
            return n % self.history.stride == 0
        if self.history.slices and self.history.slices[-1].time >= t_max - 1e-12:
            return False
        return n % self.history.stride == 0 or t >= t_max - 1e-12

    def _complete(self, n: int, field: ScalarFieldState, source: SourceLattice,
                  phi_here: np.ndarray) -> Level:
        ens = self.ensemble
        energy = energy_lattices(ens, field, self.grid, self.n_chunks, phi_here)
        total, kinetic, field_part = total_energy(energy, self.grid)
        if self._e0 is None:
            self._e0 = total
        drift = abs(total - self._e0) / self._e0 if self._e0 else 0.0
        P, Pt = self.tracker.update(ens, phi_here)
        rec = DiagnosticsRecord(
            time=field.time, total_energy=total, kinetic_energy=kinetic, field_energy=field_part,
            P_max=P, Ptilde_max=Pt, phi_min=float(field.phi.min()), phi_max=float(field.phi.max()),
            char_invariant_residual_max=char_invariant_residual(ens, phi_here),
            energy_drift_rel=drift,
        )
        self.records.append(rec)
        if self._wants_history(n, field.time):
            lean = ScalarFieldState(field.grid, field.phi, field.dphi_dt, None, field.time)
            self.history.append(HistorySlice(field.time, lean, source.mu, energy.e, energy.pflux))
        for mh in self.moment_histories:
            if mh.wants(field.time):
                mh.record(field.time, ens, phi_here)
        return Level(n, field, source, energy, ens, phi_here, rec, self.tracker)

    def iterate(self) -> Iterator[Level]:
        """Yield every completed level from t = 0 to t_end."""
        cfg = self.config
        dt = cfg.dt
        field = initial_field(self.grid, cfg.data)
        for n in range(cfg.n_steps + 1):
            phi_here = phi_at_particles(self.ensemble, field)
            source = deposit_mu(self.ensemble, field, self.grid, self.n_chunks, phi_here)
            new = step_wave(field, source, dt)
            level = field.with_dphi_dt(centered_dphi_dt(field, new))
            yield self._complete(n, level, source, phi_here)
            if n == cfg.n_steps:
                break
            push_step(self.ensemble, FieldSampler.midpoint(field, new), dt)
            field = new

    def run(self) -> list[DiagnosticsRecord]:
        for level in self.iterate():
            if level.index % 10 == 0:
                log.info("t=%.4f E=%.6g drift=%.2e P=%.6g", level.time, level.record.total_energy,
                         level.record.energy_drift_rel, level.record.P_max)
        return self.records
