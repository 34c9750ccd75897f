import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import small_config
from nordvlas.diagnostics import (
    ConeMomentHistory,
    SupportTracker,
    char_invariant_residual,
    cone_shells,
    dtphi_representation,
    energy_l2_norms,
    energy_lattices,
    fibonacci_sphere,
    null_cone_check,
    support_suprema,
    total_energy,
)
from nordvlas.field import initial_field
from nordvlas.initial_data import DataParams, bump_integral, bump_l2_squared, sample_ensemble
from nordvlas.simulation import Simulation
from nordvlas.state import CausalityError, Ensemble, FieldHistory, GridSpec, HistorySlice


def _grad_l2_squared(b):
    k, R, A = b.power, b.radius, b.amplitude

    def radial(r):
        d = A * k * (1 - (r / R) ** 2) ** (k - 1) * 2 * r / R**2
        return 4 * math.pi * r * r * d * d

    return quad(radial, 0, R, epsabs=0, epsrel=1e-12)[0]


def test_total_energy_vacuum_zero():
    g = GridSpec((0, 0, 0), 2.0, 16)
    d = DataParams(A_f=0.0, A_phi=0.0, A_pi=0.0)
    en = energy_lattices(Ensemble.empty(), initial_field(g, d), g)
    assert total_energy(en, g) == (0.0, 0.0, 0.0)


def test_initial_energy_matches_closed_form(data):
    g = GridSpec((0, 0, 0), 2.0, 32)   # dx = 0.125 = x-sampling spacing
    ens = sample_ensemble(data, 16, 16, g)
    en = energy_lattices(ens, initial_field(g, data), g)
    total, kin, fld = total_energy(en, g)
    gamma = lambda r: math.sqrt(1 + r * r)
    kin_exact = bump_integral(data.rho_x) * bump_integral(data.rho_p, gamma)
    fld_exact = 0.5 * bump_l2_squared(data.phi1) + 0.5 * _grad_l2_squared(data.phi0)
    assert kin == pytest.approx(kin_exact, rel=0.01)
    assert np.all(en.e >= 0)
    # the gradient part converges at second order; 128 cells resolves it to 1%
    g = GridSpec((0, 0, 0), 2.0, 128)
    _, _, fld = total_energy(energy_lattices(Ensemble.empty(), initial_field(g, data), g), g)
    assert fld == pytest.approx(fld_exact, rel=0.01)


def test_support_suprema_empty():
    g = GridSpec((0, 0, 0), 1.0, 8)
    f = initial_field(g, DataParams(A_f=0.0))
    assert support_suprema(Ensemble.empty(), f) == (0.0, 0.0)


def test_support_tracker_equivalence(data):
    g = GridSpec((0, 0, 0), 2.0, 16)
    ens = sample_ensemble(data, 8, 8, g)
    phi_here = np.full(len(ens), 0.2)
    tr = SupportTracker()
    P, Pt = tr.update(ens, phi_here)
    assert P == pytest.approx(math.exp(0.2) * np.max(ens.gamma))
    assert Pt == pytest.approx(np.max(np.linalg.norm(ens.p, axis=1)))
    assert tr.equivalence_holds()
    # suprema never decrease
    tr.update(ens, np.zeros(len(ens)))
    assert tr.P_max == P


def test_char_invariant_residual_zero_for_consistent_state(data):
    ens = sample_ensemble(data, 8, 8)
    assert char_invariant_residual(ens, np.zeros(len(ens))) < 1e-15
    assert char_invariant_residual(Ensemble.empty(), np.zeros(0)) == 0.0


def test_fibonacci_sphere_uniform():
    d = fibonacci_sphere(2000)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-14)
    assert np.all(np.abs(d.mean(axis=0)) < 1e-3)


@pytest.mark.parametrize("t,dx", [(0.5, 0.1), (1.0, 0.125), (0.3, 0.25)])
def test_cone_shell_weights_sum_to_ball(t, dx):
    shells = cone_shells(t, dx)
    vol = sum(sh.weight(0) * len(sh.dirs) for sh in shells)
    assert vol == pytest.approx(4 * math.pi * t**3 / 3, rel=1e-12)
    area = sum(sh.weight(2) * len(sh.dirs) for sh in shells)
    assert area == pytest.approx(4 * math.pi * t, rel=1e-12)
    assert shells[0].s == t and shells[-1].s == pytest.approx(t - shells[-1].r)


def _vacuum_run(cells, t_end=0.6, t_hist=0.5):
    cfg = small_config(t_end=t_end, A_f=0.0, t_hist=t_hist)
    cfg = replace(cfg, grid=GridSpec(cfg.grid.center, cfg.grid.half_width * 1.0, cells))
    dt = cfg.cfl_safety * cfg.grid.dx / math.sqrt(3)
    cfg = replace(cfg, dt=t_end / math.ceil(t_end / dt))
    sim = Simulation(cfg)
    sim.run()
    return sim


def test_null_cone_trivial_cases():
    sim = _vacuum_run(16, t_end=0.3, t_hist=0.3)
    assert null_cone_check(0.0, (0, 0, 0), sim.history, sim.grid) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError, match="insufficient history"):
        null_cone_check(0.5, (0, 0, 0), sim.history, sim.grid)
    with pytest.raises(CausalityError):
        null_cone_check(0.3, (sim.grid.half_width - 0.1, 0, 0), sim.history, sim.grid)


def test_null_cone_field_only_pulse_converges():
    errs = []
    for cells in (16, 32, 48):
        sim = _vacuum_run(cells)
        lhs, rhs, rel = null_cone_check(0.5, (0, 0, 0), sim.history, sim.grid)
        assert rhs > 0
        errs.append(rel)
    assert errs[-1] <= 0.05
    assert errs[0] > errs[1] > errs[2], errs


def test_representation_at_t0_is_phi1(data):
    cfg = small_config(t_end=0.1, t_hist=0.1)
    sim = Simulation(cfg)
    sim.run()
    x = np.array([0.1, 0.0, -0.1])
    r = dtphi_representation(0.0, x, sim.history, None, cfg.data)
    assert np.all(r.Z == 0)
    assert r.value_repr == pytest.approx(float(cfg.data.phi1(x)), abs=1e-10)


def test_representation_needs_enough_history():
    cfg = small_config(t_end=0.1, t_hist=0.1)
    sim = Simulation(cfg, cone_vertices=[(0.1, (0, 0, 0))])
    sim.run()
    with pytest.raises(ValueError, match="insufficient history"):
        dtphi_representation(0.1, (0, 0, 0), sim.history, sim.moment_histories[0], cfg.data)


def test_representation_requires_moments_with_matter():
    cfg = small_config(t_end=0.5, t_hist=0.5)
    sim = Simulation(cfg)
    sim.run()
    with pytest.raises(ValueError, match="moment history required"):
        dtphi_representation(0.4, (0, 0, 0), sim.history, None, cfg.data)


def test_cone_moment_history_rejects_cone_outside_grid():
    g = GridSpec((0, 0, 0), 1.0, 8)
    with pytest.raises(CausalityError):
        ConeMomentHistory(np.zeros(3), 1.0, g)


def test_energy_l2_norms_bounded_by_energy():
    sim = _vacuum_run(48, t_end=0.5, t_hist=0.0)
    e0 = sim.records[0].total_energy
    sim2 = Simulation(sim.config)
    for level in sim2.iterate():
        a, b = energy_l2_norms(level.field)
        assert math.hypot(a, b) <= math.sqrt(2 * e0) * 1.01
