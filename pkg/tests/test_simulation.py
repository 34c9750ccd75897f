import math

import numpy as np
import pytest

from conftest import small_config
from nordvlas.identities import b_ab
from nordvlas.simulation import Simulation


@pytest.fixture(scope="module")
def levels():
    sim = Simulation(small_config(t_end=0.6))
    out = []
    for lv in sim.iterate():
        out.append(dict(
            t=lv.time, mu=lv.source.mu.copy(), e=lv.energy.e.copy(), phi=lv.field.phi.copy(),
            n=len(lv.ensemble), rec=lv.record, equiv=lv.tracker.equivalence_holds(),
            phi_here=lv.phi_here.copy(), gamma=lv.ensemble.gamma.copy(),
        ))
    return sim, out


def test_positivity(levels):
    _, out = levels
    for lv in out:
        assert np.all(lv["mu"] >= 0) and np.all(lv["e"] >= 0)


def test_suprema_non_decreasing_and_finite(levels):
    _, out = levels
    P = [lv["rec"].P_max for lv in out]
    Pt = [lv["rec"].Ptilde_max for lv in out]
    assert np.all(np.diff(P) >= 0) and np.all(np.diff(Pt) >= 0)
    assert math.isfinite(P[-1]) and P[0] > 1.0


def test_equivalence_inequalities(levels):
    _, out = levels
    assert all(lv["equiv"] for lv in out)


def test_particle_count_constant_and_invariant(levels):
    sim, out = levels
    assert len({lv["n"] for lv in out}) == 1
    assert max(lv["rec"].char_invariant_residual_max for lv in out) < 1e-12


def test_source_bounded_by_momentum_ball(levels):
    sim, out = levels
    ens = sim.ensemble
    f_birth = float(np.max(ens.f_birth * np.exp(-4 * ens.phi_birth)))
    for lv in out[:: max(1, len(out) // 5)]:
        phi_hi, phi_lo = lv["phi"].max(), lv["phi"].min()
        R = math.exp(-phi_lo) * lv["rec"].P_max
        bound = f_birth * math.exp(4 * phi_hi) * b_ab(R, 0.0, 0.5)
        # sampled deposit: allow for the lattice quadrature error of the density
        assert lv["mu"].max() <= 1.1 * bound


def test_energy_drift_small(levels):
    _, out = levels
    assert max(lv["rec"].energy_drift_rel for lv in out) < 0.02


def test_deterministic():
    cfg = small_config(t_end=0.2)
    a = Simulation(cfg).run()
    b = Simulation(cfg).run()
    assert a == b
