import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.discrete import BandedOperator, Grid, build_hamiltonian
from zerolap.dynamics import (EnergyWindow, admissible_m, diagonalize_low_energy, eigen_density,
                              local_decay_check, log_slope, quantum_minimal_velocity, weighted_density_at_zero)
from zerolap.model import PotentialSpec, bracket
from zerolap.resolve import Resolvent

SPEC = PotentialSpec(1.0, 1.0, dim=3)


@pytest.fixture(scope="module")
def prop():
    g = Grid(600, 600.0)
    return diagonalize_low_energy(build_hamiltonian(g, SPEC), 2.0)


def test_free_box_spectrum():
    g = Grid(400, 200.0)
    H = build_hamiltonian(g, PotentialSpec(dim=3), potential=np.zeros(400))
    p = diagonalize_low_energy(H, 1.0)
    j = np.arange(1, p.eigenvalues.size + 2)
    exact = 4 / g.dx**2 * np.sin(j * math.pi / (2 * (g.n + 1))) ** 2
    assert np.allclose(p.eigenvalues, exact[:-1], rtol=1e-10, atol=1e-13)
    assert p.n_negative == 0
    assert exact[-1] > 1.0  # nothing below the cap was missed


def test_attractive_tail_binds_more_states_in_larger_boxes():
    counts = [diagonalize_low_energy(build_hamiltonian(Grid(int(R), R), SPEC), 0.1).n_negative
              for R in (200.0, 800.0, 3200.0)]
    assert counts[0] < counts[1] < counts[2]


def test_rejects_complex_operator():
    H = build_hamiltonian(Grid(20, 10.0), SPEC)
    with pytest.raises(ValueError):
        diagonalize_low_energy(BandedOperator({k: b + 0j for k, b in H.bands.items()}, 20, H.grid), 1.0)


def test_window_normalization():
    w = EnergyWindow(1.0)
    assert w.f0 == pytest.approx(1.0)
    assert w(w.support[1]) == 0.0 and w(-1.0) == 0.0
    off = EnergyWindow(1.0, center=0.5, radius=0.5)
    assert off.f0 == 0.0 and off(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        EnergyWindow(1.0, center=0.5, radius=0.75)
    with pytest.raises(ValueError):
        EnergyWindow(0.0)


@given(st.floats(-100, 100))
def test_propagation_is_unitary_and_reversible(t):
    g = Grid(200, 200.0)
    p = diagonalize_low_energy(build_hamiltonian(g, SPEC), 1.0)
    psi = p.eigenvectors @ np.cos(np.arange(p.eigenvalues.size))
    out = p.evolve(psi, t, windowed=False)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(psi), rel=1e-12)
    back = p.evolve(out, -t, windowed=False)
    assert np.allclose(back, psi, atol=1e-12)


def test_windowed_operator_matches_evolve(prop):
    psi = np.exp(-((prop.H.grid.points - 30) ** 2) / 50)
    M = prop.windowed_operator(7.0)
    assert np.allclose(M @ psi, prop.evolve(psi, 7.0))
    rows = np.arange(10, 40)
    right = bracket(prop.H.grid.points) ** -2
    sub = prop.windowed_operator(7.0, rows=rows, right=right)
    assert np.allclose(sub, M[rows] * right[None, :])


def test_horizon_is_inverse_spacing(prop):
    lam = prop.eigenvalues[(prop.eigenvalues >= 0) & (prop.eigenvalues <= prop.window.E1)]
    assert prop.horizon == pytest.approx(1 / np.max(np.diff(lam)))


def test_eigen_density_is_smoothed_resolvent(prop):
    # the Lorentzian eigen-histogram is Im R(lam + i eta) / pi for pairs below the cap
    H = prop.H
    w = bracket(H.grid.points) ** -2.0
    nodes = np.arange(0, 60)
    lam, eta = 0.1, 0.02
    D = eigen_density(prop, lam, eta, w, nodes)
    full = np.linalg.eigh(H.to_dense())
    L = eta / math.pi / ((lam - full[0]) ** 2 + eta**2)
    B = w[nodes, None] * full[1][nodes]
    ref = (B * L) @ B.T
    hi = full[0] > prop.cap
    tail = (B[:, hi] * L[hi]) @ B[:, hi].T
    assert np.allclose(D, ref - tail, atol=1e-12)
    R = Resolvent(H, complex(lam, eta)).dense(nodes)[nodes]
    assert np.allclose(ref, (w[nodes, None] * R.imag * w[None, nodes]) / math.pi, atol=1e-10)


def test_density_at_zero_restricted_to_weight_floor():
    g = Grid(400, 400.0)
    H = build_hamiltonian(g, SPEC)
    nodes, dens, err = weighted_density_at_zero(H, 4.0, floor=1e-6)
    w = bracket(g.points) ** -4.0
    assert np.all(w[nodes] >= 1e-6 * w.max())
    assert dens.shape == (nodes.size, nodes.size)
    assert np.allclose(dens, dens.conj().T, atol=1e-10)


def test_correction_vanishes_when_window_is_zero_at_zero():
    g = Grid(400, 400.0)
    H = build_hamiltonian(g, SPEC)
    p = diagonalize_low_energy(H, 2.0, window=EnergyWindow(0.5, center=0.5, radius=0.5))
    nodes = np.arange(50)
    junk = np.ones((50, 50))
    ts = [5.0, 10.0]
    with_corr = local_decay_check(p, nodes, junk, 4.0, ts)
    without = local_decay_check(p, nodes, 0 * junk, 4.0, ts)
    assert np.allclose(with_corr.norms, without.norms)


def test_decay_flags(prop):
    nodes = np.arange(20)
    rep = local_decay_check(prop, nodes, np.zeros((20, 20)), 2.0, [1.0, 10 * prop.horizon])
    assert "horizon_violation" in rep.flags and "weight_below_threshold" in rep.flags
    assert len(rep.rows()) == 2 and math.isnan(rep.rows()[0][4])


@pytest.mark.parametrize("s,eps,ep,m", [(4.0, 0.5, 0.0, 3), (6.0, 0.5, 0.0, 3), (10.0, 1.0, 0.0, 2)])
def test_admissible_m(s, eps, ep, m):
    assert admissible_m(s, eps, ep) == m


def test_admissible_m_rejects_small_weight():
    with pytest.raises(ValueError):
        admissible_m(2.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        quantum_minimal_velocity(None, 2.0, 0.5, 0.0, [1.0])


def test_velocity_empty_cutoff(prop):
    rep = quantum_minimal_velocity(prop, 4.0, 0.5, 0.0, [1e-6], kappa=0.01, check_chain=False)
    assert "empty_cutoff_region" in rep.flags and math.isnan(rep.slope)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_log_slope_of_power_law(a, c):
    t = np.geomspace(1, 100, 9)
    assert log_slope(t, c * t**a) == pytest.approx(a, abs=1e-9)
