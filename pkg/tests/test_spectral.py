import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.discrete import Grid, build_hamiltonian
from zerolap.model import PotentialSpec
from zerolap.spectral import (F_functional, G_functional, RadialFunction, dirichlet_ball_sweep,
                              integrability_ratio, radial_function_from_samples, weight_optimality_probe,
                              wkb_reference, zero_energy_solution, zero_persistence)

SPEC3 = PotentialSpec(1.0, 1.0, dim=3)


@pytest.fixture(scope="module")
def solution():
    return zero_energy_solution(SPEC3, np.geomspace(1.0, 300.0, 6001))


def test_zero_function_gives_zero_functionals():
    r = np.geomspace(1, 50, 200)
    w = RadialFunction(r, np.zeros_like(r), np.zeros_like(r), SPEC3)
    assert np.all(F_functional(w).value == 0) and np.all(F_functional(w).derivative == 0)
    assert np.all(G_functional(w, 3, eps_h=0.1, C=1.0).derivative == 0)


def test_radial_function_validation():
    r = np.array([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        RadialFunction(r, np.zeros(2), np.zeros(3), SPEC3)
    with pytest.raises(ValueError):
        RadialFunction(r[::-1], np.zeros(3), np.zeros(3), SPEC3)


def test_solution_satisfies_the_ode(solution):
    r, w = solution.r, solution.w
    d2 = np.gradient(solution.dw, r, edge_order=2)
    resid = -d2 - (1 + r * r) ** -0.5 * w
    assert np.max(np.abs(resid[5:-5])) < 1e-3 * np.max(np.abs(w))


def _tolerance_ratio(fn):
    tols = []
    for n in (3001, 6001):
        w = zero_energy_solution(SPEC3, np.geomspace(1.0, 300.0, n))
        tols.append(fn(w).tolerance)
    return tols[0] / tols[1]


def test_F_identity_converges_at_second_order():
    assert _tolerance_ratio(F_functional) == pytest.approx(4.0, rel=0.2)


def test_G_identity_converges_at_second_order():
    assert _tolerance_ratio(lambda w: G_functional(w, 4)) == pytest.approx(4.0, rel=0.2)


def test_F_is_nondecreasing_beyond_onset(solution):
    tr = F_functional(solution, 0.9)
    assert tr.monotone
    assert tr.onset < solution.r[-1]
    assert not tr.flags


def test_G_outside_hypothesis_flagged(solution):
    assert "outside_hypothesis" in G_functional(solution, 0).flags


def test_sampled_functions_are_flagged():
    r = np.geomspace(1, 50, 400)
    w = radial_function_from_samples(SPEC3, r, np.sin(r) / r)
    assert "analytic_derivative_assumes_solution" in F_functional(w).flags
    assert np.allclose(w.psi(), np.sin(r) / r)


@given(st.floats(0.1, 10.0))
def test_integrability_ratio_scale_invariant(c):
    r = np.geomspace(0.5, 200, 800)
    psi = np.exp(-r / 20)
    dpsi = -psi / 20
    a = integrability_ratio(SPEC3, r, psi, dpsi, 10.0, 0.3)
    b = integrability_ratio(SPEC3, r, c * psi, c * dpsi, 10.0, 0.3)
    assert a == pytest.approx(b, rel=1e-10)
    assert integrability_ratio(SPEC3, r, 0 * psi, 0 * dpsi, 10.0, 0.3) == 0.0


def test_ball_sweep_monotone_small():
    sw = dirichlet_ball_sweep(SPEC3, np.linspace(5, 60, 8), count=6, n=400)
    assert sw.counts_nondecreasing and sw.branches_nonincreasing
    assert sw.n_crossings >= 1
    assert all(abs(v) < 1e-8 for v in sw.crossing_values.values())
    with pytest.raises(ValueError):
        dirichlet_ball_sweep(SPEC3, [5.0, 10.0], count=3)
    with pytest.raises(ValueError):
        dirichlet_ball_sweep(SPEC3, [10.0, 5.0])


def test_no_persistent_zero_eigenvalue():
    out = zero_persistence(SPEC3, [200.0, 400.0, 800.0])
    assert not out["persistent"]
    assert len(out["closest"]) == 3


def test_wkb_exact_for_constant_potential():
    spec = PotentialSpec(1.0, 1.0)
    rep = wkb_reference(spec, 0.0, (1.0, 100.0), samples=200,
                        potential=lambda x: (-np.ones_like(np.asarray(x, float)), np.zeros_like(np.asarray(x, float))))
    assert rep.envelope_error < 1e-8
    assert abs(rep.envelope_exponent) < 1e-8


def test_wkb_exponents_for_coulomb_tail():
    rep = wkb_reference(PotentialSpec(1.0, 1.0), 0.0, (10.0, 1e4), samples=400)
    assert rep.phase_exponent == pytest.approx(0.5, abs=0.05)
    assert rep.envelope_exponent == pytest.approx(0.25, abs=0.05)


def test_wkb_rejects_turning_points_and_dimension():
    repulsive = lambda x: (np.ones_like(np.asarray(x, float)), np.zeros_like(np.asarray(x, float)))  # noqa: E731
    with pytest.raises(ValueError):
        wkb_reference(PotentialSpec(1.0, 1.0), 0.0, (1.0, 10.0), potential=repulsive)
    with pytest.raises(ValueError):
        wkb_reference(SPEC3)
    with pytest.raises(ValueError):
        wkb_reference(PotentialSpec(1.0, 1.0), -1.0)


def test_optimality_probe_small():
    H = build_hamiltonian(Grid(2000, 2000.0), SPEC3)
    probe = weight_optimality_probe(H, 1, np.geomspace(1e-3, 1e-1, 5))
    assert probe.sharp.shape == (5,) and np.all(probe.relaxed > 0)
    assert len(probe.rows()) == 5
    with pytest.raises(ValueError):
        weight_optimality_probe(H, 4, [0.1])
