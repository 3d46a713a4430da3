import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.discrete import Grid, build_dilation_generator, build_hamiltonian
from zerolap.model import PotentialSpec, eval_potential, virial, x_grad_virial
from zerolap.mourre import (RegularizedPoint, calibrate_C2, choose_eps0_prime, commutator_operators,
                            epsilonA_inverse, lemma_derivative_check, numerical_range_positivity,
                            quadratic_estimate_ratio, regularized_operator, regularized_resolvent)

SPEC = PotentialSpec(1.0, 1.0)


@pytest.fixture(scope="module")
def line():
    g = Grid(300, 40.0, "line")
    H = build_hamiltonian(g, SPEC)
    x = g.points
    return g, H, virial(SPEC, x), eval_potential(SPEC, x).V


@pytest.mark.parametrize("kw", [dict(zeta=0.5j, eps=0.0), dict(zeta=2.0j, eps=0.1), dict(zeta=-0.5 + 0.1j, eps=0.1)])
def test_regularized_point_validation(kw):
    with pytest.raises(ValueError):
        RegularizedPoint(**kw)


def test_regularized_point_constants():
    p = RegularizedPoint(0.3 + 0.4j, 0.1, C2=2.0)
    assert p.C1 == 3.0
    assert p.g == pytest.approx(3 * 0.3 + 2 * 0.4 / 0.1)
    assert p.admissible


def test_regularized_operator_form(line):
    _, H, W, _ = line
    eps = 0.05
    T = regularized_operator(H, W, eps).to_dense()
    ref = H.to_dense() - 1j * eps * (2 * H.to_dense() + np.diag(W))
    assert np.allclose(T, ref)
    assert np.allclose(T, T.T)


def test_regularized_resolvent_solves(line):
    g, H, W, _ = line
    rhs = np.exp(-g.points**2)
    u, res = regularized_resolvent(H, W, 0.1 + 0.2j, 0.05, rhs)
    T = regularized_operator(H, W, 0.05).shifted(0.1 + 0.2j)
    assert res < 1e-12
    assert np.allclose(T.matvec(u), rhs)


def test_derivative_identity_second_order(line):
    g, H, W, _ = line
    x = g.points
    A = build_dilation_generator(g)
    dc = lemma_derivative_check(H, A, W, x_grad_virial(SPEC, x), 0.3 + 0.4j, 0.1, np.exp(-x**2 / 4))
    assert dc.order == pytest.approx(2.0, abs=0.2)
    assert dc.errors[-1] < 1e-5
    # the i*eps variant of the last term is not a derivative identity
    assert dc.printed_form_gap > 1e3 * dc.errors[-1]


def test_grid_commutator_tends_to_virial_form():
    gaps = []
    for n in (199, 399, 799):
        g = Grid(n, 20.0, "line")
        H, A = build_hamiltonian(g, SPEC), build_dilation_generator(g)
        x = g.points
        K, L = commutator_operators(H, A)
        phi = np.exp(-x**2 / 4)
        gap = K.matvec(phi) - 2 * H.matvec(phi) - virial(SPEC, x) * phi
        gaps.append(np.linalg.norm(gap) * math.sqrt(g.dx))  # L2 norm on the grid
    assert gaps[0] / gaps[1] > 3.5 and gaps[1] / gaps[2] > 3.5


def test_numerical_range_identity(line, rng):
    _, H, W, V = line
    tv = rng.standard_normal((4, H.n)) + 1j * rng.standard_normal((4, H.n))
    rc = numerical_range_positivity(H, W, V, 0.01 + 0.2j, 0.05, 2.0, tv)
    assert rc.identity_residual <= 1e-12
    assert rc.passed


def test_calibrated_C2_is_tight(line):
    g, _, W, V = line
    x = g.points
    C2 = calibrate_C2(W, V, x, 1.0)
    gap = C2 * W + V - (1 + x * x) ** -0.5
    assert gap.min() == pytest.approx(0.0, abs=1e-14)
    assert C2 == pytest.approx(2.0, rel=1e-3)


def test_choose_eps0_prime():
    zetas = [0.5 * np.exp(1j * a) for a in (0.4, 0.8, 1.2)]
    e = choose_eps0_prime(zetas, [1e-3, 1e-2, 1e-1, 1.0, 10.0])
    for z in zetas:
        assert RegularizedPoint(z, e).admissible
    with pytest.raises(ValueError):
        choose_eps0_prime([-1.0 + 1e-9j], [1.0])


def test_quadratic_ratio_zero_for_zero_B(line):
    _, H, W, V = line
    assert quadratic_estimate_ratio(H, W, V, 0.1j, 0.1, B=np.zeros(H.n))[0] == 0.0


@given(st.sampled_from([1e-3, 1e-2, 1e-1]), st.floats(0.2, 1.3))
def test_quadratic_ratio_positive(eps, phi):
    g = Grid(80, 20.0, "line")
    H = build_hamiltonian(g, SPEC)
    x = g.points
    r, num, den = quadratic_estimate_ratio(H, virial(SPEC, x), eval_potential(SPEC, x).V,
                                           0.1 * complex(math.cos(phi), math.sin(phi)), eps, gamma="bracket")
    assert r > 0 and num > 0 and den > 0
    assert r == pytest.approx(eps * num / den)


def test_epsilonA_inverse_limits():
    g = Grid(40, 5.0, "line")
    A = build_dilation_generator(g)
    assert np.allclose(epsilonA_inverse(A, 0.0), np.eye(40) / 10.0)
    Q = epsilonA_inverse(A, 0.5)
    assert np.allclose(Q, Q.conj().T)
    assert np.linalg.norm(Q, 2) <= 0.1 + 1e-12
