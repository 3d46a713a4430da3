import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.discrete import (BandedOperator, Grid, RadialReduction, build_dilation_generator, build_hamiltonian,
                              commutator_residual, weight_operator)
from zerolap.model import BumpSpec, PotentialSpec, bracket, virial


@given(st.integers(16, 5000), st.floats(1.0, 1e4), st.sampled_from(["radial", "line"]))
def test_grid_layout(n, L, kind):
    g = Grid(n, L, kind)
    x = g.points
    assert x.size == n
    assert g.dx == pytest.approx(g.length / (n + 1))
    assert x[0] - g.dx == pytest.approx(g.x_min, abs=1e-9 * L)
    assert x[-1] + g.dx == pytest.approx(g.x_min + g.length, rel=1e-12)


@pytest.mark.parametrize("args", [(15, 1.0), (100, 0.0), (100, 1.0, "disk")])
def test_grid_rejects(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_with_spacing():
    g = Grid.with_spacing(0.5, 100.0)
    assert g.dx == pytest.approx(0.5)


def test_q_eff_values():
    assert RadialReduction(3, 0).q_eff == 0.0
    assert RadialReduction(3, 1).q_eff == 2.0
    assert RadialReduction(2, 0).q_eff == -0.25
    assert RadialReduction(1, 0).q_eff == 0.0


def test_free_dirichlet_spectrum():
    g = Grid(64, 10.0)
    H = build_hamiltonian(g, PotentialSpec(), potential=np.zeros(64))
    lam = np.linalg.eigvalsh(H.to_dense())
    j = np.arange(1, 65)
    exact = 4 / g.dx**2 * np.sin(j * np.pi / (2 * 65)) ** 2
    assert np.allclose(lam, exact, rtol=1e-12)


def test_line_grid_rejects_centrifugal_term():
    with pytest.raises(ValueError):
        build_hamiltonian(Grid(32, 5.0, "line"), PotentialSpec(dim=3, ell=1))


def test_hamiltonian_symmetric_and_real():
    H = build_hamiltonian(Grid(50, 20.0), PotentialSpec(1.0, 1.0, BumpSpec(0.5, 3.0, 2.0), dim=3, ell=1))
    D = H.to_dense()
    assert not H.is_complex and np.allclose(D, D.T)


def test_dilation_generator_is_hermitian():
    A = build_dilation_generator(Grid(40, 8.0)).to_dense()
    assert np.allclose(A, A.conj().T)


def test_commutator_identity_converges_at_second_order(rng):
    spec = PotentialSpec(1.0, 1.0, dim=1)
    res = []
    for n in (199, 399, 799):
        g = Grid(n, 20.0, "line")
        H, A = build_hamiltonian(g, spec), build_dilation_generator(g)
        x = g.points
        phi = np.exp(-x**2 / 4) * (1 + 0.3 * x)
        res.append(commutator_residual(H, A, virial(spec, x), phi))
    order = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(order > 1.8)


@given(st.integers(16, 60), st.integers(0, 2**31))
def test_banded_algebra_matches_dense(n, seed):
    r = np.random.default_rng(seed)
    def rand_op(width):
        return BandedOperator({k: r.standard_normal(n - abs(k)) + 1j * r.standard_normal(n - abs(k))
                               for k in range(-width, width + 1)}, n)
    P, Q = rand_op(1), rand_op(2)
    v = r.standard_normal(n) + 0j
    Pd, Qd = P.to_dense(), Q.to_dense()
    assert np.allclose(P.matvec(v), Pd @ v)
    assert np.allclose(Q.matvec(v), Qd @ v)
    assert np.allclose(P.compose(Q).to_dense(), Pd @ Qd)
    assert np.allclose(P.commutator(Q).to_dense(), Pd @ Qd - Qd @ Pd)
    assert np.allclose((P - Q).to_dense(), Pd - Qd)
    assert np.allclose(P.adjoint().to_dense(), Pd.conj().T)
    assert np.allclose(P.shifted(0.3 + 1j).to_dense(), Pd - (0.3 + 1j) * np.eye(n))


def test_weight_operator_forms():
    g = Grid(20, 5.0)
    x = g.points
    assert np.allclose(weight_operator(g, 1.5).band(0), bracket(x) ** 1.5)
    assert np.allclose(weight_operator(g, np.sin).band(0), np.sin(x))
    assert np.allclose(weight_operator(g, np.ones(20)).band(0), 1.0)
