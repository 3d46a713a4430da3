import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.discrete import Grid, build_hamiltonian
from zerolap.microlocal import (AliasingWarning, CutoffFamily, WindowResolvent, build_localizers, calibrate_C0,
                                fefferman_phong_probe, gaussian_symbol, lattice_momentum_pair,
                                metric_uniformity_probe, microlocal_norm_sweep, moyal_residual, operator_norm_probe,
                                phase_space_symbols, symbol_seminorms, transition, weyl_quantize)
from zerolap.model import PotentialSpec, WeightFamily

SPEC = PotentialSpec(1.0, 1.0)
FAMILY = WeightFamily(1.0, math.sqrt(0.5) * 0.99)


def nodes(n, dx):
    return (np.arange(n) - (n - 1) / 2) * dx


@given(st.floats(-2, 3))
def test_transition_range_and_symmetry(u):
    t = transition(u)
    assert 0.0 <= t <= 1.0
    assert t + transition(1 - u) == pytest.approx(1.0)


def test_transition_flat_outside():
    assert transition(-0.1) == 0.0 and transition(1.1) == 1.0


def test_quantize_constant_and_position():
    x = nodes(40, 0.5)
    assert np.allclose(weyl_quantize(lambda X, Xi: 1.0 + 0 * X * Xi, x, 0.5), np.eye(40), atol=1e-13)
    assert np.allclose(weyl_quantize(lambda X, Xi: X + 0 * Xi, x, 0.5), np.diag(x), atol=1e-12)


def test_lattice_laplacian_symbol_is_exact():
    dx = 0.5
    x = nodes(50, dx)
    M = weyl_quantize(lambda X, Xi: 2 * (1 - np.cos(Xi * dx)) / dx**2 + 0 * X, x, dx, warn=False)
    H = (2 * np.eye(50) - np.eye(50, k=1) - np.eye(50, k=-1)) / dx**2
    assert np.allclose(M, H, atol=1e-12)


def test_unbounded_momentum_warns_about_aliasing():
    with pytest.warns(AliasingWarning):
        weyl_quantize(lambda X, Xi: Xi * Xi + 0 * X, nodes(30, 1.0), 1.0)


def test_smooth_symbol_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        weyl_quantize(gaussian_symbol(0, 3, 0, 1), nodes(40, 0.25), 0.25)


def test_hermiticity_enforced():
    with pytest.raises(ArithmeticError):
        weyl_quantize(lambda X, Xi: 1j * X + 0 * Xi, nodes(20, 1.0), 1.0, check_hermitian=True)


def test_real_symbol_quantizes_hermitian():
    M = weyl_quantize(gaussian_symbol(1.0, 2.0, 0.5, 1.0), nodes(60, 0.25), 0.25)
    assert np.allclose(M, M.conj().T, atol=1e-14)


def test_moyal_polynomial_case_terminates():
    dx = 1.0
    x = nodes(200, dx)
    a1, a2 = lattice_momentum_pair(dx)
    assert moyal_residual(a1, a2, 1, x, dx, interior=0.5) <= 1e-10
    assert moyal_residual(a1, a2, 0, x, dx, interior=0.5) > 0.1


def test_moyal_gaussian_remainder_shrinks_with_order():
    dx = 0.25
    x = nodes(160, dx)
    a = gaussian_symbol(0.0, 8.0, 0.0, 2.0)
    b = gaussian_symbol(1.0, 8.0, 0.5, 2.0)
    res = [moyal_residual(a, b, N, x, dx, interior=0.5) for N in (0, 1, 2)]
    assert res[0] > res[1] > res[2]


def test_moyal_order_limit():
    a1, a2 = lattice_momentum_pair(1.0)
    with pytest.raises(ValueError):
        moyal_residual(a1, a2, 4, nodes(20, 1.0), 1.0)


def test_cutoff_family_validation_and_supports():
    with pytest.raises(ValueError):
        CutoffFamily(1.0, 0.8, 0.7)
    c = CutoffFamily(2.0, 0.4, 0.7)
    assert c.F_plus(2.0) == 0.0 and c.F_plus(4.0) == 1.0
    assert c.Ft_minus(-0.2) == 1.0 and c.Ft_minus(0.2) == 0.0
    assert c.Ft_plus_disjoint(0.1) == 0.0 and c.Ft_minus_disjoint(-0.1) == 0.0


@pytest.mark.parametrize("E", [1e-3, 1e-1, 1.0])
def test_localizers_partition_unity(E):
    dx = 1.0
    x = nodes(128, dx)
    C0, _ = calibrate_C0(SPEC, FAMILY, x, [E])
    loc = build_localizers(CutoffFamily(C0, 0.9 * FAMILY.kappa0, FAMILY.kappa0), FAMILY, E, x, dx)
    assert loc.pointwise_residual <= 1e-12
    assert loc.operator_residual <= 1e-8


def test_localizer_norms_bounded():
    x = nodes(96, 1.0)
    C0, _ = calibrate_C0(SPEC, FAMILY, x, [1e-3, 1e-1])
    cut = CutoffFamily(C0, 0.6, FAMILY.kappa0)
    norms = operator_norm_probe(cut, FAMILY, [1e-3, 1e-1], x, 1.0)
    assert np.all(norms < 2.0)


def test_fefferman_phong_bottom_is_small():
    x = nodes(96, 1.0)
    cut = CutoffFamily(10.0, 0.6, FAMILY.kappa0)
    low = fefferman_phong_probe(cut, FAMILY, [1e-2], x, 1.0)
    assert np.all(np.isfinite(low))


def test_metric_probe_passes_for_coulomb_tail():
    rep = metric_uniformity_probe(FAMILY, np.logspace(-3, 0, 7))
    assert rep.N == pytest.approx(2.0)
    assert rep.passed
    with pytest.raises(ValueError):
        metric_uniformity_probe(FAMILY, [0.1], pairs=100)


def test_phase_space_symbols_have_bounded_seminorms():
    a0, b = phase_space_symbols(FAMILY, 0.01)
    x = np.linspace(-500, 500, 201)
    xi = 0.3 * FAMILY.f(x, 0.01)
    sn = symbol_seminorms(b, FAMILY, 0.01, x, xi)
    assert all(np.isfinite(v) and v < 10 for v in sn.values())


def test_window_resolvent_matches_full_box():
    dx, extent = 1.0, 300.0
    x = nodes(41, dx)
    z = 0.05 + 0.02j
    R = WindowResolvent(SPEC, x, dx, z, extent)
    m = int(extent / dx)
    full = np.arange(-m, m + 1) * dx
    g = Grid(full.size, (full.size + 1) * dx / 2, "line")
    H = build_hamiltonian(g, SPEC, potential=None)
    assert np.allclose(g.points, full)
    G = np.linalg.inv(H.to_dense() - z * np.eye(full.size))
    inside = np.abs(full) <= x[-1] + 1e-9
    rhs = np.exp(-x**2 / 20)
    assert np.allclose(R.solve(rhs), G[np.ix_(inside, inside)] @ rhs, rtol=1e-9, atol=1e-12)


def test_sweep_structure_small():
    rep = microlocal_norm_sweep(SPEC, n=128, energies=[1e-2, 1.0], ms=(2,), extent=2000.0,
                                window_inner=40.0, window_outer=55.0)
    assert set(rep.estimates) == {"ii", "iii", "neg-iii", "iterated-m2", "iv"}
    assert rep.partition_residual <= 1e-8
    assert all(r.norm > 0 for r in rep.rows)
    with pytest.raises(ValueError):
        microlocal_norm_sweep(SPEC, n=2048)
