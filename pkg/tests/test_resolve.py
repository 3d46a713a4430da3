import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.discrete import Grid, build_hamiltonian
from zerolap.model import BumpSpec, PotentialSpec, bracket, eval_potential
from zerolap.resolve import (BoundaryValue, Resolvent, ResolventError, SectorPoint, boundary_values, decade_maxima,
                             dense_weighted_norm, expansion_fit, free_resolvent_kernel, hoelder_fit,
                             lattice_free_resolvent, lap_sweep, perturbed_resolvent, sector_points,
                             shifted_solve, weighted_norm)


def free_line(n, extent):
    g = Grid(n, extent, "line")
    return g, build_hamiltonian(g, PotentialSpec(), potential=np.zeros(n))


@pytest.fixture(scope="module")
def small_H():
    return build_hamiltonian(Grid(200, 60.0), PotentialSpec(1.0, 1.0, dim=3))


@pytest.mark.parametrize("zeta", [1j, 0.3 + 0.1j, 1e-3 * np.exp(1j * math.pi / 3)])
@pytest.mark.parametrize("m", [1, 2])
def test_power_norm_matches_svd(small_H, zeta, m):
    w = bracket(small_H.grid.points) ** -1.3
    est = weighted_norm(small_H, zeta, w, w, m=m, tol=1e-12, maxiter=5000)
    ref = dense_weighted_norm(small_H, zeta, w, w, m=m)
    assert est.converged
    assert est.value == pytest.approx(ref, rel=1e-6)


def test_solve_matches_lattice_green_function_away_from_walls():
    g, H = free_line(401, 60.0)
    x = g.points
    mid = np.argmin(np.abs(x))
    rhs = np.zeros(g.n, dtype=complex)
    rhs[mid] = 1.0 / g.dx
    u, res = shifted_solve(H, 1j, rhs)
    inner = np.abs(x) < 15
    ref = lattice_free_resolvent(1j, g.dx, np.arange(g.n) - mid) / g.dx
    assert res < 1e-12
    assert np.max(np.abs(u[inner] - ref[inner])) <= 1e-8 * np.max(np.abs(ref[inner]))


def test_lattice_kernel_tends_to_continuum_at_second_order():
    offsets = np.array([0, 1, 2])
    errs = []
    for dx in (0.1, 0.05, 0.025):
        G = lattice_free_resolvent(1j, dx, offsets * int(round(0.1 / dx)))
        exact = free_resolvent_kernel(1j, np.array([0.0]), offsets * 0.1)[0]
        errs.append(np.max(np.abs(G / dx - exact)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_free_kernel_branch():
    k = free_resolvent_kernel(-1.0 + 0j, np.array([0.0]), np.array([2.0]))[0, 0]
    assert k == pytest.approx(math.exp(-2) / 2)


def test_resolvent_rejects_real_eigenvalue():
    g, H = free_line(31, 4.0)
    lam = np.linalg.eigvalsh(H.to_dense())[0]
    with pytest.raises(ResolventError):
        Resolvent(H, lam).solve(np.ones(g.n))


def test_resolvent_bound_respected(small_H):
    z = 0.2 + 0.05j
    est = weighted_norm(small_H, z, tol=1e-10, maxiter=2000)
    assert est.value <= 1 / z.imag * (1 + 1e-6)


@given(st.floats(1e-4, 1.0), st.floats(0.01, 0.99))
def test_sector_point_geometry(E, frac):
    p = SectorPoint(E, frac * math.pi / 2)
    assert abs(p.zeta) == pytest.approx(E)
    assert p.zeta.imag > 0
    assert SectorPoint(E, frac * math.pi / 2, lower=True).zeta == p.zeta.conjugate()


@pytest.mark.parametrize("kw", [dict(E=0.0, phi=0.5), dict(E=2.0, phi=0.5), dict(E=0.5, phi=0.0),
                                dict(E=0.5, phi=2.0), dict(E=0.5, phi=0.5, theta=4.0)])
def test_sector_point_validation(kw):
    with pytest.raises(ValueError):
        SectorPoint(**kw)


def test_sector_points_rays():
    pts = sector_points([0.1, 1.0], theta=1.0, fractions=(0.5,))
    assert [p.phi for p in pts] == [0.5, 0.5]


def test_decade_maxima():
    E = np.array([1e-3, 5e-3, 1e-2, 0.5, 1.0])
    dec, mx = decade_maxima(E, [1, 3, 2, 7, 5])
    assert dec.tolist() == [-3, -2, -1]
    assert mx.tolist() == [3, 2, 7]


@given(st.floats(0.05, 1.5), st.floats(0.1, 10.0))
def test_hoelder_fit_recovers_exponent(gamma, c):
    sep = np.geomspace(1e-4, 1e-1, 10)
    fit = hoelder_fit(sep, c * sep**gamma)
    assert fit.gamma == pytest.approx(gamma, abs=1e-9)
    assert not fit.flags


def test_hoelder_fit_flags_and_errors():
    assert "too_few_pairs" in hoelder_fit([1e-3, 1e-2, 1e-1], [1, 2, 3]).flags
    assert "ill_conditioned" in hoelder_fit(np.linspace(1, 2, 9), np.linspace(1, 2, 9)).flags
    with pytest.raises(ValueError):
        hoelder_fit([0.0, 1.0], [1.0, 1.0])


def test_sweep_independent_of_workers(small_H):
    E = np.geomspace(1e-3, 1, 4)
    a = lap_sweep(small_H, 1.3, E, workers=1, seed=7)
    b = lap_sweep(small_H, 1.3, E, workers=2, seed=7)
    assert [r.as_tuple() for r in a.rows] == [r.as_tuple() for r in b.rows]
    assert a.sweep_growth == pytest.approx(a.sector_sup()[1][0] / a.sector_sup()[1][-1])


def test_sweep_warns_below_threshold(small_H):
    with pytest.warns(UserWarning):
        lap_sweep(small_H, 0.6, [0.5], mu=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lap_sweep(small_H, 1.3, [0.5], mu=1.0)


def test_sweep_rejects_energies_outside_unit_interval(small_H):
    with pytest.raises(ValueError):
        lap_sweep(small_H, 1.3, [0.0, 0.5])


def test_boundary_values_of_free_half_line():
    # E'(lam)(x, y) = sin(k x) sin(k y) / (pi k) on the half-line, k = sqrt(lam)
    # the eta ladder must stay above the level spacing pi k / L of the box
    g = Grid(9999, 2000.0)
    H = build_hamiltonian(g, PotentialSpec(), potential=np.zeros(g.n))
    w = np.exp(-g.points / 3.0)
    nodes = np.flatnonzero(g.points < 20)
    lam = 0.25
    bv = boundary_values(H, w, lam, eta0=4e-2, halvings=3, nodes=nodes)
    k = math.sqrt(lam)
    x = g.points[nodes]
    # matrix entries approximate the kernel times dx
    exact = g.dx * np.outer(w[nodes] * np.sin(k * x), w[nodes] * np.sin(k * x)) / (math.pi * k)
    dens = bv.density
    assert np.allclose(dens, dens.conj().T, atol=1e-10)
    assert np.linalg.norm(dens.real - exact, 2) < 5e-3 * np.linalg.norm(exact, 2)
    assert not bv.flags


def test_boundary_values_validation(small_H):
    with pytest.raises(ValueError):
        boundary_values(small_H, np.ones(200), 2.0)


def test_expansion_fit_on_polynomial_data():
    lams = np.linspace(0, 0.1, 6)
    A, B = np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])
    vals = [BoundaryValue(l, A + l * B, A, 0.0, 0.0, np.zeros(1)) for l in lams]
    fit = expansion_fit(vals, 1)
    assert np.allclose(fit.coefficients[0], A) and np.allclose(fit.coefficients[1], B)
    assert fit.residuals[-1] < 1e-12
    with pytest.raises(ValueError):
        expansion_fit(vals[:3], 1)


def test_perturbed_solve_matches_direct():
    g = Grid(300, 80.0)
    spec1 = PotentialSpec(1.0, 1.0, dim=3)
    spec = PotentialSpec(1.0, 1.0, BumpSpec(-0.8, 4.0, 2.0), dim=3)
    H1 = build_hamiltonian(g, spec1)
    H = build_hamiltonian(g, spec)
    v2 = eval_potential(spec, g.points).V2
    rhs = np.exp(-((g.points - 10) ** 2))
    z = 0.01 + 0.02j
    out = perturbed_resolvent(H1, v2, z, rhs)
    direct, _ = shifted_solve(H, z, rhs)
    assert np.allclose(out.u, direct, rtol=1e-9, atol=1e-12)
    assert out.support.size > 0 and out.fredholm_condition >= 1
