import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap.model import (BumpSpec, PotentialSpec, PowerTail, VirialViolation, WeightFamily, bracket,
                           eval_potential, eval_weights, kappa0_from_virial, validate_assumptions, virial,
                           x_grad_virial)

mus = st.floats(0.05, 1.95)
c1s = st.floats(0.1, 5.0)
xs = st.floats(-200.0, 200.0)


def fd(fn, x, h=1e-5):
    return (fn(x + h) - fn(x - h)) / (2 * h)


@given(mus, c1s, xs)
def test_derivative_matches_finite_difference(mu, c1, x):
    spec = PotentialSpec(mu, c1, BumpSpec(0.3, 2.0, 1.5))
    d = eval_potential(spec, x).dV
    ref = fd(lambda y: eval_potential(spec, y).V, x)
    assert abs(d - ref) <= 1e-6 * max(1.0, abs(ref))


@given(mus, c1s, st.floats(0.0, 500.0))
def test_virial_of_pure_power_is_closed_form(mu, c1, x):
    spec = PotentialSpec(mu, c1)
    jb = bracket(x)
    expected = c1 * jb ** (-mu - 2) * (2 * jb**2 - mu * x * x)
    assert virial(spec, x) == pytest.approx(expected, rel=1e-12)
    assert virial(spec, x) > 0


@given(mus, st.floats(0.01, 100.0))
def test_x_grad_virial_matches_finite_difference(mu, x):
    spec = PotentialSpec(mu, 1.0, BumpSpec(0.2, 3.0, 2.0))
    ref = x * fd(lambda y: virial(spec, y), x, h=1e-5 * max(1.0, x))
    assert x_grad_virial(spec, x) == pytest.approx(ref, rel=1e-5, abs=1e-8)


def test_kappa0_for_unit_coulomb_tail():
    x = np.linspace(0, 1e6, 200001)
    assert kappa0_from_virial(PotentialSpec(1.0, 1.0), x) == pytest.approx(math.sqrt(0.5), rel=1e-9)


def test_kappa0_rejects_nonpositive_virial():
    spec = PotentialSpec(1.0, 1.0, BumpSpec(-5.0, 3.0, 1.0))
    with pytest.raises(VirialViolation):
        kappa0_from_virial(spec, np.linspace(0, 10, 1001))


@pytest.mark.parametrize("kw", [dict(mu=0.0), dict(mu=2.0), dict(c1=0.0), dict(dim=0), dict(ell=-1)])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        PotentialSpec(**kw)


def test_bump_is_compactly_supported_and_smooth_at_the_edge():
    b = BumpSpec(1.0, 5.0, 2.0)
    r = np.array([2.9, 3.0, 7.0, 7.1])
    val, dval = b(r)
    assert np.all(val == 0) and np.all(dval == 0)
    near, _ = b(np.array([3.05]))
    assert 0 < near[0] < 1e-8


def test_polynomial_bump_derivative():
    b = BumpSpec(0.7, 1.0, 2.0, order=3)
    r = np.linspace(0.1, 2.9, 41)
    _, dval = b(r)
    ref = (b(r + 1e-6)[0] - b(r - 1e-6)[0]) / 2e-6
    assert np.allclose(dval, ref, atol=1e-7)


@given(mus, st.floats(0.0, 10.0), st.floats(0.0, 1e4))
def test_weights_are_ordered(mu, E, x):
    fam = WeightFamily(mu, math.sqrt(0.5))
    f, w, k, p = eval_weights(fam, x, E, powers=(1.0,))
    assert f > 0 and w == pytest.approx(bracket(x) * f)
    assert k == pytest.approx(bracket(x) ** (1 + mu / 2))
    assert p[1.0] == pytest.approx(bracket(x))


def test_weight_gradients_match_finite_difference():
    fam = WeightFamily(1.0, math.sqrt(0.5))
    x = np.linspace(-50, 50, 101)
    for E in (0.0, 0.3):
        assert np.allclose(fam.grad_f(x, E), fd(lambda y: fam.f(y, E), x), atol=1e-8)
        assert np.allclose(fam.grad_w(x, E), fd(lambda y: fam.w(y, E), x), atol=1e-7)


def test_negative_energy_weights_rejected():
    with pytest.raises(ValueError):
        eval_weights(WeightFamily(1.0, 0.5), 1.0, E=-1.0)


def test_default_potential_satisfies_hypotheses():
    rep = validate_assumptions(PotentialSpec(1.0, 1.0), np.linspace(0, 4000, 4001))
    assert rep.all_pass, rep.conditions


def test_power_tail_control_violates_decay():
    spec = PotentialSpec(1.0, 1.0, PowerTail(0.5, 1.2))
    rep = validate_assumptions(spec, np.linspace(0, 4000, 4001))
    assert not rep.conditions["V2_decay"]
    assert not rep.all_pass


def test_scaled_family():
    spec = PotentialSpec(0.8, 2.0).scaled(0.5)
    assert spec.c1 == 1.0 and spec.mu == 0.8
