import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerolap import kernels
from zerolap.kernels import SingularPivotError, TridiagLU, dopri5_flow, exterior_green, tridiag_matvec


def random_tridiag(n, seed, dominance=4.0):
    r = np.random.default_rng(seed)
    lo = r.standard_normal(n - 1) + 1j * r.standard_normal(n - 1)
    up = r.standard_normal(n - 1) + 1j * r.standard_normal(n - 1)
    d = dominance + r.standard_normal(n) + 1j * r.standard_normal(n)
    return lo, d, up


def dense(lo, d, up):
    return np.diag(d) + np.diag(lo, -1) + np.diag(up, 1)


@given(st.integers(2, 80), st.integers(0, 2**31), st.floats(-3.0, 6.0))
def test_lu_solve_matches_dense(n, seed, dom):
    lo, d, up = random_tridiag(n, seed, dom)
    b = np.random.default_rng(seed + 1).standard_normal(n) + 0j
    try:
        lu = TridiagLU(lo, d, up)
    except SingularPivotError:
        return
    x = lu.solve(b)
    M = dense(lo, d, up)
    assert np.linalg.norm(M @ x - b) <= 1e-8 * np.linalg.norm(M, 2) * np.linalg.norm(x) + 1e-12
    assert np.allclose(lu.matvec(x), M @ x)


def test_symmetric_adjoint_solve():
    lo, d, _ = random_tridiag(30, 3)
    lu = TridiagLU(lo, d, lo)
    b = np.arange(30) + 1j
    M = dense(lo, d, lo)
    assert np.allclose(lu.solve_adjoint_symmetric(b), np.linalg.solve(M.conj().T, b))


def test_singular_pivot_detected():
    with pytest.raises(SingularPivotError):
        TridiagLU(np.ones(3), np.zeros(4), np.ones(3) * 0)


@given(st.integers(2, 50), st.integers(0, 2**31))
def test_matvec(n, seed):
    lo, d, up = random_tridiag(n, seed)
    v = np.random.default_rng(seed).standard_normal(n) + 0j
    assert np.allclose(tridiag_matvec(lo, d, up, v), dense(lo, d, up) @ v)


@given(st.integers(1, 60), st.floats(2.5, 6.0), st.floats(0.1, 1.0))
def test_exterior_green_is_corner_of_inverse(n, shift, off):
    d = shift + 0.1j + np.linspace(0, 1, n)
    M = np.diag(d) + off * (np.eye(n, k=1) + np.eye(n, k=-1))
    assert exterior_green(d, off * off) == pytest.approx(np.linalg.inv(M)[0, 0], rel=1e-10)


def test_free_flow_is_exact():
    t = np.linspace(0, 50, 11)
    states, acc, rej, drift, status = dopri5_flow([1.0, 0.7], t, (1.0, 0.0, 0.0, 0.0, 1.0))
    assert status == 0
    assert np.allclose(states[:, 0], 1.0 + 1.4 * t, rtol=1e-12)
    assert np.allclose(states[:, 1], 0.7)


def test_flow_matches_scipy_and_conserves_energy():
    from scipy.integrate import solve_ivp
    mu, c1 = 1.0, 1.0
    def rhs(_, y):
        x, xi = y
        return [2 * xi, -c1 * mu * x * (1 + x * x) ** (-mu / 2 - 1)]
    t = np.linspace(0, 200, 41)
    states, _, _, drift, status = dopri5_flow([3.0, 0.2], t, (mu, c1, 0.0, 0.0, 1.0), rtol=1e-11, atol=1e-13)
    ref = solve_ivp(rhs, (0, 200), [3.0, 0.2], t_eval=t, method="DOP853", rtol=1e-12, atol=1e-13).y.T
    assert status == 0
    assert np.allclose(states, ref, rtol=1e-7, atol=1e-7)
    assert drift < 1e-8


def test_step_budget_exhaustion_reported():
    t = np.array([0.0, 1e4])
    *_, status = dopri5_flow([3.0, 0.2], t, (1.0, 1.0, 0.0, 0.0, 1.0), max_steps=10)
    assert status == 1


SCRIPT = """
import json, numpy as np
from zerolap import kernels
r = np.random.default_rng(5)
lo = r.standard_normal(199) + 0j; d = 4 + r.standard_normal(200) - 0.2j; b = r.standard_normal(200) + 1j
x = kernels.TridiagLU(lo, d, lo).solve(b)
y = kernels.tridiag_matvec(lo, d, lo, b)
g = kernels.exterior_green(d, 0.81)
s = kernels.dopri5_flow([5.0, 0.3], np.linspace(0, 100, 5), (1.0, 1.0, 0.3, 2.0, 1.0))[0]
print(json.dumps({"numba": kernels.USE_NUMBA, "x": [x.real.tolist(), x.imag.tolist()],
                  "y": [y.real.tolist(), y.imag.tolist()], "g": [g.real, g.imag], "s": s.tolist()}))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("ZEROLAP_NO_NUMBA", None)
    if disable:
        env["ZEROLAP_NO_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_compiled_and_reference_paths_agree():
    fast, ref = _run(False), _run(True)
    assert ref["numba"] is False
    assert fast["numba"] is kernels.USE_NUMBA
    for key in ("x", "y", "g", "s"):
        assert np.allclose(np.asarray(fast[key]), np.asarray(ref[key]), rtol=1e-9, atol=1e-12), key
