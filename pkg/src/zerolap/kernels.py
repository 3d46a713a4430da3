"""Hot inner loops.

Each kernel exists twice: a compiled loop (numba) and a reference path
built from numpy/LAPACK. ``ZEROLAP_NO_NUMBA=1`` selects the reference path.
"""
import numpy as np
from scipy.linalg import lapack

from ._jit import USE_NUMBA, njit

__all__ = [
    "USE_NUMBA",
    "SingularPivotError",
    "TridiagLU",
    "tridiag_factor",
    "tridiag_matvec",
    "dopri5_flow",
    "exterior_green",
]


class SingularPivotError(ArithmeticError):
    """Raised when a tridiagonal factorization hits a (numerically) zero pivot."""


# ---------------------------------------------------------------------------
# tridiagonal LU with partial pivoting (same storage as LAPACK ?gttrf)


@njit
def _gttrf(dl, d, du):
    n = d.shape[0]
    du2 = np.zeros(max(n - 2, 0), dtype=d.dtype)
    ipiv = np.arange(n).astype(np.int64)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] != 0:
                fact = dl[i] / d[i]
                dl[i] = fact
                d[i + 1] = d[i + 1] - fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            ipiv[i] = i + 1
    return du2, ipiv


@njit
def _gttrs(dl, d, du, du2, ipiv, b):
    n = d.shape[0]
    x = b.copy()
    for i in range(n - 1):
        if ipiv[i] == i:
            x[i + 1] = x[i + 1] - dl[i] * x[i]
        else:
            temp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = temp - dl[i] * x[i]
    x[n - 1] = x[n - 1] / d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
    return x


@njit
def _tridiag_matvec(lower, diag, upper, v):
    n = diag.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for i in range(n):
        acc = diag[i] * v[i]
        if i > 0:
            acc += lower[i - 1] * v[i - 1]
        if i < n - 1:
            acc += upper[i] * v[i + 1]
        out[i] = acc
    return out


def _tridiag_matvec_ref(lower, diag, upper, v):
    out = diag * v
    out[1:] += lower * v[:-1]
    out[:-1] += upper * v[1:]
    return out


def tridiag_matvec(lower, diag, upper, v):
    """Apply the tridiagonal matrix (lower, diag, upper) to ``v``."""
    if USE_NUMBA:
        return _tridiag_matvec(lower, diag, upper, v)
    return _tridiag_matvec_ref(lower, diag, upper, v)


class TridiagLU:
    """Pivoted LU factorization of a complex tridiagonal matrix.

    ``solve`` applies the inverse; ``solve_adjoint_symmetric`` applies the
    inverse adjoint for complex *symmetric* matrices, where
    ``inv(T)^* v = conj(inv(T) conj(v))``.
    """

    def __init__(self, lower, diag, upper):
        lower = np.asarray(lower, dtype=np.complex128)
        diag = np.asarray(diag, dtype=np.complex128)
        upper = np.asarray(upper, dtype=np.complex128)
        self.n = diag.shape[0]
        self._orig = (lower.copy(), diag.copy(), upper.copy())
        scale = max(np.abs(diag).max(), np.abs(lower).max(initial=0.0), np.abs(upper).max(initial=0.0))
        if USE_NUMBA:
            dl, d, du = lower.copy(), diag.copy(), upper.copy()
            du2, ipiv = _gttrf(dl, d, du)
        else:
            dl, d, du, du2, ipiv, info = lapack.zgttrf(lower, diag, upper)
            if info < 0:  # pragma: no cover - argument error
                raise ValueError(f"zgttrf argument error {info}")
        self._factors = (dl, d, du, du2, ipiv)
        self.min_pivot = float(np.abs(d).min()) / scale if scale > 0 else 0.0
        if not np.all(np.isfinite(d)) or self.min_pivot < 1e3 * np.finfo(float).eps:
            raise SingularPivotError(
                f"pivot collapse: min |u_ii| / scale = {self.min_pivot:.3e}"
            )

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        dl, d, du, du2, ipiv = self._factors
        if USE_NUMBA:
            return _gttrs(dl, d, du, du2, ipiv, b)
        x, info = lapack.zgttrs(dl, d, du, du2, ipiv, b)
        return x

    def solve_adjoint_symmetric(self, b):
        return np.conj(self.solve(np.conj(np.asarray(b, dtype=np.complex128))))

    def matvec(self, v):
        lower, diag, upper = self._orig
        return tridiag_matvec(lower, diag, upper, np.asarray(v, dtype=np.complex128))


def tridiag_factor(lower, diag, upper):
    return TridiagLU(lower, diag, upper)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) for the 1-d flow x' = 2 xi, xi' = -V'(x)
#
# potential: V(x) = -c1 <x>^-mu + A bump((|x| - r0)/rho)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B5 = _A[6].copy()
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output (Hairer's continuous extension of order 4)
_D = np.array([
    -12715105075.0 / 11282082432.0, 0.0, 87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0,
])


@njit
def _potential(x, mu, c1, amp, r0, rho):
    """Return V(x), V'(x) for the default parametric family (1-d)."""
    jb = np.sqrt(1.0 + x * x)
    v = -c1 * jb ** (-mu)
    dv = c1 * mu * x * jb ** (-mu - 2.0)
    if amp != 0.0:
        r = abs(x)
        u = (r - r0) / rho
        if abs(u) < 1.0:
            q = 1.0 - u * u
            e = np.exp(-1.0 / q)
            v += amp * e
            # d/dr exp(-1/q) = exp(-1/q) * q'/q^2 with q' = -2u/rho
            dr = amp * e * (-2.0 * u / rho) / (q * q)
            dv += dr * (1.0 if x >= 0 else -1.0)
    return v, dv


@njit
def _rhs(y, mu, c1, amp, r0, rho):
    v, dv = _potential(y[0], mu, c1, amp, r0, rho)
    out = np.empty(2)
    out[0] = 2.0 * y[1]
    out[1] = -dv
    return out


@njit
def _energy(y, mu, c1, amp, r0, rho):
    v, dv = _potential(y[0], mu, c1, amp, r0, rho)
    return y[1] * y[1] + v


@njit
def _dopri5_flow(y0, t_eval, params, rtol, atol, drift_tol, h0, max_steps,
                 C, A, B5, E, D):
    mu, c1, amp, r0, rho = params[0], params[1], params[2], params[3], params[4]
    n_out = t_eval.shape[0]
    out = np.empty((n_out, 2))
    y = y0.copy()
    t = 0.0
    e0 = _energy(y, mu, c1, amp, r0, rho)
    k = np.empty((7, 2))
    k[0] = _rhs(y, mu, c1, amp, r0, rho)
    h = h0
    idx = 0
    while idx < n_out and t_eval[idx] <= t:
        out[idx] = y
        idx += 1
    n_acc = 0
    n_rej = 0
    max_drift = 0.0
    status = 0
    t_end = t_eval[n_out - 1]
    while idx < n_out:
        if n_acc + n_rej >= max_steps:
            status = 1
            break
        if h < 1e-14 * max(1.0, abs(t)):
            status = 2
            break
        if t + h > t_end:
            h = t_end - t
        for s in range(1, 7):
            ys = y.copy()
            for j in range(s):
                ys += h * A[s, j] * k[j]
            k[s] = _rhs(ys, mu, c1, amp, r0, rho)
        y_new = y + h * (B5[0] * k[0] + B5[2] * k[2] + B5[3] * k[3] + B5[4] * k[4] + B5[5] * k[5])
        err = np.zeros(2)
        for j in range(7):
            err += h * E[j] * k[j]
        sc0 = atol + rtol * max(abs(y[0]), abs(y_new[0]))
        sc1 = atol + rtol * max(abs(y[1]), abs(y_new[1]))
        en = np.sqrt(0.5 * ((err[0] / sc0) ** 2 + (err[1] / sc1) ** 2))
        drift = abs(_energy(y_new, mu, c1, amp, r0, rho) - e0)
        if en <= 1.0 and drift <= drift_tol:
            # dense output for all requested times inside (t, t+h]
            while idx < n_out and t_eval[idx] <= t + h:
                th = (t_eval[idx] - t) / h
                th1 = 1.0 - th
                ydiff = y_new - y
                bspl = h * k[0] - ydiff
                r4 = np.zeros(2)
                for j in range(7):
                    r4 += h * D[j] * k[j]
                out[idx] = y + th * (ydiff + th1 * (bspl + th * (ydiff - h * k[6] - bspl + th1 * r4)))
                idx += 1
            t = t + h
            y = y_new
            k[0] = k[6]
            n_acc += 1
            if drift > max_drift:
                max_drift = drift
            fac = 0.9 * max(en, 1e-10) ** (-0.2)
            fac = min(5.0, max(0.2, fac))
            h = h * fac
        else:
            n_rej += 1
            if en > 1.0:
                fac = max(0.1, 0.9 * en ** (-0.2))
            else:
                fac = 0.5
            h = h * fac
    return out[:idx], n_acc, n_rej, max_drift, status


def dopri5_flow(y0, t_eval, params, rtol=1e-10, atol=1e-12, drift_tol=np.inf,
                h0=1e-3, max_steps=5_000_000):
    """Integrate the 1-d flow and sample it at ``t_eval`` (increasing, from t=0).

    Returns ``(states, n_accepted, n_rejected, max_energy_drift, status)``;
    ``status`` is 0 on success, 1 when the step budget ran out and 2 on step
    collapse. ``params = (mu, c1, bump_amp, bump_r0, bump_rho)``.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    t_eval = np.asarray(t_eval, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    return _dopri5_flow(y0, t_eval, params, float(rtol), float(atol), float(drift_tol),
                        float(h0), int(max_steps), _C, _A, _B5, _E, _D)


# ---------------------------------------------------------------------------
# exterior Green's function of a semi-infinite Dirichlet chain


@njit
def _exterior_green(diag, off2):
    g = 0j
    for j in range(diag.shape[0] - 1, -1, -1):
        g = 1.0 / (diag[j] - off2 * g)
    return g


def _exterior_green_ref(diag, off2):
    n = diag.shape[0]
    off = np.full(n - 1, np.sqrt(complex(off2)), dtype=np.complex128)
    rhs = np.zeros(n, dtype=np.complex128)
    rhs[0] = 1.0
    _, _, _, x, info = lapack.zgtsv(off.copy(), diag.astype(np.complex128), off.copy(), rhs)
    if info != 0:
        raise SingularPivotError(f"zgtsv failed with info={info}")
    return complex(x[0])


def exterior_green(diag, off2):
    """Corner entry ``[(T_ext)^-1]_{00}`` of a symmetric tridiagonal chain.

    ``diag`` holds the diagonal ordered away from the coupling node and every
    off-diagonal entry squares to ``off2``. The compiled path runs the
    backward continued fraction; the reference path solves with LAPACK.
    """
    diag = np.ascontiguousarray(diag, dtype=np.complex128)
    if diag.shape[0] == 0:
        return 0j
    if USE_NUMBA:
        return complex(_exterior_green(diag, complex(off2)))
    return _exterior_green_ref(diag, off2)
