"""Regularized resolvents ``(H - i eps K - zeta)^-1`` and the commutator estimates built on them.

``K`` stands for ``i[H, A]``. The production path uses the virial form
``K = 2H + W`` (tridiagonal). The derivative identity is checked with the
grid-consistent commutator ``K_d = i[H_d, A_d]`` so that it holds exactly
for the matrices involved; the gap between the two forms is reported
separately and is O(dx^2).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ._parallel import pmap
from .discrete import BandedOperator
from .resolve import Resolvent, ResolventError, power_norm, decade_maxima

__all__ = [
    "REGULARIZATION_C",
    "RegularizedPoint",
    "MourreRow",
    "DerivativeCheck",
    "RangeCheck",
    "regularized_operator",
    "regularized_resolvent",
    "commutator_operators",
    "lemma_derivative_check",
    "quadratic_estimate_ratio",
    "calibrate_C2",
    "numerical_range_positivity",
    "choose_eps0_prime",
    "epsilonA_inverse",
    "weighted_epsilonA_bound",
]

REGULARIZATION_C = 100.0


@dataclass(frozen=True)
class RegularizedPoint:
    """Spectral parameter, regularization strength and the constants of the estimate."""

    zeta: complex
    eps: float
    C2: float = 2.0
    eps0: float = 1.0
    C: float = REGULARIZATION_C

    def __post_init__(self):
        z = complex(self.zeta)
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if abs(z) > 1.0 + 1e-12:
            raise ValueError("need |zeta| <= 1")
        if -2.0 * self.eps0 * z.real > z.imag:
            raise ValueError("need -2 eps0 Re zeta <= Im zeta")

    @property
    def C1(self) -> float:
        return 2.0 * self.C2 - 1.0

    @property
    def g(self) -> float:
        z = complex(self.zeta)
        return self.C1 * z.real + self.C2 * z.imag / self.eps

    @property
    def admissible(self) -> bool:
        """The proof's criterion ``|zeta| <= g_zeta(eps)``."""
        return abs(complex(self.zeta)) <= self.g


def regularized_operator(H: BandedOperator, W, eps: float) -> BandedOperator:
    """``H - i eps (2H + W) = (1 - 2 i eps) H - i eps W``; complex symmetric."""
    W = np.asarray(W, dtype=float)
    bands = {k: (1 - 2j * eps) * b for k, b in H.bands.items()}
    bands[0] = bands[0] - 1j * eps * W
    return BandedOperator(bands, H.n, H.grid)


def regularized_resolvent(H: BandedOperator, W, zeta: complex, eps: float, rhs):
    """Solve ``(H - i eps(2H + W) - zeta) u = rhs``; returns ``(u, residual)``.

    Loss of invertibility is raised as :class:`ResolventError` with a
    ``numerical range`` message.
    """
    T = regularized_operator(H, W, eps)
    try:
        R = Resolvent(T, zeta)
    except ResolventError as exc:
        raise ResolventError(f"numerical range violation: {exc}") from exc
    u = R.solve(rhs)
    return u, R.max_residual


# ---------------------------------------------------------------------------
# derivative identity


def commutator_operators(H: BandedOperator, A: BandedOperator):
    """``K_d = i[H, A]`` and ``L_d = 2 K_d - i[K_d, A]`` on the grid.

    With these the identity
    ``(1 - 2 i eps) dR/deps = R A - A R + eps R L_d R`` is exact algebra for
    ``R = (H - i eps K_d - zeta)^-1``. In the continuum ``L = x . grad W``.
    """
    K = H.commutator(A).scale(1j)
    L = K.scale(2.0) - K.commutator(A).scale(1j)
    return K, L


class _BandedSolver:
    """Banded solve of ``(H - i eps K - zeta)`` with scipy's banded LAPACK."""

    def __init__(self, H: BandedOperator, K: BandedOperator, eps: float, zeta: complex):
        T = H - K.scale(1j * eps)
        T = T.shifted(zeta)
        self.T = T
        l = u = T.bandwidth
        n = T.n
        ab = np.zeros((l + u + 1, n), dtype=np.complex128)
        for k, b in T.bands.items():
            if k >= 0:
                ab[u - k, k:] = b
            else:
                ab[u - k, : n + k] = b
        self._ab, self._lu = ab, (l, u)

    def solve(self, rhs):
        return solve_banded(self._lu, self._ab, np.asarray(rhs, dtype=np.complex128))


@dataclass
class DerivativeCheck:
    steps: np.ndarray
    errors: np.ndarray
    order: float
    virial_gap: float
    commutator_gap: float
    printed_form_gap: float


def lemma_derivative_check(H: BandedOperator, A: BandedOperator, W, x_grad_W, zeta: complex, eps: float, phi,
                           steps=(1e-2, 5e-3, 2.5e-3, 1.25e-3)) -> DerivativeCheck:
    """Compare a central difference of ``eps -> R(eps) phi`` with the closed-form derivative.

    ``errors[k]`` is the relative gap at step ``steps[k]`` (expected O(step^2));
    ``order`` is the fitted exponent. ``virial_gap`` compares ``L_d phi`` with
    ``(x . grad W) phi`` and ``commutator_gap`` compares ``K_d phi`` with
    ``(2H + W) phi`` (both O(dx^2) on smooth interior vectors). ``printed_form_gap``
    is the relative gap if the last term carried ``i eps`` instead of ``eps``.
    """
    phi = np.asarray(phi, dtype=np.complex128)
    K, L = commutator_operators(H, A)
    S = _BandedSolver(H, K, eps, zeta)
    Rphi = S.solve(phi)
    closed = S.solve(A.matvec(phi)) - A.matvec(Rphi) + eps * S.solve(L.matvec(Rphi))
    closed = closed / (1 - 2j * eps)
    scale = np.linalg.norm(closed)
    errs = []
    for h in steps:
        up = _BandedSolver(H, K, eps + h, zeta).solve(phi)
        dn = _BandedSolver(H, K, eps - h, zeta).solve(phi)
        errs.append(np.linalg.norm((up - dn) / (2 * h) - closed) / scale)
    errs = np.array(errs)
    order = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
    printed = S.solve(A.matvec(phi)) - A.matvec(Rphi) + 1j * eps * S.solve(L.matvec(Rphi))
    printed = printed / (1 - 2j * eps)
    nphi = np.linalg.norm(phi)
    virial_form = 2.0 * H.matvec(phi) + np.asarray(W) * phi
    return DerivativeCheck(np.asarray(steps, dtype=float), errs, order,
                           float(np.linalg.norm(L.matvec(phi) - np.asarray(x_grad_W) * phi) / nphi),
                           float(np.linalg.norm(K.matvec(phi) - virial_form) / nphi),
                           float(np.linalg.norm(printed - closed) / scale))


# ---------------------------------------------------------------------------
# quadratic estimate


def quadratic_estimate_ratio(H: BandedOperator, W, V, zeta: complex, eps: float, B=None, mu: float = 1.0,
                             gamma: str = "full", tol: float = 1e-7, maxiter: int = 400, seed: int = 0):
    """``eps ||gamma R B||^2 / ||B^* R B||`` for ``R = (H - i eps(2H+W) - zeta)^-1``.

    ``gamma = "full"`` uses ``gamma^2 = p^2 + f^2`` with ``f^2 = |zeta| + <x>^-mu``
    (``||gamma v||^2 = <v, gamma^2 v>``, no square root needed);
    ``gamma = "bracket"`` uses ``gamma^2 = <x>^-mu``. ``B`` is ``None``
    (identity), a vector (diagonal) or a dense matrix.
    Returns ``(ratio, ||gamma R B||^2, ||B^* R B||)``.
    """
    n = H.n
    x = H.grid.points
    V = np.asarray(V, dtype=float)
    jb_mu = (1 + x * x) ** (-mu / 2)
    if gamma == "full":
        f2 = abs(zeta) + jb_mu
        def g2(u):
            return H.matvec(u) - V * u + f2 * u
    elif gamma == "bracket":
        def g2(u):
            return jb_mu * u
    else:
        raise ValueError("gamma must be 'full' or 'bracket'")
    if B is None:
        Bf = Bh = lambda v: v
    elif np.ndim(B) == 1:
        b = np.asarray(B)
        Bf = lambda v: b * v
        Bh = lambda v: np.conj(b) * v
    else:
        Bm = np.asarray(B)
        Bf = lambda v: Bm @ v
        Bh = lambda v: Bm.conj().T @ v
    T = regularized_operator(H, W, eps)
    R = Resolvent(T, zeta)
    if B is not None and not np.any(B):
        return 0.0, 0.0, 0.0
    num, _, _ = power_norm(lambda v: R.solve(Bf(v)), lambda u: Bh(R.solve_adjoint(g2(u))), n,
                           tol=tol, maxiter=maxiter, seed=seed)
    den, _, _ = power_norm(lambda v: Bh(R.solve(Bf(v))), lambda u: Bh(R.solve_adjoint(Bf(u))), n,
                           tol=tol, maxiter=maxiter, seed=seed)
    num2 = num * num
    return (eps * num2 / den if den > 0 else 0.0), num2, den


# ---------------------------------------------------------------------------
# numerical range identity and positivity


def calibrate_C2(W, V, x, mu: float) -> float:
    """Smallest ``C2`` with ``C2 W + V >= <x>^-mu`` at every grid point."""
    W = np.asarray(W, dtype=float)
    if np.any(W <= 0):
        raise ValueError("virial must be positive")
    target = (1 + np.asarray(x) ** 2) ** (-mu / 2) - np.asarray(V)
    return float(np.max(target / W))


@dataclass
class RangeCheck:
    identity_residual: float
    positivity_margin: float
    pointwise_margin: float
    worst_vector: int
    passed: bool


def numerical_range_positivity(H: BandedOperator, W, V, zeta: complex, eps: float, C2: float,
                               test_vectors, mu: float = 1.0) -> RangeCheck:
    """Check the rearrangement of ``-C1 Re(T - zeta) - C2/eps Im(T - zeta)`` and its positivity.

    ``T = H - i eps(2H + W)``, ``C1 = 2 C2 - 1``, and ``Re/Im`` are the
    Hermitian and skew-Hermitian parts. The identity with
    ``p^2 + C2 W + V + g`` holds exactly as matrices; the returned residual
    is ``max |<u, (lhs - rhs) u>| / ||u||^2`` over the test vectors.
    """
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    x = H.grid.points
    C1 = 2 * C2 - 1
    pt = RegularizedPoint(zeta, eps, C2=C2)
    Tz = regularized_operator(H, W, eps).shifted(zeta).to_dense()
    re_part = (Tz + Tz.conj().T) / 2
    im_part = (Tz - Tz.conj().T) / 2j
    lhs_op = -C1 * re_part - (C2 / eps) * im_part
    p2 = H.to_dense() - np.diag(V)
    rhs_op = p2 + np.diag(C2 * W + V + pt.g)
    floor = (1 + x * x) ** (-mu / 2)
    worst_res, worst_margin, worst_idx = 0.0, math.inf, -1
    for i, u in enumerate(np.atleast_2d(test_vectors)):
        u = np.asarray(u, dtype=np.complex128)
        nu = float(np.vdot(u, u).real)
        res = abs(np.vdot(u, lhs_op @ u) - np.vdot(u, rhs_op @ u)) / nu
        marg = float(np.vdot(u, (C2 * W + V - floor) * u).real) / nu
        worst_res = max(worst_res, res)
        if marg < worst_margin:
            worst_margin, worst_idx = marg, i
    pointwise = float(np.min(C2 * W + V - floor))
    return RangeCheck(float(worst_res), float(worst_margin), pointwise, worst_idx,
                      bool(worst_margin >= 0 and pointwise >= -1e-14))


def choose_eps0_prime(zetas, eps_grid, C2: float = 2.0) -> float:
    """Largest grid ``eps`` with ``|zeta| <= g_zeta(eps)`` at every sweep point."""
    C1 = 2 * C2 - 1
    ok = [e for e in sorted(eps_grid)
          if all(abs(z) <= C1 * z.real + C2 * z.imag / e for z in map(complex, zetas))]
    if not ok:
        raise ValueError("no admissible eps on the grid")
    return float(max(ok))


# ---------------------------------------------------------------------------
# <eps A>-weighted bound


def epsilonA_inverse(A: BandedOperator, eps: float, C: float = REGULARIZATION_C, eig=None) -> np.ndarray:
    """Dense ``<eps A>^-1 = (C + eps^2 A^2)^-1/2`` from the Hermitian eigendecomposition of ``A``."""
    if eig is None:
        eig = np.linalg.eigh(A.to_dense())
    a, Q = eig
    return (Q * (C + (eps * a) ** 2) ** -0.5) @ Q.conj().T


@dataclass
class MourreRow:
    E: float
    arg: float
    eps: float
    delta: float
    quantity: str
    value: float
    flags: str = ""

    CSV_HEADER = ("E", "arg", "eps", "delta", "quantity", "value", "flags")

    def as_tuple(self):
        return (self.E, self.arg, self.eps, self.delta, self.quantity, self.value, self.flags)


def _epsA_task(args):
    H, W, eigA, E, phi, eps, delta, mu, C = args
    x = H.grid.points
    zeta = E * complex(math.cos(phi), math.sin(phi))
    f_half = (E + (1 + x * x) ** (-mu / 2)) ** 0.25
    d = f_half * (1 + x * x) ** (-(0.5 + delta) / 2)
    R = Resolvent(regularized_operator(H, W, eps), zeta)
    M = d[:, None] * R.dense() * d[None, :]
    Q = epsilonA_inverse(None, eps, C, eig=eigA)
    val = float(np.linalg.norm(Q @ M @ Q, 2))
    return MourreRow(E, phi, eps, delta, "epsA_weighted_norm", val, "")


def weighted_epsilonA_bound(H: BandedOperator, A: BandedOperator, W, energies, epsilons, delta: float = 0.25,
                            mu: float = 1.0, theta: float = math.pi / 2, C: float = REGULARIZATION_C,
                            workers: int = 1):
    """Dense sweep of ``||<eps A>^-1 f^1/2 <x>^-(1/2+delta) R_zeta(eps) <x>^-(1/2+delta) f^1/2 <eps A>^-1||``.

    Returns ``(rows, statistic)`` where the statistic is the ratio of the
    per-decade maxima (smallest E decade over largest) taken over all eps.
    """
    if H.n > 512:
        raise ValueError("dense <eps A> weights need n <= 512")
    if not (0 < delta < 0.5):
        warnings.warn("the bound is stated for 0 < delta < 1/2", stacklevel=2)
    try:
        eigA = np.linalg.eigh(A.to_dense())
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"dense eigensolve of A failed: {exc}") from exc
    W = np.asarray(W, dtype=float)
    tasks = [(H, W, eigA, float(E), fr * theta, float(e), delta, mu, C)
             for E in energies for fr in (0.25, 0.5, 0.75) for e in epsilons]
    rows = pmap(_epsA_task, tasks, workers)
    _, mx = decade_maxima([r.E for r in rows], [r.value for r in rows])
    return rows, float(mx[0] / mx[-1])
