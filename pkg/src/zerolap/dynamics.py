"""Low-energy time evolution through the eigen-representation of the box Hamiltonian.

``exp(-itH) (f 1_[0,inf))(H)`` is assembled from the eigenpairs below a cap,
so unitarity is exact and any ``t`` can be evaluated. A box of radius ``R``
has a discrete spectrum; its level spacing inside the energy window sets
the horizon ``T_max`` beyond which the box no longer imitates the
continuum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .discrete import BandedOperator
from .model import bracket
from .resolve import boundary_values

__all__ = [
    "EigenSolveError",
    "EnergyWindow",
    "LowEnergyPropagator",
    "DecayReport",
    "diagonalize_low_energy",
    "weighted_density_at_zero",
    "eigen_density",
    "local_decay_check",
    "admissible_m",
    "quantum_minimal_velocity",
    "log_slope",
]


class EigenSolveError(RuntimeError):
    """The tridiagonal eigensolver failed or returned inaccurate pairs."""


@dataclass(frozen=True)
class EnergyWindow:
    """C-infinity bump with support inside ``[-E1, E1]``.

    The bump is centred at ``center * E1`` with radius ``radius * E1``. When
    0 lies inside the support the bump is normalized to ``f(0) = 1``. The
    default off-centre placement then makes ``f'(0) != 0`` (the generic
    case). Otherwise the peak is 1 and ``f(0) = 0``.
    """

    E1: float
    center: float = 0.25
    radius: float = 0.75

    def __post_init__(self):
        if not self.E1 > 0:
            raise ValueError("E1 must be positive")
        if self.radius <= 0 or abs(self.center) + self.radius > 1 + 1e-12:
            raise ValueError("window must stay inside [-E1, E1]")

    @staticmethod
    def _bump(u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) < 1
        return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - u * u, 1.0)), 0.0)

    def __call__(self, lam):
        c, r = self.center * self.E1, self.radius * self.E1
        norm = float(self._bump(-c / r)) if abs(c) < r else math.exp(-1.0)
        return self._bump((np.asarray(lam, dtype=float) - c) / r) / norm

    @property
    def f0(self) -> float:
        return float(self(0.0))

    @property
    def support(self) -> tuple[float, float]:
        c, r = self.center * self.E1, self.radius * self.E1
        return (c - r, c + r)


@dataclass
class LowEnergyPropagator:
    H: BandedOperator
    cap: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    window: EnergyWindow
    max_eig_residual: float

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.eigenvalues < 0))

    @property
    def positive(self) -> np.ndarray:
        """Indices of eigenpairs with ``0 <= lam < E1`` (the window's positive support)."""
        lam = self.eigenvalues
        return np.flatnonzero((lam >= 0) & (lam < self.window.E1))

    @property
    def max_spacing(self) -> float:
        lam = self.eigenvalues[self.eigenvalues >= 0]
        lam = lam[lam <= self.window.E1]
        if lam.size < 2:
            return math.inf
        return float(np.max(np.diff(lam)))

    @property
    def horizon(self) -> float:
        """``T_max = 1 / (largest level spacing inside [0, E1])``."""
        return 1.0 / self.max_spacing

    def coefficients(self, t: float) -> np.ndarray:
        """``exp(-i t lam) f(lam)`` on the positive window pairs."""
        lam = self.eigenvalues[self.positive]
        return np.exp(-1j * t * lam) * self.window(lam)

    def evolve(self, psi, t: float, windowed: bool = True) -> np.ndarray:
        """``exp(-itH) P psi`` with ``P = (f 1_[0,inf))(H)`` or the spectral projector below the cap."""
        if windowed:
            V = self.eigenvectors[:, self.positive]
            return V @ (self.coefficients(t) * (V.T @ psi))
        V = self.eigenvectors
        return V @ (np.exp(-1j * t * self.eigenvalues) * (V.T @ psi))

    def windowed_operator(self, t: float, rows=None, left=None, right=None) -> np.ndarray:
        """Dense ``diag(left) exp(-itH)(f 1_[0,inf))(H) diag(right)`` restricted to ``rows``.

        Columns always run over all nodes where ``right`` is given (or all nodes).
        """
        V = self.eigenvectors[:, self.positive]
        Vl = V if rows is None else V[rows]
        if left is not None:
            Vl = np.asarray(left)[:, None] * Vl
        Vr = V if right is None else np.asarray(right)[:, None] * V
        return (Vl * self.coefficients(t)) @ Vr.T


def diagonalize_low_energy(H: BandedOperator, cap: float, window: EnergyWindow | None = None,
                           residual_tol: float = 1e-10) -> LowEnergyPropagator:
    """All eigenpairs with ``lam <= cap`` of the real symmetric tridiagonal ``H``.

    The default window has ``E1 = cap / 4``. Raises :class:`EigenSolveError`
    when LAPACK fails or an eigenresidual exceeds ``residual_tol``.
    """
    if H.is_complex:
        raise ValueError("H must be real symmetric")
    lo, d, up = H.tridiagonal()
    if not np.allclose(lo, up):
        raise ValueError("H must be symmetric")
    lower = float(d.min() - 2 * np.abs(up).max()) - 1.0
    try:
        lam, vec = eigh_tridiagonal(d, up, select="v", select_range=(lower, cap))
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"tridiagonal eigensolver failed: {exc}") from exc
    res = 0.0
    for j in range(0, lam.size, max(1, lam.size // 64)):
        res = max(res, float(np.linalg.norm(H.matvec(vec[:, j]) - lam[j] * vec[:, j])))
    if res > residual_tol:
        raise EigenSolveError(f"eigenresidual {res:.2e} above {residual_tol:.0e}")
    window = window or EnergyWindow(cap / 4.0)
    return LowEnergyPropagator(H, cap, lam, vec, window, res)


def weighted_density_at_zero(H: BandedOperator, s: float, floor: float = 1e-10, eta0: float = 1e-2,
                             halvings: int = 6):
    """``<x>^-s E'(+0) <x>^-s`` on the nodes where ``<x>^-s >= floor * max``.

    Returns ``(nodes, density, error)``; the density comes from the
    Richardson-extrapolated boundary values of the resolvent at 0.
    """
    w = bracket(H.grid.points) ** -s
    nodes = np.flatnonzero(w >= floor * w.max())
    bv = boundary_values(H, w, 0.0, eta0=eta0, halvings=halvings, scale=1.0, nodes=nodes)
    return nodes, np.real_if_close(bv.density, tol=1e6), bv.density_error


def eigen_density(prop: LowEnergyPropagator, lam: float, width: float, weight, nodes) -> np.ndarray:
    """Lorentzian-smoothed eigen-histogram ``sum_n L(lam - lam_n) W phi_n phi_n^T W`` on ``nodes``."""
    ev = prop.eigenvalues
    L = width / math.pi / ((lam - ev) ** 2 + width**2)
    B = np.asarray(weight)[nodes, None] * prop.eigenvectors[nodes]
    return (B * L) @ B.T


def log_slope(ts, values) -> float:
    """Least-squares slope of ``log values`` against ``log ts``."""
    return float(np.polyfit(np.log(ts), np.log(values), 1)[0])


@dataclass
class DecayReport:
    ts: np.ndarray
    norms: np.ndarray
    slope: float
    s: float
    kappa: float | None
    horizon: float
    flags: list = field(default_factory=list)

    CSV_HEADER = ("t", "norm", "kappa", "s", "slope_so_far")

    def rows(self):
        out = []
        for i, (t, v) in enumerate(zip(self.ts, self.norms)):
            so_far = log_slope(self.ts[: i + 1], self.norms[: i + 1]) if i >= 1 else float("nan")
            out.append((float(t), float(v), "" if self.kappa is None else self.kappa, self.s, so_far))
        return out


def _horizon_flags(ts, prop):
    return ["horizon_violation"] if np.max(ts) > prop.horizon * (1 + 1e-12) else []


def local_decay_check(prop: LowEnergyPropagator, nodes, density0, s: float, ts, mu: float = 1.0) -> DecayReport:
    """Slope of ``||<x>^-s (exp(-itH)(f 1_[0,inf))(H) + i t^-1 f(0) E'(+0)) <x>^-s||`` in ``t``.

    ``nodes``/``density0`` come from :func:`weighted_density_at_zero`; the
    norm is taken on those nodes (the weight is below the floor elsewhere).
    """
    ts = np.asarray(ts, dtype=float)
    flags = _horizon_flags(ts, prop)
    threshold = 2.5 * (1 + mu / 2)
    if s <= threshold:
        flags.append("weight_below_threshold")
    w = bracket(prop.H.grid.points[nodes]) ** -s
    V = w[:, None] * prop.eigenvectors[nodes][:, prop.positive]
    f0 = prop.window.f0
    norms = []
    for t in ts:
        M = (V * prop.coefficients(t)) @ V.T + (1j * f0 / t) * density0
        norms.append(np.linalg.norm(M, 2))
    norms = np.array(norms)
    return DecayReport(ts, norms, log_slope(ts, norms), s, None, prop.horizon, flags)


def admissible_m(s: float, eps: float, eps_prime: float, mu: float = 1.0) -> int:
    """Smallest integer ``m`` with ``1/2 + (1 + eps'/2)/eps < m < s/(1 + mu/2) + 1/2``.

    Raises ``ValueError`` when the chain has no integer solution.
    """
    low = 0.5 + (1.0 + 0.5 * eps_prime) / eps
    high = s / (1.0 + mu / 2.0) + 0.5
    m = math.floor(low) + 1
    if not m < high:
        raise ValueError(f"no integer m in ({low:.4g}, {high:.4g}); increase s")
    return m


def quantum_minimal_velocity(prop: LowEnergyPropagator, s: float, eps: float, eps_prime: float, ts,
                             mu: float = 1.0, kappa: float | None = None, check_chain: bool = True) -> DecayReport:
    """Slope of ``||1(|x| < t^kappa) exp(-itH)(f 1_[0,inf))(H) <x>^-s||``.

    ``kappa`` defaults to ``(1 - eps)/(1 + mu/2)``; the sharp cutoff is a
    diagonal indicator. With ``check_chain`` the parameter chain is
    validated first.
    """
    if check_chain:
        admissible_m(s, eps, eps_prime, mu)
    kappa = (1.0 - eps) / (1.0 + mu / 2.0) if kappa is None else kappa
    ts = np.asarray(ts, dtype=float)
    x = np.abs(prop.H.grid.points)
    right = bracket(prop.H.grid.points) ** -s
    norms = []
    for t in ts:
        rows = np.flatnonzero(x < t**kappa)
        if rows.size == 0:
            norms.append(0.0)
            continue
        norms.append(np.linalg.norm(prop.windowed_operator(t, rows=rows, right=right), 2))
    norms = np.array(norms)
    flags = _horizon_flags(ts, prop)
    if np.any(norms == 0):
        flags.append("empty_cutoff_region")
        slope = float("nan")
    else:
        slope = log_slope(ts, norms)
    return DecayReport(ts, norms, slope, s, kappa, prop.horizon, flags)
