"""Shifted solves, weighted resolvent norms, sector sweeps and boundary values."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import pmap, task_seed
from .discrete import BandedOperator
from .kernels import SingularPivotError, TridiagLU

__all__ = [
    "SOLVE_TOL",
    "ResolventError",
    "SectorPoint",
    "Resolvent",
    "NormEstimate",
    "ProbeRow",
    "ResolventProbe",
    "HoelderFit",
    "BoundaryValue",
    "ExpansionFit",
    "PerturbedSolve",
    "shifted_solve",
    "power_norm",
    "weighted_norm",
    "dense_weighted_norm",
    "sector_points",
    "decade_maxima",
    "lap_sweep",
    "hoelder_pairs",
    "hoelder_fit",
    "boundary_values",
    "expansion_fit",
    "perturbed_resolvent",
    "free_resolvent_kernel",
    "lattice_free_resolvent",
]

SOLVE_TOL = 1e-10


class ResolventError(ArithmeticError):
    """Shifted solve failed (pivot collapse or residual above tolerance)."""


@dataclass(frozen=True)
class SectorPoint:
    """``zeta = E exp(i phi)`` (upper side) or its conjugate (lower side)."""

    E: float
    phi: float
    theta: float = math.pi / 2
    lower: bool = False

    def __post_init__(self):
        if not (0.0 < self.theta < math.pi):
            raise ValueError("theta must lie in (0, pi)")
        if not (0.0 < self.E <= 1.0):
            raise ValueError(f"modulus must lie in (0, 1], got {self.E}")
        if not (0.0 < self.phi < self.theta):
            raise ValueError(f"argument must lie in (0, theta), got {self.phi}")

    @property
    def zeta(self) -> complex:
        z = self.E * complex(math.cos(self.phi), math.sin(self.phi))
        return z.conjugate() if self.lower else z

    @property
    def side(self) -> str:
        return "lower" if self.lower else "upper"


def sector_points(energies, theta: float = math.pi / 2, fractions=(0.25, 0.5, 0.75),
                  lower: bool = False) -> list[SectorPoint]:
    """Three rays per modulus by default: ``phi = theta/4, theta/2, 3 theta/4``."""
    return [SectorPoint(float(E), fr * theta, theta, lower) for E in energies for fr in fractions]


class Resolvent:
    """Factorized ``(T - zeta)^-1`` for a complex-symmetric tridiagonal ``T``.

    ``T`` is normally the Hamiltonian; non-Hermitian but complex-symmetric
    operators (regularized or exterior-corrected ones) are accepted too.
    Every application checks the relative residual against ``tol``; the
    worst value seen is kept in ``max_residual``.
    """

    def __init__(self, T: BandedOperator, zeta: complex, tol: float = SOLVE_TOL):
        self.T = T
        self.zeta = complex(zeta)
        self.tol = tol
        try:
            self._lu: TridiagLU = T.factor(self.zeta)
        except SingularPivotError as exc:
            raise ResolventError(f"zeta = {self.zeta:.6g} is numerically on the spectrum: {exc}") from exc
        self.max_residual = 0.0
        self.n_solves = 0

    @property
    def n(self) -> int:
        return self.T.n

    def _check(self, u, rhs, adjoint: bool):
        if adjoint:
            r = np.conj(self._lu.matvec(np.conj(u))) - rhs
        else:
            r = self._lu.matvec(u) - rhs
        nb = np.linalg.norm(rhs)
        rel = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
        self.max_residual = max(self.max_residual, rel)
        self.n_solves += 1
        if not rel <= self.tol:
            raise ResolventError(f"relative residual {rel:.3e} exceeds {self.tol:.1e} at zeta = {self.zeta:.6g}")
        return u

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=np.complex128)
        return self._check(self._lu.solve(rhs), rhs, adjoint=False)

    def solve_adjoint(self, rhs):
        """``((T - zeta)^-1)^* rhs`` through ``conj(inv(T - zeta) conj(rhs))``."""
        rhs = np.asarray(rhs, dtype=np.complex128)
        return self._check(self._lu.solve_adjoint_symmetric(rhs), rhs, adjoint=True)

    def power(self, rhs, m: int, adjoint: bool = False):
        u = np.asarray(rhs, dtype=np.complex128)
        step = self.solve_adjoint if adjoint else self.solve
        for _ in range(m):
            u = step(u)
        return u

    def dense(self, columns=None) -> np.ndarray:
        """Columns of the inverse (all of them by default)."""
        cols = np.arange(self.n) if columns is None else np.asarray(columns)
        out = np.empty((self.n, cols.size), dtype=np.complex128)
        e = np.zeros(self.n, dtype=np.complex128)
        for i, c in enumerate(cols):
            e[c] = 1.0
            out[:, i] = self.solve(e)
            e[c] = 0.0
        return out


def shifted_solve(H: BandedOperator, zeta: complex, rhs, tol: float = SOLVE_TOL):
    """Solve ``(H - zeta) u = rhs``; returns ``(u, relative_residual)``."""
    R = Resolvent(H, zeta, tol)
    u = R.solve(rhs)
    return u, R.max_residual


def free_resolvent_kernel(zeta: complex, x, y):
    """Whole-line kernel of ``(-d^2/dx^2 - zeta)^-1``: ``exp(i k |x-y|) / (-2 i k)``, ``Im k > 0``.

    ``k = sqrt(zeta)`` on the branch with positive imaginary part.
    """
    k = np.sqrt(complex(zeta))
    if k.imag < 0:
        k = -k
    return np.exp(1j * k * np.abs(np.subtract.outer(x, y))) / (-2j * k)


def lattice_free_resolvent(zeta: complex, dx: float, offsets):
    """Exact inverse entries of the infinite three-point ``-Delta - zeta`` lattice.

    ``G_m = lam^|m| / (dx^-2 (1/lam - lam))`` with ``lam + 1/lam = 2 - zeta dx^2``
    and ``|lam| < 1``; ``G_m / dx`` tends to :func:`free_resolvent_kernel` as ``dx -> 0``.
    """
    c = 2.0 - complex(zeta) * dx * dx
    disc = np.sqrt(c * c - 4.0)
    lam = (c - disc) / 2.0
    if abs(lam) >= 1.0:
        lam = (c + disc) / 2.0
    return lam ** np.abs(np.asarray(offsets)) / ((1.0 / lam - lam) / dx**2)


@dataclass
class NormEstimate:
    value: float
    iterations: int
    converged: bool
    max_residual: float
    flags: list[str] = field(default_factory=list)


def power_norm(apply: Callable, apply_adjoint: Callable, n: int, tol: float = 1e-6, maxiter: int = 200,
               seed: int = 0, start=None) -> tuple[float, int, bool]:
    """Largest singular value of a matrix-free map by power iteration on ``M^* M``."""
    if start is None:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        v = np.asarray(start, dtype=np.complex128).copy()
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero start vector")
    v /= nv
    sigma_old = 0.0
    for it in range(1, maxiter + 1):
        u = apply_adjoint(apply(v))
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            return 0.0, it, True
        sigma = math.sqrt(lam)
        v = u / lam
        if abs(sigma - sigma_old) <= tol * sigma:
            return sigma, it, True
        sigma_old = sigma
    return sigma, maxiter, False


def _as_diag(w, n):
    if w is None:
        return np.ones(n)
    if isinstance(w, BandedOperator):
        if set(w.bands) != {0}:
            raise ValueError("weights must be diagonal")
        w = w.band(0)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be nonnegative finite node values")
    return w


def weighted_norm(H: BandedOperator, zeta: complex, left=None, right=None, m: int = 1,
                  tol: float = 1e-6, maxiter: int = 200, seed: int = 0,
                  resolvent: Resolvent | None = None) -> NormEstimate:
    """Norm of ``D_L R(zeta)^m D_R`` by power iteration (``2m`` banded solves per step).

    Flags ``"maxiter"`` when the relative change never drops below ``tol``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    n = H.n
    dl, dr = _as_diag(left, n), _as_diag(right, n)
    R = resolvent or Resolvent(H, zeta)
    sigma, it, ok = power_norm(lambda v: dl * R.power(dr * v, m),
                               lambda u: dr * R.power(dl * u, m, adjoint=True),
                               n, tol=tol, maxiter=maxiter, seed=seed)
    return NormEstimate(sigma, it, ok, R.max_residual, [] if ok else ["maxiter"])


def dense_weighted_norm(H: BandedOperator, zeta: complex, left=None, right=None, m: int = 1) -> float:
    """Reference value by dense inversion and SVD (small ``n`` only)."""
    n = H.n
    dl, dr = _as_diag(left, n), _as_diag(right, n)
    Rz = np.linalg.inv(H.to_dense() - zeta * np.eye(n))
    M = np.linalg.matrix_power(Rz, m)
    return float(np.linalg.svd(dl[:, None] * M * dr[None, :], compute_uv=False)[0])


# ---------------------------------------------------------------------------
# sector sweeps


@dataclass
class ProbeRow:
    experiment: str
    E: float
    arg: float
    side: str
    exponent: float
    m: int
    norm: float
    residual: float
    iterations: int
    flags: str = ""

    CSV_HEADER = ("experiment", "E", "arg", "side", "s_or_k_exponent", "m", "norm", "residual", "iterations", "flags")

    def as_tuple(self):
        return (self.experiment, self.E, self.arg, self.side, self.exponent, self.m, self.norm,
                self.residual, self.iterations, self.flags)


def decade_maxima(E, values) -> tuple[np.ndarray, np.ndarray]:
    """Maximum of ``values`` in each half-open decade ``[10^k, 10^(k+1))``; the top decade is closed.

    Returns ``(decade_exponents, maxima)`` ordered from small to large E.
    """
    E = np.asarray(E, dtype=float)
    values = np.asarray(values, dtype=float)
    lo = math.floor(math.log10(E.min()) + 1e-9)
    top = math.log10(E.max())
    keys = np.minimum(np.floor(np.log10(E) + 1e-9), math.ceil(top - 1e-9) - 1 if top > lo else lo)
    dec = np.unique(keys)
    return dec, np.array([values[keys == d].max() for d in dec])


@dataclass
class ResolventProbe:
    """Rows of a weighted-norm sweep plus its summary statistics."""

    label: str
    exponent: float
    m: int
    rows: list[ProbeRow]

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.E for r in self.rows])

    @property
    def norms(self) -> np.ndarray:
        return np.array([r.norm for r in self.rows])

    def sector_sup(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-modulus supremum over the sampled arguments, ordered by E."""
        E = self.energies
        Eu = np.unique(E)
        return Eu, np.array([self.norms[E == e].max() for e in Eu])

    def decade_maxima(self):
        return decade_maxima(self.energies, self.norms)

    @property
    def boundedness_statistic(self) -> float:
        """(max over the smallest decade) / (max over the largest decade)."""
        _, mx = self.decade_maxima()
        return float(mx[0] / mx[-1])

    @property
    def sweep_growth(self) -> float:
        """Sector supremum at the smallest modulus over that at the largest."""
        _, sup = self.sector_sup()
        return float(sup[0] / sup[-1])

    @property
    def decade_spread(self) -> float:
        """Largest over smallest per-decade maximum."""
        _, mx = self.decade_maxima()
        return float(mx.max() / mx.min())

    def monotone_blowup(self, growth: float = 1.1) -> bool:
        """Per-decade maxima strictly increase toward E -> 0 and the last step still grows by ``growth``."""
        _, mx = self.decade_maxima()
        if mx.size < 2:
            return False
        increasing = bool(np.all(mx[:-1] > mx[1:]))
        return increasing and mx[0] / mx[1] > growth

    @property
    def all_converged(self) -> bool:
        return all("maxiter" not in r.flags for r in self.rows)

    @property
    def max_residual(self) -> float:
        return max((r.residual for r in self.rows), default=0.0)


def _sweep_task(args):
    H, pt, left, right, m, tol, maxiter, seed, label, exponent = args
    est = weighted_norm(H, pt.zeta, left, right, m=m, tol=tol, maxiter=maxiter, seed=seed)
    # resolvent bound for Hermitian H: ||R|| <= 1/Im zeta; only meaningful for unit weights
    flags = list(est.flags)
    if m == 1 and np.all(left <= 1) and np.all(right <= 1) and est.value > (1 + 1e-6) / abs(pt.zeta.imag):
        flags.append("resolvent_bound")
    return ProbeRow(label, pt.E, pt.phi, pt.side, exponent, m, est.value, est.max_residual, est.iterations,
                    ";".join(flags))


def lap_sweep(H: BandedOperator, s: float, energies, theta: float = math.pi / 2, mu: float | None = None,
              left=None, right=None, m: int = 1, label: str = "lap", tol: float = 1e-6, maxiter: int = 200,
              seed: int = 0, workers: int = 1, exponent: float | None = None,
              fractions=(0.25, 0.5, 0.75)) -> ResolventProbe:
    """Weighted norms ``<x>^-s R(zeta)^m <x>^-s`` over the sector samples.

    Each modulus is sampled on the rays ``phi = fraction * theta``.

    ``left``/``right`` override the default ``<x>^-s`` weights (for the
    ``f``-weighted and ``k``-weighted variants); ``exponent`` is the label
    written to the CSV (``s`` by default).
    """
    E = np.asarray(energies, dtype=float)
    if np.any(E <= 0) or np.any(E > 1):
        raise ValueError("energies must lie in (0, 1]")
    if mu is not None and left is None and s <= 0.5 + mu / 4:
        warnings.warn(f"s = {s} <= 1/2 + mu/4 = {0.5 + mu / 4}: no uniform bound is expected", stacklevel=2)
    x = H.grid.points
    jb = np.sqrt(1 + x * x)
    dl = _as_diag(jb**-s if left is None else left, H.n)
    dr = _as_diag(jb**-s if right is None else right, H.n)
    pts = sector_points(E, theta, fractions)
    ex = s if exponent is None else exponent
    tasks = [(H, p, dl, dr, m, tol, maxiter, task_seed(seed, i), label, ex) for i, p in enumerate(pts)]
    rows = pmap(_sweep_task, tasks, workers)
    return ResolventProbe(label, ex, m, rows)


# ---------------------------------------------------------------------------
# Hoelder continuity


@dataclass
class HoelderFit:
    gamma: float
    intercept: float
    separations: np.ndarray
    norms: np.ndarray
    local_slopes: np.ndarray
    flags: list[str] = field(default_factory=list)


def _diff_norm(args):
    H, z1, z2, dl, dr, tol, maxiter, seed = args
    R1, R2 = Resolvent(H, z1), Resolvent(H, z2)
    val, _, ok = power_norm(lambda v: dl * (R1.solve(dr * v) - R2.solve(dr * v)),
                            lambda u: dr * (R1.solve_adjoint(dl * u) - R2.solve_adjoint(dl * u)),
                            H.n, tol=tol, maxiter=maxiter, seed=seed)
    return val, ok, max(R1.max_residual, R2.max_residual)


def hoelder_pairs(H: BandedOperator, s: float, separations, phi: float = math.pi / 4, ratio: float = 2.0,
                  tol: float = 1e-6, maxiter: int = 300, seed: int = 0, workers: int = 1):
    """``||<x>^-s (R(z1) - R(z2)) <x>^-s||`` for ``z1 = d e^{i phi}``, ``z2 = ratio * z1``.

    Both points move toward zero along one ray so that each pair has
    ``|z1 - z2| = (ratio - 1) d`` and imaginary parts comparable to ``d``.
    """
    d = np.asarray(separations, dtype=float)
    if np.any(d <= 0) or ratio <= 1:
        raise ValueError("separations must be positive and ratio > 1")
    x = H.grid.points
    w = (1 + x * x) ** (-s / 2)
    z1 = d * np.exp(1j * phi)
    tasks = [(H, complex(a), complex(ratio * a), w, w, tol, maxiter, task_seed(seed, i)) for i, a in enumerate(z1)]
    out = pmap(_diff_norm, tasks, workers)
    norms = np.array([o[0] for o in out])
    sep = np.abs((ratio - 1) * z1)
    return sep, norms, all(o[1] for o in out)


def hoelder_fit(separations, norms, min_pairs: int = 8) -> HoelderFit:
    """Least-squares slope of ``log norm`` against ``log separation``."""
    sep = np.asarray(separations, dtype=float)
    nv = np.asarray(norms, dtype=float)
    if np.any(sep <= 0):
        raise ValueError("coincident spectral parameters (zero separation) are not allowed")
    flags = []
    if sep.size < min_pairs:
        flags.append("too_few_pairs")
    if np.any(nv <= 0):
        raise ValueError("nonpositive difference norm")
    lx, ly = np.log(sep), np.log(nv)
    if lx.max() - lx.min() < math.log(10.0):
        flags.append("ill_conditioned")
    gamma, c = np.polyfit(lx, ly, 1)
    order = np.argsort(lx)
    local = np.diff(ly[order]) / np.diff(lx[order])
    return HoelderFit(float(gamma), float(c), sep, nv, local, flags)


# ---------------------------------------------------------------------------
# boundary values and the spectral density


@dataclass
class BoundaryValue:
    lam: float
    plus: np.ndarray
    minus: np.ndarray
    err_plus: float
    err_minus: float
    increments: np.ndarray
    flags: list[str] = field(default_factory=list)

    @property
    def density(self) -> np.ndarray:
        """``E'(lam) = (R(lam + i0) - R(lam - i0)) / (2 pi i)`` in the weighted space."""
        return (self.plus - self.minus) / (2j * math.pi)

    @property
    def error(self) -> float:
        return max(self.err_plus, self.err_minus)

    @property
    def density_error(self) -> float:
        return (self.err_plus + self.err_minus) / (2 * math.pi)


def _weighted_resolvent_matrix(H, zeta, w, nodes=None):
    R = Resolvent(H, zeta)
    if nodes is None:
        M = R.dense()
    else:
        M = R.dense(nodes)[nodes, :]
        w = w[nodes]
    return w[:, None] * M * w[None, :], R.max_residual


def boundary_values(H: BandedOperator, weight, lam: float, eta0: float | None = None, halvings: int = 6,
                    E_max: float = 1.0, scale: float | None = None, nodes=None) -> BoundaryValue:
    """Weighted ``R(lam +- i0)`` by first-order Richardson extrapolation along ``eta_k = eta0 2^-k``.

    ``eta0`` defaults to ``1e-2 * scale`` with ``scale = max(lam, E_max)``
    (the ladder must stay above the box level spacing). The error estimate is
    the norm of the last change of the extrapolated matrix. ``nodes``
    restricts the returned matrices to a subset of grid nodes (useful when
    the weight is negligible elsewhere).
    """
    if not (0.0 <= lam <= E_max):
        raise ValueError(f"lam must lie in [0, {E_max}], got {lam}")
    n = H.n
    w = _as_diag(weight, n)
    scale = max(lam, E_max) if scale is None else scale
    eta0 = 1e-2 * scale if eta0 is None else eta0
    etas = eta0 * 2.0 ** -np.arange(halvings + 1)
    res = {}
    incs = {}
    flags = []
    for sign, key in ((1, "plus"), (-1, "minus")):
        mats = [_weighted_resolvent_matrix(H, complex(lam, sign * e), w, nodes)[0] for e in etas]
        extr = [2 * mats[k + 1] - mats[k] for k in range(len(mats) - 1)]
        inc = np.array([np.linalg.norm(mats[k + 1] - mats[k], 2) for k in range(len(mats) - 1)])
        err = float(np.linalg.norm(extr[-1] - extr[-2], 2)) if len(extr) > 1 else float(inc[-1])
        if len(inc) > 2 and not np.all(np.diff(inc) < 0):
            flags.append(f"{key}_ladder_not_decreasing")
        res[key] = (extr[-1], err)
        incs[key] = inc
    return BoundaryValue(lam, res["plus"][0], res["minus"][0], res["plus"][1], res["minus"][1],
                         incs["plus"], sorted(set(flags)))


@dataclass
class ExpansionFit:
    side: str
    order: int
    coefficients: list[np.ndarray]
    residuals: np.ndarray
    lams: np.ndarray
    flags: list[str] = field(default_factory=list)

    def coefficient_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(c, 2) for c in self.coefficients])


def expansion_fit(values: list[BoundaryValue], J: int, side: str = "plus") -> ExpansionFit:
    """Polynomial fit in ``lam`` of weighted boundary values; ``values`` from :func:`boundary_values`.

    Residuals are relative Frobenius norms for orders ``0..J``; the fit at
    order ``J`` supplies the coefficients.
    """
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    if len(values) < J + 3:
        raise ValueError(f"need at least J + 3 = {J + 3} window points, got {len(values)}")
    lams = np.array([v.lam for v in values])
    Y = np.stack([getattr(v, side).ravel() for v in values])
    shape = values[0].plus.shape
    scale = np.linalg.norm(Y)
    residuals = []
    coef = None
    for order in range(J + 1):
        V = np.vander(lams, order + 1, increasing=True)
        c, *_ = np.linalg.lstsq(V, Y, rcond=None)
        residuals.append(float(np.linalg.norm(V @ c - Y) / scale))
        coef = c
    residuals = np.array(residuals)
    flags = []
    if np.any(np.diff(residuals) > 1e-12 * max(residuals[0], 1e-300)):
        flags.append("overfit")
    return ExpansionFit(side, J, [coef[j].reshape(shape) for j in range(J + 1)], residuals, lams, flags)


# ---------------------------------------------------------------------------
# perturbation by a compactly supported V2


@dataclass
class PerturbedSolve:
    u: np.ndarray
    support: np.ndarray
    fredholm_condition: float
    flags: list[str] = field(default_factory=list)


def perturbed_resolvent(H1: BandedOperator, v2, zeta: complex, rhs, s: float = 1.0,
                        cond_limit: float = 1e12) -> PerturbedSolve:
    """``R(zeta) rhs`` for ``H = H1 + V2`` through ``(I + R1 V2) R = R1``.

    Only the nodes where ``V2 != 0`` enter a dense system of that size. The
    condition number of the conjugated block ``<x>^s (I + V2 R1) <x>^-s``
    restricted to the support is the Fredholm witness.
    """
    v2 = np.asarray(v2, dtype=float)
    R1 = Resolvent(H1, zeta)
    f = R1.solve(rhs)
    S = np.flatnonzero(v2)
    if S.size == 0:
        return PerturbedSolve(f, S, 1.0)
    G = R1.dense(S)[S, :]  # (R1)_{SS}
    x = H1.grid.points[S]
    jb = np.sqrt(1 + x * x)
    block = np.eye(S.size) + G * v2[S][None, :]
    chi = np.linalg.solve(block, f[S])
    corr = np.zeros(H1.n, dtype=np.complex128)
    corr[S] = v2[S] * chi
    u = f - R1.solve(corr)
    conj_block = (jb**s)[:, None] * block * (jb**-s)[None, :]
    cond = float(np.linalg.cond(conj_block))
    flags = ["near_singular_fredholm"] if cond > cond_limit else []
    return PerturbedSolve(u, S, cond, flags)
