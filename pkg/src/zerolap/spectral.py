"""Zero-eigenvalue exclusion diagnostics in the radial sector.

Two monotone functionals of the reduced function ``w(r) = r^((d-1)/2) psi``
drive the exclusion argument. ``F`` combines kinetic, potential and
virial-type terms. ``G`` is the same construction for ``w_m = r^m w``.
Along exact solutions both have closed-form radial derivatives. The traces
below evaluate those derivatives analytically and by finite differences,
so they check each other.

Also here: Dirichlet-ball eigenvalue sweeps (branches must cross zero as the
ball grows), the WKB reference pair, and the weight-optimality probe for
iterated resolvents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from ._parallel import pmap
from .discrete import BandedOperator, Grid, build_hamiltonian
from .model import PotentialSpec, bracket, eval_potential, validate_assumptions
from .resolve import Resolvent, decade_maxima, sector_points

__all__ = [
    "ODE_TOL",
    "RadialFunction",
    "FunctionalTrace",
    "zero_energy_solution",
    "radial_function_from_samples",
    "F_functional",
    "G_functional",
    "integrability_ratio",
    "BallSweep",
    "dirichlet_ball_sweep",
    "zero_persistence",
    "WKBReport",
    "wkb_reference",
    "OptimalityProbe",
    "weight_optimality_probe",
]

ODE_TOL = 1e-12


def _angular(spec: PotentialSpec) -> tuple[float, float]:
    """``(L, c_d)``: ``-<w, B w> = L |w|^2`` in the sector, ``c_d = (d-1)(d-3)/4``."""
    d, l = spec.dim, spec.ell
    return float(l * (l + d - 2)), (d - 1) * (d - 3) / 4.0


@dataclass
class RadialFunction:
    """Samples of ``w`` and ``w'`` on an increasing ``r`` grid for one angular channel."""

    r: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    spec: PotentialSpec
    energy: float = 0.0
    exact: bool = False

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        self.dw = np.asarray(self.dw, dtype=float)
        if not (self.r.shape == self.w.shape == self.dw.shape):
            raise ValueError("r, w, dw must share a shape")
        if np.any(np.diff(self.r) <= 0) or self.r[0] <= 0:
            raise ValueError("r must be positive and increasing")

    def psi(self) -> np.ndarray:
        """The generating radial profile ``psi = r^-(d-1)/2 w``."""
        return self.r ** (-(self.spec.dim - 1) / 2.0) * self.w


def _radial_rhs(spec: PotentialSpec, E: float):
    L, cd = _angular(spec)

    def rhs(r, y):
        v = float(eval_potential(spec, r).V)
        return (y[1], ((L + cd) / (r * r) + v - E) * y[0])

    return rhs


def zero_energy_solution(spec: PotentialSpec, r, r_start: float | None = None, w0: float = 0.0,
                         dw0: float = 1.0, E: float = 0.0, tol: float = ODE_TOL) -> RadialFunction:
    """Solve ``-w'' + ((L + c_d)/r^2 + V) w = E w`` from ``r_start`` across ``r``.

    ``r_start`` defaults to ``r[0]``; when it sits above ``r[-1]`` the
    solution is integrated inward. DOP853 runs at ``rtol = atol = tol``.
    """
    r = np.asarray(r, dtype=float)
    r_start = float(r[0]) if r_start is None else float(r_start)
    rhs = _radial_rhs(spec, E)
    out_w = np.empty_like(r)
    out_dw = np.empty_like(r)
    for mask, end in ((r >= r_start, r[-1]), (r < r_start, r[0])):
        if not mask.any() or end == r_start:
            if mask.any():
                out_w[mask], out_dw[mask] = w0, dw0
            continue
        pts = r[mask]
        order = np.argsort(pts) if end > r_start else np.argsort(-pts)
        sol = solve_ivp(rhs, (r_start, end), (w0, dw0), method="DOP853", t_eval=pts[order],
                        rtol=tol, atol=tol)
        if not sol.success:
            raise ArithmeticError(f"radial ODE failed: {sol.message}")
        idx = np.flatnonzero(mask)[order]
        out_w[idx], out_dw[idx] = sol.y
    return RadialFunction(r, out_w, out_dw, spec, E, exact=True)


def radial_function_from_samples(spec: PotentialSpec, r, psi) -> RadialFunction:
    """Build ``w = r^((d-1)/2) psi`` with a second-order gradient for ``w'``."""
    r = np.asarray(r, dtype=float)
    w = r ** ((spec.dim - 1) / 2.0) * np.asarray(psi, dtype=float)
    return RadialFunction(r, w, np.gradient(w, r, edge_order=2), spec)


@dataclass
class FunctionalTrace:
    """A functional along ``r`` with analytic and finite-difference derivatives.

    ``value`` is ``F(r)`` or ``r^(2 - 2m) G(m, r)``. ``derivative`` is the
    analytic ``(rF)'`` or ``r^-2m (2r)^-1 (r^2 G)'`` (the positive factor
    keeps signs and tames the ``r^m`` growth of ``w_m``). ``fd_derivative`` is the same
    quantity from finite differences of ``value``. ``tolerance`` is their
    worst disagreement past the first and last few nodes, and serves as the
    quadrature tolerance. ``onset`` is the smallest radius beyond which the
    analytic derivative stays above ``-tolerance``.
    """

    name: str
    r: np.ndarray
    value: np.ndarray
    derivative: np.ndarray
    fd_derivative: np.ndarray
    m: float | None
    tolerance: float
    onset: float
    claimed: bool = True
    flags: list = field(default_factory=list)

    CSV_HEADER = ("r", "value", "margin")

    @property
    def min_margin(self) -> float:
        """Worst analytic derivative beyond the onset radius."""
        sel = self.r >= self.onset
        return float(self.derivative[sel].min()) if sel.any() else math.nan

    @property
    def monotone(self) -> bool:
        return bool(np.isfinite(self.onset) and self.min_margin >= -self.tolerance)

    def rows(self):
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.r, self.value, self.derivative)]


def _fd_tolerance(r, analytic, fd, trim: int = 3) -> float:
    if r.size <= 2 * trim + 1:
        return float(np.max(np.abs(analytic - fd)))
    return float(np.max(np.abs(analytic - fd)[trim:-trim]))


def _onset(r, margin, tol) -> float:
    bad = np.flatnonzero(margin < -tol)
    if bad.size == 0:
        return float(r[0])
    if bad[-1] == r.size - 1:
        return math.inf
    return float(r[bad[-1] + 1])


def F_functional(w: RadialFunction, s: float = 0.9) -> FunctionalTrace:
    """``F = |w'|^2 - L r^-2 |w|^2 - V1 |w|^2 - s r^-1 w w'`` and ``(rF)'``.

    The angular form ``<w, B w>`` is ``-L |w|^2`` with ``L = l(l + d - 2)``.
    The analytic derivative holds along solutions of the zero-energy
    equation. For other samples only the finite-difference column is
    meaningful.
    """
    spec, r, u, du = w.spec, w.r, w.w, w.dw
    L, cd = _angular(spec)
    pot = eval_potential(spec, r)
    F = du**2 - L * u**2 / r**2 - pot.V1 * u**2 - s * u * du / r
    # (r V1)' = V1 + r V1'
    jb = bracket(r)
    dV1 = spec.c1 * spec.mu * r * jb ** (-spec.mu - 2.0)
    drV1 = pot.V1 + r * dV1
    dRF = (2.0 * du * u * (r * pot.V2 + cd / r) + (1.0 - s) * du**2 - drV1 * u**2
           + (1.0 - s) * L * u**2 / r**2 - s * (cd / r**2 + pot.V) * u**2)
    fd = np.gradient(r * F, r, edge_order=2)
    tol = _fd_tolerance(r, dRF, fd)
    flags = [] if w.exact else ["analytic_derivative_assumes_solution"]
    return FunctionalTrace("F", r, F, dRF, fd, None, tol, _onset(r, dRF, tol), True, flags)


def G_functional(w: RadialFunction, m: float, eps_h: float | None = None, C: float | None = None) -> FunctionalTrace:
    """``r^2 G(m, r)`` for ``w_m = r^m w`` and ``(2r)^-1 (r^2 G)'``.

    ``g = (2C)^-1 r^-1 h(r)`` with ``h = eps_h r^(-mu/2)``. The defaults for
    ``eps_h`` and ``C`` come from :func:`zerolap.model.validate_assumptions`.
    Monotonicity is only claimed for large ``m``. For ``m = 0`` the trace is
    informational.
    """
    spec, r = w.spec, w.r
    if eps_h is None or C is None:
        rep = validate_assumptions(spec, r)
        eps_h = rep.eps_h if eps_h is None else eps_h
        C = rep.C if C is None else C
    L, cd = _angular(spec)
    pot = eval_potential(spec, r)
    jb = bracket(r)
    dV1 = spec.c1 * spec.mu * r * jb ** (-spec.mu - 2.0)
    h = eps_h * r ** (-spec.mu / 2.0)
    g = h / (2.0 * C * r)
    # (r^2 g)' = (2 - 1 - mu/2) r g for g ~ r^(-1 - mu/2)
    d_r2g = (1.0 - spec.mu / 2.0) * r * g
    d_r2V1 = 2.0 * r * pot.V1 + r * r * dV1
    wm = r**m * w.w
    dwm = m * r ** (m - 1) * w.w + r**m * w.dw
    r2G = r * r * dwm**2 - L * wm**2 + m * (m + 1) * wm**2 - r * r * (g + pot.V1) * wm**2
    dG = ((2 * m + 1) * dwm**2 + wm * dwm * (cd / r + r * pot.V2 - r * g)
          - (d_r2g + d_r2V1) * wm**2 / (2.0 * r))
    fd = np.gradient(r2G, r, edge_order=2) / (2.0 * r)
    # w_m grows like r^m; compare on the r^-2m scale so the tolerance stays meaningful
    scale = r ** (-2.0 * m)
    dG, fd = dG * scale, fd * scale
    tol = _fd_tolerance(r, dG, fd)
    flags = [] if w.exact else ["analytic_derivative_assumes_solution"]
    if m <= 0:
        flags.append("outside_hypothesis")
    return FunctionalTrace("G", r, r2G * scale, dG, fd, m, tol, _onset(r, dG, tol), m > 0, flags)


def integrability_ratio(spec: PotentialSpec, r, psi, dpsi, R: float, eps_h: float) -> float:
    """``int_R^inf |w'|^2 dr`` over ``||p psi||^2 + int h^2 |psi|^2`` for a radial ``psi``.

    Both sides use the radial measure ``r^(d-1) dr`` (the sphere area
    cancels). The constant in the integrability bound is the supremum of
    this ratio over test functions.
    """
    r = np.asarray(r, dtype=float)
    psi, dpsi = np.asarray(psi, dtype=float), np.asarray(dpsi, dtype=float)
    d = spec.dim
    a = (d - 1) / 2.0
    dw = a * r ** (a - 1) * psi + r**a * dpsi
    outer = r >= R
    lhs = np.trapezoid(dw[outer] ** 2, r[outer])
    h2 = (eps_h * r ** (-spec.mu / 2.0)) ** 2
    rhs = np.trapezoid(r ** (d - 1) * dpsi**2, r) + np.trapezoid((r ** (d - 1) * h2 * psi**2)[outer], r[outer])
    if rhs == 0:
        return 0.0
    return float(lhs / rhs)


# ---------------------------------------------------------------------------
# Dirichlet balls


def _ball_eigs(spec: PotentialSpec, rho: float, n: int, count: int) -> np.ndarray:
    H = build_hamiltonian(Grid(n, rho), spec)
    _, d, up = H.tridiagonal()
    return eigh_tridiagonal(d, up, eigvals_only=True, select="i", select_range=(0, count - 1))


def _ball_eig(spec, rho, n, j) -> float:
    H = build_hamiltonian(Grid(n, rho), spec)
    _, d, up = H.tridiagonal()
    return float(eigh_tridiagonal(d, up, eigvals_only=True, select="i", select_range=(j, j))[0])


@dataclass
class BallSweep:
    """Eigenvalue branches of the Dirichlet ball ``[0, rho]`` across radii.

    ``branches[i, j]`` is the ``j``-th eigenvalue at ``rhos[i]``. In a
    single angular channel the eigenvalues are simple, so the sorting index
    is the branch label. ``crossings`` maps a branch to the ``rho`` where it
    passes through zero.
    """

    rhos: np.ndarray
    branches: np.ndarray
    crossings: dict
    crossing_values: dict
    n: int
    flags: list = field(default_factory=list)

    CSV_HEADER = ("branch", "rho", "lambda")

    @property
    def negative_counts(self) -> np.ndarray:
        return np.sum(self.branches < 0, axis=1)

    @property
    def counts_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.negative_counts) >= 0))

    @property
    def branches_nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.branches, axis=0) <= 1e-10 * (1 + np.abs(self.branches[1:]))))

    @property
    def n_crossings(self) -> int:
        return len(self.crossings)

    def rows(self):
        out = []
        for j in range(self.branches.shape[1]):
            for rho, lam in zip(self.rhos, self.branches[:, j]):
                out.append((j, float(rho), float(lam)))
        return out

    def crossing_rows(self):
        return [(j, self.crossings[j], self.crossing_values[j]) for j in sorted(self.crossings)]


def _sweep_point(args):
    spec, rho, n, count = args
    return _ball_eigs(spec, rho, n, count)


def dirichlet_ball_sweep(spec: PotentialSpec, rhos, count: int = 12, n: int = 2000, tol: float = 1e-8,
                         gap_tol: float = 1e-9, workers: int = 1) -> BallSweep:
    """Lowest ``count`` eigenvalues of ``H`` on ``[0, rho]`` with Dirichlet ends.

    The grid keeps ``n`` interior nodes at every radius, so each branch is
    a continuous function of ``rho``. Crossings are bracketed by sign
    changes and refined with Brent's method until ``|lambda| <= tol``.
    """
    rhos = np.asarray(rhos, dtype=float)
    if count < 5:
        raise ValueError("track at least 5 branches")
    if np.any(np.diff(rhos) <= 0):
        raise ValueError("rho grid must be increasing")
    eigs = np.array(pmap(_sweep_point, [(spec, rho, n, count) for rho in rhos], workers))
    flags = []
    gaps = np.diff(eigs, axis=1)
    if np.any(gaps < gap_tol):
        flags.append("branch_ambiguity")
    crossings, values = {}, {}
    for j in range(count):
        lam = eigs[:, j]
        idx = np.flatnonzero((lam[:-1] > 0) & (lam[1:] <= 0))
        if idx.size == 0:
            continue
        i = int(idx[0])
        a, b = rhos[i], rhos[i + 1]
        if lam[i + 1] == 0:
            crossings[j], values[j] = float(b), 0.0
            continue
        rho_star = brentq(lambda rho: _ball_eig(spec, rho, n, j), a, b, xtol=1e-13 * b, rtol=1e-15, maxiter=200)
        val = _ball_eig(spec, rho_star, n, j)
        if abs(val) > tol:
            flags.append(f"crossing_{j}_unresolved")
        crossings[j], values[j] = float(rho_star), float(val)
    return BallSweep(rhos, eigs, crossings, values, n, flags)


def zero_persistence(spec: PotentialSpec, extents, dx: float = 1.0, window: float | None = None) -> dict:
    """Track the eigenvalue closest to 0 as the box grows.

    A genuine zero eigenvalue would keep an eigenvalue within ``window``
    of 0 at every extent. The default window is one local level spacing
    at the smallest extent. Returns the per-extent closest eigenvalues and
    the verdict.
    """
    closest, spacing = [], []
    for R in extents:
        H = build_hamiltonian(Grid.with_spacing(dx, R), spec)
        _, d, up = H.tridiagonal()
        lam = eigh_tridiagonal(d, up, eigvals_only=True, select="v", select_range=(-0.05, 0.05))
        k = int(np.argmin(np.abs(lam)))
        closest.append(float(lam[k]))
        spacing.append(float(np.min(np.abs(np.diff(lam)))) if lam.size > 1 else math.inf)
    delta0 = spacing[0] / 2 if window is None else window
    closest = np.array(closest)
    persistent = bool(np.all(np.abs(closest) <= delta0) and np.ptp(closest) <= delta0 / 10)
    return {"extents": list(map(float, extents)), "closest": closest.tolist(), "window": float(delta0),
            "persistent": persistent}


# ---------------------------------------------------------------------------
# WKB


@dataclass
class WKBReport:
    """ODE solution against the WKB pair ``(E - V)^(-1/4) exp(+-i int (E - V)^(1/2))``."""

    x: np.ndarray
    psi: np.ndarray
    envelope: np.ndarray
    wkb_envelope: np.ndarray
    phase: np.ndarray
    wkb_phase: np.ndarray
    envelope_error: float
    envelope_exponent: float
    phase_exponent: float
    flags: list = field(default_factory=list)

    CSV_HEADER = ("x", "psi", "envelope", "wkb_envelope", "phase", "wkb_phase")

    def rows(self):
        return [tuple(map(float, t)) for t in zip(self.x, self.psi, self.envelope, self.wkb_envelope,
                                                   self.phase, self.wkb_phase)]


def wkb_reference(spec: PotentialSpec, E: float = 0.0, x_range=(10.0, 1e4), samples: int = 400,
                  potential=None, tol: float = ODE_TOL, fit_from: float = 0.01) -> WKBReport:
    """Compare a real solution of ``-psi'' + V psi = E psi`` with the WKB pair.

    The solution starts on the WKB cosine at ``x_range[0]``. Its envelope
    is the Pruefer amplitude ``sqrt(psi^2 + psi'^2 / k^2)`` with
    ``k = (E - V)^(1/2)``, and its phase is the unwrapped Pruefer angle.
    Exponents are least-squares fits over ``x >= fit_from * x_max``.
    ``potential`` replaces ``V`` by a callable ``x -> (V, V')``.
    """
    if spec.dim != 1:
        raise ValueError("the WKB reference is one-dimensional")
    if E < 0:
        raise ValueError("energy must be nonnegative")
    pot = potential or (lambda x: tuple(eval_potential(spec, x)[:2]))
    x0, x1 = map(float, x_range)
    x = np.geomspace(x0, x1, samples)
    fine = np.linspace(x0, x1, 20001)
    k2 = E - np.asarray(pot(fine)[0], dtype=float)
    flags = []
    if np.any(k2 <= 0):
        flags.append("turning_point")
        raise ValueError("E - V vanishes in range (turning point)")
    kfun = lambda t: math.sqrt(E - float(pot(t)[0]))  # noqa: E731
    k0 = kfun(x0)
    dk0 = -0.5 * (-float(pot(x0)[1])) / k0  # dk/dx = -V'/(2k)
    # WKB cosine amplitude k^-1/2 and its derivative at x0
    amp0 = k0**-0.5
    y0 = (amp0, -0.5 * k0**-1.5 * dk0)

    def rhs(t, y):
        return (y[1], (float(pot(t)[0]) - E) * y[0])

    sol = solve_ivp(rhs, (x0, x1), y0, method="DOP853", t_eval=x, rtol=tol, atol=tol * 1e-3, dense_output=False)
    if not sol.success:
        raise ArithmeticError(f"WKB reference ODE failed: {sol.message}")
    psi, dpsi = sol.y
    k = np.sqrt(E - np.asarray(pot(x)[0], dtype=float))
    env = np.sqrt(psi**2 + (dpsi / k) ** 2)
    wkb_env = k**-0.5
    rel = env / wkb_env
    err = float(np.max(np.abs(rel / rel[0] - 1.0)))
    # Pruefer angle psi = A cos(theta), psi'/k = -A sin(theta)
    theta = np.unwrap(np.arctan2(-dpsi / k, psi))
    # WKB phase int_{x0}^x k, accumulated with the trapezoid rule on a fine grid
    kf = np.sqrt(np.maximum(k2, 0.0))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (kf[1:] + kf[:-1]) * np.diff(fine))])
    wkb_phase = np.interp(x, fine, cum)
    sel = x >= fit_from * x1
    env_exp = float(np.polyfit(np.log(bracket(x[sel])), np.log(env[sel]), 1)[0])
    # phase measured from x = 0 scale: add the WKB phase accumulated on [0, x0]
    head = np.linspace(0.0, x0, 2001)
    k_head2 = E - np.asarray(pot(head)[0], dtype=float)
    offset = float(np.trapezoid(np.sqrt(np.maximum(k_head2, 0.0)), head)) if np.all(k_head2 > 0) else 0.0
    phase_exp = float(np.polyfit(np.log(x[sel]), np.log(theta[sel] + offset), 1)[0])
    return WKBReport(x, psi, env, wkb_env, theta, wkb_phase, err, env_exp, phase_exp, flags)


# ---------------------------------------------------------------------------
# weight optimality


@dataclass
class OptimalityProbe:
    """``||k^-p R(zeta)^m phi||`` along sector samples for the sharp and relaxed exponents."""

    m: int
    energies: np.ndarray
    sharp: np.ndarray
    relaxed: np.ndarray
    eps: float
    max_residual: float
    flags: list = field(default_factory=list)

    CSV_HEADER = ("E", "m", "sharp", "relaxed")

    def _per_decade(self, values):
        return decade_maxima(self.energies, values)[1]

    @property
    def sharp_growth(self) -> bool:
        """Per-decade maxima strictly increase toward ``E -> 0``."""
        mx = self._per_decade(self.sharp)
        return bool(mx.size >= 2 and np.all(mx[:-1] > mx[1:]))

    @property
    def relaxed_statistic(self) -> float:
        mx = self._per_decade(self.relaxed)
        return float(mx[0] / mx[-1])

    def rows(self):
        return [(float(E), self.m, float(a), float(b)) for E, a, b in zip(self.energies, self.sharp, self.relaxed)]


def weight_optimality_probe(H: BandedOperator, m: int, energies, phi=None, eps: float = 0.1, mu: float = 1.0,
                            theta: float = math.pi / 2) -> OptimalityProbe:
    """Growth of ``||k^-(m - 1/2) R(zeta)^m phi||`` as ``E -> 0`` against the ``eps``-relaxed weight.

    ``k = <x>^(1 + mu/2)``. ``phi`` defaults to a unit C-infinity bump
    supported in ``(1, 5)``. Each modulus is sampled on three rays, and the
    norm is the supremum over them.
    """
    if m not in (1, 2, 3):
        raise ValueError("m must be 1, 2 or 3")
    x = H.grid.points
    if phi is None:
        u = (x - 3.0) / 2.0
        inside = np.abs(u) < 1
        phi = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - u * u, 1.0)), 0.0)
        phi = phi / np.linalg.norm(phi)
    phi = np.asarray(phi, dtype=np.complex128)
    k = bracket(x) ** (1.0 + mu / 2.0)
    p = m - 0.5
    E = np.asarray(energies, dtype=float)
    sharp, relaxed, res = [], [], 0.0
    for e in E:
        best_s, best_r = 0.0, 0.0
        for pt in sector_points([e], theta):
            if not np.any(phi):
                continue
            R = Resolvent(H, pt.zeta)
            u = R.power(phi, m)
            res = max(res, R.max_residual)
            best_s = max(best_s, float(np.linalg.norm(k**-p * u)))
            best_r = max(best_r, float(np.linalg.norm(k ** (-p - eps) * u)))
        sharp.append(best_s)
        relaxed.append(best_r)
    return OptimalityProbe(m, E, np.array(sharp), np.array(relaxed), eps, res)
