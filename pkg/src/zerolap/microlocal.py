"""Weyl quantization on a 1-d lattice, phase-space localizers and the localized resolvent sweeps.

Symbols are functions of ``(x, xi)``. On a grid with spacing ``dx`` the
Weyl kernel ``K(x, y) = (2 pi)^-1 int exp(i (x-y) xi) a((x+y)/2, xi) dxi``
is evaluated at half-step midpoints with an FFT in ``xi`` over the
``2n - 1`` dual frequencies, so every kernel offset ``x - y`` is represented
without wrap-around.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import pmap
from .kernels import TridiagLU, exterior_green
from .model import PotentialSpec, WeightFamily, bracket, eval_potential
from .resolve import decade_maxima, power_norm

__all__ = [
    "AliasingWarning",
    "Symbol",
    "transition",
    "gaussian_symbol",
    "weyl_quantize",
    "CutoffFamily",
    "phase_space_symbols",
    "Localizers",
    "build_localizers",
    "calibrate_C0",
    "MetricReport",
    "metric_uniformity_probe",
    "symbol_seminorms",
    "moyal_terms",
    "moyal_residual",
    "lattice_momentum_pair",
    "WindowResolvent",
    "SweepRow",
    "MicrolocalReport",
    "microlocal_norm_sweep",
    "operator_norm_probe",
    "fefferman_phong_probe",
]

BAND_FRACTION = 0.9


class AliasingWarning(UserWarning):
    """The symbol still varies in the top tenth of the frequency band."""


def transition(u):
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``, exact outside ``(0, 1)``."""
    u = np.asarray(u, dtype=float)
    a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


@dataclass
class Symbol:
    """Phase-space function with an optional table of closed-form partials.

    ``partials[(i, j)]`` is ``d_x^i d_xi^j a``. ``weight_class`` is a label
    such as ``"1"``, ``"f^2"`` or ``"w^s"`` recorded for reports.
    """

    func: Callable
    weight_class: str = "1"
    partials: dict = field(default_factory=dict)
    name: str = ""

    def __call__(self, x, xi):
        return self.func(x, xi)

    def partial(self, i: int, j: int) -> Callable:
        if (i, j) == (0, 0):
            return self.func
        try:
            return self.partials[(i, j)]
        except KeyError:
            raise KeyError(f"symbol {self.name or '?'} has no closed-form partial ({i}, {j})") from None


def _hermite_derivs(u, s, order):
    """``d^k exp(-u^2/(2 s^2))`` for k = 0..order via the physicists' Hermite recursion."""
    z = u / (s * math.sqrt(2.0))
    g = np.exp(-z * z)
    out = []
    h_prev, h = np.zeros_like(z), np.ones_like(z)
    for k in range(order + 1):
        out.append((-1.0 / (s * math.sqrt(2.0))) ** k * h * g)
        h_prev, h = h, 2 * z * h - 2 * k * h_prev
    return out


def gaussian_symbol(x0: float = 0.0, sx: float = 1.0, xi0: float = 0.0, sxi: float = 1.0,
                    order: int = 4, name: str = "gaussian") -> Symbol:
    """Separable Gaussian ``exp(-(x-x0)^2/(2 sx^2) - (xi-xi0)^2/(2 sxi^2))`` with partials."""
    def part(i, j):
        return lambda x, xi: _hermite_derivs(np.asarray(x) - x0, sx, i)[i] * _hermite_derivs(np.asarray(xi) - xi0, sxi, j)[j]
    partials = {(i, j): part(i, j) for i in range(order + 1) for j in range(order + 1) if i + j}
    return Symbol(part(0, 0), "1", partials, name)


def _dual_frequencies(n: int, dx: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(2 * n - 1, d=dx)


def weyl_quantize(symbol: Callable, x, dx: float | None = None, check_hermitian: bool | None = None,
                  warn: bool = True) -> np.ndarray:
    """Dense Weyl quantization of ``symbol`` on the uniform nodes ``x``.

    ``M[j, k] = K_{j+k}((j - k) dx)`` with ``K_m`` the inverse FFT in ``xi``
    of ``a(mid_m, xi)``. For real-valued symbols the result is checked to be
    Hermitian to ``1e-12`` relative. An :class:`AliasingWarning` is raised
    when the symbol is not flat on the top tenth of the band.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if dx is None:
        dx = float(x[1] - x[0])
    N = 2 * n - 1
    xi = _dual_frequencies(n, dx)
    mids = x[0] + 0.5 * dx * np.arange(N)
    A = np.asarray(symbol(mids[:, None], xi[None, :]))
    A = np.broadcast_to(A, (N, N))
    if not np.all(np.isfinite(A)):
        raise ValueError("symbol is not finite on the phase-space grid")
    if warn:
        top = np.abs(xi) >= BAND_FRACTION * np.abs(xi).max()
        edge = A[:, np.argmax(np.abs(xi))][:, None]
        scale = max(float(np.abs(A).max()), 1e-300)
        if np.abs(A[:, top] - edge).max() > 1e-3 * scale:
            warnings.warn("symbol varies in the top 10% of the frequency band", AliasingWarning, stacklevel=2)
    K = np.fft.ifft(A, axis=1)
    j = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    M = K[j + k, (j - k) % N]
    real = np.isrealobj(A) if check_hermitian is None else check_hermitian
    if real:
        gap = np.abs(M - M.conj().T).max()
        if gap > 1e-12 * max(np.abs(M).max(), 1e-300):
            raise ArithmeticError(f"quantized real symbol is not Hermitian (gap {gap:.2e})")
    return M


# ---------------------------------------------------------------------------
# localizers


@dataclass(frozen=True)
class CutoffFamily:
    """``F_+(a0)``, ``F_- = 1 - F_+`` and the ``b``-cutoffs.

    ``F_+`` rises from 0 at ``a0 = C0`` to 1 at ``2 C0``. ``Ft_minus`` falls
    from 1 at ``b = -kappa/2`` to 0 at ``kappa/2``; ``Ft_plus = 1 - Ft_minus``.
    The disjoint pair used for the separated-support estimate switches
    over ``[-kappa/2, -kappa/4]`` and ``[kappa/4, kappa/2]``.
    """

    C0: float
    kappa: float
    kappa0: float

    def __post_init__(self):
        if not (0 < self.kappa < self.kappa0) or not self.C0 > 0:
            raise ValueError("need C0 > 0 and 0 < kappa < kappa0")

    def F_plus(self, a0):
        return transition((np.asarray(a0) - self.C0) / self.C0)

    def F_minus(self, a0):
        return 1.0 - self.F_plus(a0)

    def Ft_minus(self, b):
        return 1.0 - transition((np.asarray(b) + self.kappa / 2) / self.kappa)

    def Ft_plus(self, b):
        return 1.0 - self.Ft_minus(b)

    def Ft_minus_disjoint(self, b):
        return 1.0 - transition((np.asarray(b) + self.kappa / 2) / (self.kappa / 4))

    def Ft_plus_disjoint(self, b):
        return transition((np.asarray(b) - self.kappa / 4) / (self.kappa / 4))

    @property
    def supports(self) -> dict:
        k = self.kappa
        return {"F_plus": (self.C0, math.inf), "Ft_minus": (-math.inf, k / 2), "Ft_plus": (-k / 2, math.inf),
                "Ft_minus_disjoint": (-math.inf, -k / 4), "Ft_plus_disjoint": (k / 4, math.inf)}


def phase_space_symbols(family: WeightFamily, E: float):
    """``a0 = xi^2/f^2`` and ``b = (x/<x>) xi / f`` at energy ``E``."""
    def a0(x, xi):
        return xi * xi / family.f(x, E) ** 2

    def b(x, xi):
        return x / bracket(x) * xi / family.f(x, E)
    return a0, b


@dataclass
class Localizers:
    E: float
    plus: np.ndarray
    minus_minus: np.ndarray
    minus_plus: np.ndarray
    pointwise_residual: float

    @property
    def operator_residual(self) -> float:
        S = self.plus + self.minus_minus + self.minus_plus
        return float(np.linalg.norm(S - np.eye(S.shape[0]), 2))


def build_localizers(cutoffs: CutoffFamily, family: WeightFamily, E: float, x, dx: float) -> Localizers:
    """Quantize ``F_+(a0)``, ``F_-(a0) Ft_-(b)`` and ``F_-(a0) Ft_+(b)``."""
    a0, b = phase_space_symbols(family, E)
    s_p = lambda X, Xi: cutoffs.F_plus(a0(X, Xi))
    s_mm = lambda X, Xi: cutoffs.F_minus(a0(X, Xi)) * cutoffs.Ft_minus(b(X, Xi))
    s_mp = lambda X, Xi: cutoffs.F_minus(a0(X, Xi)) * cutoffs.Ft_plus(b(X, Xi))
    xs = np.asarray(x)
    X, Xi = xs[:, None], _dual_frequencies(xs.size, dx)[None, :]
    pw = float(np.abs(s_p(X, Xi) + s_mm(X, Xi) + s_mp(X, Xi) - 1.0).max())
    return Localizers(E, weyl_quantize(s_p, x, dx), weyl_quantize(s_mm, x, dx), weyl_quantize(s_mp, x, dx), pw)


def calibrate_C0(spec: PotentialSpec, family: WeightFamily, x, energies, theta: float = math.pi / 2,
                 fractions=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """``C = sup |Re(V - zeta)| / f^2`` over the grid and sector; returns ``(2 C, C)``."""
    x = np.asarray(x, dtype=float)
    V = eval_potential(spec, x).V
    C = 0.0
    for E in energies:
        f2 = family.f(x, E) ** 2
        for fr in fractions:
            re = E * math.cos(fr * theta)
            C = max(C, float(np.max(np.abs(V - re) / f2)))
    return 2.0 * C, C


# ---------------------------------------------------------------------------
# metric probe


@dataclass
class MetricReport:
    energies: np.ndarray
    slow_variation: np.ndarray
    ratio_bound: np.ndarray
    temperateness: np.ndarray
    uncertainty_min: float
    N: float
    pairs: int

    def spread(self, values) -> float:
        values = np.asarray(values)
        return float(values.max() / values.min())

    @property
    def passed(self) -> bool:
        return (self.uncertainty_min >= 1.0
                and all(self.spread(v) < 10.0 for v in (self.slow_variation, self.ratio_bound, self.temperateness))
                and np.all(np.isfinite(self.temperateness)))


def metric_uniformity_probe(family: WeightFamily, energies, pairs: int = 10_000, N: float | None = None,
                            seed: int = 0, extent: float = 1e6, slow_radius: float = 0.5) -> MetricReport:
    """Empirical constants of the metric ``<x>^-2 dx^2 + f^-2 dxi^2``.

    For every energy the same random pairs ``(x, y)`` are used:

    * slow variation: ``max g_y/g_x`` over pairs with ``|x - y| <= slow_radius <x>``;
    * ratio bound: ``max (f(x)/f(y)) / (1 + <y>/<x>)^(mu/2)``;
    * temperateness: ``max (g_y/g_x) / (1 + f(y)^2 |x - y|^2)^N``, ``N`` defaulting
      to ``2/(2 - mu)``;
    * uncertainty: ``min f(x) <x>`` (must be at least 1).
    """
    if pairs < 10_000:
        raise ValueError("need at least 1e4 pairs per energy")
    mu = family.mu
    N = 2.0 / (2.0 - mu) if N is None else N
    rng = np.random.default_rng(seed)
    x = np.sign(rng.standard_normal(pairs)) * np.expm1(rng.uniform(0, math.log1p(extent), pairs))
    far = np.sign(rng.standard_normal(pairs)) * np.expm1(rng.uniform(0, math.log1p(extent), pairs))
    near = x + slow_radius * bracket(x) * rng.uniform(-1, 1, pairs)
    jx, jf, jn = bracket(x), bracket(far), bracket(near)
    sv, rb, tp = [], [], []
    umin = math.inf
    for E in energies:
        fx, ff, fn = family.f(x, E), family.f(far, E), family.f(near, E)
        ratio_near = np.maximum((jx / jn) ** 2, (fx / fn) ** 2)
        sv.append(float(ratio_near.max()))
        rb.append(float(np.max((fx / ff) / (1.0 + jf / jx) ** (mu / 2))))
        ratio_far = np.maximum((jx / jf) ** 2, (fx / ff) ** 2)
        tp.append(float(np.max(ratio_far / (1.0 + ff**2 * (x - far) ** 2) ** N)))
        umin = min(umin, float(np.min(fx * jx)))
    return MetricReport(np.asarray(energies, dtype=float), np.array(sv), np.array(rb), np.array(tp), umin, N, pairs)


def symbol_seminorms(symbol: Callable, family: WeightFamily, E: float, x, xi, weight=None, order: int = 2,
                     step: float = 1e-3) -> dict:
    """Spot-checked ``sup |d_x^i d_xi^j a| <x>^i f^j / m`` for ``i + j <= order``.

    Derivatives are central differences with steps scaled to the metric
    (``step * <x>`` in ``x`` and ``step * f`` in ``xi``).
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    jb = bracket(x)
    f = family.f(x, E)
    m = np.ones_like(x) if weight is None else np.asarray(weight(x, xi))
    hx, hxi = step * jb, step * f
    out = {}
    for i in range(order + 1):
        for j in range(order + 1 - i):
            val = _partial_at(symbol, x, xi, i, j, hx, hxi)
            out[(i, j)] = float(np.max(np.abs(val) * jb**i * f**j / m))
    return out


def _shift_diff(fn, h):
    return (fn(1.0) - fn(-1.0)) / (2.0 * h)


def _partial_at(symbol, x, xi, i, j, hx, hxi):
    if i == 0 and j == 0:
        return symbol(x, xi)
    if i > 0:
        return _shift_diff(lambda s: _partial_at(symbol, x + s * hx, xi, i - 1, j, hx, hxi), hx)
    return _shift_diff(lambda s: _partial_at(symbol, x, xi + s * hxi, 0, j - 1, hx, hxi), hxi)


# ---------------------------------------------------------------------------
# Moyal composition


def moyal_terms(a1: Symbol, a2: Symbol, N: int) -> list[Callable]:
    """Terms ``s_0..s_N`` of the Weyl composition of ``a1`` and ``a2``.

    ``s_j = (i/2)^j sum_{p+q=j} (-1)^p/(p! q!) (d_xi^p d_x^q a1)(d_xi^q d_x^p a2)``.
    """
    if N > 3:
        raise ValueError("N <= 3")
    terms = []
    for j in range(N + 1):
        parts = []
        for p in range(j + 1):
            q = j - p
            c = (0.5j) ** j * (-1) ** p / (math.factorial(p) * math.factorial(q))
            parts.append((c, a1.partial(q, p), a2.partial(p, q)))
        terms.append(lambda x, xi, parts=parts: sum(c * f1(x, xi) * f2(x, xi) for c, f1, f2 in parts))
    return terms


def lattice_momentum_pair(dx: float, order: int = 3) -> tuple[Symbol, Symbol]:
    """``(x, sin(xi dx)/dx)`` with every partial up to ``order`` in closed form.

    On the lattice the Weyl product of this pair has a terminating
    expansion, so it serves as the exact polynomial case. The plain ``xi``
    is not exactly representable (see :func:`weyl_quantize`).
    """
    zero = lambda x, xi: 0.0 * np.asarray(x) * np.asarray(xi)  # noqa: E731
    px = {(i, j): zero for i in range(order + 1) for j in range(order + 1) if i + j}
    px[(1, 0)] = lambda x, xi: 1.0 + 0.0 * np.asarray(x) * np.asarray(xi)
    derivs = [lambda x, xi: np.sin(xi * dx) / dx, lambda x, xi: np.cos(xi * dx),
              lambda x, xi: -dx * np.sin(xi * dx), lambda x, xi: -dx * dx * np.cos(xi * dx)]
    pxi = {(i, j): zero for i in range(order + 1) for j in range(order + 1) if i + j}
    for j in range(1, min(order, 3) + 1):
        pxi[(0, j)] = lambda x, xi, f=derivs[j]: f(x, xi) + 0.0 * np.asarray(x)
    a1 = Symbol(lambda x, xi: np.asarray(x) + 0.0 * np.asarray(xi), "<x>", px, "x")
    a2 = Symbol(lambda x, xi: derivs[0](x, xi) + 0.0 * np.asarray(x), "1", pxi, "lattice_xi")
    return a1, a2


def moyal_residual(a1: Symbol, a2: Symbol, N: int, x, dx: float, interior: float = 1.0) -> float:
    """``||Op(a1) Op(a2) - sum_{j<=N} Op(s_j)||_2`` on the nodes ``x``.

    ``interior < 1`` restricts the comparison to the central fraction of
    the nodes (the finite product loses the part of the kernel that leaves
    the grid).
    """
    x = np.asarray(x, dtype=float)
    P = weyl_quantize(a1, x, dx, check_hermitian=False, warn=False) @ weyl_quantize(a2, x, dx, check_hermitian=False, warn=False)
    S = np.zeros_like(P)
    for s in moyal_terms(a1, a2, N):
        S = S + weyl_quantize(lambda X, Xi, s=s: np.asarray(s(X, Xi), dtype=complex), x, dx, check_hermitian=False, warn=False)
    n = x.size
    cut = int(round(n * (1.0 - interior) / 2))
    sl = slice(cut, n - cut)
    return float(np.linalg.norm((P - S)[sl, sl], 2))


# ---------------------------------------------------------------------------
# resolvent on a window of a much larger box


class WindowResolvent:
    """Resolvent of a large Dirichlet box compressed onto a window of nodes.

    The box extends to ``|x| < extent`` with the window's spacing; the
    exterior chains are eliminated exactly by their corner Green's functions
    (a Schur complement), so the window sees the large box without storing it.
    """

    def __init__(self, spec: PotentialSpec, x, dx: float, zeta: complex, extent: float):
        x = np.asarray(x, dtype=float)
        self.x, self.dx, self.zeta = x, dx, complex(zeta)
        V = eval_potential(spec, x).V
        h2 = dx * dx
        d = (2.0 / h2 + V - self.zeta).astype(np.complex128)
        m_right = max(int((extent - x[-1]) / dx), 0)
        m_left = max(int((x[0] + extent) / dx), 0)
        for side, m in ((1, m_right), (-1, m_left)):
            xs = (x[-1] if side > 0 else x[0]) + side * dx * np.arange(1, m + 1)
            dext = 2.0 / h2 + eval_potential(spec, xs).V - self.zeta
            g = exterior_green(dext, 1.0 / h2**2)
            d[-1 if side > 0 else 0] -= g / h2**2
        off = np.full(x.size - 1, -1.0 / h2, dtype=np.complex128)
        self._lu = TridiagLU(off, d, off)

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=np.complex128))

    def solve_adjoint(self, rhs):
        return self._lu.solve_adjoint_symmetric(np.asarray(rhs, dtype=np.complex128))

    def power(self, rhs, m: int, adjoint: bool = False):
        u = np.asarray(rhs, dtype=np.complex128)
        for _ in range(m):
            u = self.solve_adjoint(u) if adjoint else self.solve(u)
        return u


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepRow:
    estimate: str
    E: float
    arg: float
    t: float
    eps: float
    m: int
    norm: float
    flags: str = ""

    CSV_HEADER = ("estimate", "E", "arg", "t", "eps", "m", "norm", "flags")

    def as_tuple(self):
        return (self.estimate, self.E, self.arg, self.t, self.eps, self.m, self.norm, self.flags)


@dataclass
class MicrolocalReport:
    rows: list
    partition_residual: float
    pointwise_residual: float
    C0: float

    def statistic(self, estimate: str) -> float:
        sel = [r for r in self.rows if r.estimate == estimate]
        _, mx = decade_maxima([r.E for r in sel], [r.norm for r in sel])
        return float(mx[0] / mx[-1])

    @property
    def estimates(self) -> list[str]:
        return list(dict.fromkeys(r.estimate for r in self.rows))


def _two_sided(L, Op_left, R, Op_right, Rw, m, tol, maxiter):
    """Norm of ``diag(L) Op_left R^m Op_right diag(Rw)`` (``None`` operators are the identity)."""
    n = L.size
    ol = (lambda v: v) if Op_left is None else (lambda v: Op_left @ v)
    olh = (lambda v: v) if Op_left is None else (lambda v: Op_left.conj().T @ v)
    orr = (lambda v: v) if Op_right is None else (lambda v: Op_right @ v)
    orh = (lambda v: v) if Op_right is None else (lambda v: Op_right.conj().T @ v)
    apply = lambda v: L * ol(R.power(orr(Rw * v), m))
    adj = lambda u: Rw * orh(R.power(olh(L * u), m, adjoint=True))
    return power_norm(apply, adj, n, tol=tol, maxiter=maxiter)


def _sweep_energy(args):
    (spec, family, cutoffs, x, dx, E, phis, extent, window, ts, eps, t_disjoint, ms, tol, maxiter) = args
    k = family.k(x)
    loc = build_localizers(cutoffs, family, E, x, dx)
    a0, b = phase_space_symbols(family, E)
    mm_d = weyl_quantize(lambda X, Xi: cutoffs.F_minus(a0(X, Xi)) * cutoffs.Ft_minus_disjoint(b(X, Xi)), x, dx)
    mp_d = weyl_quantize(lambda X, Xi: cutoffs.F_minus(a0(X, Xi)) * cutoffs.Ft_plus_disjoint(b(X, Xi)), x, dx)
    rows = []
    for phi in phis:
        R = WindowResolvent(spec, x, dx, E * complex(math.cos(phi), math.sin(phi)), extent)
        for t in ts:
            L = window * k ** (t - 0.5 - eps)
            for name, Op in (("ii", loc.plus), ("iii", loc.minus_minus), ("neg-iii", loc.minus_plus)):
                Rw = window * k ** (-t - 0.5 - eps)
                s, it, ok = _two_sided(L, Op, R, None, Rw, 1, tol, maxiter)
                rows.append(SweepRow(name, E, phi, t, eps, 1, s, "" if ok else "not_converged"))
            for m in ms:
                Rw = window * k ** (-t - m + 0.5 - eps)
                s, it, ok = _two_sided(L, loc.plus, R, None, Rw, m, tol, maxiter)
                rows.append(SweepRow(f"iterated-m{m}", E, phi, t, eps, m, s, "" if ok else "not_converged"))
        Kt = window * k**t_disjoint
        s, it, ok = _two_sided(Kt, mm_d, R, mp_d, Kt, 1, tol, maxiter)
        rows.append(SweepRow("iv", E, phi, t_disjoint, 0.0, 1, s, "" if ok else "not_converged"))
    return rows, loc.operator_residual, loc.pointwise_residual


def microlocal_norm_sweep(spec: PotentialSpec, n: int = 1024, dx: float = 1.0, energies=None,
                          theta: float = math.pi / 2, ts=(1.0,), eps: float = 0.1, t_disjoint: float = 2.0,
                          ms=(2, 3), extent: float = 20_000.0, window_inner: float = 380.0,
                          window_outer: float = 460.0, C0: float | None = None, kappa_fraction: float = 0.9,
                          tol: float = 1e-6, maxiter: int = 300, workers: int = 1) -> MicrolocalReport:
    """Localized weighted resolvent norms on a 1-d window of ``n`` nodes.

    Estimate ids: ``ii`` (``F_+(a0)`` on the left), ``iii`` (``F_-(a0) Ft_-(b)``
    on the left), ``neg-iii`` (``Ft_+`` in the place of ``Ft_-``; expected to
    grow), ``iv`` (separated ``b``-supports on both sides, ``k^t`` weights)
    and ``iterated-m{m}`` (``F_+(a0) R^m`` with the matching right weight).

    The weights are multiplied by a smooth window equal to 1 for
    ``|x| <= window_inner`` and 0 beyond ``window_outer``; this compresses
    the estimate and cannot increase the norm.
    """
    if n > 1024:
        raise ValueError("dense localizers need n <= 1024")
    if spec.dim != 1:
        raise ValueError("phase-space sweeps are one-dimensional")
    energies = np.logspace(-3, 0, 7) if energies is None else np.asarray(energies, dtype=float)
    x = (np.arange(n) - (n - 1) / 2.0) * dx
    family = WeightFamily.from_spec(spec, np.concatenate([x, np.geomspace(1, extent, 2000)]))
    if C0 is None:
        C0, _ = calibrate_C0(spec, family, x, energies, theta)
    cutoffs = CutoffFamily(C0, kappa_fraction * family.kappa0, family.kappa0)
    window = 1.0 - transition((np.abs(x) - window_inner) / (window_outer - window_inner))
    phis = tuple(fr * theta for fr in (0.25, 0.5, 0.75))
    tasks = [(spec, family, cutoffs, x, dx, float(E), phis, extent, window, tuple(ts), eps, t_disjoint,
              tuple(ms), tol, maxiter) for E in energies]
    out = pmap(_sweep_energy, tasks, workers)
    rows = [r for rs, _, _ in out for r in rs]
    return MicrolocalReport(rows, max(o[1] for o in out), max(o[2] for o in out), C0)


# ---------------------------------------------------------------------------
# uniform operator bounds


def operator_norm_probe(cutoffs: CutoffFamily, family: WeightFamily, energies, x, dx: float) -> np.ndarray:
    """Spectral norms of the three quantized localizers per energy (rows: plus, minus-minus, minus-plus)."""
    out = []
    for E in energies:
        loc = build_localizers(cutoffs, family, E, x, dx)
        out.append([np.linalg.norm(M, 2) for M in (loc.plus, loc.minus_minus, loc.minus_plus)])
    return np.array(out)


def fefferman_phong_probe(cutoffs: CutoffFamily, family: WeightFamily, energies, x, dx: float) -> np.ndarray:
    """Bottom eigenvalue of ``Op(w^2 G(b)^2)`` with ``G`` a bump supported in ``|b| < kappa``.

    The symbol is nonnegative; the returned values are the empirical lower
    bounds ``-C`` per energy.
    """
    out = []
    kappa = cutoffs.kappa
    for E in energies:
        _, b = phase_space_symbols(family, E)
        def sym(X, Xi):
            u = b(X, Xi) / kappa
            G = np.where(np.abs(u) < 1, np.exp(-1.0 / np.where(np.abs(u) < 1, 1 - u * u, 1.0)), 0.0)
            return family.w(X, E) ** 2 * G * G
        M = weyl_quantize(sym, x, dx, warn=False)
        out.append(float(np.linalg.eigvalsh((M + M.conj().T) / 2)[0]))
    return np.array(out)
