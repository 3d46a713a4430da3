"""Potentials, virials, weight functions and hypothesis checks.

The long-range part is ``V1(x) = -c1 <x>^-mu``; the short-range part ``V2`` is
either a smooth compactly supported bump or (for negative controls) a
globally supported power ``A <x>^-p``. All derivatives are closed-form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "BumpSpec",
    "PowerTail",
    "PotentialSpec",
    "PotentialValue",
    "WeightFamily",
    "AssumptionReport",
    "VirialViolation",
    "bracket",
    "eval_potential",
    "virial",
    "x_grad_virial",
    "kappa0_from_virial",
    "eval_weights",
    "validate_assumptions",
]

KAPPA0_SAFETY = 0.99


class VirialViolation(ValueError):
    """The virial is not strictly positive on the evaluation grid."""


def bracket(x):
    """Japanese bracket ``<x> = sqrt(1 + x^2)``."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x * x)


@dataclass(frozen=True)
class BumpSpec:
    """``A * exp(-1/(1 - u^2))`` with ``u = (|x| - center)/radius`` on ``|u| < 1``.

    ``order=None`` gives the C-infinity bump; an integer ``k`` gives the
    polynomial bump ``A (1 - u^2)^k`` (class C^{k-1}).
    """

    amplitude: float = 0.0
    center: float = 0.0
    radius: float = 1.0
    order: int | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if self.order is not None and self.order < 1:
            raise ValueError("bump order must be >= 1")

    @property
    def support_radius(self) -> float:
        return abs(self.center) + self.radius

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        u = (r - self.center) / self.radius
        inside = np.abs(u) < 1.0
        q = np.where(inside, 1.0 - u * u, 1.0)
        if self.order is None:
            val = np.where(inside, np.exp(-1.0 / q), 0.0)
            dval = np.where(inside, val * (-2.0 * u / self.radius) / (q * q), 0.0)
        else:
            k = self.order
            val = np.where(inside, q**k, 0.0)
            dval = np.where(inside, k * q ** (k - 1) * (-2.0 * u / self.radius), 0.0)
        return self.amplitude * val, self.amplitude * dval


@dataclass(frozen=True)
class PowerTail:
    """Globally supported ``A <x>^-p``; never compactly supported."""

    amplitude: float = 0.0
    power: float = 1.0

    support_radius = math.inf

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        jb = bracket(r)
        val = self.amplitude * jb ** (-self.power)
        dval = -self.power * self.amplitude * r * jb ** (-self.power - 2.0)
        return val, dval


class PotentialValue(NamedTuple):
    V: np.ndarray
    dV: np.ndarray
    V1: np.ndarray
    V2: np.ndarray


@dataclass(frozen=True)
class PotentialSpec:
    mu: float = 1.0
    c1: float = 1.0
    v2: BumpSpec | PowerTail = field(default_factory=BumpSpec)
    dim: int = 1
    ell: int = 0

    def __post_init__(self):
        if not (0.0 < self.mu < 2.0):
            raise ValueError(f"decay exponent mu must lie in (0, 2), got {self.mu}")
        if not self.c1 > 0:
            raise ValueError(f"amplitude c1 must be positive, got {self.c1}")
        if self.dim < 1 or self.ell < 0:
            raise ValueError("need dim >= 1 and ell >= 0")

    def scaled(self, lam: float) -> "PotentialSpec":
        """The same family with the long-range amplitude multiplied by ``lam``."""
        return PotentialSpec(self.mu, self.c1 * lam, self.v2, self.dim, self.ell)

    @property
    def has_v2(self) -> bool:
        return self.v2.amplitude != 0.0

    @property
    def flow_params(self) -> tuple[float, float, float, float, float]:
        """Parameters understood by the compiled flow kernel."""
        if isinstance(self.v2, PowerTail) and self.has_v2:
            raise NotImplementedError("compiled flow supports bump-type V2 only")
        if isinstance(self.v2, BumpSpec) and self.v2.order is not None and self.has_v2:
            raise NotImplementedError("compiled flow supports the smooth bump only")
        b = self.v2 if isinstance(self.v2, BumpSpec) else BumpSpec()
        return (self.mu, self.c1, b.amplitude, b.center, b.radius)


def eval_potential(spec: PotentialSpec, x) -> PotentialValue:
    """Potential and its radial derivative at coordinate/radius ``x``.

    In the radial picture ``dV`` is ``dV/dr``; for a 1-d coordinate it is
    ``dV/dx`` (the family is even).
    """
    x = np.asarray(x, dtype=float)
    jb = bracket(x)
    v1 = -spec.c1 * jb ** (-spec.mu)
    dv1 = spec.c1 * spec.mu * x * jb ** (-spec.mu - 2.0)
    v2, dv2 = spec.v2(x)
    dv2 = dv2 * np.where(x < 0, -1.0, 1.0)
    return PotentialValue(v1 + v2, dv1 + dv2, v1, v2)


def virial(spec: PotentialSpec, x):
    """``W = -2V - x dV``."""
    p = eval_potential(spec, x)
    return -2.0 * p.V - np.asarray(x, dtype=float) * p.dV


def _second_derivative(spec: PotentialSpec, x):
    x = np.asarray(x, dtype=float)
    jb = bracket(x)
    mu, c = spec.mu, spec.c1
    d2v1 = c * mu * (jb ** (-mu - 2.0) - (mu + 2.0) * x * x * jb ** (-mu - 4.0))
    v2 = spec.v2
    if not spec.has_v2:
        return d2v1
    if isinstance(v2, PowerTail):
        p, a = v2.power, v2.amplitude
        d2v2 = -p * a * (jb ** (-p - 2.0) - (p + 2.0) * x * x * jb ** (-p - 4.0))
        return d2v1 + d2v2
    # bump: differentiate numerically-free via the closed form in u
    r = np.abs(x)
    u = (r - v2.center) / v2.radius
    inside = np.abs(u) < 1.0
    q = np.where(inside, 1.0 - u * u, 1.0)
    if v2.order is None:
        e = np.where(inside, np.exp(-1.0 / q), 0.0)
        # g(u) = exp(-1/q); g' = -2u e / q^2; g'' = e (4u^2/q^4 - 2/q^2 - 8u^2/q^3)
        g2 = e * (4 * u * u / q**4 - 2.0 / q**2 - 8 * u * u / q**3)
    else:
        k = v2.order
        g2 = np.where(inside, -2 * k * q ** (k - 1) + 4 * k * (k - 1) * u * u * q ** np.maximum(k - 2, 0), 0.0)
    return d2v1 + v2.amplitude * np.where(inside, g2, 0.0) / v2.radius**2


def x_grad_virial(spec: PotentialSpec, x):
    """``x . grad W = -3 x V' - x^2 V''`` (appears in the epsilon-derivative of the regularized resolvent)."""
    x = np.asarray(x, dtype=float)
    p = eval_potential(spec, x)
    return -3.0 * x * p.dV - x * x * _second_derivative(spec, x)


def kappa0_from_virial(spec: PotentialSpec, grid_points, safety: float = 1.0) -> float:
    """Largest kappa0 with ``W >= 2 kappa0^2 <x>^-mu`` at every grid point.

    ``safety`` multiplies the result (use ``KAPPA0_SAFETY`` before building
    weights). Raises :class:`VirialViolation` when W <= 0 somewhere.
    """
    x = np.asarray(grid_points, dtype=float)
    w = virial(spec, x)
    if np.any(w <= 0):
        bad = x[np.argmin(w)]
        raise VirialViolation(f"virial not positive: W({bad:.4g}) = {w.min():.4g}")
    ratio = w * bracket(x) ** spec.mu / 2.0
    return safety * float(np.sqrt(ratio.min()))


@dataclass(frozen=True)
class WeightFamily:
    """Energy-dependent weights built from ``mu`` and ``kappa0``."""

    mu: float
    kappa0: float

    @classmethod
    def from_spec(cls, spec: PotentialSpec, grid_points, safety: float = KAPPA0_SAFETY) -> "WeightFamily":
        return cls(spec.mu, kappa0_from_virial(spec, grid_points, safety=safety))

    def f(self, x, E: float = 0.0):
        x = np.asarray(x, dtype=float)
        return np.sqrt(E / self.kappa0**2 + bracket(x) ** (-self.mu) / (1.0 - self.mu / 2.0))

    def w(self, x, E: float = 0.0):
        return bracket(x) * self.f(x, E)

    def v(self, x, E: float = 0.0):
        return E / self.kappa0**2 + bracket(x) ** (-self.mu)

    def k(self, x):
        return bracket(x) ** (1.0 + self.mu / 2.0)

    def power(self, x, s: float):
        return bracket(x) ** s

    def f_mourre(self, x, E: float = 0.0):
        """The simpler weight ``(E + <x>^-mu)^(1/2)`` used by the commutator estimates."""
        return np.sqrt(E + bracket(x) ** (-self.mu))

    def grad_f(self, x, E: float = 0.0):
        x = np.asarray(x, dtype=float)
        jb = bracket(x)
        return -self.mu / (2.0 - self.mu) / self.f(x, E) * jb ** (-self.mu - 1.0) * x / jb

    def grad_w(self, x, E: float = 0.0):
        return self.v(x, E) * np.asarray(x, dtype=float) / self.w(x, E)


def eval_weights(family: WeightFamily, x, E: float = 0.0, powers=()):
    """``(f_E, w_E, k, {s: <x>^s})`` at ``x``."""
    if E < 0:
        raise ValueError("energy must be nonnegative")
    return (family.f(x, E), family.w(x, E), family.k(x), {s: family.power(x, s) for s in powers})


@dataclass
class AssumptionReport:
    """Per-hypothesis verdicts with witness values and worst margins."""

    conditions: dict[str, bool]
    witnesses: dict[str, float]
    margins: dict[str, float]
    s: float
    eps_h: float
    R: float
    C: float
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(self.conditions.values())

    def h(self, r):
        """``h(r) = eps r^-mu/2`` with the largest admissible ``eps``."""
        return self.eps_h * np.asarray(r, dtype=float) ** (-self._mu / 2.0)

    _mu: float = 1.0


def _audit_grid(grid_points, refine: int = 10):
    x = np.unique(np.abs(np.asarray(grid_points, dtype=float)))
    fine = np.interp(np.linspace(0, x.size - 1, (x.size - 1) * refine + 1), np.arange(x.size), x)
    return np.unique(np.concatenate([x, fine]))


def validate_assumptions(spec: PotentialSpec, grid_points, s: float = 0.9, R: float = 10.0,
                         C: float = 1.0) -> AssumptionReport:
    """Pointwise check of the decay/sign/virial hypotheses on grid + 10x audit grid.

    ``s``, ``R``, ``C`` are the radial-ODE parameters (exponent, radius, and the
    constant in ``h' <= C h^2``); ``h = eps r^-mu/2`` with the largest
    admissible ``eps`` reported.
    """
    r = _audit_grid(grid_points)
    mu, c1 = spec.mu, spec.c1
    jb = bracket(r)
    pot = eval_potential(spec, r)
    cond, wit, marg, notes = {}, {}, {}, {}

    # (1) V1 <= -eps1 <x>^-mu
    eps1 = float(np.min(-pot.V1 * jb**mu))
    cond["sign_V1"] = eps1 > 0
    wit["eps1"] = eps1
    marg["sign_V1"] = eps1

    # (2) symbol-type bounds for alpha = 0, 1, 2
    d2 = _second_derivative(PotentialSpec(mu, c1), r)
    dv1 = c1 * mu * r * jb ** (-mu - 2.0)
    cs = [np.max(jb**mu * np.abs(pot.V1)), np.max(jb ** (mu + 1) * np.abs(dv1)), np.max(jb ** (mu + 2) * np.abs(d2))]
    cond["symbol_bounds"] = all(np.isfinite(cs))
    for a, cval in enumerate(cs):
        wit[f"C_alpha{a}"] = float(cval)
    marg["symbol_bounds"] = float(min(cs)) if cond["symbol_bounds"] else -math.inf

    # (3) positive virial of V1: W1 >= -eps2 V1
    w1 = -2.0 * pot.V1 - r * dv1
    eps2 = float(np.min(w1 / (-pot.V1)))
    cond["virial_V1"] = eps2 > 0
    wit["eps2"] = eps2
    marg["virial_V1"] = eps2

    # (4) V2 relatively compact: bounded and vanishing at the end of the grid
    v2abs = np.abs(pot.V2)
    tail = v2abs[r > 0.9 * r.max()]
    decays = (not spec.has_v2) or (np.isfinite(v2abs).all() and tail.max() <= 1e-2 * max(v2abs.max(), 1e-300))
    cond["V2_relatively_compact"] = bool(decays)
    marg["V2_relatively_compact"] = float(1.0 - (tail.max() / v2abs.max() if spec.has_v2 and v2abs.max() > 0 else 0.0))

    # (5) |V2| <= C |x|^-(1 + mu/2 + delta) beyond R
    if not spec.has_v2:
        delta = math.inf
    elif isinstance(spec.v2, PowerTail):
        delta = spec.v2.power - 1.0 - mu / 2.0
    else:
        delta = math.inf
    cond["V2_decay"] = delta > 0
    wit["delta"] = float(delta)
    marg["V2_decay"] = float(delta)

    # (5') compact support
    supp = spec.v2.support_radius if spec.has_v2 else 0.0
    cond["V2_compact_support"] = math.isfinite(supp)
    wit["V2_support_radius"] = float(supp)
    marg["V2_compact_support"] = float(r.max() - supp) if math.isfinite(supp) else -math.inf

    # unique continuation: reported, not verified
    cond["unique_continuation"] = True
    notes["unique_continuation"] = "assumed (bounded smooth potential), not verified numerically"

    # radial-ODE assumption with h = eps r^-mu/2
    out = r[r > R]
    jo = bracket(out)
    v1o = -c1 * jo ** (-mu)
    dv1o = c1 * mu * out * jo ** (-mu - 2.0)
    # d/dr (r^{s+1} V1) = (s+1) r^s V1 + r^{s+1} V1'
    lhs = (s + 1.0) * out**s * v1o + out ** (s + 1.0) * dv1o
    eps_sq = np.min(-lhs / (out**s * out ** (-mu)))
    eps_h = float(np.sqrt(eps_sq)) if eps_sq > 0 else 0.0
    cond["radial_h_bound"] = eps_h > 0 and 0.0 <= s < 1.0
    wit["eps_h"] = eps_h
    marg["radial_h_bound"] = float(eps_sq)
    if eps_h > 0:
        h = eps_h * out ** (-mu / 2.0)
        v2o = np.abs(eval_potential(spec, out).V2)
        ratio = (1.0 / out + out * v2o) / h
        # o(h): ratio must be decreasing over the outer decade and below its start
        outer = ratio[out > out.max() / 10.0]
        small = bool(outer[-1] < outer[0] and ratio[-1] < 1.0)
        cond["radial_V2_small"] = small
        marg["radial_V2_small"] = float(1.0 - ratio[-1])
        hp = -(mu / 2.0) * eps_h * out ** (-mu / 2.0 - 1.0)
        cond["radial_h_prime"] = bool(np.all(hp <= C * h * h))
        marg["radial_h_prime"] = float(np.min(C * h * h - hp))
    else:
        cond["radial_V2_small"] = False
        cond["radial_h_prime"] = False
        marg["radial_V2_small"] = -math.inf
        marg["radial_h_prime"] = -math.inf
    rep = AssumptionReport(cond, wit, marg, s=s, eps_h=eps_h, R=R, C=C, notes=notes)
    rep._mu = mu
    return rep
