"""Classical flow of ``h = xi^2 + V(x)`` and the propagation observables along it.

Flows are one-dimensional (signed ``x``); radial motion is the restriction
to ``x > 0`` and orbits through the origin are smooth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from ._parallel import pmap, task_seed
from .kernels import dopri5_flow
from .model import PotentialSpec, WeightFamily, bracket, eval_potential, kappa0_from_virial, virial

__all__ = [
    "FlowError",
    "PhasePoint",
    "Trajectory",
    "PropagationObservable",
    "MonotonicityReport",
    "VelocityReport",
    "smooth_step",
    "default_kappa0",
    "integrate_flow",
    "bracket_residual",
    "grad_w_residual",
    "observable_monotonicity",
    "minimal_velocity_constant",
    "phase_function",
    "minimal_velocity_ratio",
    "run_ensemble",
]


class FlowError(RuntimeError):
    """The integrator ran out of steps or the step size collapsed."""


def smooth_step(u):
    """Quintic smoothstep: 0 for u<=0, 1 for u>=1, C^2 with exact endpoints."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def _smooth_step_prime(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    return np.where(inside, 30.0 * u * u * (1.0 - u) ** 2, 0.0)


@dataclass(frozen=True)
class PhasePoint:
    x: float
    xi: float
    E: float


@dataclass
class Trajectory:
    """Sampled orbit with its observable traces.

    Weights use ``E = max(h(x0, xi0), 0)`` and the unsafed ``kappa0`` of
    the potential, so the algebraic identities along the flow are exact.
    """

    spec: PotentialSpec
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    energy: float
    kappa0: float
    max_drift: float
    n_accepted: int
    n_rejected: int
    tol: float

    @property
    def family(self) -> WeightFamily:
        return WeightFamily(self.spec.mu, self.kappa0)

    @property
    def E(self) -> float:
        return max(self.energy, 0.0)

    @property
    def drift(self) -> np.ndarray:
        return self.xi**2 + eval_potential(self.spec, self.x).V - self.energy

    @property
    def f(self):
        return self.family.f(self.x, self.E)

    @property
    def w(self):
        return self.family.w(self.x, self.E)

    @property
    def v(self):
        return self.family.v(self.x, self.E)

    @property
    def a0(self):
        return self.xi**2 / self.f**2

    @property
    def b(self):
        return self.x / bracket(self.x) * self.xi / self.f

    def point(self, i: int) -> PhasePoint:
        return PhasePoint(float(self.x[i]), float(self.xi[i]), self.energy)


def integrate_flow(spec: PotentialSpec, x0: float, xi0: float, T: float, tol: float = 1e-10,
                   t_eval=None, kappa0: float | None = None, drift_bound: float = 1e-8,
                   max_steps: int = 5_000_000) -> Trajectory:
    """Integrate ``x' = 2 xi, xi' = -V'(x)`` on ``[0, T]`` with adaptive Dormand-Prince 5(4).

    Steps whose energy drift exceeds ``drift_bound * (1 + |E|)`` are rejected.
    ``t_eval`` defaults to ``0`` plus 2000 log-spaced times in ``[1e-2, T]``.
    Raises :class:`FlowError` on step collapse or an exhausted step budget.
    """
    if not (math.isfinite(x0) and math.isfinite(xi0)) or not T > 0:
        raise ValueError("need a finite initial point and T > 0")
    if t_eval is None:
        t_eval = np.concatenate([[0.0], np.geomspace(min(1e-2, T / 2), T, 2000)])
    t_eval = np.asarray(t_eval, dtype=float)
    E = float(xi0**2 + eval_potential(spec, np.array([x0])).V[0])
    states, n_acc, n_rej, drift, status = dopri5_flow(
        np.array([x0, xi0]), t_eval, spec.flow_params, rtol=tol, atol=1e-2 * tol,
        drift_tol=drift_bound * (1.0 + abs(E)), max_steps=max_steps)
    if status == 2:
        raise FlowError(f"step size collapsed near x = {states[-1, 0] if len(states) else x0:.4g}")
    if status == 1:
        raise FlowError("step budget exhausted")
    if kappa0 is None:
        kappa0 = default_kappa0(spec)
    return Trajectory(spec, t_eval[: len(states)], states[:, 0], states[:, 1], E, kappa0,
                      float(drift), int(n_acc), int(n_rej), tol)


def default_kappa0(spec: PotentialSpec, extent: float = 1e6) -> float:
    """Unsafed virial constant on a log grid out to ``extent``."""
    pts = np.concatenate([np.linspace(0.0, 10.0, 2001), np.geomspace(10.0, extent, 4000)])
    return kappa0_from_virial(spec, pts)


# ---------------------------------------------------------------------------
# bracket identities


def _closed_form_db(traj: Trajectory):
    x = traj.x
    W = virial(traj.spec, x)
    h = traj.xi**2 + eval_potential(traj.spec, x).V
    b = traj.b
    return (2.0 * h + W - 2.0 * b * b * traj.v) / traj.w


def bracket_residual(traj: Trajectory) -> float:
    """``max |db/dt - w^-1 (2h + W - 2 b^2 v)|`` with ``db/dt`` from the trace.

    The trace must be sampled on a uniform time grid; the derivative is the
    fourth-order five-point central difference, evaluated at interior samples.
    """
    t = traj.t
    dt = np.diff(t)
    if len(t) < 5 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("bracket_residual needs a uniform trace with at least 5 samples")
    h = dt[0]
    b = traj.b
    db = (b[:-4] - 8.0 * b[1:-3] + 8.0 * b[3:-1] - b[4:]) / (12.0 * h)
    closed = _closed_form_db(traj)[2:-2]
    return float(np.max(np.abs(db - closed)))


def grad_w_residual(family: WeightFamily, x, E: float = 0.0, step: float = 1e-4) -> float:
    """Relative gap between ``grad w = v x / w`` and a central difference of ``w``."""
    x = np.asarray(x, dtype=float)
    fd = (family.w(x + step, E) - family.w(x - step, E)) / (2 * step)
    closed = family.grad_w(x, E)
    return float(np.max(np.abs(fd - closed) / np.maximum(np.abs(closed), 1e-300)))


# ---------------------------------------------------------------------------
# propagation observable


@dataclass(frozen=True)
class PropagationObservable:
    """``q = w (kappa' - b) F(b)`` with a decreasing C^2 cutoff ``F``.

    ``F = 1`` below ``kappa_low`` and ``F = 0`` above ``kappa_mid``.
    ``increasing=True`` flips the cutoff (a negative control).
    """

    kappa_low: float
    kappa_mid: float
    kappa_high: float
    kappa0: float
    increasing: bool = False

    def __post_init__(self):
        if not (0 < self.kappa_low < self.kappa_mid < self.kappa_high <= self.kappa0 * (1 + 1e-12)):
            raise ValueError("need 0 < kappa_low < kappa_mid < kappa_high <= kappa0")

    @classmethod
    def default(cls, kappa0: float, increasing: bool = False) -> "PropagationObservable":
        high = 0.99 * kappa0
        mid = 0.9 * high
        return cls(0.8 * mid, mid, high, kappa0, increasing)

    def _u(self, b):
        return (np.asarray(b, dtype=float) - self.kappa_low) / (self.kappa_mid - self.kappa_low)

    def cutoff(self, b):
        s = smooth_step(self._u(b))
        return s if self.increasing else 1.0 - s

    def cutoff_prime(self, b):
        d = _smooth_step_prime(self._u(b)) / (self.kappa_mid - self.kappa_low)
        return d if self.increasing else -d

    def q(self, traj: Trajectory):
        b = traj.b
        return traj.w * (self.kappa_high - b) * self.cutoff(b)

    def dq_dt(self, traj: Trajectory):
        """Closed-form time derivative using ``dw/dt = 2 v b`` and the bracket identity."""
        b = traj.b
        w = traj.w
        db = _closed_form_db(traj)
        return (2.0 * traj.v * b * (self.kappa_high - b) - w * db) * self.cutoff(b) \
            + w * (self.kappa_high - b) * self.cutoff_prime(b) * db


@dataclass
class MonotonicityReport:
    violations: int
    pointwise_violations: int
    worst_margin: float
    cutoff_increase: float


def observable_monotonicity(traj: Trajectory, obs: PropagationObservable, tol: float | None = None) -> MonotonicityReport:
    """Count violations of ``dq/dt <= -2(kappa0^2 - kappa kappa') <x>^-mu F(b)``.

    ``pointwise_violations`` tests the closed-form derivative at every
    sample; ``violations`` counts sample-to-sample increases of ``q`` beyond
    ``tol`` (default: the trajectory's integrator tolerance times the scale
    of ``q``). ``cutoff_increase`` is the largest increase of ``F(b)`` between
    consecutive samples.
    """
    if tol is None:
        tol = max(traj.tol, 1e-12)
    q = obs.q(traj)
    F = obs.cutoff(traj.b)
    bound = -2.0 * (obs.kappa0**2 - obs.kappa_mid * obs.kappa_high) * bracket(traj.x) ** (-traj.spec.mu) * F
    dq = obs.dq_dt(traj)
    slack = tol * (1.0 + np.abs(bound))
    margin = bound - dq
    scale = 1.0 + np.max(np.abs(q))
    jumps = np.diff(q)
    return MonotonicityReport(
        violations=int(np.sum(jumps > tol * scale)),
        pointwise_violations=int(np.sum(margin < -slack)),
        worst_margin=float(np.min(margin)),
        cutoff_increase=float(max(0.0, np.max(np.diff(F)))) if len(F) > 1 else 0.0,
    )


# ---------------------------------------------------------------------------
# minimal velocity


def minimal_velocity_constant(kappa0: float, mu: float) -> float:
    """``kappa0 (2 + mu) / (1 - mu/2)^(1/2)``."""
    return kappa0 * (2.0 + mu) / math.sqrt(1.0 - mu / 2.0)


def phase_function(r, E: float, kappa0: float, mu: float):
    """``F(r) = 1/2 int_1^r (kappa0^-2 E + (1 - mu/2)^-1 s^-mu)^-1/2 ds``."""
    def integrand(s):
        return 0.5 / math.sqrt(E / kappa0**2 + s ** (-mu) / (1.0 - mu / 2.0))
    prev_r, acc = 1.0, 0.0
    rs = np.atleast_1d(np.asarray(r, dtype=float))
    order = np.argsort(rs)
    vals = np.empty_like(rs)
    for i in order:
        acc += quad(integrand, prev_r, rs[i], epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        prev_r = rs[i]
        vals[i] = acc

    return vals if np.ndim(r) else float(vals[0])


@dataclass
class VelocityReport:
    t: np.ndarray
    ratio: np.ndarray
    liminf_proxy: float
    constant: float
    phase_residual: float
    bounded_flag: bool
    flags: list = field(default_factory=list)


def minimal_velocity_ratio(traj: Trajectory, kappa0: float | None = None, phase_samples: int = 64) -> VelocityReport:
    """Ratio ``|x(t)| / (C t)^(1/(1+mu/2))`` on the log-spaced tail.

    The liminf is approximated by the minimum over the final time decade.
    ``phase_residual`` is the largest gap between a finite difference of
    ``F(<x(t)>)`` and ``b`` at ``phase_samples`` trace times.
    """
    if traj.energy < -1e-12:
        raise ValueError("minimal velocity needs E >= 0")
    kappa0 = traj.kappa0 if kappa0 is None else kappa0
    mu = traj.spec.mu
    C = minimal_velocity_constant(kappa0, mu)
    pos = traj.t > 0
    t, x = traj.t[pos], traj.x[pos]
    ratio = np.abs(x) / (C * t) ** (1.0 / (1.0 + mu / 2.0))
    T = t[-1]
    last = t >= T / 10.0
    proxy = float(np.min(ratio[last]))
    flags = []
    if T < 1e4:
        flags.append("short_time_range")
    bounded = bool(traj.E > 0 and np.max(np.abs(x[last])) < 2.0 * max(abs(traj.x[0]), 1.0))
    if bounded:
        flags.append("bounded_positive_energy_orbit")
    # phase-function check on a uniform sub-trace
    E = traj.E
    idx = np.linspace(2, len(traj.t) - 3, phase_samples).astype(int)
    gaps = []
    for i in idx:
        ts = traj.t[i - 1: i + 2]
        if not (ts[1] - ts[0] > 0 and ts[2] - ts[1] > 0):
            continue
        Fv = phase_function(bracket(traj.x[i - 1: i + 2]), E, kappa0, mu)
        h1, h2 = ts[1] - ts[0], ts[2] - ts[1]
        dF = (Fv[2] - Fv[1]) * h1 / (h2 * (h1 + h2)) + (Fv[1] - Fv[0]) * h2 / (h1 * (h1 + h2))
        b = traj.x[i] / bracket(traj.x[i]) * traj.xi[i] / traj.family.f(traj.x[i], E)
        gaps.append(abs(dF - b))
    return VelocityReport(t, ratio, proxy, C, float(max(gaps) if gaps else np.nan), bounded, flags)


# ---------------------------------------------------------------------------
# ensembles


def _ensemble_task(args):
    spec, seed, index, T, tol, kappa0, mono_tol = args
    rng = np.random.default_rng(task_seed(seed, index))
    E = 0.0 if index % 4 == 0 else float(rng.uniform(1e-3, 1e-1))
    x0 = float(rng.uniform(1.0, 20.0)) * (1.0 if rng.random() < 0.5 else -1.0)
    p2 = E - float(eval_potential(spec, np.array([x0])).V[0])
    xi0 = math.sqrt(p2) * (1.0 if rng.random() < 0.5 else -1.0)
    traj = integrate_flow(spec, x0, xi0, T, tol=tol, kappa0=kappa0)
    obs = PropagationObservable.default(kappa0)
    rep = minimal_velocity_ratio(traj, kappa0)
    mono = observable_monotonicity(traj, obs, tol=mono_tol)
    return {
        "index": index, "E": E, "x0": x0, "xi0": xi0, "liminf_proxy": rep.liminf_proxy,
        "max_drift": traj.max_drift, "violations": mono.violations,
        "pointwise_violations": mono.pointwise_violations, "phase_residual": rep.phase_residual,
        "flags": ";".join(rep.flags),
    }


def run_ensemble(spec: PotentialSpec, count: int = 20, T: float = 1e4, tol: float = 1e-10, seed: int = 0,
                 workers: int = 1, kappa0: float | None = None, mono_tol: float = 1e-8) -> list[dict]:
    """Random orbits with ``E in {0} U [1e-3, 1e-1]``; every fourth orbit has ``E = 0``.

    Starting points are ``|x0| in [1, 20]`` with random signs of ``x0`` and
    ``xi0`` (so incoming and outgoing starts both occur). ``tol`` is the
    integrator tolerance and ``mono_tol`` the slack of the monotonicity count.
    """
    kappa0 = default_kappa0(spec) if kappa0 is None else kappa0
    return pmap(_ensemble_task, [(spec, seed, i, T, tol, kappa0, mono_tol) for i in range(count)], workers)
