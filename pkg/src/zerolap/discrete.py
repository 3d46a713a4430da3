"""Finite-difference Hamiltonian, dilation generator and diagonal weights.

Grids are Dirichlet boxes with nodes ``x_j = x_min + j*dx`` (j = 1..n) and
``dx = L/(n+1)``, so both walls sit one step outside the node set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import TridiagLU, tridiag_matvec
from .model import PotentialSpec, bracket, eval_potential

__all__ = [
    "Grid",
    "BandedOperator",
    "RadialReduction",
    "build_hamiltonian",
    "build_dilation_generator",
    "commutator_residual",
    "weight_operator",
]


@dataclass(frozen=True)
class Grid:
    """Uniform Dirichlet grid.

    ``kind="radial"`` covers ``(0, extent)``; ``kind="line"`` covers
    ``(-extent, extent)``.
    """

    n: int
    extent: float
    kind: str = "radial"

    def __post_init__(self):
        if self.kind not in ("radial", "line"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.n < 16 or not self.extent > 0:
            raise ValueError("need n >= 16 and a positive extent")

    @property
    def length(self) -> float:
        return self.extent if self.kind == "radial" else 2.0 * self.extent

    @property
    def x_min(self) -> float:
        return 0.0 if self.kind == "radial" else -self.extent

    @property
    def dx(self) -> float:
        return self.length / (self.n + 1)

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(1, self.n + 1)

    @classmethod
    def with_spacing(cls, dx: float, extent: float, kind: str = "radial") -> "Grid":
        length = extent if kind == "radial" else 2.0 * extent
        return cls(max(16, int(round(length / dx)) - 1), extent, kind)


@dataclass(frozen=True)
class RadialReduction:
    """Angular channel ``(dim, ell)``; the reduced operator gains ``q_eff / r^2``."""

    dim: int = 1
    ell: int = 0

    @property
    def q_eff(self) -> float:
        d, l = self.dim, self.ell
        return l * (l + d - 2) + (d - 1) * (d - 3) / 4.0

    @classmethod
    def from_spec(cls, spec: PotentialSpec) -> "RadialReduction":
        return cls(spec.dim, spec.ell)


class BandedOperator:
    """Sparse banded matrix stored as ``{offset: diagonal}``.

    ``offset`` k holds entries ``M[i, i+k]``.
    """

    def __init__(self, bands: dict[int, np.ndarray], n: int, grid: Grid | None = None):
        self.n = n
        self.grid = grid
        self.bands = {}
        for k, v in bands.items():
            v = np.asarray(v)
            if v.shape != (n - abs(k),):
                raise ValueError(f"band {k} has shape {v.shape}, expected {(n - abs(k),)}")
            self.bands[int(k)] = v

    @property
    def bandwidth(self) -> int:
        return max((abs(k) for k in self.bands), default=0)

    def band(self, k: int) -> np.ndarray:
        return self.bands.get(k, np.zeros(self.n - abs(k)))

    @property
    def is_tridiagonal(self) -> bool:
        return self.bandwidth <= 1

    def tridiagonal(self):
        if not self.is_tridiagonal:
            raise ValueError("operator is not tridiagonal")
        return self.band(-1), self.band(0), self.band(1)

    def matvec(self, v):
        v = np.asarray(v)
        if self.is_tridiagonal:
            lo, d, up = (np.asarray(b, dtype=np.complex128) for b in self.tridiagonal())
            out = tridiag_matvec(lo, d, up, v.astype(np.complex128))
            return out if np.iscomplexobj(v) or self.is_complex else out.real
        dtype = np.result_type(v, *self.bands.values())
        out = np.zeros(self.n, dtype=dtype)
        for k, b in self.bands.items():
            if k >= 0:
                out[: self.n - k] += b * v[k:]
            else:
                out[-k:] += b * v[: self.n + k]
        return out

    __matmul__ = matvec

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(b) for b in self.bands.values())

    def to_dense(self) -> np.ndarray:
        dtype = np.complex128 if self.is_complex else float
        m = np.zeros((self.n, self.n), dtype=dtype)
        for k, b in self.bands.items():
            m += np.diag(b, k)
        return m

    def adjoint(self) -> "BandedOperator":
        return BandedOperator({-k: np.conj(b) for k, b in self.bands.items()}, self.n, self.grid)

    def shifted(self, z: complex) -> "BandedOperator":
        bands = dict(self.bands)
        bands[0] = self.band(0) - z
        return BandedOperator(bands, self.n, self.grid)

    def factor(self, z: complex = 0.0) -> TridiagLU:
        lo, d, up = self.tridiagonal()
        return TridiagLU(lo, np.asarray(d, dtype=np.complex128) - z, up)

    def compose(self, other: "BandedOperator") -> "BandedOperator":
        """Banded product ``self @ other``."""
        n = self.n
        out: dict[int, np.ndarray] = {}
        for a, ba in self.bands.items():
            for b, bb in other.bands.items():
                k = a + b
                if abs(k) >= n:
                    continue
                # (S O)[i, i+k] = S[i, i+a] O[i+a, i+k]; band m stores M[i, i+m] at i + min(0, m)
                i = np.arange(max(0, -a, -k), min(n, n - a, n - k))
                contrib = ba[i + min(0, a)] * bb[i + a + min(0, b)]
                dtype = np.result_type(contrib, out[k]) if k in out else contrib.dtype
                target = out[k] = out.get(k, np.zeros(n - abs(k))).astype(dtype, copy=False)
                target[i + min(0, k)] += contrib
        return BandedOperator(out, n, self.grid)

    def __add__(self, other: "BandedOperator") -> "BandedOperator":
        keys = set(self.bands) | set(other.bands)
        return BandedOperator({k: self.band(k) + other.band(k) for k in keys}, self.n, self.grid)

    def __sub__(self, other: "BandedOperator") -> "BandedOperator":
        return self + other.scale(-1.0)

    def scale(self, c) -> "BandedOperator":
        return BandedOperator({k: c * b for k, b in self.bands.items()}, self.n, self.grid)

    def commutator(self, other: "BandedOperator") -> "BandedOperator":
        return self.compose(other) - other.compose(self)

    @classmethod
    def diagonal(cls, values, grid: Grid | None = None) -> "BandedOperator":
        values = np.asarray(values)
        return cls({0: values}, values.shape[0], grid)


def build_hamiltonian(grid: Grid, spec: PotentialSpec, reduction: RadialReduction | None = None,
                      potential: np.ndarray | None = None) -> BandedOperator:
    """Three-point Dirichlet discretization of ``-d^2/dx^2 + q_eff/r^2 + V``.

    ``potential`` overrides the values of ``V`` at the nodes.
    """
    reduction = reduction or RadialReduction.from_spec(spec)
    q = reduction.q_eff
    if q < -0.25 - 1e-12:
        raise ValueError(f"q_eff = {q} is below the Hardy threshold -1/4")
    if grid.kind == "line" and (reduction.dim != 1 or q != 0.0):
        raise ValueError("a full-line grid only supports the 1-d channel with q_eff = 0")
    x = grid.points
    v = eval_potential(spec, x).V if potential is None else np.asarray(potential, dtype=float)
    h2 = grid.dx**2
    diag = 2.0 / h2 + v
    if q != 0.0:
        diag = diag + q / x**2
    off = np.full(grid.n - 1, -1.0 / h2)
    return BandedOperator({-1: off, 0: diag, 1: off.copy()}, grid.n, grid)


def build_dilation_generator(grid: Grid, dim: int = 1) -> BandedOperator:
    """Symmetrized generator ``-i (x D + D x)/2`` with centered ``D``.

    On the reduced radial function the ``dim/2`` shift is absorbed by the
    unitary ``r^((d-1)/2)``, leaving ``-i(r d/dr + 1/2)`` whatever ``dim`` is.
    The matrix is Hermitian by construction.
    """
    x = grid.points
    mid = (x[:-1] + x[1:]) / (4.0 * grid.dx)
    return BandedOperator({1: -1j * mid, -1: 1j * mid}, grid.n, grid)


def commutator_residual(H: BandedOperator, A: BandedOperator, virial_values, test_vectors) -> float:
    """``max ||(i[H, A] - 2H - W) phi|| / ||phi||`` over ``test_vectors`` (rows)."""
    w = np.asarray(virial_values)
    worst = 0.0
    for phi in np.atleast_2d(test_vectors):
        phi = np.asarray(phi, dtype=np.complex128)
        lhs = 1j * (H.matvec(A.matvec(phi)) - A.matvec(H.matvec(phi)))
        r = lhs - 2.0 * H.matvec(phi) - w * phi
        worst = max(worst, float(np.linalg.norm(r) / np.linalg.norm(phi)))
    return worst


def weight_operator(grid: Grid, weight: Callable[[np.ndarray], np.ndarray] | np.ndarray | float) -> BandedOperator:
    """Diagonal multiplication operator.

    ``weight`` is a callable of the node coordinates, an array of node values,
    or a float ``s`` meaning ``<x>^s``.
    """
    x = grid.points
    if callable(weight):
        vals = np.asarray(weight(x), dtype=float)
    elif np.isscalar(weight):
        vals = bracket(x) ** float(weight)
    else:
        vals = np.asarray(weight, dtype=float)
    if vals.shape != x.shape:
        raise ValueError("weight has the wrong shape")
    if not np.all(np.isfinite(vals)):
        raise ValueError("weight is not finite on the grid")
    return BandedOperator.diagonal(vals, grid)
