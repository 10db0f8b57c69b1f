"""Local potential, finite-difference grid and the discretized energy S_N.

The discrete energy on a grid with step ``h`` is

    S_N(y) = gamma/(2h) * sum_edges (y[i+1] - y[i])**2 + h * sum_i V(y[i])

and is normalized so that ``grad S_N / h = -gamma * lap(y) + V'(y)``, i.e.
the drift of the spatially discretized SPDE up to the sign.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from numpy.polynomial import polynomial as P


class BoundaryCondition(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, value) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown boundary condition {value!r}") from None


DOUBLE_WELL = (0.0, 0.0, -0.5, 0.0, 0.25)


@dataclass(frozen=True)
class PotentialSpec:
    """Local potential V (ascending polynomial coefficients), gamma and bc.

    ``kind`` is ``"double_well"`` for V(x) = x**4/4 - x**2/2, or
    ``"polynomial"`` with explicit ``coefficients``.
    """

    kind: str = "double_well"
    coefficients: tuple = DOUBLE_WELL
    gamma: float = 1.0
    bc: BoundaryCondition = BoundaryCondition.NEUMANN

    def __post_init__(self):
        kind = str(self.kind).lower().replace("-", "_")
        if kind == "double_well":
            coeffs = DOUBLE_WELL
        elif kind == "polynomial":
            coeffs = tuple(float(c) for c in self.coefficients)
            while len(coeffs) > 1 and coeffs[-1] == 0.0:
                coeffs = coeffs[:-1]
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        degree = len(coeffs) - 1
        if degree < 2 or degree % 2 or coeffs[-1] <= 0:
            raise ValueError(
                "polynomial potential needs even degree >= 2 and a positive "
                f"leading coefficient, got {coeffs}"
            )
        if not np.isfinite(coeffs).all():
            raise ValueError("potential coefficients must be finite")
        gamma = float(self.gamma)
        if not gamma > 0 or not np.isfinite(gamma):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "bc", BoundaryCondition.parse(self.bc))

    @classmethod
    def double_well(cls, gamma=1.0, bc="neumann") -> "PotentialSpec":
        return cls("double_well", DOUBLE_WELL, gamma, bc)

    @classmethod
    def polynomial(cls, coefficients, gamma=1.0, bc="neumann") -> "PotentialSpec":
        return cls("polynomial", tuple(coefficients), gamma, bc)

    def derivative_coefficients(self, order: int) -> np.ndarray:
        return P.polyder(np.asarray(self.coefficients), order) if order else np.asarray(self.coefficients)

    def __call__(self, x, order: int = 0):
        return eval_potential(self, x, order)

    def critical_points(self) -> np.ndarray:
        """Real roots of V', sorted."""
        roots = P.polyroots(self.derivative_coefficients(1))
        real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
        d1, d2 = self.derivative_coefficients(1), self.derivative_coefficients(2)
        for _ in range(3):
            slope = P.polyval(real, d2)
            ok = slope != 0
            real[ok] -= P.polyval(real[ok], d1) / slope[ok]
        return np.unique(np.round(real, 14)) + 0.0


def eval_potential(spec: PotentialSpec, x, order: int = 0):
    """V and its first three derivatives."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    return P.polyval(x, spec.derivative_coefficients(order))


@dataclass(frozen=True)
class Grid:
    n: int
    bc: BoundaryCondition
    h: float
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]


def make_grid(bc, n: int) -> Grid:
    """Grid with ``n`` interior nodes and two boundary/ghost nodes."""
    bc = BoundaryCondition.parse(bc)
    if int(n) != n or n < 1:
        raise ValueError(f"grid size must be a positive integer, got {n}")
    n = int(n)
    i = np.arange(n + 2, dtype=float)
    if bc is BoundaryCondition.DIRICHLET:
        h = 1.0 / (n + 1)
        nodes = i / (n + 1)
    else:
        h = 1.0 / n
        nodes = i / n - 1.0 / (2 * n)
    nodes.setflags(write=False)
    return Grid(n, bc, h, nodes)


@dataclass(frozen=True)
class FieldProfile:
    """Interior values y_1..y_N of a discretized field."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(
                f"profile has shape {values.shape}, grid expects ({self.grid.n},)"
            )
        if not np.isfinite(values).all():
            raise ValueError("profile values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "FieldProfile":
        return cls(grid, np.full(grid.n, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "FieldProfile":
        return cls(grid, f(grid.interior))

    def extended(self) -> np.ndarray:
        """Values on all N+2 nodes, ghost/boundary entries filled in."""
        y = self.values
        if self.grid.bc is BoundaryCondition.DIRICHLET:
            return np.concatenate(([0.0], y, [0.0]))
        return np.concatenate((y[:1], y, y[-1:]))

    def distance(self, other: "FieldProfile") -> float:
        """Discrete L2 distance |y - z|_2 / sqrt(N)."""
        return float(np.linalg.norm(self.values - other.values) / np.sqrt(self.grid.n))


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix; ``scale`` records the normalization.

    ``scale == 1`` means the entries are those of H S_N itself, ``scale ==
    1/h`` means they are those of H S_N / h.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        d = np.array(self.diag, dtype=float)
        e = np.array(self.offdiag, dtype=float)
        if e.shape != (max(len(d) - 1, 0),):
            raise ValueError("off-diagonal must have length dim - 1")
        d.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def dim(self) -> int:
        return len(self.diag)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:-1] += self.offdiag * x[1:]
        y[1:] += self.offdiag * x[:-1]
        return y

    def norm(self) -> float:
        """Gershgorin bound on the spectral radius."""
        r = np.abs(self.diag).copy()
        r[:-1] += np.abs(self.offdiag)
        r[1:] += np.abs(self.offdiag)
        return float(r.max()) if len(r) else 0.0


def laplacian(grid: Grid) -> TridiagonalOperator:
    """Discrete Laplacian with the boundary rows folded in."""
    n, h2 = grid.n, grid.h**2
    d = np.full(n, -2.0)
    if grid.bc is BoundaryCondition.NEUMANN:
        d[0] += 1.0
        d[-1] += 1.0
    return TridiagonalOperator(d / h2, np.ones(n - 1) / h2)


def apply_laplacian(grid: Grid, y: np.ndarray) -> np.ndarray:
    ext = FieldProfile(grid, y).extended() if not isinstance(y, FieldProfile) else y.extended()
    return (ext[2:] - 2.0 * ext[1:-1] + ext[:-2]) / grid.h**2


def _check(spec: PotentialSpec, u: FieldProfile):
    if u.grid.bc is not spec.bc:
        raise ValueError(
            f"profile grid uses {u.grid.bc.value} boundary conditions, potential uses {spec.bc.value}"
        )


def discrete_energy(spec: PotentialSpec, u: FieldProfile) -> float:
    _check(spec, u)
    h = u.grid.h
    if spec.bc is BoundaryCondition.DIRICHLET:
        jumps = np.diff(u.extended())
    else:
        jumps = np.diff(u.values)
    return float(spec.gamma / (2 * h) * np.dot(jumps, jumps) + h * np.sum(eval_potential(spec, u.values)))


def discrete_drift(spec: PotentialSpec, u: FieldProfile) -> np.ndarray:
    """-gamma * lap(u) + V'(u), i.e. grad S_N / h."""
    _check(spec, u)
    return -spec.gamma * apply_laplacian(u.grid, u) + eval_potential(spec, u.values, 1)


def discrete_gradient(spec: PotentialSpec, u: FieldProfile) -> np.ndarray:
    return u.grid.h * discrete_drift(spec, u)


def discrete_hessian(spec: PotentialSpec, u: FieldProfile, scaled: bool = True) -> TridiagonalOperator:
    """Hessian of S_N at ``u``.

    With ``scaled`` the result is H S_N / h = -gamma*lap + diag(V''(u)), whose
    low eigenvalues approximate those of the continuum Hessian operator.
    """
    _check(spec, u)
    lap = laplacian(u.grid)
    d = -spec.gamma * lap.diag + eval_potential(spec, u.values, 2)
    e = -spec.gamma * lap.offdiag
    if scaled:
        return TridiagonalOperator(d, e, scale=1.0 / u.grid.h)
    h = u.grid.h
    return TridiagonalOperator(h * d, h * e, scale=1.0)


def continuum_energy(spec: PotentialSpec, samples: Sequence[float], x: Sequence[float] | None = None) -> float:
    """Trapezoid approximation of int_0^1 gamma/2 |phi'|^2 + V(phi).

    ``samples`` are values of phi on ``x`` (default: uniform on [0, 1]).
    """
    phi = np.asarray(samples, dtype=float)
    if phi.ndim != 1 or len(phi) < 2:
        raise ValueError("need at least 2 samples")
    xs = np.linspace(0.0, 1.0, len(phi)) if x is None else np.asarray(x, dtype=float)
    dphi = np.gradient(phi, xs, edge_order=2) if len(phi) > 2 else np.gradient(phi, xs)
    integrand = 0.5 * spec.gamma * dphi**2 + eval_potential(spec, phi)
    return float(trapezoid(integrand, xs))
