"""Spectra of discrete and continuum Hessians, and functional determinants.

Discrete operators are symmetric tridiagonal; their eigenvalues come from
Sturm-sequence bisection. The continuum Hessian

    H f = -gamma f'' + V''(phi(x)) f   on [0, 1]

is handled by shooting: a Pruefer-angle integration counts oscillations and
brackets each eigenvalue, and the determinant is a boundary value of the
solution of H f = 0 with fixed initial data.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import DegenerateLandscapeError, NumericalError
from .potential import (
    BoundaryCondition,
    FieldProfile,
    PotentialSpec,
    TridiagonalOperator,
    eval_potential,
)

RK4_STEP = 1.0 / 4096
DEGENERATE_DET = 1e-10


class SpectrumKind(str, enum.Enum):
    DISCRETE_FULL = "discrete_full"
    CONTINUUM_PARTIAL = "continuum_partial"


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    kind: SpectrumKind
    profile: Optional[FieldProfile] = None

    def __len__(self):
        return len(self.eigenvalues)


@dataclass(frozen=True)
class FunctionalDeterminant:
    value: float
    bc: BoundaryCondition
    profile: Optional[FieldProfile] = None

    @property
    def sign(self) -> int:
        return 1 if self.value > 0 else -1


@dataclass(frozen=True)
class DeterminantRatio:
    ratio: float
    truncated_product: Optional[float] = None
    discrepancy: Optional[float] = None
    k: Optional[int] = None


# ---------------------------------------------------------------- discrete


def sturm_count(op: TridiagonalOperator, shift) -> np.ndarray:
    """Number of eigenvalues strictly below ``shift`` (vectorized over shifts).

    Counts negative pivots of the LDL^T factorization of ``op - shift``.
    """
    d, e2 = op.diag, op.offdiag**2
    shift = np.asarray(shift, dtype=float)
    tiny = np.finfo(float).tiny * max(1.0, op.norm())
    q = d[0] - shift
    q = np.where(q == 0, -tiny, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, op.dim):
        q = d[i] - shift - e2[i - 1] / q
        q = np.where(q == 0, -tiny, q)
        count += q < 0
    return count


def inertia(op: TridiagonalOperator, shift: float = 0.0) -> int:
    return int(sturm_count(op, shift))


def log_abs_det(op: TridiagonalOperator) -> tuple[float, int]:
    """(log|det|, sign) from the LDL^T pivots, safe against under/overflow."""
    d, e2 = op.diag, op.offdiag**2
    logdet, sign = 0.0, 1
    q = d[0]
    for i in range(op.dim):
        if i:
            q = d[i] - e2[i - 1] / q
        if q == 0:
            return -math.inf, 0
        logdet += math.log(abs(q))
        if q < 0:
            sign = -sign
    return logdet, sign


def _bisect(op: TridiagonalOperator, indices: np.ndarray) -> np.ndarray:
    bound = op.norm() + 1.0
    lo = np.full(len(indices), -bound)
    hi = np.full(len(indices), bound)
    # bisect until the brackets stop shrinking in floating point
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        below = sturm_count(op, mid) > indices
        hi = np.where(below & active, mid, hi)
        lo = np.where(~below & active, mid, lo)
    return 0.5 * (lo + hi)


def tridiagonal_eigen(op: TridiagonalOperator, profile: FieldProfile | None = None) -> SpectrumResult:
    """All eigenvalues, ascending, by Sturm-sequence bisection."""
    vals = _bisect(op, np.arange(op.dim))
    return SpectrumResult(np.sort(vals), SpectrumKind.DISCRETE_FULL, profile)


def tridiagonal_eigenvalue(op: TridiagonalOperator, k: int) -> float:
    """The k-th smallest eigenvalue (0-based)."""
    return float(_bisect(op, np.array([k]))[0])


def lowest_eigenvector(op: TridiagonalOperator, shift: float | None = None) -> np.ndarray:
    """Unit eigenvector of the smallest eigenvalue by inverse iteration.

    Sign fixed so the largest-magnitude component is positive.
    """
    from scipy.linalg import solve_banded

    lam = tridiagonal_eigenvalue(op, 0) if shift is None else shift
    gap = max(abs(lam), 1.0) * 1e-10
    ab = np.zeros((3, op.dim))
    ab[0, 1:] = op.offdiag
    ab[1] = op.diag - (lam - gap)
    ab[2, :-1] = op.offdiag
    v = np.ones(op.dim) / math.sqrt(op.dim)
    for _ in range(4):
        v = solve_banded((1, 1), ab, v)
        v /= np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


# ---------------------------------------------------------------- continuum


def hessian_coefficient(spec: PotentialSpec, profile):
    """x -> V''(phi(x)).

    A FieldProfile is interpolated by a natural cubic spline of V'' over all
    grid nodes (boundary and ghost values included); a callable is taken as
    phi itself.
    """
    if callable(profile):

        def coefficient(x):
            x = np.asarray(x, dtype=float)
            return eval_potential(spec, np.broadcast_to(profile(x), x.shape), 2)

        return coefficient
    nodes = profile.grid.nodes
    q = eval_potential(spec, profile.extended(), 2)
    if np.ptp(q) == 0.0:
        c = float(q[0])
        return lambda x: np.full_like(np.asarray(x, dtype=float), c) if np.ndim(x) else c
    return CubicSpline(nodes, q, bc_type="natural")


def _initial_angle(bc: BoundaryCondition) -> float:
    return 0.0 if bc is BoundaryCondition.DIRICHLET else 0.5 * math.pi


def _pruefer_angle(gamma, q, lam, bc, scale) -> float:
    """theta(1) for f = r sin(theta), gamma f' = scale * r cos(theta)."""

    def rhs(x, th):
        s, c = math.sin(th[0]), math.cos(th[0])
        return [scale / gamma * c * c + (lam - q(x)) / scale * s * s]

    sol = solve_ivp(rhs, (0.0, 1.0), [_initial_angle(bc)], method="DOP853", rtol=1e-12, atol=1e-12)
    if not sol.success:
        raise NumericalError(f"Pruefer integration failed at lambda={lam}: {sol.message}")
    return float(sol.y[0, -1])


def sturm_liouville_eigen(spec: PotentialSpec, profile: FieldProfile, k_max: int) -> SpectrumResult:
    """First ``k_max`` eigenvalues of -gamma f'' + V''(phi) f with the potential's boundary conditions.

    Dirichlet eigenvalues are indexed from k=1, Neumann ones from k=0; the
    j-th returned value has Pruefer angle theta(1) = theta(0) + (j+1)pi
    (Dirichlet) or theta(0) + j pi (Neumann).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    gamma, bc = spec.gamma, spec.bc
    q = hessian_coefficient(spec, profile)
    xs = np.linspace(0.0, 1.0, 2049)
    qs = np.asarray(q(xs), dtype=float)
    qmin, qmax, qbar = float(qs.min()), float(qs.max()), float(trapezoid(qs, xs))
    theta0 = _initial_angle(bc)
    first = 1 if bc is BoundaryCondition.DIRICHLET else 0

    out = []
    for j in range(k_max):
        k = j + first
        target = theta0 + (j + 1) * math.pi if bc is BoundaryCondition.DIRICHLET else theta0 + j * math.pi
        base = gamma * math.pi**2 * k * k
        lo, hi = base + qmin - 1.0, base + qmax + 1.0

        def miss(lam):
            scale = math.sqrt(gamma * max(abs(lam - qbar), 1.0))
            return _pruefer_angle(gamma, q, lam, bc, scale) - target

        flo, fhi = miss(lo), miss(hi)
        widen = 0
        while flo > 0 or fhi < 0:
            widen += 1
            if widen > 30:
                raise NumericalError(f"could not bracket eigenvalue k={k}")
            width = (hi - lo) * 2
            if flo > 0:
                lo -= width
                flo = miss(lo)
            if fhi < 0:
                hi += width
                fhi = miss(hi)
        out.append(brentq(miss, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200))
    return SpectrumResult(np.array(out), SpectrumKind.CONTINUUM_PARTIAL, profile)


def _shoot(gamma: float, q, bc: BoundaryCondition, step: float) -> float:
    """Classical RK4 for -gamma f'' + q f = 0 on [0, 1]."""
    n = int(round(1.0 / step))
    hs = 1.0 / n
    if bc is BoundaryCondition.DIRICHLET:
        f, g = 0.0, 1.0
    else:
        f, g = 1.0, 0.0
    xs = np.linspace(0.0, 1.0, 2 * n + 1)
    qg = np.asarray(q(xs), dtype=float) / gamma
    for i in range(n):
        q0, qm, q1 = qg[2 * i], qg[2 * i + 1], qg[2 * i + 2]
        k1f, k1g = g, q0 * f
        k2f, k2g = g + 0.5 * hs * k1g, qm * (f + 0.5 * hs * k1f)
        k3f, k3g = g + 0.5 * hs * k2g, qm * (f + 0.5 * hs * k2f)
        k4f, k4g = g + hs * k3g, q1 * (f + hs * k3f)
        f += hs / 6.0 * (k1f + 2 * k2f + 2 * k3f + k4f)
        g += hs / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g)
    return f if bc is BoundaryCondition.DIRICHLET else g


@functools.lru_cache(maxsize=None)
def _check_pairing(bc: BoundaryCondition) -> None:
    """Shooting ratio for two constant coefficients vs their eigenvalue product."""
    q1, q2, gamma = 2.0, -1.0, 1.0
    r = _shoot(gamma, lambda x: np.full_like(x, q1), bc, RK4_STEP) / _shoot(
        gamma, lambda x: np.full_like(x, q2), bc, RK4_STEP
    )
    k = np.arange(1, 200001, dtype=float)
    lam0 = gamma * math.pi**2 * k * k
    prod = float(np.exp(np.sum(np.log1p((q1 - q2) / (lam0 + q2)))))
    if bc is BoundaryCondition.NEUMANN:
        prod *= q1 / q2
    if abs(r - prod) > 1e-4 * abs(prod):
        raise NumericalError(
            f"determinant initial data inconsistent with eigenvalue products for {bc.value}"
        )


def functional_determinant(spec: PotentialSpec, profile: FieldProfile, step: float = RK4_STEP) -> FunctionalDeterminant:
    """Det of the continuum Hessian at ``profile`` by shooting.

    Dirichlet: f(0)=0, f'(0)=1, Det = f(1).  Neumann: f(0)=1, f'(0)=0,
    Det = f'(1).
    """
    _check_pairing(spec.bc)
    value = _shoot(spec.gamma, hessian_coefficient(spec, profile), spec.bc, step)
    if not math.isfinite(value) or abs(value) < DEGENERATE_DET:
        raise DegenerateLandscapeError(f"functional determinant {value:.3e} is degenerate")
    return FunctionalDeterminant(value, spec.bc, profile)


def determinant_ratio(
    spec: PotentialSpec, phi: FieldProfile, psi: FieldProfile, check_k: int | None = None
) -> DeterminantRatio:
    """Det(H_phi)/Det(H_psi); with ``check_k`` also the truncated eigenproduct."""
    ratio = functional_determinant(spec, phi).value / functional_determinant(spec, psi).value
    if check_k is None:
        return DeterminantRatio(ratio)
    lp = sturm_liouville_eigen(spec, phi, check_k).eigenvalues
    lq = sturm_liouville_eigen(spec, psi, check_k).eigenvalues
    prod = float(np.prod(lp / lq))
    return DeterminantRatio(ratio, prod, abs(prod - ratio), check_k)
