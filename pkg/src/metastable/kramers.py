"""Edge weights, graph conductance and Eyring-Kramers transition times.

Exponentially small factors are tracked in log space: weights carry
``log_weight`` and the conductance is computed on weights normalized by
their maximum, which is exact since the conductance is 1-homogeneous.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateLandscapeError, DisconnectedGraphError
from .landscape import Edge, SkeletonGraph, relevant_saddles
from .potential import Grid, PotentialSpec, continuum_energy, discrete_hessian
from .spectral import (
    functional_determinant,
    hessian_coefficient,
    log_abs_det,
    sturm_liouville_eigen,
)


class WeightVariant(str, enum.Enum):
    CONTINUUM = "continuum"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class WeightedEdge:
    saddle_id: int
    endpoints: tuple[int, int]
    log_weight: float
    variant: WeightVariant = WeightVariant.CONTINUUM
    epsilon: Optional[float] = None

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)

    @classmethod
    def simple(cls, a: int, b: int, weight: float, saddle_id: int = 0) -> "WeightedEdge":
        if not weight > 0:
            raise ValueError("edge weight must be positive")
        return cls(saddle_id, (a, b), math.log(weight))


@dataclass(frozen=True)
class ConductanceResult:
    log_value: float
    minimizer: np.ndarray
    source: int
    targets: tuple[int, ...]

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


@dataclass(frozen=True)
class TransitionEstimate:
    activation_energy: float
    log_prefactor: float
    epsilon: float
    provenance: str  # "continuum" or "discrete(N)"

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_prefactor)

    @property
    def log_predicted_mean(self) -> float:
        return self.log_prefactor + self.activation_energy / self.epsilon

    @property
    def predicted_mean(self) -> float:
        return math.exp(self.log_predicted_mean)


# ----------------------------------------------------------------- weights


def continuum_saddle_data(spec: PotentialSpec, profile) -> tuple[float, float]:
    """(lambda^-, Det) of the continuum Hessian at a saddle profile."""
    lam = float(sturm_liouville_eigen(spec, profile, 1).eigenvalues[0])
    det = functional_determinant(spec, profile).value
    return lam, det


def continuum_weight(neg_eigenvalue: float, det: float) -> float:
    """|lambda^-| / sqrt|Det|."""
    if neg_eigenvalue is None or not neg_eigenvalue < 0:
        raise DegenerateLandscapeError("saddle has no negative eigenvalue")
    if det == 0:
        raise DegenerateLandscapeError("saddle determinant vanishes")
    return abs(neg_eigenvalue) / math.sqrt(abs(det))


def discrete_log_weight(spec: PotentialSpec, grid: Grid, edge: Edge, epsilon: float) -> float:
    """log of |lambda^-(H)| exp(-S_N(z)/eps) / sqrt|det H| for unscaled H = H S_N."""
    z = edge.saddle
    if z.neg_eigenvalue is None or not z.neg_eigenvalue < 0:
        raise DegenerateLandscapeError(f"saddle {z.id} has no negative eigenvalue")
    logdet, sign = log_abs_det(discrete_hessian(spec, z.profile, scaled=True))
    if sign == 0:
        raise DegenerateLandscapeError(f"saddle {z.id} has a singular Hessian")
    log_h = math.log(grid.h)
    log_lam = math.log(abs(z.neg_eigenvalue)) + log_h
    log_det_unscaled = logdet + grid.n * log_h
    return log_lam - z.energy / epsilon - 0.5 * log_det_unscaled


def edge_weights(
    edges: Sequence[Edge],
    spec: PotentialSpec,
    variant: WeightVariant | str = WeightVariant.CONTINUUM,
    grid: Grid | None = None,
    epsilon: float | None = None,
) -> list[WeightedEdge]:
    variant = WeightVariant(variant)
    out = []
    for e in edges:
        if e.saddle.index != 1:
            raise DegenerateLandscapeError(f"edge saddle {e.saddle.id} has index {e.saddle.index}")
        if variant is WeightVariant.CONTINUUM:
            lam, det = continuum_saddle_data(spec, e.saddle.profile)
            lw = math.log(continuum_weight(lam, det))
            out.append(WeightedEdge(e.saddle.id, e.endpoints, lw, variant))
        else:
            if grid is None or epsilon is None:
                raise ValueError("discrete weights need the grid and epsilon")
            lw = discrete_log_weight(spec, grid, e, epsilon)
            out.append(WeightedEdge(e.saddle.id, e.endpoints, lw, variant, epsilon))
    return out


# ------------------------------------------------------------- conductance


def quadratic_form(edges: Sequence[WeightedEdge], a: np.ndarray) -> float:
    return float(sum(e.weight * (a[e.endpoints[0]] - a[e.endpoints[1]]) ** 2 for e in edges))


def conductance(
    edges: Sequence[WeightedEdge], source: int, targets: Iterable[int], n_vertices: int | None = None
) -> ConductanceResult:
    """Minimize sum w (a+ - a-)^2 with a(source)=1, a(targets)=0.

    Free vertices satisfy the graph-Laplacian equations; the system is
    restricted to the connected component of the source.
    """
    targets = tuple(sorted(set(targets)))
    if not targets:
        raise ValueError("targets must be non-empty")
    if source in targets:
        raise ValueError("source must not be a target")
    edges = [e for e in edges if e.endpoints[0] != e.endpoints[1]]
    m = n_vertices if n_vertices is not None else 1 + max([source, *targets, *(v for e in edges for v in e.endpoints)])
    if not edges:
        raise DisconnectedGraphError("no edges between source and targets")
    shift = max(e.log_weight for e in edges)
    L = np.zeros((m, m))
    for e in edges:
        a, b = e.endpoints
        w = math.exp(e.log_weight - shift)
        L[a, a] += w
        L[b, b] += w
        L[a, b] -= w
        L[b, a] -= w

    # connected component of the source
    comp, stack = {source}, [source]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(L[i]):
            if j != i and int(j) not in comp:
                comp.add(int(j))
                stack.append(int(j))
    if not comp.intersection(targets):
        raise DisconnectedGraphError(f"vertex {source} is not connected to {list(targets)}: infinite resistance")

    a = np.zeros(m)
    a[source] = 1.0
    free = sorted(comp - {source} - set(targets))
    if free:
        A = L[np.ix_(free, free)]
        rhs = -L[free, source]
        a[free] = np.linalg.solve(A, rhs)
    scaled = sum(math.exp(e.log_weight - shift) * (a[e.endpoints[0]] - a[e.endpoints[1]]) ** 2 for e in edges)
    if not scaled > 0:
        raise DisconnectedGraphError("zero conductance")
    return ConductanceResult(shift + math.log(scaled), a, source, targets)


# ---------------------------------------------------------- transition times


def _check_ordering(graph: SkeletonGraph, source: int, targets: Sequence[int]):
    for t in targets:
        if graph.vertices[t].energy > graph.vertices[source].energy + 1e-12 * (1 + abs(graph.vertices[source].energy)):
            raise ValueError(f"target vertex {t} lies above the source vertex {source}")


def _spline_energy(spec: PotentialSpec, profile, samples: int = 4097) -> float:
    xs = np.linspace(0.0, 1.0, samples)
    if callable(profile):
        phi = np.broadcast_to(profile(xs), xs.shape)
    else:
        from scipy.interpolate import CubicSpline

        phi = CubicSpline(profile.grid.nodes, profile.extended(), bc_type="natural")(xs)
    return continuum_energy(spec, phi, xs)


def transition_time_continuum(
    spec: PotentialSpec,
    graph: SkeletonGraph,
    source: int,
    targets: Iterable[int],
    epsilon: float,
    eta: float | None = None,
) -> TransitionEstimate:
    """Mean transition time of the SPDE from the continuum Eyring-Kramers formula.

    E = S(saddle height) - S(source); A = 2 pi / (C* sqrt(Det H_source)),
    with C* the conductance of the relevant saddles weighted by
    |lambda^-|/sqrt|Det|. Continuum quantities come from the spline through
    the discrete stationary profiles.
    """
    targets = sorted(set(targets))
    _check_ordering(graph, source, targets)
    edges = relevant_saddles(graph, source, targets, eta)
    weighted = edge_weights(edges, spec, WeightVariant.CONTINUUM)
    cond = conductance(weighted, source, targets, len(graph.vertices))
    src = graph.vertices[source].profile
    det_src = functional_determinant(spec, src).value
    if det_src <= 0:
        raise DegenerateLandscapeError("source minimum has a non-positive determinant")
    s_src = _spline_energy(spec, src)
    # every relevant saddle sits at the bottleneck height up to eta
    s_hat = _spline_energy(spec, edges[0].saddle.profile)
    log_a = math.log(2 * math.pi) - cond.log_value - 0.5 * math.log(det_src)
    return TransitionEstimate(max(s_hat - s_src, 0.0), log_a, float(epsilon), "continuum")


def single_saddle_time(neg_eigenvalue: float, det_saddle: float, det_minimum: float, barrier: float, epsilon: float) -> float:
    """Single-saddle formula: 2 pi/|lambda^-| sqrt(|Det_s|/Det_m) exp(barrier/eps)."""
    return 2 * math.pi / abs(neg_eigenvalue) * math.sqrt(abs(det_saddle) / det_minimum) * math.exp(barrier / epsilon)


def transition_time_discrete(
    spec: PotentialSpec,
    grid: Grid,
    graph: SkeletonGraph,
    source: int,
    targets: Iterable[int],
    epsilon: float,
    eta: float | None = None,
) -> TransitionEstimate:
    """Physical-time mean transition time of the N-point system.

    E[tau] = 2 pi h exp(-S_N(x*)/eps) / (C*(N, eps) sqrt(det H S_N(x*))),
    reported as A exp(E/eps) with E = saddle height - S_N(x*).
    """
    targets = sorted(set(targets))
    _check_ordering(graph, source, targets)
    edges = relevant_saddles(graph, source, targets, eta)
    weighted = edge_weights(edges, spec, WeightVariant.DISCRETE, grid, epsilon)
    cond = conductance(weighted, source, targets, len(graph.vertices))
    x = graph.vertices[source]
    logdet, sign = log_abs_det(discrete_hessian(spec, x.profile, scaled=True))
    if sign != 1:
        raise DegenerateLandscapeError("source minimum Hessian is not positive definite")
    log_h = math.log(grid.h)
    log_mean = (
        math.log(2 * math.pi) + log_h - x.energy / epsilon - cond.log_value - 0.5 * (logdet + grid.n * log_h)
    )
    height = graph.minimax[source, targets].min()
    barrier = max(float(height - x.energy), 0.0)
    return TransitionEstimate(barrier, log_mean - barrier / epsilon, float(epsilon), f"discrete({grid.n})")


def discrete_prefactor_single(spec: PotentialSpec, saddle_profile, minimum_profile) -> float:
    """2 pi sqrt(|det H(z)| / det H(x)) / |lambda^-(H(z))| on scaled Hessians."""
    from .spectral import tridiagonal_eigenvalue

    hz = discrete_hessian(spec, saddle_profile, scaled=True)
    hx = discrete_hessian(spec, minimum_profile, scaled=True)
    lz, _ = log_abs_det(hz)
    lx, _ = log_abs_det(hx)
    lam = tridiagonal_eigenvalue(hz, 0)
    return 2 * math.pi * math.exp(0.5 * (lz - lx)) / abs(lam)
