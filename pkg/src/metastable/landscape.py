"""Stationary points of S_N and the minima/saddle skeleton graph."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .errors import ConnectionFailure, DegenerateLandscapeError, DisconnectedGraphError
from .potential import (
    FieldProfile,
    Grid,
    PotentialSpec,
    discrete_drift,
    discrete_energy,
    discrete_gradient,
    discrete_hessian,
)
from .spectral import inertia, lowest_eigenvector, tridiagonal_eigenvalue

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LandscapeSettings:
    newton_rtol: float = 1e-10
    newton_maxiter: int = 100
    dedup_tol: float = 1e-6
    degeneracy_tol: float = 1e-8
    descent_delta: float = 1e-3
    capture_radius: float = 1e-3
    max_flow_time: float = 1e3
    seed_amplitude: float = 0.1
    seed_modes: int = 4


DEFAULTS = LandscapeSettings()


@dataclass(frozen=True)
class StationaryPoint:
    profile: FieldProfile
    energy: float
    grad_norm: float
    index: int
    neg_eigenvalue: Optional[float] = None
    id: int = 0

    @property
    def is_minimum(self) -> bool:
        return self.index == 0

    @property
    def is_saddle(self) -> bool:
        return self.index == 1


@dataclass(frozen=True)
class Edge:
    saddle: StationaryPoint
    endpoints: tuple[int, int]

    @property
    def energy(self) -> float:
        return self.saddle.energy

    @property
    def is_loop(self) -> bool:
        return self.endpoints[0] == self.endpoints[1]


@dataclass(frozen=True)
class SkeletonGraph:
    """Minima (vertex id = position in ``vertices``) and index-1 saddle edges."""

    vertices: tuple[StationaryPoint, ...]
    edges: tuple[Edge, ...]
    minimax: np.ndarray = field(repr=False)
    disconnected: bool = False

    @property
    def energies(self) -> np.ndarray:
        return np.array([v.energy for v in self.vertices])


# ------------------------------------------------------------------ Newton


def _drift_jacobian_bands(spec: PotentialSpec, u: FieldProfile) -> np.ndarray:
    op = discrete_hessian(spec, u, scaled=True)
    ab = np.zeros((3, op.dim))
    ab[0, 1:] = op.offdiag
    ab[1] = op.diag
    ab[2, :-1] = op.offdiag
    return ab


def newton_solve(spec: PotentialSpec, seed: FieldProfile, settings: LandscapeSettings = DEFAULTS):
    """Damped Newton on grad S_N = 0; returns the converged profile or None."""
    grid = seed.grid
    u = seed
    tol = settings.newton_rtol * (1.0 + np.abs(discrete_gradient(spec, seed)).max())
    r = discrete_drift(spec, u)
    for _ in range(settings.newton_maxiter):
        if grid.h * np.abs(r).max() <= tol:
            return u
        try:
            step = solve_banded((1, 1), _drift_jacobian_bands(spec, u), -r)
        except (np.linalg.LinAlgError, ValueError):
            return None
        if not np.isfinite(step).all():
            return None
        rnorm = np.linalg.norm(r)
        t = 1.0
        while t > 1e-6:
            trial = FieldProfile(grid, u.values + t * step) if np.isfinite(u.values + t * step).all() else None
            if trial is not None:
                rt = discrete_drift(spec, trial)
                if np.linalg.norm(rt) < (1 - 1e-4 * t) * rnorm or rnorm == 0:
                    u, r = trial, rt
                    break
            t *= 0.5
        else:
            # no descent: take the full step and hope (near-singular Jacobian)
            vals = u.values + step
            if not np.isfinite(vals).all():
                return None
            u = FieldProfile(grid, vals)
            r = discrete_drift(spec, u)
    return u if grid.h * np.abs(r).max() <= tol else None


def default_seeds(spec: PotentialSpec, grid: Grid, settings: LandscapeSettings = DEFAULTS) -> list[FieldProfile]:
    """Constants at critical points of V, and those plus +-delta cos(k pi x)."""
    seeds = []
    x = grid.interior
    for c in spec.critical_points():
        seeds.append(FieldProfile.constant(grid, c))
        for k in range(1, settings.seed_modes + 1):
            for sgn in (1.0, -1.0):
                seeds.append(FieldProfile(grid, c + sgn * settings.seed_amplitude * np.cos(k * np.pi * x)))
    return seeds


def classify_point(
    spec: PotentialSpec, grid: Grid, profile: FieldProfile, settings: LandscapeSettings = DEFAULTS
) -> tuple[int, Optional[float]]:
    """Morse index from the Sturm count of the scaled Hessian, and lambda^- if index 1."""
    op = discrete_hessian(spec, profile, scaled=True)
    tol = settings.degeneracy_tol
    below, above = inertia(op, -tol), inertia(op, tol)
    if below != above:
        raise DegenerateLandscapeError(
            f"stationary point with energy {discrete_energy(spec, profile):.6g} has an eigenvalue within "
            f"{tol:g} of zero"
        )
    neg = tridiagonal_eigenvalue(op, 0) if below == 1 else None
    return below, neg


def find_stationary_points(
    spec: PotentialSpec,
    grid: Grid,
    seeds: Optional[Iterable[FieldProfile]] = None,
    settings: LandscapeSettings = DEFAULTS,
) -> list[StationaryPoint]:
    """Newton from every seed, deduplicated (sup norm) and classified.

    Points are returned sorted by (energy, mean value) with ids 0, 1, ...
    """
    if seeds is None:
        seeds = default_seeds(spec, grid, settings)
    found: list[FieldProfile] = []
    for seed in seeds:
        if seed.grid.n != grid.n or seed.grid.bc is not grid.bc:
            raise ValueError("seed profile does not live on the requested grid")
        u = newton_solve(spec, seed, settings)
        if u is None:
            log.debug("Newton did not converge from a seed")
            continue
        dup = next((j for j, v in enumerate(found) if np.abs(u.values - v.values).max() < settings.dedup_tol), None)
        if dup is None:
            found.append(u)
        elif np.abs(discrete_drift(spec, u)).max() < np.abs(discrete_drift(spec, found[dup])).max():
            # keep the most accurate representative of a merged group
            found[dup] = u
    points = []
    for u in found:
        index, neg = classify_point(spec, grid, u, settings)
        points.append(
            StationaryPoint(
                profile=u,
                energy=discrete_energy(spec, u),
                grad_norm=float(np.abs(discrete_gradient(spec, u)).max()),
                index=index,
                neg_eigenvalue=neg,
            )
        )
    points.sort(key=lambda p: (round(p.energy, 12), float(np.mean(p.profile.values))))
    return [
        StationaryPoint(p.profile, p.energy, p.grad_norm, p.index, p.neg_eigenvalue, i)
        for i, p in enumerate(points)
    ]


# ------------------------------------------------------------ connections


def _nearest(u: np.ndarray, minima: Sequence[StationaryPoint]) -> tuple[int, float]:
    n = len(u)
    d = [np.linalg.norm(u - m.profile.values) / math.sqrt(n) for m in minima]
    i = int(np.argmin(d))
    return i, d[i]


def flow_to_minimum(
    spec: PotentialSpec,
    start: FieldProfile,
    minima: Sequence[StationaryPoint],
    settings: LandscapeSettings = DEFAULTS,
) -> int:
    """Follow du/dt = -(1/h) grad S_N until captured by one of ``minima``.

    Returns the position of the capturing minimum in ``minima``.
    """
    grid = start.grid
    n = grid.n
    radius = settings.capture_radius

    def rhs(t, y):
        return -discrete_drift(spec, FieldProfile(grid, y))

    def jac(t, y):
        op = discrete_hessian(spec, FieldProfile(grid, y), scaled=True)
        return -sparse.diags([op.offdiag, op.diag, op.offdiag], [-1, 0, 1], format="csc")

    events = []
    for m in minima:
        target = m.profile.values

        def captured(t, y, target=target):
            return np.linalg.norm(y - target) / math.sqrt(n) - radius

        captured.terminal = True
        events.append(captured)

    idx, dist = _nearest(start.values, minima)
    if dist <= radius:
        return idx
    sol = solve_ivp(
        rhs,
        (0.0, settings.max_flow_time),
        start.values.copy(),
        method="BDF",
        jac=jac,
        events=events,
        rtol=1e-8,
        atol=1e-10,
    )
    for i, te in enumerate(sol.t_events):
        if len(te):
            return i
    raise ConnectionFailure(
        f"gradient flow not captured by any minimum within time {settings.max_flow_time:g} "
        f"(final distance {_nearest(sol.y[:, -1], minima)[1]:.3g})"
    )


def descend_connections(
    spec: PotentialSpec,
    grid: Grid,
    saddle: StationaryPoint,
    minima: Sequence[StationaryPoint],
    settings: LandscapeSettings = DEFAULTS,
    sign: float = 1.0,
) -> tuple[int, int]:
    """Endpoints (positions in ``minima``) of the two unstable branches of a saddle.

    The first entry is reached from saddle - delta*v, the second from saddle
    + delta*v, with v the unit unstable direction (largest component > 0);
    ``sign=-1`` swaps them.
    """
    if saddle.index != 1:
        raise ValueError(f"descend_connections needs an index-1 saddle, got index {saddle.index}")
    if not minima:
        raise ConnectionFailure("no minima to connect to")
    op = discrete_hessian(spec, saddle.profile, scaled=True)
    v = lowest_eigenvector(op, saddle.neg_eigenvalue)
    v = sign * v * math.sqrt(grid.n)  # unit in the discrete L2 norm
    ends = []
    for s in (-1.0, 1.0):
        start = FieldProfile(grid, saddle.profile.values + s * settings.descent_delta * v)
        ends.append(flow_to_minimum(spec, start, minima, settings))
    return ends[0], ends[1]


# ------------------------------------------------------------------ graph


def minimax_heights(vertex_energies: Sequence[float], edges: Iterable[tuple[int, int, float]]) -> np.ndarray:
    """Bottleneck path heights; diagonal = vertex energies, +inf if unreachable."""
    m = len(vertex_energies)
    H = np.full((m, m), math.inf)
    for a, b, e in edges:
        if a == b:
            continue
        H[a, b] = min(H[a, b], e)
        H[b, a] = H[a, b]
    for k in range(m):
        H = np.minimum(H, np.maximum(H[:, k : k + 1], H[k : k + 1, :]))
    H[np.diag_indices(m)] = vertex_energies
    return H


def build_skeleton(
    spec: PotentialSpec,
    grid: Grid,
    points: Sequence[StationaryPoint],
    settings: LandscapeSettings = DEFAULTS,
) -> SkeletonGraph:
    minima = sorted((p for p in points if p.index == 0), key=lambda p: (round(p.energy, 12), float(np.mean(p.profile.values))))
    edges = []
    for p in points:
        if p.index != 1:
            continue
        a, b = descend_connections(spec, grid, p, minima, settings)
        edges.append(Edge(p, (a, b)))
    return skeleton_from_parts(minima, edges)


def skeleton_from_parts(minima: Sequence[StationaryPoint], edges: Sequence[Edge]) -> SkeletonGraph:
    for e in edges:
        if e.saddle.index != 1:
            raise ValueError("skeleton edges must be index-1 saddles")
    H = minimax_heights([v.energy for v in minima], ((*e.endpoints, e.energy) for e in edges))
    disconnected = bool(np.isinf(H).any())
    return SkeletonGraph(tuple(minima), tuple(edges), H, disconnected)


def _reachable(m: int, edges: Sequence[Edge], start: Iterable[int]) -> set[int]:
    adj = {i: set() for i in range(m)}
    for e in edges:
        a, b = e.endpoints
        adj[a].add(b)
        adj[b].add(a)
    seen = set(start)
    stack = list(seen)
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return seen


def relevant_saddles(graph: SkeletonGraph, source: int, targets: Iterable[int], eta: float | None = None) -> list[Edge]:
    """Edges at the bottleneck height between ``source`` and ``targets``.

    An edge qualifies if its energy is within ``eta`` of the minimax height
    and it joins the source side to the target side using only edges no
    higher than that height (+ eta).
    """
    targets = set(targets)
    if not targets:
        raise ValueError("targets must be non-empty")
    if source in targets:
        raise ValueError("source must not be a target")
    height = min(graph.minimax[source, t] for t in targets)
    if not math.isfinite(height):
        raise DisconnectedGraphError(f"no path from vertex {source} to {sorted(targets)}")
    if eta is None:
        eta = 1e-8 * (1.0 + abs(height))
    low = [e for e in graph.edges if e.energy <= height + eta and not e.is_loop]
    m = len(graph.vertices)
    chosen = []
    for e in low:
        if abs(e.energy - height) > eta:
            continue
        rest = [f for f in low if f is not e]
        from_source = _reachable(m, rest, [source])
        to_target = _reachable(m, rest, targets)
        a, b = e.endpoints
        if (a in from_source and b in to_target) or (b in from_source and a in to_target):
            chosen.append(e)
    return chosen


def analyze_landscape(spec: PotentialSpec, grid: Grid, settings: LandscapeSettings = DEFAULTS):
    """Convenience: stationary points and skeleton graph in one call."""
    points = find_stationary_points(spec, grid, settings=settings)
    return points, build_skeleton(spec, grid, points, settings)
