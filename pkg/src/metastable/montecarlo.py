"""Monte Carlo simulation of the finite-difference SPDE system.

    dX_i = [gamma (lap X)_i - V'(X_i)] dt + sqrt(2 eps / h) dB_i

Each trajectory draws its Gaussian increments from its own Philox stream
keyed by (seed, trajectory index), so results do not depend on how the
trajectories are split across worker processes.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numba
import numpy as np
from scipy.special import kolmogorov, ndtri

from .errors import BlowUpError, UnreliableEstimateError
from .potential import BoundaryCondition, FieldProfile, PotentialSpec, make_grid

MAX_CAPPED_FRACTION = 0.2


class Scheme(str, enum.Enum):
    SEMI_IMPLICIT = "semi-implicit"
    EXPLICIT = "explicit"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("_", "-")
        if v == "semiimplicit":
            v = "semi-implicit"
        return cls(v)


@dataclass(frozen=True)
class SimulationConfig:
    spec: PotentialSpec
    n: int
    epsilon: float
    rho: float
    dt: float = 1e-3
    scheme: Scheme = Scheme.SEMI_IMPLICIT
    seed: int = 0
    max_time: float = 1e6
    start: int = 0
    targets: tuple = (1,)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.scheme is Scheme.EXPLICIT and self.dt > self.stable_dt:
            raise ValueError(
                f"explicit scheme needs dt <= h^2/(4 gamma) = {self.stable_dt:.4g}, got {self.dt}"
            )

    @property
    def grid(self):
        return make_grid(self.spec.bc, self.n)

    @property
    def stable_dt(self) -> float:
        return self.grid.h**2 / (4 * self.spec.gamma)


@dataclass(frozen=True)
class HittingSample:
    tau: float
    steps: int
    seed: int
    index: int
    capped: bool = False


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    stderr: float
    samples: tuple = field(repr=False)

    @property
    def uncapped(self) -> np.ndarray:
        return np.array([s.tau for s in self.samples if not s.capped])

    @property
    def n_capped(self) -> int:
        return sum(s.capped for s in self.samples)


@dataclass(frozen=True)
class ArrheniusFit:
    energy: float
    log_prefactor: float
    r_squared: float

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_prefactor)


@dataclass
class ValidationReport:
    epsilons: list
    means: list
    stderrs: list
    counts: list
    capped: list
    fit: Optional[ArrheniusFit] = None
    ks_statistic: Optional[float] = None
    ks_pvalue: Optional[float] = None


# ------------------------------------------------------------------ kernel


@numba.njit(cache=True)
def _drift_term(x, dcoef):
    # V'(x) by Horner
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        acc = 0.0
        for c in range(dcoef.shape[0] - 1, -1, -1):
            acc = acc * x[i] + dcoef[c]
        out[i] = acc
    return out


@numba.njit(cache=True)
def _advance(x, noise, explicit, neumann, dt, kappa, dcoef, cprime, denom, targets, radius2, guard):
    """Advance ``x`` in place through the rows of ``noise``.

    Returns (steps taken, status) with status 0 = block exhausted, 1 = hit,
    2 = left the guard region / non-finite.
    """
    n = x.shape[0]
    nt = targets.shape[0]
    rhs = np.empty(n)
    for k in range(noise.shape[0]):
        vp = _drift_term(x, dcoef)
        if explicit:
            for i in range(n):
                left = x[i - 1] if i > 0 else (x[0] if neumann else 0.0)
                right = x[i + 1] if i < n - 1 else (x[n - 1] if neumann else 0.0)
                rhs[i] = x[i] + dt * (kappa * (left - 2.0 * x[i] + right) - vp[i]) + noise[k, i]
            for i in range(n):
                x[i] = rhs[i]
        else:
            # (I - dt gamma lap) x_new = x - dt V'(x) + noise, Thomas algorithm
            off = -dt * kappa
            for i in range(n):
                rhs[i] = x[i] - dt * vp[i] + noise[k, i]
            rhs[0] = rhs[0] / denom[0]
            for i in range(1, n):
                rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom[i]
            x[n - 1] = rhs[n - 1]
            for i in range(n - 2, -1, -1):
                x[i] = rhs[i] - cprime[i] * x[i + 1]
        worst = 0.0
        for i in range(n):
            a = abs(x[i])
            if not a <= guard:
                return k + 1, 2
        for t in range(nt):
            d2 = 0.0
            for i in range(n):
                diff = x[i] - targets[t, i]
                d2 += diff * diff
            if d2 <= radius2:
                return k + 1, 1
    return noise.shape[0], 0


def _thomas_factors(n, neumann, dt, kappa):
    b = np.full(n, 1.0 + 2.0 * dt * kappa)
    if neumann:
        b[0] -= dt * kappa
        b[-1] -= dt * kappa
    off = -dt * kappa
    cprime = np.zeros(n)
    denom = np.zeros(n)
    denom[0] = b[0]
    cprime[0] = off / denom[0] if n > 1 else 0.0
    for i in range(1, n):
        denom[i] = b[i] - off * cprime[i - 1]
        cprime[i] = off / denom[i] if i < n - 1 else 0.0
    return cprime, denom


def noise_stream(seed: int, index: int, n: int, block: int):
    """Standard normal blocks (inverse CDF of Philox uniforms) for one trajectory."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    gen = np.random.Generator(np.random.Philox(ss))
    while True:
        u = gen.random((block, n))
        u[u == 0.0] = 2.0**-54
        yield ndtri(u)


def _block_size(n: int) -> int:
    return max(64, min(8192, 2**17 // n))


def _targets_array(target_profiles: Sequence[FieldProfile]) -> np.ndarray:
    return np.array([t.values for t in target_profiles], dtype=float)


def sample_hitting_time(
    cfg: SimulationConfig,
    start: FieldProfile,
    target_profiles: Sequence[FieldProfile],
    index: int = 0,
) -> HittingSample:
    """First time the discrete L2 distance to a target drops to ``cfg.rho``."""
    grid = cfg.grid
    if start.grid.n != cfg.n:
        raise ValueError("start profile does not match the configured grid size")
    tg = _targets_array(target_profiles)
    radius2 = cfg.rho**2 * cfg.n
    if (((tg - start.values) ** 2).sum(axis=1) <= radius2).any():
        raise ValueError("start profile already lies inside a target ball")
    scale = float(np.abs(np.concatenate([tg.ravel(), start.values])).max())
    guard = 10.0 * (1.0 + scale)
    neumann = grid.bc is BoundaryCondition.NEUMANN
    kappa = cfg.spec.gamma / grid.h**2
    cprime, denom = _thomas_factors(cfg.n, neumann, cfg.dt, kappa)
    dcoef = np.ascontiguousarray(cfg.spec.derivative_coefficients(1), dtype=float)
    amp = math.sqrt(2.0 * cfg.epsilon * cfg.dt / grid.h)
    max_steps = int(math.ceil(cfg.max_time / cfg.dt))
    block = _block_size(cfg.n)

    x = start.values.copy()
    steps = 0
    for xi in noise_stream(cfg.seed, index, cfg.n, block):
        take = min(block, max_steps - steps)
        k, status = _advance(
            x, amp * xi[:take], cfg.scheme is Scheme.EXPLICIT, neumann, cfg.dt, kappa,
            dcoef, cprime, denom, tg, radius2, guard,
        )
        steps += k
        if status == 1:
            return HittingSample(steps * cfg.dt, steps, cfg.seed, index)
        if status == 2:
            raise BlowUpError(f"trajectory {index} blew up at step {steps}", step=steps)
        if steps >= max_steps:
            return HittingSample(cfg.max_time, steps, cfg.seed, index, capped=True)
    raise AssertionError("unreachable")


def sample_hitting_time_rescaled(
    cfg: SimulationConfig,
    start: FieldProfile,
    target_profiles: Sequence[FieldProfile],
    index: int = 0,
) -> HittingSample:
    """Explicit Euler for dY = -grad S_N(Y) ds + sqrt(2 eps) dB in the clock s = t/h.

    Uses the same noise stream as :func:`sample_hitting_time` and reports the
    hitting time multiplied by h (i.e. in physical time).
    """
    grid = cfg.grid
    h, gamma = grid.h, cfg.spec.gamma
    ds = cfg.dt / h
    tg = _targets_array(target_profiles)
    radius2 = cfg.rho**2 * cfg.n
    dcoef = cfg.spec.derivative_coefficients(1)
    neumann = grid.bc is BoundaryCondition.NEUMANN
    amp = math.sqrt(2.0 * cfg.epsilon * ds)
    max_steps = int(math.ceil(cfg.max_time / cfg.dt))
    block = _block_size(cfg.n)
    y = start.values.copy()
    steps = 0
    for xi in noise_stream(cfg.seed, index, cfg.n, block):
        for row in xi:
            ext = np.concatenate(([y[0]], y, [y[-1]])) if neumann else np.concatenate(([0.0], y, [0.0]))
            jumps = np.diff(ext)
            if neumann:
                jumps[0] = jumps[-1] = 0.0
            grad = gamma / h * (jumps[:-1] - jumps[1:]) + h * np.polynomial.polynomial.polyval(y, dcoef)
            y = y - ds * grad + amp * row
            steps += 1
            if (((tg - y) ** 2).sum(axis=1) <= radius2).any():
                return HittingSample(steps * ds * h, steps, cfg.seed, index)
            if steps >= max_steps:
                return HittingSample(cfg.max_time, steps, cfg.seed, index, capped=True)
    raise AssertionError("unreachable")


def step_field(state: FieldProfile, cfg: SimulationConfig, noise: np.ndarray) -> FieldProfile:
    """One time step from ``state`` driven by standard normals ``noise``."""
    grid = cfg.grid
    neumann = grid.bc is BoundaryCondition.NEUMANN
    kappa = cfg.spec.gamma / grid.h**2
    cprime, denom = _thomas_factors(cfg.n, neumann, cfg.dt, kappa)
    dcoef = np.ascontiguousarray(cfg.spec.derivative_coefficients(1), dtype=float)
    amp = math.sqrt(2.0 * cfg.epsilon * cfg.dt / grid.h)
    x = np.array(state.values, dtype=float)
    row = (amp * np.asarray(noise, dtype=float)).reshape(1, -1)
    _, status = _advance(
        x, row, cfg.scheme is Scheme.EXPLICIT, neumann, cfg.dt, kappa, dcoef, cprime, denom,
        np.zeros((0, cfg.n)), 0.0, math.inf,
    )
    if status == 2 or not np.isfinite(x).all():
        raise BlowUpError("state became non-finite", step=1)
    return FieldProfile(grid, x)


# ------------------------------------------------------------ estimation


def _run_chunk(args):
    cfg, start, targets, indices = args
    return [sample_hitting_time(cfg, start, targets, i) for i in indices]


def sample_many(
    cfg: SimulationConfig,
    start: FieldProfile,
    target_profiles: Sequence[FieldProfile],
    count: int,
    jobs: int = 1,
) -> list[HittingSample]:
    indices = list(range(count))
    if jobs <= 1 or count < 2:
        return _run_chunk((cfg, start, tuple(target_profiles), indices))
    chunks = [indices[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, start, tuple(target_profiles), c) for c in chunks]))
    samples = [s for part in parts for s in part]
    samples.sort(key=lambda s: s.index)
    return samples


def estimate_mean(
    cfg: SimulationConfig,
    count: int,
    start: FieldProfile,
    target_profiles: Sequence[FieldProfile],
    jobs: int = 1,
) -> MeanEstimate:
    """Sample mean and standard error of ``count`` seeded hitting times."""
    if count < 2:
        raise ValueError("need at least 2 samples")
    samples = sample_many(cfg, start, target_profiles, count, jobs)
    capped = sum(s.capped for s in samples)
    if capped > MAX_CAPPED_FRACTION * count:
        raise UnreliableEstimateError(
            f"{capped} of {count} trajectories reached max_time={cfg.max_time:g} at epsilon={cfg.epsilon:g}"
        )
    tau = np.array([s.tau for s in samples if not s.capped])
    if len(tau) < 2:
        raise UnreliableEstimateError("fewer than 2 uncapped trajectories")
    return MeanEstimate(float(tau.mean()), float(tau.std(ddof=1) / math.sqrt(len(tau))), tuple(samples))


# ------------------------------------------------------------- statistics


def exponentiality_test(samples: Iterable[float]) -> tuple[float, float]:
    """KS test of samples/mean against Exp(1); p-value from the Kolmogorov series."""
    x = np.sort(np.asarray(list(samples), dtype=float))
    n = len(x)
    if n < 50:
        raise ValueError(f"exponentiality test needs at least 50 samples, got {n}")
    z = x / x.mean()
    cdf = -np.expm1(-z)
    i = np.arange(1, n + 1)
    d = float(max((i / n - cdf).max(), (cdf - (i - 1) / n).max()))
    return d, float(kolmogorov(math.sqrt(n) * d))


def arrhenius_fit(points: Iterable[tuple[float, float]]) -> ArrheniusFit:
    """Least squares of log(mean) = log A + E / eps."""
    grouped: dict[float, list[float]] = {}
    for eps, mean in points:
        if not eps > 0 or not mean > 0:
            raise ValueError("epsilon and mean must be positive")
        grouped.setdefault(float(eps), []).append(float(mean))
    if len(grouped) < 3:
        raise ValueError(f"Arrhenius fit needs at least 3 distinct epsilon values, got {len(grouped)}")
    eps = np.array(sorted(grouped))
    y = np.log([np.mean(grouped[e]) for e in eps])
    x = 1.0 / eps
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ArrheniusFit(float(slope), float(intercept), r2)
