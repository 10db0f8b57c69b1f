"""Analysis, prediction, simulation and validation pipelines behind the CLI."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import logging
import math
import platform
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .config import RunConfig
from .errors import ConfigError, MetastableError, NumericalError
from .kramers import transition_time_continuum, transition_time_discrete
from .landscape import SkeletonGraph, analyze_landscape
from .montecarlo import (
    SimulationConfig,
    arrhenius_fit,
    estimate_mean,
    exponentiality_test,
)
from .potential import discrete_hessian, make_grid
from .spectral import determinant_ratio, functional_determinant, log_abs_det

log = logging.getLogger(__name__)

MODES = ("analyze", "predict", "simulate", "validate", "detratio")
EIGENPRODUCT_K = 200


class PipelineError(MetastableError):
    """A stage failed; ``exit_code`` follows the CLI convention."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = 2 if isinstance(cause, ConfigError) else 3


@dataclass
class Report:
    mode: str
    metadata: dict
    stationary_points: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    determinants: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    simulations: list = field(default_factory=list)
    validation: Optional[dict] = None
    detratio: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.validation is None or bool(self.validation["passed"])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "metadata": self.metadata,
            "stationary_points": self.stationary_points,
            "edges": self.edges,
            "determinants": self.determinants,
            "predictions": self.predictions,
            "simulations": self.simulations,
            "validation": self.validation,
            "detratio": self.detratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        """Long format: one row per (table, quantity, n, epsilon, id)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["table", "quantity", "n", "epsilon", "id", "value"])
        tables = [
            ("stationary_points", self.stationary_points, "id"),
            ("edges", self.edges, "saddle_id"),
            ("determinants", self.determinants, "id"),
            ("predictions", self.predictions, "provenance"),
            ("simulations", self.simulations, None),
            ("detratio", self.detratio, None),
        ]
        for name, rows, key in tables:
            for row in rows:
                for q, v in row.items():
                    if q in ("n", "epsilon", key) or isinstance(v, (list, dict)):
                        continue
                    w.writerow([name, q, row.get("n", ""), _fmt(row.get("epsilon")), row.get(key, "") if key else "", _fmt(v)])
        if self.validation:
            for q, v in self.validation.items():
                if not isinstance(v, (list, dict)):
                    w.writerow(["validation", q, "", "", "", _fmt(v)])
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _finite(x):
    x = float(x)
    if not math.isfinite(x):
        raise NumericalError(f"non-finite value {x} in report")
    return x


class _Landscape:
    def __init__(self, cfg: RunConfig, n: int):
        self.n = n
        self.grid = make_grid(cfg.potential.bc, n)
        self.points, self.graph = analyze_landscape(cfg.potential, self.grid)

    def vertex_of(self, point_id: int) -> Optional[int]:
        for i, v in enumerate(self.graph.vertices):
            if v.id == point_id:
                return i
        return None


def resolve_endpoints(cfg: RunConfig, graph: SkeletonGraph) -> tuple[int, list]:
    """Source rank and target ranks from the kramers block."""
    m = len(graph.vertices)
    if m < 2:
        raise ConfigError(f"landscape has {m} minimum; transitions need at least two")
    source = cfg.kramers.source if cfg.kramers.source is not None else m - 1
    if source >= m:
        raise ConfigError(f"kramers.source: rank {source} does not exist ({m} minima)")
    e = graph.energies
    tol = 1e-12 * (1 + abs(e[source]))
    if cfg.kramers.targets == "lower":
        targets = [i for i in range(m) if e[i] < e[source] - tol]
    elif cfg.kramers.targets == "others":
        targets = [i for i in range(m) if i != source]
    else:
        targets = sorted(set(cfg.kramers.targets))
        bad = [t for t in targets if t >= m or t == source]
        if bad:
            raise ConfigError(f"kramers.targets: invalid ranks {bad} ({m} minima, source {source})")
    if not targets:
        raise ConfigError(f"kramers.targets: no minimum matches {cfg.kramers.targets!r} for source {source}")
    return source, targets


def _metadata(cfg: RunConfig, mode: str) -> dict:
    return {
        "package": "metastable",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "mode": mode,
        "config": cfg.to_dict(),
        "seed": cfg.simulate.seed,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _analyze(cfg: RunConfig, land: _Landscape, report: Report):
    spec = cfg.potential
    for p in land.points:
        report.stationary_points.append(
            {
                "n": land.n,
                "id": p.id,
                "vertex": land.vertex_of(p.id),
                "energy": _finite(p.energy),
                "index": p.index,
                "neg_eigenvalue": None if p.neg_eigenvalue is None else _finite(p.neg_eigenvalue),
                "grad_norm": _finite(p.grad_norm),
                "mean_value": _finite(np.mean(p.profile.values)),
            }
        )
        logdet, sign = log_abs_det(discrete_hessian(spec, p.profile, scaled=True))
        report.determinants.append(
            {
                "n": land.n,
                "id": p.id,
                "index": p.index,
                "shooting_det": _finite(functional_determinant(spec, p.profile).value),
                "discrete_log_abs_det": _finite(logdet),
                "discrete_sign": sign,
            }
        )
    for e in land.graph.edges:
        report.edges.append({"n": land.n, "saddle_id": e.saddle.id, "endpoints": list(e.endpoints), "energy": _finite(e.energy)})


def _predict(cfg: RunConfig, land: _Landscape, report: Report):
    spec = cfg.potential
    source, targets = resolve_endpoints(cfg, land.graph)
    for eps in cfg.simulate.epsilon:
        for est in (
            transition_time_continuum(spec, land.graph, source, targets, eps, cfg.kramers.eta),
            transition_time_discrete(spec, land.grid, land.graph, source, targets, eps, cfg.kramers.eta),
        ):
            report.predictions.append(
                {
                    "n": land.n,
                    "epsilon": eps,
                    "provenance": est.provenance,
                    "source": source,
                    "targets": targets,
                    "activation_energy": _finite(est.activation_energy),
                    "prefactor": _finite(est.prefactor),
                    "predicted_mean": _finite(est.predicted_mean),
                }
            )


def _simulate(cfg: RunConfig, land: _Landscape, report: Report, jobs: int):
    spec, sim = cfg.potential, cfg.simulate
    source, targets = resolve_endpoints(cfg, land.graph)
    start = land.graph.vertices[source].profile
    target_profiles = [land.graph.vertices[t].profile for t in targets]
    for eps in sim.epsilon:
        max_time = sim.max_time
        if max_time is None:
            try:
                est = transition_time_discrete(spec, land.grid, land.graph, source, targets, eps, cfg.kramers.eta)
                max_time = 50.0 * est.predicted_mean
            except NumericalError:
                max_time = 1e6
        scfg = SimulationConfig(spec, land.n, eps, sim.rho, sim.dt, sim.scheme, sim.seed, max_time, source, tuple(targets))
        log.info("simulating eps=%g with %d samples", eps, sim.samples)
        m = estimate_mean(scfg, sim.samples, start, target_profiles, jobs)
        tau = m.uncapped
        ks = exponentiality_test(tau) if len(tau) >= 50 else (None, None)
        report.simulations.append(
            {
                "n": land.n,
                "epsilon": eps,
                "mean": _finite(m.mean),
                "stderr": _finite(m.stderr),
                "samples": len(tau),
                "capped": m.n_capped,
                "ks_statistic": ks[0],
                "ks_pvalue": ks[1],
                "seed": sim.seed,
                "max_time": _finite(max_time),
                "dt": sim.dt,
                "rho": sim.rho,
                "scheme": scfg.scheme.value,
            }
        )


def _validate(cfg: RunConfig, report: Report):
    sims = report.simulations
    fit = arrhenius_fit([(s["epsilon"], s["mean"]) for s in sims])
    cont = [p for p in report.predictions if p["provenance"] == "continuum"]
    energy, prefactor = cont[0]["activation_energy"], cont[0]["prefactor"]
    smallest = min(sims, key=lambda s: s["epsilon"])
    v = cfg.validate
    energy_ok = abs(fit.energy - energy) <= v.energy_rel_tol * abs(energy)
    ratio = fit.prefactor / prefactor
    prefactor_ok = 1.0 / v.prefactor_factor <= ratio <= v.prefactor_factor
    ks_ok = smallest["ks_pvalue"] is not None and smallest["ks_pvalue"] > v.ks_alpha
    report.validation = {
        "fitted_energy": _finite(fit.energy),
        "fitted_log_prefactor": _finite(fit.log_prefactor),
        "fitted_prefactor": _finite(fit.prefactor),
        "r_squared": _finite(fit.r_squared),
        "predicted_energy": energy,
        "predicted_prefactor": prefactor,
        "energy_ok": energy_ok,
        "prefactor_ok": prefactor_ok,
        "ks_epsilon": smallest["epsilon"],
        "ks_pvalue": smallest["ks_pvalue"],
        "ks_ok": ks_ok,
        "passed": energy_ok and prefactor_ok and ks_ok,
    }


def _detratio(cfg: RunConfig, lands: list, report: Report):
    spec = cfg.potential
    reference = None
    for land in lands:
        source, targets = resolve_endpoints(cfg, land.graph)
        saddle = next(e for e in land.graph.edges if not e.is_loop).saddle
        phi = saddle.profile
        psi = land.graph.vertices[source].profile
        lz, sz = log_abs_det(discrete_hessian(spec, phi, scaled=True))
        lx, sx = log_abs_det(discrete_hessian(spec, psi, scaled=True))
        discrete = sz * sx * math.exp(lz - lx)
        if reference is None:
            reference = determinant_ratio(spec, phi, psi, EIGENPRODUCT_K)
        shooting = determinant_ratio(spec, phi, psi).ratio
        report.detratio.append(
            {
                "n": land.n,
                "saddle_id": saddle.id,
                "source": source,
                "discrete_ratio": _finite(discrete),
                "shooting_ratio": _finite(shooting),
                "abs_error": _finite(abs(discrete - shooting)),
                "eigenproduct_k": EIGENPRODUCT_K,
                "eigenproduct_ratio": _finite(reference.truncated_product),
                "eigenproduct_discrepancy": _finite(abs(reference.truncated_product - shooting)),
            }
        )


def run_pipeline(cfg: RunConfig, mode: str, jobs: int = 1) -> Report:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if mode in ("predict", "simulate", "validate") and not cfg.simulate.epsilon:
        raise PipelineError("config", ConfigError("simulate.epsilon: at least one value required"))
    if mode == "validate" and len(set(cfg.simulate.epsilon)) < 3:
        raise PipelineError("config", ConfigError("simulate.epsilon: validate needs at least 3 distinct values"))
    if mode in ("simulate", "validate") and cfg.simulate.samples < 2:
        raise PipelineError("config", ConfigError("simulate.samples: must be >= 2"))

    report = Report(mode, _metadata(cfg, mode))
    stage = "landscape"
    try:
        ns = cfg.n if mode in ("analyze", "predict", "detratio") else cfg.n[:1]
        lands = [_Landscape(cfg, n) for n in ns]
        stage = "spectra"
        for land in lands:
            _analyze(cfg, land, report)
        if mode in ("predict", "validate"):
            stage = "prediction"
            for land in lands:
                _predict(cfg, land, report)
        if mode in ("simulate", "validate"):
            stage = "simulation"
            _simulate(cfg, lands[0], report, jobs)
        if mode == "validate":
            stage = "validation"
            _validate(cfg, report)
        if mode == "detratio":
            stage = "detratio"
            _detratio(cfg, lands, report)
    except PipelineError:
        raise
    except (MetastableError, ValueError, ArithmeticError) as exc:
        raise PipelineError(stage, exc) from exc
    return report
