"""YAML run configuration for the command line front end."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Union

import yaml

from .errors import ConfigError
from .montecarlo import Scheme
from .potential import BoundaryCondition, PotentialSpec

BLOCKS = {
    "potential": {"kind", "coefficients", "gamma", "bc"},
    "grid": {"n"},
    "kramers": {"source", "targets", "eta"},
    "simulate": {"epsilon", "rho", "dt", "scheme", "samples", "seed", "max_time"},
    "validate": {"energy_rel_tol", "prefactor_factor", "ks_alpha"},
    "output": {"format", "path"},
}
TARGET_KEYWORDS = ("lower", "others")


@dataclass(frozen=True)
class KramersBlock:
    source: Optional[int] = None  # None: highest-energy minimum
    targets: Union[str, tuple] = "lower"
    eta: float = 1e-8


@dataclass(frozen=True)
class SimulateBlock:
    epsilon: tuple = ()
    rho: float = 0.4
    dt: float = 1e-3
    scheme: str = Scheme.SEMI_IMPLICIT.value
    samples: int = 500
    seed: int = 0
    max_time: Optional[float] = None


@dataclass(frozen=True)
class ValidateBlock:
    energy_rel_tol: float = 0.2
    prefactor_factor: float = 3.0
    ks_alpha: float = 0.01


@dataclass(frozen=True)
class OutputBlock:
    format: str = "json"
    path: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    n: tuple
    kramers: KramersBlock = field(default_factory=KramersBlock)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    validate: ValidateBlock = field(default_factory=ValidateBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        p = self.potential
        pot = {"kind": p.kind, "gamma": p.gamma, "bc": p.bc.value}
        if p.kind == "polynomial":
            pot["coefficients"] = list(p.coefficients)
        kr = asdict(self.kramers)
        if not isinstance(kr["targets"], str):
            kr["targets"] = list(kr["targets"])
        sim = asdict(self.simulate)
        sim["epsilon"] = list(sim["epsilon"])
        return {
            "potential": pot,
            "grid": {"n": list(self.n) if len(self.n) > 1 else self.n[0]},
            "kramers": kr,
            "simulate": sim,
            "validate": asdict(self.validate),
            "output": asdict(self.output),
        }


def _lines(text: str) -> dict:
    """Map (block, key) -> 1-based line number, from the YAML node tree."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if not isinstance(root, yaml.MappingNode):
        return out
    for knode, vnode in root.value:
        out[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                out[(knode.value, k2.value)] = k2.start_mark.line + 1
    return out


class _Ctx:
    def __init__(self, text):
        self.lines = _lines(text)

    def fail(self, path, msg):
        line = self.lines.get(tuple(path)) or self.lines.get(tuple(path[:1]))
        where = ".".join(path)
        prefix = f"line {line}: " if line else ""
        raise ConfigError(f"{prefix}{where}: {msg}")


def _real(ctx, path, v, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        ctx.fail(path, "must be finite")
    if positive and not v > 0:
        ctx.fail(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        ctx.fail(path, f"must be non-negative, got {v}")
    return v


def _int(ctx, path, v, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        ctx.fail(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        ctx.fail(path, f"must be >= {minimum}, got {v}")
    return v


def _list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def parse_config(text: str) -> RunConfig:
    """Validate a YAML document and fill defaults."""
    ctx = _Ctx(text)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping of blocks")
    for block, body in doc.items():
        if block not in BLOCKS:
            ctx.fail([str(block)], "unknown block")
        if body is None:
            body = doc[block] = {}
        if not isinstance(body, dict):
            ctx.fail([block], "block must be a mapping")
        for key in body:
            if key not in BLOCKS[block]:
                ctx.fail([block, str(key)], "unknown key")
    if "potential" not in doc:
        raise ConfigError("missing required block 'potential'")
    if "grid" not in doc or "n" not in doc["grid"]:
        raise ConfigError("missing required key 'grid.n'")

    pot = doc["potential"]
    kind = str(pot.get("kind", "double_well"))
    gamma = _real(ctx, ["potential", "gamma"], pot.get("gamma", 1.0), positive=True)
    try:
        bc = BoundaryCondition.parse(pot.get("bc", "neumann"))
    except ValueError as exc:
        ctx.fail(["potential", "bc"], str(exc))
    coeffs = pot.get("coefficients")
    if kind.replace("-", "_") == "polynomial":
        if not isinstance(coeffs, list) or not coeffs:
            ctx.fail(["potential", "coefficients"], "polynomial potential needs a coefficient list")
        coeffs = [_real(ctx, ["potential", "coefficients"], c) for c in coeffs]
    elif coeffs is not None:
        ctx.fail(["potential", "coefficients"], "only allowed with kind: polynomial")
    try:
        spec = PotentialSpec(kind, tuple(coeffs or ()), gamma, bc) if coeffs else PotentialSpec(kind, gamma=gamma, bc=bc)
    except ValueError as exc:
        ctx.fail(["potential", "kind"], str(exc))

    ns = tuple(_int(ctx, ["grid", "n"], v, minimum=1) for v in _list(doc["grid"]["n"]))
    if not ns:
        ctx.fail(["grid", "n"], "empty grid size list")

    kr = doc.get("kramers", {})
    source = kr.get("source")
    if source is not None:
        source = _int(ctx, ["kramers", "source"], source, minimum=0)
    targets = kr.get("targets", "lower")
    if isinstance(targets, str):
        if targets not in TARGET_KEYWORDS:
            ctx.fail(["kramers", "targets"], f"expected a list of ranks or one of {TARGET_KEYWORDS}")
    else:
        targets = tuple(_int(ctx, ["kramers", "targets"], t, minimum=0) for t in _list(targets))
        if not targets:
            ctx.fail(["kramers", "targets"], "empty target list")
    eta = _real(ctx, ["kramers", "eta"], kr.get("eta", 1e-8), positive=True)

    sim = doc.get("simulate", {})
    eps = tuple(_real(ctx, ["simulate", "epsilon"], e, positive=True) for e in _list(sim.get("epsilon", [])))
    try:
        scheme = Scheme.parse(sim.get("scheme", "semi-implicit")).value
    except ValueError:
        ctx.fail(["simulate", "scheme"], f"unknown scheme {sim.get('scheme')!r}")
    max_time = sim.get("max_time")
    if max_time is not None:
        max_time = _real(ctx, ["simulate", "max_time"], max_time, positive=True)
    seed = _int(ctx, ["simulate", "seed"], sim.get("seed", 0), minimum=0)
    if seed >= 2**64:
        ctx.fail(["simulate", "seed"], "must fit in 64 bits")
    simulate = SimulateBlock(
        epsilon=eps,
        rho=_real(ctx, ["simulate", "rho"], sim.get("rho", 0.4), positive=True),
        dt=_real(ctx, ["simulate", "dt"], sim.get("dt", 1e-3), positive=True),
        scheme=scheme,
        samples=_int(ctx, ["simulate", "samples"], sim.get("samples", 500), minimum=2),
        seed=seed,
        max_time=max_time,
    )

    val = doc.get("validate", {})
    validate = ValidateBlock(
        energy_rel_tol=_real(ctx, ["validate", "energy_rel_tol"], val.get("energy_rel_tol", 0.2), positive=True),
        prefactor_factor=_real(ctx, ["validate", "prefactor_factor"], val.get("prefactor_factor", 3.0), positive=True),
        ks_alpha=_real(ctx, ["validate", "ks_alpha"], val.get("ks_alpha", 0.01), positive=True),
    )
    if validate.prefactor_factor < 1:
        ctx.fail(["validate", "prefactor_factor"], "must be >= 1")

    out = doc.get("output", {})
    fmt = str(out.get("format", "json")).lower()
    if fmt not in ("json", "csv"):
        ctx.fail(["output", "format"], f"expected json or csv, got {fmt!r}")
    path = out.get("path")
    output = OutputBlock(fmt, None if path is None else str(path))

    return RunConfig(spec, ns, KramersBlock(source, targets, eta), simulate, validate, output)


def serialize(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
