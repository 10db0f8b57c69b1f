"""Acceptance criteria, one test per criterion with the pinned tolerances.

Every test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured values.
"""

import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

from metastable.cli import main
from metastable.config import load_config
from metastable.errors import DisconnectedGraphError
from metastable.kramers import WeightedEdge, conductance, quadratic_form, transition_time_discrete
from metastable.landscape import analyze_landscape, find_stationary_points
from metastable.pipeline import run_pipeline
from metastable.potential import (
    FieldProfile,
    PotentialSpec,
    discrete_energy,
    discrete_gradient,
    discrete_hessian,
    make_grid,
)
from metastable.spectral import determinant_ratio, functional_determinant, sturm_liouville_eigen

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SQ2 = math.sqrt(2.0)
A_CONT = 2 * math.pi * math.sqrt(math.sin(1.0) / (SQ2 * math.sinh(SQ2)))
A_N2 = 2 * math.pi * math.sqrt(7 / 20)


def const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def test_criterion_1_spectral_oracle(acceptance):
    worst = 0.0
    for bc, first in (("neumann", 0), ("dirichlet", 1)):
        spec = PotentialSpec.double_well(1.0, bc)
        k = np.arange(first, first + 20)
        for c in (-1.0, 0.0, 1.0):
            vals = sturm_liouville_eigen(spec, const(c), 20).eigenvalues
            worst = max(worst, float(np.max(np.abs(vals - (np.pi**2 * k**2 + 3 * c * c - 1)))))
    ok = acceptance(1, "continuum eigenvalues at constant points, k<=20, both bc", worst <= 1e-8, f"max abs error {worst:.2e} (tol 1e-8)")
    assert ok


def test_criterion_2_determinant_identity(acceptance):
    spec = PotentialSpec.double_well(1.0, "neumann")
    k = 200
    res = determinant_ratio(spec, const(0.0), const(1.0), check_k=k)
    d0 = functional_determinant(spec, const(0.0)).value
    d1 = functional_determinant(spec, const(1.0)).value
    e0, e1 = abs(d0 + math.sin(1.0)), abs(d1 - SQ2 * math.sinh(SQ2))
    ok = res.discrepancy <= 5 / k and e0 <= 1e-8 and e1 <= 1e-8
    detail = (
        f"|prod_K - ratio| = {res.discrepancy:.2e} (tol {5 / k:.3f}); Det(0) = {d0:.10f} "
        f"(err {e0:.1e}); Det(1) = {d1:.10f} (err {e1:.1e} vs sqrt2*sinh(sqrt2); quoted decimal 2.736589 differs by "
        f"{abs(d1 - 2.736589):.1e})"
    )
    assert acceptance(2, "eigenproduct vs shooting ratio and closed-form determinants", ok, detail)


def test_criterion_3_landscape(acceptance):
    spec = PotentialSpec.double_well(1.0, "neumann")
    ok, parts = True, []
    for n in (16, 64):
        points = find_stationary_points(spec, make_grid("neumann", n))
        by_mean = sorted(points, key=lambda p: p.profile.values.mean())
        indices = [p.index for p in by_mean]
        dev = max(np.max(np.abs(p.profile.values - c)) for p, c in zip(by_mean, (-1, 0, 1))) if len(points) == 3 else math.inf
        lam_err = abs(by_mean[1].neg_eigenvalue + 1.0) if len(points) == 3 else math.inf
        ok &= len(points) == 3 and indices == [0, 1, 0] and dev <= 1e-8 and lam_err <= 1e-10
        parts.append(f"N={n}: {len(points)} points, indices {indices}, sup dev {dev:.1e}, |lambda+1| {lam_err:.1e}")
    assert acceptance(3, "double-well landscape at N=16,64", ok, "; ".join(parts))


def test_criterion_4_prefactor_convergence(acceptance):
    spec = PotentialSpec.double_well(1.0, "neumann")

    def prefactor(n):
        grid = make_grid("neumann", n)
        _, graph = analyze_landscape(spec, grid)
        return transition_time_discrete(spec, grid, graph, 0, [1], 0.1).prefactor

    a2 = prefactor(2)
    sizes = [64, 128, 256, 512, 1024]
    errs = np.array([abs(prefactor(n) - A_CONT) for n in sizes])
    ratios = errs[:-1] / errs[1:]
    rel_1024 = errs[-1] / A_CONT
    hand_ok = abs(a2 - A_N2) <= 1e-6
    limit_ok = rel_1024 <= 0.01
    rate_ok = bool(np.all((ratios >= 1.6) & (ratios <= 2.4)))
    detail = (
        f"N=2: {a2:.8f} vs 2*pi*sqrt(7/20) = {A_N2:.8f} ({'ok' if hand_ok else 'off'}; quoted decimal 3.71721 differs by "
        f"{abs(a2 - 3.71721):.1e}); N=1024 rel err {rel_1024:.2e} ({'ok' if limit_ok else 'off'}); "
        f"error ratios per doubling {np.round(ratios, 3).tolist()} (band [1.6, 2.4]: {'ok' if rate_ok else 'off, observed second order'})"
    )
    assert acceptance(4, "discrete prefactor: hand value, limit and rate", hand_ok and limit_ok and rate_ok, detail)


@pytest.fixture(scope="module")
def mc_report():
    cfg = load_config(CONFIGS / "double_well.yaml")
    return run_pipeline(cfg, "validate")


@pytest.mark.slow
def test_criterion_5_arrhenius(acceptance, mc_report):
    v = mc_report.validation
    e_ok = abs(v["fitted_energy"] - 0.25) <= 0.2 * 0.25
    ratio = v["fitted_prefactor"] / A_CONT
    a_ok = 1 / 3 <= ratio <= 3
    means = ", ".join(f"eps={s['epsilon']}: {s['mean']:.2f}+-{s['stderr']:.2f}" for s in mc_report.simulations)
    detail = f"E_hat = {v['fitted_energy']:.4f} (0.25 +- 20%), A_hat = {v['fitted_prefactor']:.3f} (ratio {ratio:.3f}, factor 3); {means}"
    assert acceptance(5, "Monte Carlo Arrhenius fit, N=16, 500 samples x 4 eps", e_ok and a_ok, detail)


@pytest.mark.slow
def test_criterion_6_exponential_law(acceptance, mc_report):
    (sim,) = [s for s in mc_report.simulations if s["epsilon"] == 0.09]
    p = sim["ks_pvalue"]
    ok = p is not None and p > 0.01
    detail = f"KS statistic {sim['ks_statistic']:.4f}, p = {p:.3f} (alpha 0.01), {sim['samples']} samples, {sim['capped']} capped"
    assert acceptance(6, "exponential law of normalized hitting times at eps=0.09", ok, detail)


def test_criterion_7_calculus(acceptance):
    rng = np.random.default_rng(7)
    worst_g, worst_h = 0.0, 0.0
    n = 12
    for bc in ("neumann", "dirichlet"):
        spec = PotentialSpec.double_well(1.0, bc)
        grid = make_grid(bc, n)
        for _ in range(100):
            u = rng.normal(scale=1.0, size=n)
            g = discrete_gradient(spec, FieldProfile(grid, u))
            H = discrete_hessian(spec, FieldProfile(grid, u), scaled=False).to_dense()
            step = 1e-5
            fd_g = np.empty(n)
            fd_h = np.empty((n, n))
            for i in range(n):
                e = np.zeros(n)
                e[i] = step
                up, um = FieldProfile(grid, u + e), FieldProfile(grid, u - e)
                fd_g[i] = (discrete_energy(spec, up) - discrete_energy(spec, um)) / (2 * step)
                fd_h[:, i] = (discrete_gradient(spec, up) - discrete_gradient(spec, um)) / (2 * step)
            worst_g = max(worst_g, np.linalg.norm(fd_g - g) / np.linalg.norm(g))
            worst_h = max(worst_h, np.linalg.norm(fd_h - H) / np.linalg.norm(H))
    ok = worst_g <= 1e-6 and worst_h <= 1e-6
    detail = f"max relative error: gradient {worst_g:.1e}, Hessian {worst_h:.1e} (tol 1e-6), 100 profiles per bc"
    assert acceptance(7, "gradient and Hessian of S_N vs finite differences", ok, detail)


def _grid_search(edges, m):
    free = list(range(1, m - 1))

    def q(x):
        return quadratic_form(edges, np.concatenate(([1.0], x, [0.0])))

    axis = np.linspace(0, 1, 51)
    best = min(itertools.product(axis, repeat=len(free)), key=lambda p: q(np.array(p)))
    return float(minimize(q, np.array(best), method="BFGS", options={"gtol": 1e-13}).fun)


def test_criterion_8_conductance(acceptance):
    w1, w2 = 0.37, 2.9
    single = conductance([WeightedEdge.simple(0, 1, w1)], 0, [1]).value
    parallel = conductance([WeightedEdge.simple(0, 1, w1), WeightedEdge.simple(0, 1, w2)], 0, [1]).value
    series = conductance([WeightedEdge.simple(0, 1, w1), WeightedEdge.simple(1, 2, w2)], 0, [2]).value
    closed = max(abs(single - w1) / w1, abs(parallel - (w1 + w2)) / (w1 + w2), abs(series - w1 * w2 / (w1 + w2)) / (w1 * w2 / (w1 + w2)))
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(25):
        pairs = [p for p in itertools.combinations(range(4), 2) if rng.random() < 0.7] or [(0, 3)]
        edges = [WeightedEdge.simple(a, b, float(rng.uniform(0.05, 5.0))) for a, b in pairs]
        try:
            c = conductance(edges, 0, [3], 4).value
        except DisconnectedGraphError:
            continue
        worst = max(worst, abs(c - _grid_search(edges, 4)) / c)
    ok = closed <= 1e-12 and worst <= 1e-6
    detail = f"closed forms max rel err {closed:.1e} (tol 1e-12); random 4-vertex graphs vs grid search max rel err {worst:.1e} (tol 1e-6)"
    assert acceptance(8, "conductance algebra", ok, detail)


REPRO_CONFIG = """\
potential: {kind: double_well, gamma: 1.0, bc: neumann}
grid: {n: 16}
kramers: {source: 0, targets: [1]}
simulate: {epsilon: [0.25, 0.3, 0.4], rho: 0.4, samples: 60, seed: 31337}
"""


def _strip_timestamp(text):
    doc = json.loads(text)
    doc["metadata"].pop("timestamp")
    return doc


def test_criterion_9_reproducibility(acceptance, tmp_path):
    cfg = tmp_path / "repro.yaml"
    cfg.write_text(REPRO_CONFIG)
    outs = []
    out = tmp_path / "report.json"
    for jobs in (1, 1, 2):
        code = main(["validate", "--config", str(cfg), "--output", str(out), "--jobs", str(jobs)])
        outs.append((code, out.read_text()))
    codes = {c for c, _ in outs}
    a, b, c = (text for _, text in outs)
    lines_a = [ln for ln in a.splitlines() if '"timestamp"' not in ln]
    lines_b = [ln for ln in b.splitlines() if '"timestamp"' not in ln]
    same_bytes = lines_a == lines_b
    same_jobs = _strip_timestamp(a) == _strip_timestamp(c)
    ok = same_bytes and same_jobs and codes <= {0, 4}
    detail = f"repeat run identical modulo timestamp: {same_bytes}; --jobs 1 vs 2 identical: {same_jobs}; exit codes {sorted(codes)}"
    assert acceptance(9, "validate reports reproducible across runs and worker counts", ok, detail)
