"""End-to-end acceptance checks; each test records one pass/fail line."""
import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import LN2, diag_system, sine_pert, tent_system
from oracles import diag_green_matrix, sup_norm_by_vertices
from trishadow import cli
from trishadow.apps import ConjugacyFamily, Recurrence, gh_forward, gh_inverse, hyers_ulam_solve
from trishadow.detect import admissibility_probe
from trishadow.flow import (SampledPath, constant_system, continuous_shadow, integrate_path,
                            sine_nonlinearity)
from trishadow.green import GreenKernel, ae_residual, analytic_bound, apply_green, exact_section_norm
from trishadow.linsys import LinearCocycle, TrichotomyData, constant_dichotomy
from trishadow.seqspace import (LInfty, Lp, WindowSequence, convolution_bound, exp_convolution,
                                norm_b)
from trishadow.shadow import (Perturbation, random_pseudotrajectory, scaled_tanh,
                              shadow_one_sided, shadow_two_sided)


def test_criterion_01_green_bound(criterion):
    t0 = time.perf_counter()
    cocycle, tri = diag_system(-40, 40)
    gk = GreenKernel(cocycle, tri)
    brute = sup_norm_by_vertices(gk.matrix(), 2)
    oracle = sup_norm_by_vertices(diag_green_matrix(-40, 40), 2)
    bound = analytic_bound(tri.C, tri.lam)
    elapsed = time.perf_counter() - t0
    ok = (abs(brute - 2.0) <= 1e-6 and abs(oracle - 2.0) <= 1e-6
          and abs(exact_section_norm(gk, LInfty()) - brute) <= 1e-12
          and abs(bound - 6.0) <= 1e-12 and brute <= bound and elapsed < 5)
    criterion(1, ok, f"||G|| = {brute:.12g}, analytic {bound:.12g}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_defining_equation(criterion, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for system in (diag_system, tent_system):
        cocycle, tri = system(-40, 40)
        gk = GreenKernel(cocycle, tri)
        for _ in range(100):
            y = WindowSequence(-40, rng.standard_normal((81, cocycle.d)) * 10.0 ** rng.uniform(-3, 3))
            x = apply_green(gk, y)
            worst = max(worst, float(np.max(ae_residual(cocycle, x, y))) / norm_b(LInfty(), y))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10
    criterion(2, ok, f"max residual/||y|| = {worst:.3g}, {elapsed:.2f}s")
    assert ok


def _criterion_3_runs():
    """Shared runs for criteria 3-5 (cached so they are done once)."""
    if hasattr(_criterion_3_runs, "cache"):
        return _criterion_3_runs.cache
    rng = np.random.default_rng(3)
    cocycle, tri = diag_system(-30, 30)
    c, delta = 0.05, 1e-3
    pert = sine_pert(c)
    out = {"elapsed": 0.0, "runs": []}
    t0 = time.perf_counter()
    for kind, norm in ((LInfty(), "max"), (Lp(2), "euclidean")):
        gk = GreenKernel(cocycle, tri, norm=norm)
        M = diag_green_matrix(-30, 30)
        g = sup_norm_by_vertices(M, 2) if kind.is_sup else float(np.linalg.norm(M, 2))
        K = g / (1 - c * g)
        for _ in range(100):
            y = random_pseudotrajectory(cocycle, pert, delta, kind, rng, norm)
            r1 = shadow_two_sided(cocycle, tri, pert, y, kind=kind, norm=norm, gnorm=g, gk=gk)
            start = rng.uniform(-1, 1, (cocycle.width, 2)) * 10 * delta
            r2 = shadow_two_sided(cocycle, tri, pert, y, kind=kind, norm=norm, gnorm=g, gk=gk, x0=start)
            out["runs"].append((kind, y, r1, r2, K, c * g))
    out["elapsed"] = time.perf_counter() - t0
    _criterion_3_runs.cache = out
    return out


def test_criterion_03_shadowing_bound(criterion):
    data = _criterion_3_runs()
    worst_res, worst_ratio = 0.0, 0.0
    for kind, y, r1, _, K, _ in data["runs"]:
        # independent orbit check: forward recomputation of x
        x = r1.x.values
        fwd = 0.5 * x[:-1, 0] + 0.05 * np.sin(x[:-1, 1]), 2.0 * x[:-1, 1] + 0.05 * np.sin(x[:-1, 0])
        res = max(np.max(np.abs(x[1:, 0] - fwd[0])), np.max(np.abs(x[1:, 1] - fwd[1])))
        worst_res = max(worst_res, res, r1.residual)
        worst_ratio = max(worst_ratio, r1.correction_norm / (K * y.delta))
        assert y.delta <= 1e-3
    ok = worst_res <= 1e-9 and worst_ratio <= 1 + 1e-6 and data["elapsed"] < 30
    criterion(3, ok, f"{len(data['runs'])} runs, max residual {worst_res:.3g}, "
                     f"max correction/(K delta) {worst_ratio:.6f}, {data['elapsed']:.2f}s")
    assert ok


def test_criterion_04_contraction_rate(criterion):
    data = _criterion_3_runs()
    excess = max(max(r.ratios, default=0.0) - q for _, _, r1, r2, _, q in data["runs"] for r in (r1, r2))
    ok = excess <= 1e-6
    criterion(4, ok, f"max(ratio - c||G||) = {excess:.3g}")
    assert ok


def test_criterion_05_uniqueness(criterion):
    data = _criterion_3_runs()
    worst = max(float(np.max(np.abs(r1.x.values - r2.x.values))) for _, _, r1, r2, _, _ in data["runs"])
    ok = worst <= 1e-8
    criterion(5, ok, f"max l-inf gap between runs {worst:.3g}")
    assert ok


def test_criterion_06_one_sided(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    cocycle = LinearCocycle.constant([[0.5]], 0, 60)
    tri = TrichotomyData.dichotomy([[1.0]], 0, 60, 1.0, LN2)
    c = 0.05
    pert = scaled_tanh(c)
    worst = 0.0
    K_oracle = 2.0 / (1 - 2.0 * c)
    for _ in range(20):
        y = random_pseudotrajectory(cocycle, pert, 1e-3, LInfty(), rng)
        res = shadow_one_sided(cocycle, tri, pert, y, gnorm="exact")
        assert abs(res.K - K_oracle) <= 1e-9
        worst = max(worst, res.correction_norm / (K_oracle * y.delta))
        assert res.residual <= 1e-9
    long = LinearCocycle.constant([[0.5]], 0, 80)
    probe = admissibility_probe(long, boundary="zero_at_origin", rng=6)
    ident = admissibility_probe(LinearCocycle.constant([[1.0]], 0, 80), boundary="zero_at_origin", rng=6)
    elapsed = time.perf_counter() - t0
    ok = (worst <= 1 + 1e-6 and probe.admissible and probe.ratio < 1.25
          and ident.verdict == "neither" and elapsed < 20)
    criterion(6, ok, f"correction/(K delta) {worst:.6f}, probe ratio {probe.ratio:.4f}, "
                     f"identity verdict {ident.verdict}, {elapsed:.2f}s")
    assert ok


def test_criterion_07_detection(criterion):
    t0 = time.perf_counter()
    cocycle, _ = diag_system(-40, 40)
    rd = admissibility_probe(cocycle, rng=7)
    brute = sup_norm_by_vertices(diag_green_matrix(-40, 40), 2)
    tc, _ = tent_system(-40, 40)
    rt = admissibility_probe(tc, rng=7)
    elapsed = time.perf_counter() - t0
    ok = (rd.verdict == "dichotomy-like" and abs(rd.norm_estimate - brute) <= 0.05 * brute
          and rt.verdict == "trichotomy-like" and rt.kernel_dimension == 1 and elapsed < 20)
    criterion(7, ok, f"diag {rd.verdict} estimate {rd.norm_estimate:.6g}; tent {rt.verdict} "
                     f"nullity {rt.kernel_dimension}; {elapsed:.2f}s")
    assert ok


def test_criterion_08_continuous_time(criterion):
    t0 = time.perf_counter()
    N, c = 1.0, 0.05
    sys_ = constant_system([[-1.0]], sine_nonlinearity(c), c)
    grid = np.arange(-2000, 2001) / 100.0
    true = integrate_path(sys_, grid, [1.0])
    y = SampledPath(grid, true.values + 1e-3 * np.sin(5 * grid)[:, None])
    res = continuous_shadow(sys_, None, y)
    # re-integrate each unit leg from x(n) with an independent adaptive solver
    resid = 0.0
    ints = np.flatnonzero(np.abs(grid - np.rint(grid)) < 1e-9)
    for a, b in zip(ints[:-1], ints[1:]):
        sol = solve_ivp(lambda t, x: -x + c * np.sin(x), (grid[a], grid[b]), res.path.values[a],
                        method="DOP853", rtol=1e-12, atol=1e-14, t_eval=grid[a:b + 1])
        resid = max(resid, float(np.max(np.abs(sol.y.T - res.path.values[a:b + 1]))))
    e = math.exp(N + c)
    L = 1.0 / res.discrete.K
    eps = res.delta * (1 + e / L) * e
    elapsed = time.perf_counter() - t0
    ok = resid <= 1e-6 and res.sup_deviation <= eps and abs(eps - res.epsilon) <= 1e-12 * eps and elapsed < 60
    criterion(8, ok, f"ODE residual {resid:.3g}, sup deviation {res.sup_deviation:.4g} <= eps {eps:.4g}, "
                     f"{elapsed:.2f}s")
    assert ok


def _lift_green_sup_norm(A, terms=200):
    """Bi-infinite Green norm of a constant hyperbolic matrix, summed in the eigenbasis."""
    mu, V = np.linalg.eig(A)
    Vi = np.linalg.inv(V)
    stable = np.abs(mu) < 1
    rows = np.zeros(len(mu))
    for k in range(terms):
        fwd = V[:, stable] @ np.diag(mu[stable] ** k) @ Vi[stable]
        rows += np.sum(np.abs(np.real(fwd)), axis=1)
        if k > 0:
            bwd = V[:, ~stable] @ np.diag(mu[~stable] ** (-k)) @ Vi[~stable]
            rows += np.sum(np.abs(np.real(bwd)), axis=1)
    return float(np.max(rows))


def test_criterion_09_hyers_ulam(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    rec = Recurrence(2.5, -1.0)
    n = np.arange(60)
    w = 3.0 * 0.5 ** n + rng.uniform(-1e-4, 1e-4, n.size)
    delta = float(np.max(np.abs(w[2:] - 2.5 * w[1:-1] + w[:-2])))
    res = hyers_ulam_solve(rec, w)
    x = res.x
    rec_res = float(np.max(np.abs(x[2:] - 2.5 * x[1:-1] + x[:-2])))
    g = _lift_green_sup_norm(np.array([[0.0, 1.0], [-1.0, 2.5]]))
    dev = float(np.max(np.abs(x - w)))
    elapsed = time.perf_counter() - t0
    ok = (rec_res <= 1e-10 and dev <= g * delta and abs(res.delta - delta) <= 1e-15
          and res.gnorm <= g * (1 + 1e-9) and elapsed < 10)
    criterion(9, ok, f"recurrence residual {rec_res:.3g}, sup|x-w| {dev:.4g} <= ||G|| delta "
                     f"{g * delta:.4g} (||G|| = {g:.6g}), {elapsed:.2f}s")
    assert ok


def test_criterion_10_grobman_hartman(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    delta = 0.05
    g = Perturbation(lambda n, x: delta * np.array([np.sin(x[1]), np.cos(x[0]) - 1.0]) / 2, delta / 2,
                     lambda ns, X: delta * np.column_stack([np.sin(X[:, 1]), np.cos(X[:, 0]) - 1.0]) / 2)
    cocycle, tri = constant_dichotomy(np.diag([0.5, 2.0]), -80, 80)
    conj = ConjugacyFamily(cocycle, tri, g, delta, tol=1e-10)
    worst = np.zeros(4)
    for _ in range(100):
        m = int(rng.integers(-20, 21))
        y = rng.uniform(-2.0, 2.0, 2)
        h = gh_forward(conj, m, y)
        h_next = gh_forward(conj, m + 1, conj.G(m, y))
        xi = gh_inverse(conj, m, y)
        worst = np.maximum(worst, [
            np.max(np.abs(h_next - cocycle.A(m) @ h)),
            np.max(np.abs(h - y)) / conj.epsilon,
            np.max(np.abs(gh_forward(conj, m, xi) - y)),
            np.max(np.abs(gh_inverse(conj, m, h) - y)),
        ])
    elapsed = time.perf_counter() - t0
    ok = worst[0] <= 1e-6 and worst[1] <= 1 and worst[2] <= 1e-6 and worst[3] <= 1e-6 and elapsed < 60
    criterion(10, ok, f"conjugation residual {worst[0]:.3g}, max ||h-y||/(K delta) {worst[1]:.4f}, "
                      f"round trips {worst[2]:.3g}/{worst[3]:.3g}, {elapsed:.2f}s")
    assert ok


def test_criterion_11_convolution_bounds(criterion):
    rng = np.random.default_rng(11)
    failures = 0
    for _ in range(1000):
        lam = float(rng.uniform(0.05, 4.0))
        s = WindowSequence(int(rng.integers(-50, 50)), rng.standard_normal(int(rng.integers(1, 120))))
        for kind in (LInfty(), Lp(2)):
            base = norm_b(kind, s)
            for direction in ("causal", "anticausal"):
                conv = norm_b(kind, exp_convolution(s, lam, direction))
                if not conv <= convolution_bound(lam, direction) * base:
                    failures += 1
    ok = failures == 0
    criterion(11, ok, f"{failures} violations in 8000 checks")
    assert ok


def test_criterion_12_cli_determinism(criterion, tmp_path):
    from pathlib import Path
    configs = Path(__file__).resolve().parent.parent / "configs"
    same = True
    for name in ("shadow_diag.json", "shadow_diag_l2.json", "detect_tent.json", "green_norm_tent.json"):
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}-{k}"
            code = cli.main(["--config", str(configs / name), "--seed", "5", "--out", str(out)])
            assert code == 0
            outs.append(out)
        for f in sorted(p.name for p in outs[0].iterdir()):
            same &= (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    criterion(12, same, "certificates and CSVs byte-identical" if same else "outputs differ")
    assert same
