"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict (printed in the pytest summary
under "acceptance criteria") before asserting.  Seeds are fixed, so every
number below is reproducible.
"""
import math

import numpy as np
import pytest

from conftest import record
from phaselab.cli import COMMANDS, main
from phaselab.complexity import abs_product_moments, kappa_mc, kappa_pz_lower, second_moment_product
from phaselab.ensemble import Ensemble, EnsembleKind, isotropy_check, random_directions
from phaselab.forward import NoiseSpec, generate_instance, moment_deviation_curve
from phaselab.recovery import SolverSpec, empirical_risk, error_sweep, recover, risk_gradient
from phaselab.signal_set import Sparse
from phaselab.stability import deviation_curve, linear_compare
from phaselab.streams import loglog_slope, make_rng

GAUSS, RADE, UNIF = EnsembleKind.GAUSSIAN, EnsembleKind.RADEMACHER, EnsembleKind.UNIFORM


def sparse_sample_size(n, k):
    return math.ceil(8 * k * math.log(math.e * n / k))


def test_criterion_01_isotropy():
    worst = {}
    for kind, r in zip((GAUSS, RADE, UNIF), make_rng(101).spawn(3)):
        d_rng, s_rng = r.spawn(2)
        rep = isotropy_check(Ensemble(kind, 32), random_directions(32, 50, d_rng), 200_000, 0.02, s_rng)
        worst[kind.value] = rep.max_deviation
    ok = all(v <= 0.02 for v in worst.values())
    record(1, ok, "max deviation " + ", ".join(f"{k}={v:.4f}" for k, v in worst.items()) + " (tol 0.02)")
    assert ok


def test_criterion_02_kappa_closed_forms():
    r_orth, r_same, r_deg = make_rng(202).spawn(3)
    e1, e2 = np.eye(8)[:2]
    est, se = kappa_mc(Ensemble(GAUSS, 8), e1, e2, 1_000_000, r_orth)
    orth_ok = abs(est - 2 / math.pi) <= 0.005
    v = r_same.standard_normal(8)
    v /= np.linalg.norm(v)
    same = {}
    for kind, r in zip(EnsembleKind, r_same.spawn(4)):
        m, s = kappa_mc(Ensemble(kind, 8), v, v, 100_000, r)
        same[kind.value] = abs(m - 1) / s
    same_ok = all(z <= 3 for z in same.values())
    dv, dw = np.zeros(8), np.zeros(8)
    dv[:2] = [1, 1]
    dw[:2] = [1, -1]
    sums = abs_product_moments(Ensemble(RADE, 8), dv / math.sqrt(2), dw / math.sqrt(2), 100_000, r_deg)
    # |Z| >= 0, so a zero sum means every sample was exactly zero
    deg_ok = sums[1][0] == 0.0
    ok = orth_ok and same_ok and deg_ok
    record(2, ok, f"orthogonal {est:.4f} vs {2 / math.pi:.4f} (+-0.005); v=w max |dev|/SE "
                  f"{max(same.values()):.2f}; degenerate Rademacher sum {sums[1][0]}")
    assert ok


def test_criterion_03_moment_identity_and_pz():
    S = 100_000
    fails_m2 = fails_pz = total = 0
    worst = 0.0
    for kind, r in zip((GAUSS, RADE, UNIF), make_rng(303).spawn(3)):
        e = Ensemble(kind, 8)
        for pr in r.spawn(20):
            p_rng, m_rng, k_rng, z_rng = pr.spawn(4)
            v, w = random_directions(8, 2, p_rng)
            s = abs_product_moments(e, v, w, S, m_rng, powers=(2, 4))
            m2 = s[2][0] / S
            se = math.sqrt(max(s[4][0] / S - m2 * m2, 0.0) / S)
            z = abs(m2 - second_moment_product(v, w, e)) / se
            worst = max(worst, z)
            fails_m2 += z > 3
            km, kse = kappa_mc(e, v, w, S, k_rng)
            fails_pz += kappa_pz_lower(v, w, e, S, z_rng) > km + 3 * kse
            total += 1
    ok = fails_m2 == 0 and fails_pz == 0
    record(3, ok, f"{total} pairs: second moment outside 3 SE {fails_m2} (worst {worst:.2f} SE); "
                  f"PZ bound above kappa+3SE {fails_pz}")
    assert ok


def test_criterion_04_deviation_scaling():
    Ns = [32, 64, 128, 256, 512, 1024, 2048, 4096]
    rows = deviation_curve(Sparse(128, 4), Ensemble(GAUSS, 128), Ns, 20, 100, 0, make_rng(404))
    slope = loglog_slope(Ns, [r.mean_dev for r in rows])
    ok = -0.6 <= slope <= -0.4
    record(4, ok, f"log-log slope of sup deviation vs N = {slope:.3f} (target [-0.6, -0.4])")
    assert ok


N_STAR = sparse_sample_size(128, 4)
COMPARE_GRID = [4, 8, 16, 32, 64, N_STAR, 256, 512]


@pytest.fixture(scope="module")
def comparison():
    return linear_compare(Sparse(128, 4), Ensemble(GAUSS, 128), COMPARE_GRID, 20, 2000, 8192, make_rng(505))


def test_criterion_05_stability_phase(comparison):
    frac = {r.N: r.success_frac for r in comparison.quadratic}
    ok = frac[N_STAR] >= 0.9 and frac[4] <= 0.5
    record(5, ok, f"threshold {comparison.quad_threshold:.4f}; success at N={N_STAR}: {frac[N_STAR]:.2f} "
                  f"(>=0.9), at N=4: {frac[4]:.2f} (<=0.5)")
    assert ok


def test_criterion_06_linear_parity(comparison):
    ratio = comparison.ratio
    ok = ratio <= 4
    record(6, ok, f"first N with 0.9 success: quadratic {comparison.quad_first}, "
                  f"linear {comparison.lin_first}, ratio {ratio:.2f} (<=4)")
    assert ok


def test_criterion_07_noiseless_recovery():
    T, e = Sparse(64, 3), Ensemble(GAUSS, 64)
    N = sparse_sample_size(64, 3)
    seeds = list(range(50))
    accepted, errors = 0, []
    for seed in seeds:
        inst = generate_instance(T, e, NoiseSpec.none(), N, seed)
        res = recover(inst, T, NoiseSpec.none(), 1, SolverSpec(max_restarts=20), make_rng(10_000 + seed))
        if res.accepted:
            accepted += 1
            errors.append(res.error)
    rate = accepted / len(seeds)
    worst = max(errors) if errors else math.inf
    ok = rate >= 0.9 and worst <= 1e-3
    record(7, ok, f"N={N}, seeds 0-49: accepted {rate:.2f} (>=0.9), max error among accepted {worst:.2e} (<=1e-3)")
    assert ok


def test_criterion_08_noisy_error_decay():
    Ns = [256, 512, 1024, 2048, 4096, 8192]
    res = error_sweep(Sparse(64, 4), Ensemble(GAUSS, 64), NoiseSpec("gaussian", 0.1), Ns, 50, 1,
                      SolverSpec(), make_rng(808))
    med = {r.N: r.median_error for r in res.rows}
    gain = med[256] / med[8192]
    ok = -0.65 <= res.slope <= -0.35 and gain >= 4
    record(8, ok, f"slope {res.slope:.3f} (target [-0.65, -0.35]); median error 256 -> 8192 shrinks {gain:.2f}x (>=4); "
                  f"min accept rate {min(r.accept_rate for r in res.rows):.2f}")
    assert ok


def test_criterion_09_psi1_concentration():
    Ns = [100, 316, 1000, 3162, 10_000, 31_623]
    res = moment_deviation_curve(NoiseSpec("gaussian", 1.0), 1.5, Ns, 200, make_rng(909))
    ok = -0.6 <= res.slope <= -0.4
    record(9, ok, f"slope of 90th-percentile deviation vs N = {res.slope:.3f} (target [-0.6, -0.4])")
    assert ok


def test_criterion_10_pointwise_inequality_and_gradient():
    r = make_rng(1010)
    c, d = r.standard_normal(1_000_000), r.standard_normal(1_000_000)
    p = 2.0 - r.random(1_000_000)  # (1, 2]
    gap = 0.5 * (np.abs(c + d) ** p + np.abs(c - d) ** p) - (c * c + (p - 1) * d * d) ** (p / 2)
    ineq_ok = gap.min() >= -1e-12
    worst, checked = 0.0, 0
    h = 1e-6
    while checked < 100:
        A = r.standard_normal((30, 8))
        y = r.standard_normal(30) ** 2 + 0.1 * r.standard_normal(30)
        x = r.standard_normal(8)
        q = 2.0 - r.random() * 0.95
        if np.min(np.abs((A @ x) ** 2 - y)) <= 1e-3:
            continue
        fd = np.array([(empirical_risk(A, y, x + h * u, q) - empirical_risk(A, y, x - h * u, q)) / (2 * h)
                       for u in np.eye(8)])
        g = risk_gradient(A, y, x, q)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(g))
        checked += 1
    ok = ineq_ok and worst <= 1e-4
    record(10, ok, f"min inequality gap {gap.min():.2e} over 1e6 triples (>=-1e-12); "
                   f"worst gradient rel. error {worst:.2e} at 100 points (<=1e-4)")
    assert ok


CLI_ARGS = {
    "ensemble-check": ["--n", "32", "--samples", "20000", "--directions", "20", "--ensemble", "uniform"],
    "complexity": ["--set", "block", "--n", "64", "--d", "4", "--k", "2", "--N-grid", "64,256,1024",
                   "--noise", "gaussian:0.1"],
    "kappa": ["--n", "32", "--k", "2", "--pairs", "20", "--samples", "20000", "--ensemble", "rademacher"],
    "stability": ["--n", "64", "--k", "2", "--N-grid", "8,32,128", "--trials", "6", "--pairs", "100",
                  "--calibration-N", "512"],
    "recover": ["--n", "64", "--k", "3", "--N", "200", "--noise", "gaussian:0.1"],
    "sweep": ["--n", "64", "--k", "3", "--N-grid", "128,256,512", "--trials", "6", "--noise", "gaussian:0.05"],
    "linear-compare": ["--n", "64", "--k", "2", "--N-grid", "8,32,128", "--trials", "6", "--pairs", "100",
                       "--calibration-N", "512"],
}


def test_criterion_11_cli_determinism(tmp_path):
    bad = []
    for command in COMMANDS:
        outputs = []
        for threads in ("1", "1", "4", "4"):
            out = tmp_path / f"{command}-{threads}-{len(outputs)}.csv"
            code = main([command, "--seed", "1111", "--threads", threads, "--out", str(out), *CLI_ARGS[command]])
            assert code == 0
            outputs.append(out.read_text())
        bodies = {o.split("\n", 1)[1] for o in outputs}
        if len(bodies) != 1:
            bad.append(command)
    ok = not bad
    record(11, ok, f"{len(COMMANDS)} subcommands x 2 runs x threads {{1,4}}: "
                   + ("all CSV bodies byte-identical" if ok else "mismatch in " + ", ".join(bad)))
    assert ok
