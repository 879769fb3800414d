import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phaselab.complexity import Q
from phaselab.ensemble import Ensemble, EnsembleKind
from phaselab.forward import NoiseSpec, generate_instance
from phaselab.recovery import (
    SolverSpec,
    acceptance_threshold,
    empirical_excess_risk,
    empirical_risk,
    error_sweep,
    local_solve,
    recover,
    risk_gradient,
    sign_error,
)
from phaselab.signal_set import FullSphere, Sparse
from phaselab.streams import make_rng

T = Sparse(64, 3)
G = Ensemble(EnsembleKind.GAUSSIAN, 64)
NONE = NoiseSpec.none()
vec = arrays(np.float64, 6, elements=st.floats(-5, 5, allow_subnormal=False))


def noiseless(N=98, seed=0):
    return generate_instance(T, G, NONE, N, seed)


def test_risk_examples():
    inst = noiseless()
    assert empirical_risk(inst.A, inst.y, inst.x0, 1.5) == pytest.approx(0, abs=1e-25)
    assert empirical_risk(inst.A, inst.y, -inst.x0, 1.5) == pytest.approx(0, abs=1e-25)
    assert empirical_risk(np.ones((1, 1)), np.array([2.0]), np.array([1.0]), 2) == 1.0
    with pytest.raises(ValueError):
        empirical_risk(inst.A, inst.y, inst.x0, 1.0)
    with pytest.raises(ValueError):
        empirical_risk(inst.A, inst.y, inst.x0, 2.1)


@settings(max_examples=100, deadline=None)
@given(vec, st.floats(1.01, 2.0))
def test_risk_sign_invariance(x, p):
    r = np.random.default_rng(0)
    A, y = r.standard_normal((9, 6)), r.standard_normal(9)
    assert empirical_risk(A, y, x, p) == empirical_risk(A, y, -x, p)


def test_excess_risk():
    inst = generate_instance(T, G, NoiseSpec("gaussian", 0.2), 80, 4)
    assert empirical_excess_risk(inst.A, inst.y, inst.w, inst.x0, 1.5) == pytest.approx(0, abs=1e-14)
    x = T.sample_point(make_rng(1))
    floor = -np.mean(np.abs(inst.w) ** 1.5)
    assert empirical_excess_risk(inst.A, inst.y, inst.w, x, 1.5) >= floor
    clean = noiseless()
    assert empirical_excess_risk(clean.A, clean.y, clean.w, x, 1.5) == empirical_risk(clean.A, clean.y, x, 1.5)


def test_gradient_central_differences():
    r = make_rng(7)
    for _ in range(20):
        A = r.standard_normal((40, 6))
        y = r.standard_normal(40) ** 2
        x = r.standard_normal(6)
        p = r.uniform(1.05, 2.0)
        if np.min(np.abs((A @ x) ** 2 - y)) <= 1e-3:
            continue
        h = 1e-6
        fd = np.array([(empirical_risk(A, y, x + h * e, p) - empirical_risk(A, y, x - h * e, p)) / (2 * h)
                       for e in np.eye(6)])
        g = risk_gradient(A, y, x, p)
        assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(g)


def test_gradient_zero_at_exact_fit():
    inst = noiseless()
    assert np.allclose(risk_gradient(inst.A, inst.y, inst.x0, 1.4), 0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1.0, 2.0, exclude_min=True))
def test_pointwise_convexity(c, d, p):
    lhs = 0.5 * (abs(c + d) ** p + abs(c - d) ** p)
    rhs = (c * c + (p - 1) * d * d) ** (p / 2)
    assert lhs >= rhs - 1e-12 * max(1.0, rhs)


def test_threshold_noiseless_is_uQ():
    for u in (1, 2.5):
        thr = acceptance_threshold(NONE, T, 500, u, 1.5)
        assert thr == pytest.approx(u * Q(T.width_bound(), 1.0, 500))


def test_threshold_monotone_in_u():
    noise = NoiseSpec("gaussian", 0.3)
    vals = [acceptance_threshold(noise, T, 400, u, 1.4) for u in (1, 2, 4)]
    assert vals[0] < vals[1] < vals[2]


def test_threshold_large_N_limit():
    noise = NoiseSpec("gaussian", 1.0)
    assert acceptance_threshold(noise, T, 10**12, 1, 2.0) == pytest.approx(1.0, abs=1e-4)


def test_threshold_errors():
    with pytest.raises(ValueError):
        acceptance_threshold(NONE, T, 100, 0.5, 1.5)
    assert acceptance_threshold(NONE, T, 100, 1, 1.5, ell=0.0) == 0.0


def test_local_solve_fixed_point_at_truth():
    inst = noiseless()
    x = local_solve(inst, T, 1.5, inst.x0)
    assert np.array_equal(x, inst.x0)


@pytest.mark.parametrize("method", ["pg", "greedy"])
def test_local_solve_descent(method):
    inst = generate_instance(T, G, NoiseSpec("gaussian", 0.1), 120, 3)
    for r in make_rng(5).spawn(5):
        x0 = T.sample_point(r)
        x = local_solve(inst, T, 1.5, x0, SolverSpec(method=method, max_iters=200))
        assert empirical_risk(inst.A, inst.y, x, 1.5) <= empirical_risk(inst.A, inst.y, x0, 1.5)
        assert np.count_nonzero(x) <= 3


def test_local_solve_on_sphere_stays_unit():
    S = FullSphere(8)
    inst = generate_instance(S, Ensemble(EnsembleKind.GAUSSIAN, 8), NONE, 60, 1)
    x = local_solve((inst.A, inst.y), S, 1.5, S.sample_point(make_rng(0)))
    assert np.linalg.norm(x) == pytest.approx(1)
    res = recover(inst, S, NONE, 1, SolverSpec(), make_rng(0))
    assert res.accepted and res.error < 1e-4


def test_greedy_needs_sparse():
    S = FullSphere(8)
    inst = generate_instance(S, Ensemble(EnsembleKind.GAUSSIAN, 8), NONE, 30, 1)
    with pytest.raises(ValueError):
        local_solve(inst, S, 1.5, S.sample_point(make_rng(0)), SolverSpec(method="greedy"))


def test_solver_spec_validation():
    assert SolverSpec(method="projected-gradient").method == "pg"
    assert SolverSpec(method="greedy-support-swap").method == "greedy"
    for bad in (dict(method="sdp"), dict(max_iters=0), dict(shrink=1.0), dict(step=0), dict(max_restarts=-1)):
        with pytest.raises(ValueError):
            SolverSpec(**bad)


def test_planted_truth_is_accepted():
    for seed in range(5):
        noise = NoiseSpec("gaussian", 0.1)
        inst = generate_instance(T, G, noise, 300, seed)
        res = recover(inst, T, noise, 1, SolverSpec(max_restarts=1), make_rng(seed))
        x = local_solve(inst, T, res.p, inst.x0)
        noise_avg = np.mean(np.abs(inst.w) ** res.p)
        if res.threshold > noise_avg:
            assert empirical_risk(inst.A, inst.y, x, res.p) <= res.threshold


def test_zero_restarts():
    res = recover(noiseless(), T, NONE, 1, SolverSpec(max_restarts=0), make_rng(0))
    assert res.accepted is False and res.restarts_used == 0
    assert not np.any(res.x_hat)


def test_recover_needs_rng():
    with pytest.raises(ValueError):
        recover(noiseless(), T, NONE)


@pytest.mark.parametrize("method", ["pg", "greedy"])
def test_noiseless_recovery(method):
    ok = 0
    for seed in range(10):
        res = recover(noiseless(seed=seed), T, NONE, 1, SolverSpec(method=method), make_rng(100 + seed))
        assert res.accepted == (res.risk <= res.threshold)
        ok += res.accepted and res.error <= 1e-3
    assert ok >= 9


def test_acceptance_consistency():
    noise = NoiseSpec("gaussian", 0.2)
    for seed in range(8):
        inst = generate_instance(T, G, noise, 200, seed)
        res = recover(inst, T, noise, 1, SolverSpec(max_restarts=3), make_rng(seed))
        risk = empirical_risk(inst.A, inst.y, res.x_hat, res.p)
        assert risk == res.risk
        assert res.accepted == (risk <= res.threshold)
        assert res.error == sign_error(res.x_hat, inst.x0) >= 0


def test_recover_deterministic():
    inst = noiseless()
    a = recover(inst, T, NONE, 1, SolverSpec(), make_rng(3))
    b = recover(inst, T, NONE, 1, SolverSpec(), make_rng(3))
    assert np.array_equal(a.x_hat, b.x_hat) and a.restarts_used == b.restarts_used


def test_sign_error_examples():
    x = np.array([0.6, 0.8])
    assert sign_error(x, x) == 0 and sign_error(-x, x) == 0
    assert sign_error(np.array([1.0, 0]), np.array([0, 1.0])) == pytest.approx(2)
    with pytest.raises(ValueError):
        sign_error(np.ones(2), np.ones(3))


@settings(max_examples=100, deadline=None)
@given(vec, vec)
def test_sign_error_symmetry(a, b):
    assert sign_error(a, b) == sign_error(-a, b) >= 0


def test_noiseless_sweep_median_small():
    res = error_sweep(T, G, NONE, [98, 200], 10, 1, SolverSpec(), make_rng(0))
    assert all(r.median_error <= 1e-3 for r in res.rows)
    assert all(r.n_accepted >= 9 for r in res.rows)


def test_more_noise_not_smaller_error():
    S, E = Sparse(64, 4), Ensemble(EnsembleKind.GAUSSIAN, 64)
    lo = error_sweep(S, E, NoiseSpec("gaussian", 0.1), [512], 20, 1, SolverSpec(), make_rng(21))
    hi = error_sweep(S, E, NoiseSpec("gaussian", 0.2), [512], 20, 1, SolverSpec(), make_rng(21))
    assert hi.rows[0].median_error >= 0.9 * lo.rows[0].median_error


def test_sweep_threads_invariant():
    args = (T, G, NoiseSpec("gaussian", 0.1), [128, 256], 3, 1, SolverSpec(max_restarts=5))
    a = error_sweep(*args, make_rng(4), threads=1)
    b = error_sweep(*args, make_rng(4), threads=4)
    assert a.rows == b.rows and a.slope == b.slope
