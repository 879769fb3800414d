"""Noisy recovery: p-power empirical risk, acceptance threshold and a restart-until-accepted loop.

A candidate x is a *good estimate* when

    (1/N) sum | <a_i,x>^2 - y_i |^p  <=  E|w|^p + u (Q_{T,N,W} - || |w|^p ||_psi1 / sqrt(N)),

with p = 1 + 1/log(beta_N).  Any local method may produce candidates; the loop
restarts it from fresh random points until one passes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .complexity import QW, Q, complexity_report
from .ensemble import Ensemble
from .forward import NoiseSpec, ProblemInstance, generate_instance
from .signal_set import SignalSet, Sparse
from .streams import loglog_slope, run_jobs

SOLVERS = ("pg", "greedy")
_SOLVER_ALIASES = {
    "pg": "pg",
    "projected-gradient": "pg",
    "greedy": "greedy",
    "greedy-support-swap": "greedy",
}


@dataclass(frozen=True)
class SolverSpec:
    method: str = "pg"
    max_iters: int = 3000
    max_restarts: int = 20
    step: float = 1.0
    shrink: float = 0.5
    tol: float = 1e-10
    min_step: float = 1e-16

    def __post_init__(self):
        method = _SOLVER_ALIASES.get(str(self.method).strip().lower())
        if method is None:
            raise ValueError(f"unknown solver {self.method!r} (expected pg|greedy)")
        object.__setattr__(self, "method", method)
        if self.max_iters < 1 or self.max_restarts < 0:
            raise ValueError("solver budgets must be positive")
        if self.step <= 0 or not 0 < self.shrink < 1 or self.tol < 0:
            raise ValueError("invalid step rule")


def _check_p(p: float) -> None:
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")


def empirical_risk(A: np.ndarray, y: np.ndarray, x: np.ndarray, p: float) -> float:
    """(1/N) sum_i | <a_i,x>^2 - y_i |^p."""
    _check_p(p)
    s = A @ x
    if s.shape != y.shape:
        raise ValueError("dimension mismatch between A x and y")
    return float(np.mean(np.abs(s * s - y) ** p))


def risk_gradient(A: np.ndarray, y: np.ndarray, x: np.ndarray, p: float) -> np.ndarray:
    """(2p/N) sum_i sign(r_i)|r_i|^{p-1} <a_i,x> a_i with r_i = <a_i,x>^2 - y_i.

    np.sign(0) = 0 picks the zero subgradient where a residual vanishes.
    """
    s = A @ x
    r = s * s - y
    return (2.0 * p / len(y)) * (A.T @ (np.sign(r) * np.abs(r) ** (p - 1.0) * s))


def empirical_excess_risk(A, y, w, x, p) -> float:
    """Empirical risk minus (1/N) sum |w_i|^p; needs the realized noise."""
    return empirical_risk(A, y, x, p) - float(np.mean(np.abs(w) ** p))


def acceptance_threshold(
    noise: NoiseSpec,
    signal_set: SignalSet,
    N: int,
    u: float,
    p: float,
    ell: float | None = None,
) -> float:
    """E|w|^p + u (Q_{T,N,W} - || |w|^p ||_psi1 / sqrt(N)).

    ``ell`` defaults to the analytic bound on ell(T); pass a Monte Carlo value
    to use that instead.
    """
    if u < 1:
        raise ValueError(f"u must be >= 1, got {u}")
    _check_p(p)
    ell = signal_set.width_bound() if ell is None else ell
    psi = noise.psi1_of_power(p)
    qw = QW(Q(ell, signal_set.diameter(), N), psi, N)
    return noise.abs_moment(p) + u * (qw - psi / math.sqrt(N))


def sign_error(x_hat: np.ndarray, x0: np.ndarray) -> float:
    """||x_hat - x0|| ||x_hat + x0||, blind to the global sign."""
    x_hat = np.asarray(x_hat, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x_hat.shape != x0.shape:
        raise ValueError("length mismatch")
    return float(np.linalg.norm(x_hat - x0) * np.linalg.norm(x_hat + x0))


# -- local solvers ---------------------------------------------------------------

def _normalize(x: np.ndarray) -> np.ndarray:
    nx = np.linalg.norm(x)
    return x / nx if nx > 0 else x


def _projected_gradient(A, y, x, p, project, spec: SolverSpec) -> tuple[np.ndarray, float]:
    f = empirical_risk(A, y, x, p)
    eta = spec.step
    for _ in range(spec.max_iters):
        g = risk_gradient(A, y, x, p)
        if not np.any(g):
            break
        while True:
            xn = project(x - eta * g)
            fn = empirical_risk(A, y, xn, p)
            if fn < f:
                break
            eta *= spec.shrink
            if eta < spec.min_step:
                return x, f
        decrease = f - fn
        x, f = xn, fn
        # let the step grow back after a success, never above the initial step
        eta = min(spec.step, 2.0 * eta)
        if decrease < spec.tol:
            break
    return x, f


def _set_projector(signal_set: SignalSet):
    if signal_set.sphere_constrained:
        return lambda z: _normalize(signal_set.project(z))
    return signal_set.project


def _greedy_swap(A, y, x, p, signal_set: Sparse, spec: SolverSpec) -> tuple[np.ndarray, float]:
    """Projected gradient, then single-index support swaps while the risk strictly drops.

    Swap candidates: in-support indices by increasing |x_i| against the 2k
    off-support indices with the largest gradient magnitude.
    """
    x, f = _projected_gradient(A, y, x, p, _set_projector(signal_set), spec)
    k = signal_set.k
    while True:
        supp = np.flatnonzero(x)
        if len(supp) < k:
            break
        g = risk_gradient(A, y, x, p)
        order = np.argsort(-np.abs(g), kind="stable")
        off = [j for j in order if j not in set(supp)][: 2 * k]
        improved = False
        for i in sorted(supp, key=lambda i: abs(x[i])):
            for j in off:
                cand = np.append(supp[supp != i], j)
                z0 = x[cand].copy()
                z0[-1] = 0.0
                z0 = _normalize(z0) if np.any(z0) else np.full(k, 1 / math.sqrt(k))
                z, fz = _projected_gradient(A[:, cand], y, z0, p, _normalize, spec)
                if fz < f:
                    x = np.zeros_like(x)
                    x[cand] = z
                    f = fz
                    improved = True
                    break
            if improved:
                break
        if not improved:
            break
    return x, f


def local_solve(
    instance: ProblemInstance | tuple[np.ndarray, np.ndarray],
    signal_set: SignalSet,
    p: float,
    x_init: np.ndarray,
    solver: SolverSpec = SolverSpec(),
) -> np.ndarray:
    """Descend the p-power risk from ``x_init`` inside the set; never returns a worse point."""
    _check_p(p)
    A, y = (instance.A, instance.y) if isinstance(instance, ProblemInstance) else instance
    x_init = np.asarray(x_init, dtype=float)
    if solver.method == "greedy":
        if not isinstance(signal_set, Sparse):
            raise ValueError("greedy-support-swap needs a Sparse set")
        x, f = _greedy_swap(A, y, x_init, p, signal_set, solver)
    else:
        x, f = _projected_gradient(A, y, x_init, p, _set_projector(signal_set), solver)
    if f > empirical_risk(A, y, x_init, p):
        return x_init.copy()
    return x


@dataclass(frozen=True)
class RecoveryResult:
    x_hat: np.ndarray
    risk: float
    threshold: float
    accepted: bool
    restarts_used: int
    p: float
    u: float
    error: float | None = None
    meta: dict = field(default_factory=dict)


def recover(
    instance: ProblemInstance,
    signal_set: SignalSet,
    noise: NoiseSpec,
    u: float = 1.0,
    solver: SolverSpec = SolverSpec(),
    rng: np.random.Generator | None = None,
    p: float | None = None,
    ell: float | None = None,
    c1: float = 1.0,
) -> RecoveryResult:
    """Restart ``local_solve`` from random points of T until a candidate passes the threshold.

    Each restart owns a stream spawned up front; the first accepted restart
    (lowest index) wins.  When none passes, the best-risk candidate is
    returned unaccepted.
    """
    if rng is None:
        raise ValueError("recover needs an rng for the random initial points")
    N = instance.N
    report = complexity_report(signal_set, N, noise, c1=c1, p=p)
    p = report.p
    ell_used = report.ell if ell is None else ell
    thr = acceptance_threshold(noise, signal_set, N, u, p, ell_used)
    best_x = np.zeros(instance.n)
    best_f = empirical_risk(instance.A, instance.y, best_x, p)
    accepted = False
    used = 0
    for sub in rng.spawn(solver.max_restarts):
        used += 1
        x = local_solve(instance, signal_set, p, signal_set.sample_point(sub), solver)
        f = empirical_risk(instance.A, instance.y, x, p)
        if used == 1 or f < best_f:
            best_x, best_f = x, f
        if f <= thr:
            best_x, best_f, accepted = x, f, True
            break
    return RecoveryResult(
        x_hat=best_x,
        risk=best_f,
        threshold=thr,
        accepted=accepted,
        restarts_used=used,
        p=p,
        u=u,
        error=sign_error(best_x, instance.x0),
        meta={"ell": ell_used, "ell_source": "analytic-bound" if ell is None else "given", "betaN": report.betaN},
    )


# -- sweeps ------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    N: int
    median_error: float
    q25: float
    q75: float
    accept_rate: float
    n_accepted: int


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    slope: float
    errors: dict


def error_sweep(
    signal_set: SignalSet,
    ensemble: Ensemble,
    noise: NoiseSpec,
    N_grid,
    trials: int,
    u: float,
    solver: SolverSpec,
    rng: np.random.Generator,
    threads: int = 1,
) -> SweepResult:
    """Sign-invariant error of accepted runs per N, with the log-log slope of the median.

    If no run at some N is accepted its statistics fall back to all runs
    (``n_accepted`` = 0 marks this).
    """
    Ns = [int(N) for N in N_grid]
    jobs = [(N, r) for N, sub in zip(Ns, rng.spawn(len(Ns))) for r in sub.spawn(trials)]

    def one(job):
        N, r = job
        inst_rng, solve_rng = r.spawn(2)
        inst = generate_instance(signal_set, ensemble, noise, N, inst_rng)
        res = recover(inst, signal_set, noise, u, solver, solve_rng)
        return res.accepted, res.error

    out = run_jobs(one, jobs, threads)
    rows, errors = [], {}
    for i, N in enumerate(Ns):
        chunk = out[i * trials:(i + 1) * trials]
        acc = np.array([e for a, e in chunk if a])
        errs = acc if acc.size else np.array([e for _, e in chunk])
        errors[N] = errs
        q25, med, q75 = np.quantile(errs, [0.25, 0.5, 0.75])
        rows.append(SweepRow(N, float(med), float(q25), float(q75), acc.size / trials, int(acc.size)))
    good = [r for r in rows if r.median_error > 0]
    slope = loglog_slope([r.N for r in good], [r.median_error for r in good]) if len(good) >= 2 else 0.0
    return SweepResult(rows, slope, errors)
