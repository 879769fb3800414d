"""Empirical stability of x -> phi(Ax) over a set, and the linear-measurement baseline.

The infimum over T is replaced by a minimum over sampled pairs.  Pair streams
are enriched with pairs that share a support and with nearly equal pairs
(s, s + eps u), which random pairs alone rarely produce.  Nothing here is a
certified lower bound; the arg-min pair is reported so it can be audited.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .complexity import abs_product_moments, kappa_gaussian, rho
from .ensemble import Ensemble, EnsembleKind
from .signal_set import DegenerateSetError, Finite, PairSample, SignalSet, make_pair
from .streams import run_jobs

NEAR_EPS_RANGE = (1e-3, 1e-1)


def z_stat(A: np.ndarray, pair: PairSample) -> float:
    """(1/N) sum_i |<a_i, v><a_i, w>|."""
    return float(np.mean(np.abs((A @ pair.v) * (A @ pair.w))))


def z_stats(A: np.ndarray, V: np.ndarray, W: np.ndarray) -> np.ndarray:
    """z statistic for each row pair of V, W."""
    return np.mean(np.abs((A @ V.T) * (A @ W.T)), axis=0)


def _enriched_pair(signal_set: SignalSet, i: int, rng: np.random.Generator) -> PairSample | None:
    # i % 4: 0, 1 -> independent pair; 2 -> shared support; 3 -> nearly equal
    s = signal_set.sample_point(rng)
    mode = i % 4
    if mode < 2 or isinstance(signal_set, Finite):
        t = signal_set.sample_point(rng)
    else:
        supp = np.flatnonzero(s)
        t = signal_set.sample_on_support(supp, rng)
        if mode == 3:
            lo, hi = np.log(NEAR_EPS_RANGE)
            t = s + math.exp(rng.uniform(lo, hi)) * t
            t /= np.linalg.norm(t)
    return make_pair(s, t)


def sample_pairs(
    signal_set: SignalSet, M: int, rng: np.random.Generator, enrich: bool = True, max_tries: int = 1000
) -> list[PairSample]:
    """M pairs from one sequential stream, so a longer run extends a shorter one."""
    pairs = []
    for i in range(M):
        for _ in range(max_tries):
            pair = _enriched_pair(signal_set, i if enrich else 0, rng)
            if pair is not None:
                break
        else:
            raise DegenerateSetError(f"no non-antipodal pair found in {max_tries} tries")
        pairs.append(pair)
    return pairs


def _stack(pairs: list[PairSample]) -> tuple[np.ndarray, np.ndarray]:
    return np.array([p.v for p in pairs]), np.array([p.w for p in pairs])


@dataclass(frozen=True)
class StabilityReport:
    """Sampled stability constant for one matrix A (N-normalized z scale)."""

    constant: float
    argmin: PairSample
    argmin_index: int
    N: int
    pairs: int
    z: np.ndarray

    @property
    def l1_constant(self) -> float:
        """Constant C in ||phi(At) - phi(As)||_1 >= C ||s-t|| ||s+t||."""
        return self.constant * self.N


def empirical_stability(
    signal_set: SignalSet, A: np.ndarray, M: int, rng: np.random.Generator, enrich: bool = True
) -> StabilityReport:
    if M < 1:
        raise ValueError("need at least one pair")
    pairs = sample_pairs(signal_set, M, rng, enrich)
    V, W = _stack(pairs)
    z = z_stats(A, V, W)
    i = int(np.argmin(z))
    return StabilityReport(float(z[i]), pairs[i], i, A.shape[0], M, z)


def linear_stability(
    signal_set: SignalSet, A: np.ndarray, M: int, rng: np.random.Generator, enrich: bool = True
) -> float:
    """min over pairs of ||A(s - t)||_2 / (sqrt(N) ||s - t||_2)."""
    V, _ = _stack(sample_pairs(signal_set, M, rng, enrich))
    return float(np.min(np.linalg.norm(A @ V.T, axis=0)) / math.sqrt(A.shape[0]))


def pair_kappas(
    ensemble: Ensemble,
    V: np.ndarray,
    W: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    method: str = "auto",
) -> np.ndarray:
    """kappa for each pair: exact for Gaussian ('auto'/'exact'), else shared-sample Monte Carlo."""
    if method == "exact" or (method == "auto" and ensemble.kind is EnsembleKind.GAUSSIAN):
        if ensemble.kind is not EnsembleKind.GAUSSIAN:
            raise ValueError("exact kappa is only available for the Gaussian ensemble")
        return kappa_gaussian(V, W)
    if method not in ("auto", "mc"):
        raise ValueError(f"unknown kappa method {method!r}")
    return abs_product_moments(ensemble, V, W, samples, rng, powers=(1,))[1] / samples


def deviation_sup(
    signal_set: SignalSet,
    ensemble: Ensemble,
    N: int,
    M: int,
    samples: int,
    rng: np.random.Generator,
    kappa: str = "auto",
) -> float:
    """max over M sampled pairs of |z_stat - kappa| for a fresh A with N rows."""
    pair_rng, a_rng, k_rng = rng.spawn(3)
    V, W = _stack(sample_pairs(signal_set, M, pair_rng))
    A = ensemble.sample_matrix(N, a_rng)
    return float(np.max(np.abs(z_stats(A, V, W) - pair_kappas(ensemble, V, W, samples, k_rng, kappa))))


@dataclass(frozen=True)
class DeviationRow:
    N: int
    rho: float
    mean_dev: float
    max_dev: float


def deviation_curve(
    signal_set: SignalSet,
    ensemble: Ensemble,
    N_grid,
    trials: int,
    M: int,
    samples: int,
    rng: np.random.Generator,
    kappa: str = "auto",
    threads: int = 1,
) -> list[DeviationRow]:
    Ns = [int(N) for N in N_grid]
    jobs = [(N, r) for N, sub in zip(Ns, rng.spawn(len(Ns))) for r in sub.spawn(trials)]
    devs = run_jobs(lambda j: deviation_sup(signal_set, ensemble, j[0], M, samples, j[1], kappa), jobs, threads)
    E = signal_set.ell_bound()
    rows = []
    for i, N in enumerate(Ns):
        d = np.array(devs[i * trials:(i + 1) * trials])
        rows.append(DeviationRow(N, rho(E, N), float(d.mean()), float(d.max())))
    return rows


# -- curves -----------------------------------------------------------------------

def trial_constants(
    signal_set: SignalSet, ensemble: Ensemble, N: int, M: int, rng: np.random.Generator
) -> tuple[float, float]:
    """(quadratic, linear) sampled constants for one fresh A and one fresh pair set."""
    pair_rng, a_rng = rng.spawn(2)
    V, W = _stack(sample_pairs(signal_set, M, pair_rng))
    A = ensemble.sample_matrix(N, a_rng)
    AV = A @ V.T
    quad = float(np.min(np.mean(np.abs(AV * (A @ W.T)), axis=0)))
    lin = float(np.min(np.linalg.norm(AV, axis=0)) / math.sqrt(N))
    return quad, lin


@dataclass(frozen=True)
class CurveRow:
    N: int
    rho: float
    mean_const: float
    min_const: float
    success_frac: float


def constants_grid(
    signal_set: SignalSet,
    ensemble: Ensemble,
    N_grid,
    trials: int,
    M: int,
    rng: np.random.Generator,
    threads: int = 1,
) -> dict[int, np.ndarray]:
    """N -> array (trials, 2) of (quadratic, linear) constants."""
    Ns = [int(N) for N in N_grid]
    jobs = [(N, r) for N, sub in zip(Ns, rng.spawn(len(Ns))) for r in sub.spawn(trials)]
    vals = run_jobs(lambda j: trial_constants(signal_set, ensemble, j[0], M, j[1]), jobs, threads)
    arr = np.array(vals).reshape(len(Ns), trials, 2)
    return {N: arr[i] for i, N in enumerate(Ns)}


def curve_rows(signal_set: SignalSet, consts: dict[int, np.ndarray], threshold: float) -> list[CurveRow]:
    E = signal_set.ell_bound()
    return [
        CurveRow(N, rho(E, N), float(c.mean()), float(c.min()), float(np.mean(c >= threshold)))
        for N, c in consts.items()
    ]


def stability_curve(
    signal_set: SignalSet,
    ensemble: Ensemble,
    N_grid,
    trials: int,
    M: int,
    threshold: float,
    rng: np.random.Generator,
    certifier: str = "quadratic",
    threads: int = 1,
) -> list[CurveRow]:
    """Per N: mean and min sampled constant and the fraction of trials reaching ``threshold``."""
    col = {"quadratic": 0, "linear": 1}[certifier]
    consts = constants_grid(signal_set, ensemble, N_grid, trials, M, rng, threads)
    return curve_rows(signal_set, {N: c[:, col] for N, c in consts.items()}, threshold)


def first_success(rows: list[CurveRow], level: float = 0.9) -> int | None:
    """Smallest N whose success fraction reaches ``level``."""
    for row in sorted(rows, key=lambda r: r.N):
        if row.success_frac >= level:
            return row.N
    return None


@dataclass(frozen=True)
class LinearComparison:
    quad_threshold: float
    lin_threshold: float
    quadratic: list[CurveRow]
    linear: list[CurveRow]
    quad_first: int | None
    lin_first: int | None

    @property
    def ratio(self) -> float:
        if self.quad_first is None or self.lin_first is None:
            return math.inf
        a, b = self.quad_first, self.lin_first
        return max(a, b) / min(a, b)


def linear_compare(
    signal_set: SignalSet,
    ensemble: Ensemble,
    N_grid,
    trials: int,
    M: int,
    calibration_N: int,
    rng: np.random.Generator,
    level: float = 0.9,
    threads: int = 1,
) -> LinearComparison:
    """Quadratic vs linear certifiers, each thresholded at half its mean constant at ``calibration_N``."""
    cal_rng, grid_rng = rng.spawn(2)
    cal = constants_grid(signal_set, ensemble, [calibration_N], trials, M, cal_rng, threads)[int(calibration_N)]
    tq, tl = cal[:, 0].mean() / 2.0, cal[:, 1].mean() / 2.0
    consts = constants_grid(signal_set, ensemble, N_grid, trials, M, grid_rng, threads)
    quad = curve_rows(signal_set, {N: c[:, 0] for N, c in consts.items()}, tq)
    lin = curve_rows(signal_set, {N: c[:, 1] for N, c in consts.items()}, tl)
    return LinearComparison(float(tq), float(tl), quad, lin, first_success(quad, level), first_success(lin, level))
