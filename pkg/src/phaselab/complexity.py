"""Complexity parameters (E, rho, Q, beta_N, p) and kappa / small-ball / psi-norm estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble
from .signal_set import PairSample, SignalSet

UNIT_TOL = 1e-9
PSI_MOMENTS = (1, 2, 4, 6, 8, 10)


# -- scalar parameters --------------------------------------------------------

def rho(E: float, N: int) -> float:
    """rho_{T,N} = E/sqrt(N) + E^2/N."""
    if E < 0 or N < 1:
        raise ValueError("need E >= 0 and N >= 1")
    return E / math.sqrt(N) + E * E / N


def Q(ell: float, dT: float, N: int) -> float:
    """Q_{T,N} = d(T) ell(T)/sqrt(N) + ell(T)^2/N."""
    if ell < 0 or dT < 0 or N < 1:
        raise ValueError("need ell, dT >= 0 and N >= 1")
    return dT * ell / math.sqrt(N) + ell * ell / N


def QW(q: float, psi1_wp: float, N: int) -> float:
    """Q_{T,N,W} = Q_{T,N} + || |w|^p ||_psi1 / sqrt(N)."""
    if q < 0 or psi1_wp < 0 or N < 1:
        raise ValueError("need nonnegative inputs and N >= 1")
    return q + psi1_wp / math.sqrt(N)


def beta_and_p(psi1_w: float, dT: float, ell: float, N: int, c1: float = 1.0) -> tuple[float, float]:
    """beta_N = max(c1((||w||_psi1 + d^2) log N + ell^2), e) and p = 1 + 1/log beta_N."""
    if N < 2:
        raise ValueError("beta_N needs N >= 2")
    if psi1_w < 0 or dT < 0 or ell < 0 or c1 <= 0:
        raise ValueError("need nonnegative inputs and c1 > 0")
    beta = max(c1 * ((psi1_w + dT * dT) * math.log(N) + ell * ell), math.e)
    return beta, 1.0 + 1.0 / math.log(beta)


@dataclass(frozen=True)
class ComplexityReport:
    N: int
    E: float
    rho: float
    ell: float
    dT: float
    Q: float
    QW: float
    betaN: float
    p: float
    source: dict = field(default_factory=dict)


def complexity_report(
    signal_set: SignalSet,
    N: int,
    noise=None,
    *,
    c1: float = 1.0,
    p: float | None = None,
    monte_carlo: int = 0,
    rng: np.random.Generator | None = None,
) -> ComplexityReport:
    """Every scalar parameter of a configured problem.

    ``monte_carlo > 0`` replaces the analytic E and ell(T) bounds by Monte
    Carlo estimates over that many Gaussian draws.  ``p`` overrides the
    beta_N-derived exponent.
    """
    from .forward import NoiseSpec

    noise = noise if noise is not None else NoiseSpec.none()
    if monte_carlo:
        if rng is None:
            raise ValueError("Monte Carlo complexity needs an rng")
        E, _ = signal_set.ell_estimate(monte_carlo, rng)
        ell, _ = signal_set.width_estimate(monte_carlo, rng)
        src = "monte-carlo"
    else:
        E, ell = signal_set.ell_bound(), signal_set.width_bound()
        src = "analytic-bound"
    dT = signal_set.diameter()
    beta, p_star = beta_and_p(noise.psi_norm(1.0), dT, ell, N, c1)
    p = p_star if p is None else p
    q = Q(ell, dT, N)
    return ComplexityReport(
        N=N,
        E=E,
        rho=rho(E, N),
        ell=ell,
        dT=dT,
        Q=q,
        QW=QW(q, noise.psi1_of_power(p), N),
        betaN=beta,
        p=p,
        source={"E": src, "ell": src, "superset": "U_2k/W_2k for T_-, T_+"},
    )


# -- kappa ---------------------------------------------------------------------

def _check_unit(*vs: np.ndarray) -> None:
    for v in vs:
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ValueError("kappa inputs must be unit vectors")


def abs_product_moments(
    ensemble: Ensemble,
    V: np.ndarray,
    W: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    powers=(1, 2),
    chunk: int = 20_000,
) -> dict[int, np.ndarray]:
    """Per-pair sums of |<a,v><a,w>|^r over one shared batch of ``samples`` draws of a."""
    V = np.atleast_2d(V)
    W = np.atleast_2d(W)
    sums = {r: np.zeros(V.shape[0]) for r in powers}
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        a = ensemble.sample_matrix(m, rng)
        z = np.abs((a @ V.T) * (a @ W.T))
        for r in powers:
            sums[r] += np.sum(z**r, axis=0)
        done += m
    return sums


def kappa_mc(
    ensemble: Ensemble, v: np.ndarray, w: np.ndarray, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo kappa(v, w) = E|<a,v><a,w>| with its standard error."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_unit(v, w)
    if samples < 1000:
        raise ValueError("kappa_mc needs at least 1000 samples")
    s = abs_product_moments(ensemble, v, w, samples, rng)
    mean = s[1][0] / samples
    var = max(s[2][0] / samples - mean * mean, 0.0) * samples / (samples - 1)
    return float(mean), float(math.sqrt(var / samples))


def kappa_gaussian(v: np.ndarray, w: np.ndarray) -> np.ndarray | float:
    """Exact kappa for the standard Gaussian ensemble.

    <a,v>, <a,w> are standard normals with correlation r = <v,w>, and
    E|XY| = (2/pi)(sqrt(1 - r^2) + r arcsin r).
    """
    r = np.clip(np.sum(np.asarray(v) * np.asarray(w), axis=-1), -1.0, 1.0)
    return 2.0 / math.pi * (np.sqrt(1.0 - r * r) + r * np.arcsin(r))


def second_moment_product(v: np.ndarray, w: np.ndarray, fourth: float | Ensemble) -> float:
    """Closed-form E|<a,v><a,w>|^2 for a product ensemble with coordinate moment E X^4."""
    if isinstance(fourth, Ensemble):
        fourth = fourth.fourth_moment
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_unit(v, w)
    vw2 = float(np.sum(v * v * w * w))
    return 1.0 + 2.0 * float(v @ w) ** 2 - 2.0 * vw2 + (fourth - 1.0) * vw2


def paley_zygmund_bound(l2: float, l4: float, grid=None) -> float:
    """max over lambda of lambda ||Z||_2 [(1 - lambda^2)(||Z||_2/||Z||_4)^2]^2.

    Lower bound on E|Z| from E|Z| >= lambda ||Z||_2 Pr(|Z| > lambda ||Z||_2)
    with the (p, q) = (2, 4) Paley-Zygmund probability estimate.
    """
    if l2 <= 0:
        return 0.0
    if l4 <= 0:
        raise ValueError("degenerate ||Z||_4 = 0 with ||Z||_2 > 0")
    lam = np.linspace(0.01, 0.99, 99) if grid is None else np.asarray(grid)
    c2 = min(l2 / l4, 1.0) ** 2  # Lyapunov: ||Z||_2 <= ||Z||_4
    return float(np.max(lam * l2 * ((1.0 - lam**2) * c2) ** 2))


def kappa_pz_lower(
    v: np.ndarray, w: np.ndarray, ensemble: Ensemble, samples: int, rng: np.random.Generator
) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_unit(v, w)
    if samples < 1000:
        raise ValueError("kappa_pz_lower needs at least 1000 samples")
    # all ensembles here are product laws; rounding can leave a tiny negative
    m2 = second_moment_product(v, w, ensemble)
    if m2 <= 1e-12:
        return 0.0
    l2 = math.sqrt(m2)
    s = abs_product_moments(ensemble, v, w, samples, rng, powers=(4,))
    l4 = (s[4][0] / samples) ** 0.25
    return paley_zygmund_bound(l2, l4)


@dataclass(frozen=True)
class KappaReport:
    mc_estimate: float
    se: float
    pz_lower: float
    second_moment: float
    small_ball_c: float
    argmin: PairSample
    argmin_index: int
    pairs: int
    estimates: np.ndarray


def kappa_T(
    signal_set: SignalSet,
    ensemble: Ensemble,
    pairs: int,
    samples: int,
    rng: np.random.Generator,
    small_ball_directions: int = 20,
) -> KappaReport:
    """Sampled minimum of kappa(s - t, s + t) over ``pairs`` pairs of T.

    Pairs come from one stream and kappa uses one shared batch of draws of a,
    so a longer run extends a shorter one and the minimum can only drop.
    """
    if pairs < 1:
        raise ValueError("need at least one pair")
    pair_rng, sample_rng, pz_rng, sb_rng = rng.spawn(4)
    ps = [signal_set.sample_pair(pair_rng) for _ in range(pairs)]
    V = np.array([p.v for p in ps])
    W = np.array([p.w for p in ps])
    s = abs_product_moments(ensemble, V, W, samples, sample_rng)
    mean = s[1] / samples
    var = np.maximum(s[2] / samples - mean**2, 0.0) * samples / (samples - 1)
    i = int(np.argmin(mean))
    best = ps[i]
    sb = small_ball_estimate(ensemble, small_ball_directions, DEFAULT_EPS_GRID, samples, sb_rng)
    return KappaReport(
        mc_estimate=float(mean[i]),
        se=float(math.sqrt(var[i] / samples)),
        pz_lower=kappa_pz_lower(best.v, best.w, ensemble, samples, pz_rng),
        second_moment=second_moment_product(best.v, best.w, ensemble),
        small_ball_c=sb.constant,
        argmin=best,
        argmin_index=i,
        pairs=pairs,
        estimates=mean,
    )


# -- small ball ---------------------------------------------------------------

DEFAULT_EPS_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


@dataclass(frozen=True)
class SmallBallReport:
    constant: float
    eps: float
    direction: int
    ratios: np.ndarray  # directions x eps

    @property
    def kappa_lower(self) -> float:
        """kappa >= eps^2/2 at eps = 1/(4c), from the small-ball argument."""
        if self.constant <= 0:
            return float("inf")
        return (1.0 / (4.0 * self.constant)) ** 2 / 2.0


def small_ball_estimate(
    ensemble: Ensemble,
    directions,
    eps_grid=DEFAULT_EPS_GRID,
    samples: int = 100_000,
    rng: np.random.Generator | None = None,
    chunk: int = 20_000,
) -> SmallBallReport:
    """max over directions and eps of Pr(|<a,t>| <= eps)/eps.

    ``directions`` is either an array of unit vectors or a count of random ones.
    """
    if rng is None:
        raise ValueError("small_ball_estimate needs an rng")
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(eps > 1):
        raise ValueError("eps grid must lie in (0, 1]")
    if np.isscalar(directions):
        from .ensemble import random_directions

        T = random_directions(ensemble.n, int(directions), rng)
    else:
        T = np.atleast_2d(np.asarray(directions, dtype=float))
        T = T / np.linalg.norm(T, axis=1, keepdims=True)
    counts = np.zeros((T.shape[0], eps.size))
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        proj = np.abs(ensemble.sample_matrix(m, rng) @ T.T)
        counts += np.sum(proj[:, :, None] <= eps[None, None, :], axis=0)
        done += m
    ratios = counts / samples / eps[None, :]
    j, e = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    return SmallBallReport(float(ratios[j, e]), float(eps[e]), int(j), ratios)


# -- psi norms ---------------------------------------------------------------

def psi_norm_from_moments(abs_moment, alpha: float) -> float:
    """max over p in {1,2,4,6,8,10} of (E|X|^p)^{1/p} / p^{1/alpha}."""
    if not 1.0 <= alpha <= 2.0:
        raise ValueError(f"alpha must lie in [1, 2], got {alpha}")
    return max(abs_moment(p) ** (1.0 / p) / p ** (1.0 / alpha) for p in PSI_MOMENTS)


def psi_norm_estimate(samples, alpha: float, min_samples: int = 10_000) -> float:
    """Moment-equivalent psi_alpha norm estimate from a sample of X."""
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    scale = x.max()
    if scale == 0.0:
        return 0.0
    y = x / scale  # keep x^10 in range
    return float(scale * psi_norm_from_moments(lambda p: np.mean(y**p), alpha))
