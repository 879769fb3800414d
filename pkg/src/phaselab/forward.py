"""Measurement model y = phi(A x0) + w and problem instances."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .complexity import psi_norm_from_moments
from .ensemble import Ensemble, EnsembleKind
from .signal_set import SignalSet
from .streams import loglog_slope, make_rng

NOISE_KINDS = ("none", "gaussian", "uniform")


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric psi_2 noise: none, Gaussian N(0, sigma^2) or uniform on [-b, b]."""

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        kind = str(self.kind).strip().lower()
        if kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise {self.kind!r} (expected {'|'.join(NOISE_KINDS)})")
        scale = float(self.scale)
        if kind == "none":
            scale = 0.0
        elif not (scale >= 0 and math.isfinite(scale)):
            raise ValueError(f"noise scale must be finite and >= 0, got {self.scale}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls("none", 0.0)

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        """'none', 'gaussian:0.1' (sigma) or 'uniform:0.5' (half-width)."""
        kind, _, value = str(text).strip().partition(":")
        if kind.strip().lower() == "none":
            return cls.none()
        if not value:
            raise ValueError(f"noise {text!r} needs a scale, e.g. gaussian:0.1")
        return cls(kind, float(value))

    def __str__(self) -> str:
        return "none" if self.is_zero else f"{self.kind}:{self.scale!r}"

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or self.scale == 0.0

    def sample(self, N: int, rng: np.random.Generator) -> np.ndarray:
        if N < 1:
            raise ValueError("N must be >= 1")
        if self.kind == "gaussian":
            return self.scale * rng.standard_normal(N)
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size=N)
        return np.zeros(N)

    def abs_moment(self, p: float) -> float:
        """E|w|^p for any p > 0."""
        if p <= 0:
            raise ValueError("p must be positive")
        if self.is_zero:
            return 0.0
        if self.kind == "gaussian":
            return self.scale**p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        return self.scale**p / (p + 1)

    def psi_norm(self, alpha: float) -> float:
        """Moment-equivalent ||w||_psi_alpha from the analytic absolute moments."""
        if self.is_zero:
            return 0.0
        return psi_norm_from_moments(self.abs_moment, alpha)

    def psi1_of_power(self, p: float) -> float:
        """|| |w|^p ||_psi1 = ||w||_psi_p^p."""
        return self.psi_norm(p) ** p


def phi(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Componentwise |<a_i, x>|^2."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    if A.ndim != 2 or A.shape[1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has length {x.shape[-1]}")
    return (A @ x) ** 2


def sample_noise(spec: NoiseSpec, N: int, rng: np.random.Generator) -> np.ndarray:
    return spec.sample(N, rng)


def noise_moment(spec: NoiseSpec, p: float) -> float:
    """E|w|^p for 1 <= p <= 2."""
    if not 1.0 <= p <= 2.0:
        raise ValueError(f"p must lie in [1, 2], got {p}")
    return spec.abs_moment(p)


@dataclass(frozen=True)
class ProblemInstance:
    A: np.ndarray
    x0: np.ndarray
    w: np.ndarray
    y: np.ndarray
    seed: int | None = None
    ensemble: str = "gaussian"
    noise: NoiseSpec = NoiseSpec()

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def generate_instance(
    signal_set: SignalSet,
    ensemble: Ensemble,
    noise: NoiseSpec,
    N: int,
    seed: int | np.random.Generator,
    allow_non_subgaussian: bool = False,
) -> ProblemInstance:
    """One phase-retrieval problem, fully determined by ``seed``."""
    if ensemble.n != signal_set.n:
        raise ValueError(f"ensemble dimension {ensemble.n} != set dimension {signal_set.n}")
    if not ensemble.subgaussian and not allow_non_subgaussian:
        raise ValueError(f"{ensemble.kind.value} ensemble is not subgaussian")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    x_rng, a_rng, w_rng = rng.spawn(3)
    x0 = signal_set.sample_point(x_rng)
    A = ensemble.sample_matrix(N, a_rng)
    w = noise.sample(N, w_rng)
    y = phi(A, x0) + w
    return ProblemInstance(
        A, x0, w, y,
        seed=seed if isinstance(seed, int) else None,
        ensemble=ensemble.kind.value,
        noise=noise,
    )


# -- text format ---------------------------------------------------------------

def _row(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def save_instance(inst: ProblemInstance, fh: TextIO, include_noise: bool = True) -> None:
    """Header ``n N ensemble noise scale seed``, then A rows, x0, y and optionally w."""
    seed = "-" if inst.seed is None else str(inst.seed)
    fh.write(f"{inst.n} {inst.N} {inst.ensemble} {inst.noise.kind} {inst.noise.scale!r} {seed}\n")
    for row in inst.A:
        fh.write(_row(row) + "\n")
    fh.write(_row(inst.x0) + "\n")
    fh.write(_row(inst.y) + "\n")
    if include_noise:
        fh.write(_row(inst.w) + "\n")


def load_instance(fh: TextIO, rtol: float = 1e-12) -> ProblemInstance:
    """Inverse of :func:`save_instance`; checks y = phi(A x0) + w when w is present."""
    lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not lines:
        raise ValueError("empty instance file")
    head = lines[0].split()
    if len(head) != 6:
        raise ValueError("header must be: n N ensemble noise scale seed")
    n, N = int(head[0]), int(head[1])
    EnsembleKind.parse(head[2])
    noise = NoiseSpec(head[3], float(head[4]))
    seed = None if head[5] == "-" else int(head[5])
    body = [np.array([float(x) for x in ln.split()]) for ln in lines[1:]]
    if len(body) not in (N + 2, N + 3):
        raise ValueError(f"expected {N + 2} or {N + 3} data lines, got {len(body)}")
    A = np.array(body[:N])
    if A.shape != (N, n):
        raise ValueError(f"A has shape {A.shape}, header says ({N}, {n})")
    x0, y = body[N], body[N + 1]
    if x0.shape != (n,) or y.shape != (N,):
        raise ValueError("x0 or y has the wrong length")
    if len(body) == N + 3:
        w = body[N + 2]
        if w.shape != (N,):
            raise ValueError("w has the wrong length")
        expect = phi(A, x0) + w
        if not np.allclose(y, expect, rtol=rtol, atol=rtol):
            raise ValueError("inconsistent instance: y != phi(A x0) + w")
    else:
        w = y - phi(A, x0)
    return ProblemInstance(A, x0, w, y, seed=seed, ensemble=head[2], noise=noise)


# -- noise average concentration -------------------------------------------------

@dataclass(frozen=True)
class MomentDeviationResult:
    N: np.ndarray
    quantile_dev: np.ndarray
    slope: float


def moment_deviation_curve(
    noise: NoiseSpec,
    p: float,
    N_grid,
    trials: int,
    rng: np.random.Generator,
    quantile: float = 0.9,
) -> MomentDeviationResult:
    """Quantile over trials of |(1/N) sum |w_i|^p - E|w|^p| for each N, with log-log slope."""
    target = noise.abs_moment(p)
    Ns = np.asarray(list(N_grid), dtype=int)
    out = []
    for N, sub in zip(Ns, rng.spawn(len(Ns))):
        w = np.abs(noise.sample(int(N) * trials, sub).reshape(trials, int(N))) ** p
        out.append(np.quantile(np.abs(w.mean(axis=1) - target), quantile))
    q = np.array(out)
    return MomentDeviationResult(Ns, q, loglog_slope(Ns, q))
