"""Measurement ensembles: product laws of iid mean-zero, unit-variance coordinates."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

SQRT3 = np.sqrt(3.0)
LAPLACE_SCALE = 1.0 / np.sqrt(2.0)  # Laplace(b) has variance 2 b^2


class EnsembleKind(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    LAPLACE = "laplace"

    @classmethod
    def parse(cls, name: str | "EnsembleKind") -> "EnsembleKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = "|".join(k.value for k in cls)
            raise ValueError(f"unknown ensemble {name!r} (expected {valid})") from None


_FOURTH_MOMENT = {
    EnsembleKind.GAUSSIAN: 3.0,
    EnsembleKind.RADEMACHER: 1.0,
    EnsembleKind.UNIFORM: 9.0 / 5.0,
    EnsembleKind.LAPLACE: 6.0,
}


def fourth_moment(kind: EnsembleKind | str) -> float:
    """Analytic E X^4 of one coordinate."""
    return _FOURTH_MOMENT[EnsembleKind.parse(kind)]


def is_subgaussian(kind: EnsembleKind | str) -> bool:
    return EnsembleKind.parse(kind) is not EnsembleKind.LAPLACE


@dataclass(frozen=True)
class Ensemble:
    """Isotropic product measure on R^n.

    The Laplace law is log-concave but not subgaussian; it is meant for
    small-ball and kappa experiments only.
    """

    kind: EnsembleKind
    n: int

    def __post_init__(self):
        object.__setattr__(self, "kind", EnsembleKind.parse(self.kind))
        if int(self.n) < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def fourth_moment(self) -> float:
        return fourth_moment(self.kind)

    @property
    def subgaussian(self) -> bool:
        return is_subgaussian(self.kind)

    def sample_coords(self, shape, rng: np.random.Generator) -> np.ndarray:
        kind = self.kind
        if kind is EnsembleKind.GAUSSIAN:
            return rng.standard_normal(shape)
        if kind is EnsembleKind.RADEMACHER:
            return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
        if kind is EnsembleKind.UNIFORM:
            return rng.uniform(-SQRT3, SQRT3, size=shape)
        return rng.laplace(0.0, LAPLACE_SCALE, size=shape)

    def sample_vector(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_coords(self.n, rng)

    def sample_matrix(self, N: int, rng: np.random.Generator) -> np.ndarray:
        """N x n matrix whose rows are iid draws of the ensemble."""
        if int(N) < 1:
            raise ValueError(f"row count N must be >= 1, got {N}")
        return self.sample_coords((int(N), self.n), rng)


@dataclass(frozen=True)
class IsotropyReport:
    max_deviation: float
    deviations: np.ndarray
    tol: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def isotropy_check(
    ensemble: Ensemble,
    directions: np.ndarray,
    samples: int,
    tol: float,
    rng: np.random.Generator,
    chunk: int = 20_000,
) -> IsotropyReport:
    """Compare the empirical mean of <a,t>^2 with 1 along each unit direction."""
    T = np.atleast_2d(np.asarray(directions, dtype=float))
    if T.shape[1] != ensemble.n:
        raise ValueError(f"directions must have length {ensemble.n}")
    norms = np.linalg.norm(T, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("directions must be unit vectors")
    if samples < 1000:
        raise ValueError("isotropy check needs at least 1000 samples")
    acc = np.zeros(T.shape[0])
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        a = ensemble.sample_matrix(m, rng)
        acc += np.sum((a @ T.T) ** 2, axis=0)
        done += m
    dev = np.abs(acc / samples - 1.0)
    return IsotropyReport(float(dev.max()), dev, float(tol), int(samples))


def random_directions(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((m, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def fourth_moment_mc(ensemble: Ensemble, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo E X^4 of one coordinate with its standard error."""
    x4 = ensemble.sample_coords(samples, rng) ** 4
    return float(x4.mean()), float(x4.std(ddof=1) / np.sqrt(samples))
