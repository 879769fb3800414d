"""Input sets T, their normalized difference/sum sets, and Gaussian complexity tools.

Two Gaussian complexities appear and are kept apart:

* ``E`` -- the expected supremum of <g, v> over T_- and T_+.  For the sparse
  and block-sparse sets this is computed on the tractable supersets U_2k and
  W_2k.  See :meth:`SignalSet.sup_gauss`, :meth:`SignalSet.ell_bound`.
* ``ell(T)`` -- the expected supremum of |<g, t>| over T itself, used by the
  noisy-recovery threshold.  See :meth:`SignalSet.sup_T`,
  :meth:`SignalSet.width_bound`.

All analytic bounds have their unspecified absolute constants set to 1, so
they hold only up to absolute constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEGENERATE_TOL = 1e-12


class DegenerateSetError(ValueError):
    """Raised when a set cannot produce a pair with s != +-t."""


@dataclass(frozen=True)
class PairSample:
    s: np.ndarray
    t: np.ndarray
    v: np.ndarray  # (s - t) / ||s - t||
    w: np.ndarray  # (s + t) / ||s + t||
    minus_norm: float
    plus_norm: float


def make_pair(s: np.ndarray, t: np.ndarray) -> PairSample | None:
    """Normalized difference/sum of ``s`` and ``t``; None when s = +-t numerically."""
    d = s - t
    p = s + t
    dn = float(np.linalg.norm(d))
    pn = float(np.linalg.norm(p))
    if dn <= DEGENERATE_TOL or pn <= DEGENERATE_TOL:
        return None
    return PairSample(s, t, d / dn, p / pn, dn, pn)


def _top_sum_sq(values: np.ndarray, m: int) -> np.ndarray:
    """Sum of the m largest entries of ``values`` along the last axis."""
    m = min(m, values.shape[-1])
    part = np.partition(values, values.shape[-1] - m, axis=-1)[..., -m:]
    return part.sum(axis=-1)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class SignalSet:
    """Base class; subclasses fix the structure of T."""

    n: int
    sphere_constrained = True
    name = "set"

    # sampling -------------------------------------------------------------
    def sample_points(self, m: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_points(1, rng)[0]

    def sample_on_support(self, support: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Unit vector with Gaussian entries on ``support`` (stays inside T)."""
        x = np.zeros(self.n)
        x[support] = rng.standard_normal(len(support))
        return x / np.linalg.norm(x)

    def sample_pair(self, rng: np.random.Generator, max_tries: int = 1000) -> PairSample:
        """Rejection-sample s, t in T with s != +-t."""
        for _ in range(max_tries):
            s, t = self.sample_points(2, rng)
            pair = make_pair(s, t)
            if pair is not None:
                return pair
        raise DegenerateSetError(f"no non-antipodal pair found in {max_tries} tries")

    # geometry ---------------------------------------------------------------
    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diameter(self) -> float:
        return 1.0

    def _check_g(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.n:
            raise ValueError(f"Gaussian vector must have length {self.n}, got {g.shape[-1]}")
        return g

    def sup_gauss(self, g: np.ndarray) -> np.ndarray | float:
        """sup of <g, v> over the tractable superset of T_- and T_+."""
        raise NotImplementedError

    def sup_T(self, g: np.ndarray) -> np.ndarray | float:
        """sup of |<g, t>| over T."""
        raise NotImplementedError

    # complexity -------------------------------------------------------------
    def ell_bound(self) -> float:
        """Analytic bound on E (sup over T_-, T_+), constants set to 1."""
        raise NotImplementedError

    def width_bound(self) -> float:
        """Analytic bound on ell(T) = E sup_T |<g, t>|, constants set to 1."""
        raise NotImplementedError

    def covering_bound(self, eps: float) -> float:
        """Bound on log N(T, eps)."""
        if not 0.0 < eps < 0.5:
            raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
        return self._covering_bound(eps)

    def _covering_bound(self, eps: float) -> float:
        raise NotImplementedError

    def ell_estimate(self, m: int, rng: np.random.Generator) -> tuple[float, float]:
        """Monte Carlo E with standard error, over m Gaussian draws."""
        return self._mc(self.sup_gauss, m, rng)

    def width_estimate(self, m: int, rng: np.random.Generator) -> tuple[float, float]:
        """Monte Carlo ell(T) with standard error."""
        return self._mc(self.sup_T, m, rng)

    def _mc(self, fn, m: int, rng: np.random.Generator, chunk: int = 10_000):
        if m < 100:
            raise ValueError(f"need at least 100 Monte Carlo draws, got {m}")
        vals = []
        done = 0
        while done < m:
            c = min(chunk, m - done)
            vals.append(np.atleast_1d(fn(rng.standard_normal((c, self.n)))))
            done += c
        v = np.concatenate(vals)
        return float(v.mean()), float(v.std(ddof=1) / np.sqrt(m))

    def describe(self) -> dict:
        return {"set": self.name, "n": self.n, "k": 0, "d": 0}


@dataclass(frozen=True, eq=False)
class FullSphere(SignalSet):
    n: int
    name = "sphere"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")

    def sample_points(self, m, rng):
        return _normalize_rows(rng.standard_normal((m, self.n)))

    def project(self, x):
        return np.asarray(x, dtype=float).copy()

    def sup_gauss(self, g):
        return np.linalg.norm(self._check_g(g), axis=-1)

    sup_T = sup_gauss

    def ell_bound(self):
        return math.sqrt(self.n)

    width_bound = ell_bound

    def _covering_bound(self, eps):
        return self.n * math.log(5.0 / eps)


@dataclass(frozen=True, eq=False)
class Sparse(SignalSet):
    """Unit vectors with at most k nonzero coordinates, 1 <= k <= n/4."""

    n: int
    k: int
    name = "sparse"

    def __post_init__(self):
        if not (1 <= self.k and 4 * self.k <= self.n):
            raise ValueError(f"sparse set needs 1 <= k <= n/4, got n={self.n}, k={self.k}")

    def sample_points(self, m, rng):
        supp = np.argsort(rng.random((m, self.n)), axis=1)[:, : self.k]
        x = np.zeros((m, self.n))
        np.put_along_axis(x, supp, rng.standard_normal((m, self.k)), axis=1)
        return _normalize_rows(x)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        # stable sort keeps ties deterministic (lowest index wins)
        idx = np.argsort(-np.abs(x), kind="stable")[: self.k]
        out[idx] = x[idx]
        return out

    def sup_gauss(self, g):
        return np.sqrt(_top_sum_sq(self._check_g(g) ** 2, 2 * self.k))

    def sup_T(self, g):
        return np.sqrt(_top_sum_sq(self._check_g(g) ** 2, self.k))

    def ell_bound(self):
        return math.sqrt(2 * self.k * math.log(math.e * self.n / self.k))

    def width_bound(self):
        return math.sqrt(self.k * math.log(math.e * self.n / self.k))

    def _covering_bound(self, eps):
        return self.k * math.log(math.e * self.n / self.k) + self.k * math.log(5.0 / eps)

    def describe(self):
        return {"set": self.name, "n": self.n, "k": self.k, "d": 1}


@dataclass(frozen=True, eq=False)
class BlockSparse(SignalSet):
    """Unit vectors supported on at most k of the n/d contiguous blocks of size d."""

    n: int
    d: int
    k: int
    name = "block"

    def __post_init__(self):
        if self.d < 1 or self.n % self.d:
            raise ValueError(f"block size d={self.d} must divide n={self.n}")
        if not 1 <= self.k <= self.n // self.d:
            raise ValueError(f"need 1 <= k <= n/d, got k={self.k}")

    @property
    def blocks(self) -> int:
        return self.n // self.d

    def block_norms_sq(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x**2).reshape(*x.shape[:-1], self.blocks, self.d).sum(axis=-1)

    def sample_points(self, m, rng):
        chosen = np.argsort(rng.random((m, self.blocks)), axis=1)[:, : self.k]
        mask = np.zeros((m, self.blocks), dtype=bool)
        np.put_along_axis(mask, chosen, True, axis=1)
        mask = np.repeat(mask, self.d, axis=1)
        x = np.where(mask, rng.standard_normal((m, self.n)), 0.0)
        return _normalize_rows(x)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        keep = np.argsort(-self.block_norms_sq(x), kind="stable")[: self.k]
        mask = np.zeros(self.blocks, dtype=bool)
        mask[keep] = True
        return np.where(np.repeat(mask, self.d), x, 0.0)

    def sup_gauss(self, g):
        g = self._check_g(g)
        return np.sqrt(_top_sum_sq(self.block_norms_sq(g), 2 * self.k))

    def sup_T(self, g):
        g = self._check_g(g)
        return np.sqrt(_top_sum_sq(self.block_norms_sq(g), self.k))

    def _block_bound(self, k: int) -> float:
        k = min(k, self.blocks)
        return math.sqrt(k) * (math.sqrt(max(math.log(math.e * self.n / (self.d * k)), 0.0)) + math.sqrt(self.d))

    def ell_bound(self):
        return self._block_bound(2 * self.k)

    def width_bound(self):
        return self._block_bound(self.k)

    def _covering_bound(self, eps):
        return self.k * math.log(math.e * self.n / (self.d * self.k)) + self.d * self.k * math.log(5.0 / eps)

    def describe(self):
        return {"set": self.name, "n": self.n, "k": self.k, "d": self.d}


class Finite(SignalSet):
    """An explicit list of nonzero vectors (not necessarily unit norm)."""

    sphere_constrained = False
    name = "finite"

    def __init__(self, points: Sequence[Sequence[float]] | np.ndarray):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if P.shape[0] < 2:
            raise ValueError("finite set needs at least two points")
        if np.any(np.linalg.norm(P, axis=1) == 0):
            raise ValueError("finite set points must be nonzero")
        if len({tuple(r) for r in P}) < 2:
            raise ValueError("finite set needs at least two distinct points")
        self.points = P
        self.n = P.shape[1]
        self._pairs = self._pair_directions()

    def __len__(self):
        return self.points.shape[0]

    def _pair_directions(self) -> np.ndarray:
        rows = []
        P = self.points
        for i in range(len(P)):
            for j in range(i + 1, len(P)):
                for vec in (P[i] - P[j], P[i] + P[j]):
                    nv = np.linalg.norm(vec)
                    if nv > DEGENERATE_TOL:
                        rows.append(vec / nv)
        return np.array(rows).reshape(-1, self.n)

    def sample_points(self, m, rng):
        return self.points[rng.integers(0, len(self), size=m)].copy()

    def sample_on_support(self, support, rng):
        raise NotImplementedError("finite sets have no support structure")

    def project(self, x):
        x = np.asarray(x, dtype=float)
        if not np.any(x):
            raise ValueError("cannot project the zero vector onto a finite set")
        dist = np.linalg.norm(self.points - x, axis=1)
        return self.points[int(np.argmin(dist))].copy()  # argmin: lowest index on ties

    def diameter(self):
        return float(np.linalg.norm(self.points, axis=1).max())

    def sup_gauss(self, g):
        g = self._check_g(g)
        return np.abs(g @ self._pairs.T).max(axis=-1)

    def sup_T(self, g):
        g = self._check_g(g)
        return np.abs(g @ self.points.T).max(axis=-1)

    def ell_bound(self):
        # normalized pairs: at most |T|^2 unit vectors
        return math.sqrt(2.0 * math.log(len(self) ** 2))

    def width_bound(self):
        return math.sqrt(2.0 * math.log(2 * len(self))) * self.diameter()

    def _covering_bound(self, eps):
        return math.log(len(self))

    def describe(self):
        return {"set": self.name, "n": self.n, "k": len(self), "d": 0}


SET_KINDS = ("sphere", "sparse", "block", "finite")


def load_points(path) -> np.ndarray:
    """Whitespace-separated decimal vectors, one per line; blank and # lines skipped."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.split()])
    if len({len(r) for r in rows}) > 1:
        raise ValueError(f"{path}: rows have inconsistent lengths")
    return np.array(rows)


def make_set(kind: str, n: int = 0, k: int = 0, d: int = 0, points=None) -> SignalSet:
    kind = kind.strip().lower()
    if kind == "sphere":
        return FullSphere(n)
    if kind == "sparse":
        return Sparse(n, k)
    if kind == "block":
        return BlockSparse(n, d, k)
    if kind == "finite":
        if points is None:
            raise ValueError("finite set requires points")
        if isinstance(points, (str, bytes)) or hasattr(points, "__fspath__"):
            points = load_points(points)
        return Finite(points)
    raise ValueError(f"unknown set {kind!r} (expected {'|'.join(SET_KINDS)})")
