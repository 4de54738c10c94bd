"""Compact convex feasible sets, Bregman divergences, and proximal steps.

Points are flat numpy vectors; callers flatten matrix-valued decision
variables before projecting.  Each set supports Euclidean projection,
membership tests, a support oracle max_{y in set} <v, y> (used for exact
duality-gap evaluation on skew problems), and feasible sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class FeasibleSet:
    dimension: int

    kind = "abstract"

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(x - self.project(x)) <= tol * (1.0 + np.linalg.norm(x)))

    def support(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        """max_{y in set} <v, y> and a maximizer."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def diameter(self) -> float:
        """sup ||x - y||_2 over the set."""
        raise NotImplementedError

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dimension},)")
        return x


@dataclass(frozen=True)
class Unconstrained(FeasibleSet):
    kind = "unconstrained"

    def project(self, x):
        return self._check_dim(x).copy()

    def support(self, v):
        v = self._check_dim(v)
        if np.allclose(v, 0.0):
            return 0.0, np.zeros(self.dimension)
        raise ValueError("support of an unconstrained set is unbounded")

    def sample(self, rng):
        return rng.standard_normal(self.dimension)

    def diameter(self):
        return math.inf


@dataclass(frozen=True)
class Box(FeasibleSet):
    lower: np.ndarray = field(default=None)  # type: ignore[assignment]
    upper: np.ndarray = field(default=None)  # type: ignore[assignment]

    kind = "box"

    def __post_init__(self):
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dimension,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dimension,)).copy()
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper coordinatewise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def project(self, x):
        return np.clip(self._check_dim(x), self.lower, self.upper)

    def support(self, v):
        v = self._check_dim(v)
        y = np.where(v >= 0, self.upper, self.lower)
        return float(v @ y), y

    def sample(self, rng):
        return rng.uniform(self.lower, self.upper)

    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class L2Ball(FeasibleSet):
    center: np.ndarray = field(default=None)  # type: ignore[assignment]
    radius: float = 1.0

    kind = "l2_ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be > 0, got {self.radius}")
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (self.dimension,)).copy()
        object.__setattr__(self, "center", c)

    def project(self, x):
        x = self._check_dim(x)
        d = x - self.center
        norm = np.linalg.norm(d)
        if norm <= self.radius:
            return x.copy()
        return self.center + d * (self.radius / norm)

    def support(self, v):
        v = self._check_dim(v)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return float(v @ self.center), self.center.copy()
        y = self.center + v * (self.radius / norm)
        return float(v @ y), y

    def sample(self, rng):
        d = rng.standard_normal(self.dimension)
        d /= max(np.linalg.norm(d), 1e-300)
        r = self.radius * rng.uniform() ** (1.0 / self.dimension)
        return self.center + r * d

    def diameter(self):
        return 2.0 * self.radius


@dataclass(frozen=True)
class Simplex(FeasibleSet):
    kind = "simplex"

    def project(self, x):
        # Euclidean projection onto the probability simplex (sort-based).
        x = self._check_dim(x)
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - 1.0
        idx = np.arange(1, x.size + 1)
        cond = u - css / idx > 0
        rho = idx[cond][-1]
        theta = css[rho - 1] / rho
        return np.maximum(x - theta, 0.0)

    def contains(self, x, tol=_FEAS_TOL):
        x = self._check_dim(x)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def support(self, v):
        v = self._check_dim(v)
        i = int(np.argmax(v))
        y = np.zeros(self.dimension)
        y[i] = 1.0
        return float(v[i]), y

    def vertices(self) -> np.ndarray:
        return np.eye(self.dimension)

    def sample(self, rng):
        return rng.dirichlet(np.ones(self.dimension))

    def center(self) -> np.ndarray:
        return np.full(self.dimension, 1.0 / self.dimension)

    def diameter(self):
        return math.sqrt(2.0)


@dataclass(frozen=True)
class ProductSet(FeasibleSet):
    """Cartesian product of blocks, laid out as concatenated coordinates."""

    parts: tuple[FeasibleSet, ...] = ()

    kind = "product"

    def __post_init__(self):
        if sum(p.dimension for p in self.parts) != self.dimension:
            raise ValueError("product dimension must equal the sum of part dimensions")

    def _blocks(self, x):
        x = self._check_dim(x)
        out, i = [], 0
        for part in self.parts:
            out.append(x[i : i + part.dimension])
            i += part.dimension
        return out

    def project(self, x):
        return np.concatenate([p.project(b) for p, b in zip(self.parts, self._blocks(x))])

    def contains(self, x, tol=_FEAS_TOL):
        return all(p.contains(b, tol) for p, b in zip(self.parts, self._blocks(x)))

    def support(self, v):
        vals, ys = zip(*(p.support(b) for p, b in zip(self.parts, self._blocks(v))))
        return float(sum(vals)), np.concatenate(ys)

    def sample(self, rng):
        return np.concatenate([p.sample(rng) for p in self.parts])

    def diameter(self):
        return math.sqrt(sum(p.diameter() ** 2 for p in self.parts))


def box(halfwidth: float, dimension: int) -> Box:
    return Box(dimension=dimension, lower=-abs(halfwidth), upper=abs(halfwidth))


def project(feasible: FeasibleSet, x: np.ndarray) -> np.ndarray:
    return feasible.project(x)


# ---------------------------------------------------------------------------
# Bregman generators


@dataclass(frozen=True)
class BregmanGenerator:
    """Strongly convex generator omega with modulus 1 in its paired norm."""

    kind = "abstract"
    modulus: float = 1.0

    def omega(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad_omega(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        """B(x || y) = omega(x) - omega(y) - <grad omega(y), x - y>."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return float(self.omega(x) - self.omega(y) - self.grad_omega(y) @ (x - y))

    def prox(self, feasible: FeasibleSet, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """argmin_{x in feasible} <v, x> + B(x || y)."""
        raise NotImplementedError

    def max_divergence(self, feasible: FeasibleSet) -> float:
        """Omega^2 for the mirror-prox bounds (see module notes)."""
        raise NotImplementedError


@dataclass(frozen=True)
class SquaredL2(BregmanGenerator):
    """omega(x) = ||x||^2 / 2, paired with the Euclidean norm (alpha = 1)."""

    kind = "squared_l2"

    def omega(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x)

    def grad_omega(self, x):
        return np.asarray(x, dtype=float).copy()

    def divergence(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * float(d @ d)

    def prox(self, feasible, y, v):
        y = np.asarray(y, dtype=float)
        if not feasible.contains(y):
            raise ValueError("prox anchor must be feasible")
        return feasible.project(y - np.asarray(v, dtype=float))

    def max_divergence(self, feasible):
        d = feasible.diameter()
        return 0.5 * d * d


@dataclass(frozen=True)
class NegativeEntropy(BregmanGenerator):
    """omega(x) = sum x ln x on the simplex, paired with the L1 norm (alpha = 1).

    B(x || y) is the KL divergence; max over pairs is unbounded, so
    ``max_divergence`` reports the from-center width max_x B(x || uniform)
    = ln d, the quantity entering entropy-geometry mirror-prox bounds.
    """

    kind = "negative_entropy"

    def omega(self, x):
        x = np.asarray(x, dtype=float)
        xs = x[x > 0]
        return float(np.sum(xs * np.log(xs)))

    def grad_omega(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("entropy gradient requires strictly positive coordinates")
        return np.log(x) + 1.0

    def divergence(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("entropy divergence requires y > 0 coordinatewise")
        mask = x > 0
        return float(np.sum(x[mask] * np.log(x[mask] / y[mask])))

    def prox(self, feasible, y, v):
        if not isinstance(feasible, Simplex):
            raise ValueError("entropy prox is defined on the simplex only")
        y = np.asarray(y, dtype=float)
        if not feasible.contains(y) or np.any(y <= 0):
            raise ValueError("prox anchor must be feasible with positive coordinates")
        v = np.asarray(v, dtype=float)
        logits = np.log(y) - v
        logits -= logits.max()
        z = np.exp(logits)
        return z / z.sum()

    def max_divergence(self, feasible):
        if not isinstance(feasible, Simplex):
            raise ValueError("entropy generator is paired with the simplex")
        return math.log(feasible.dimension)


def bregman(gen: BregmanGenerator, x: np.ndarray, y: np.ndarray) -> float:
    return gen.divergence(x, y)


def prox_step(gen: BregmanGenerator, feasible: FeasibleSet, y: np.ndarray, v: np.ndarray) -> np.ndarray:
    return gen.prox(feasible, y, v)
