"""Finite truncations of graded Frechet spaces.

A space is described by a :class:`SeminormFamily`: a dimension ``D`` and an
increasing sequence of ``n_max`` seminorms.  Points are plain coordinate
vectors, optionally wrapped in :class:`GradedVector` to keep the family
attached.  Everything here is pure and vectorised over leading axes, so a
``(m, D)`` array of path nodes can be measured in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    EmptySampleError,
    FamilyMismatch,
    GradeError,
    LinearityError,
    NonFiniteError,
)

KINDS = ("sup-grades", "weighted-l2", "sobolev-fd", "ck-grid")
HILBERTIAN_KINDS = ("weighted-l2", "sobolev-fd")


def _difference_matrix(dim: int, order: int, spacing: float) -> np.ndarray:
    """Divided-difference operator of the given order, shape (dim-order, dim)."""
    op = np.eye(dim)
    for _ in range(order):
        op = (op[1:] - op[:-1]) / spacing
    return op


@dataclass(frozen=True, eq=False)
class SeminormFamily:
    """Increasing seminorm family on R^D.

    Kinds:

    ``sup-grades``
        ``|x|^n = max_{k < k_n} |x_k|``
    ``weighted-l2``
        ``|x|^n = sqrt(sum_{k < k_n} w_k x_k^2)`` (Hilbertian)
    ``sobolev-fd``
        discrete H^{n-1} norm of a grid function with spacing ``h``:
        ``(|x|^n)^2 = sum_{j < n} h * |D^j x|^2`` (Hilbertian)
    ``ck-grid``
        discrete C^{n-1} grading ``|x|^n = sum_{j < n} max |D^j x|``

    For the prefix kinds, grade ``n`` sees the first ``k_n = ceil(n D / n_max)``
    coordinates, so the top grade always sees everything and the family
    separates points.
    """

    kind: str
    dimension: int
    count: int = 3
    spacing: float = 1.0
    coord_weights: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown seminorm kind {self.kind!r}; expected one of {KINDS}")
        if self.dimension < 1 or self.count < 1:
            raise ValueError("dimension and grade count must be positive")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.kind in ("sobolev-fd", "ck-grid") and self.dimension < self.count:
            raise ValueError(f"{self.kind} needs at least {self.count} grid points")
        if self.coord_weights:
            if len(self.coord_weights) != self.dimension:
                raise ValueError("coord_weights length must equal dimension")
            if min(self.coord_weights) <= 0:
                raise ValueError("coord_weights must be strictly positive")
        object.__setattr__(self, "_diffs", tuple(
            _difference_matrix(self.dimension, j, self.spacing) for j in range(self.count)
        ) if self.kind in ("sobolev-fd", "ck-grid") else ())

    # structural equality: the difference matrices are derived data
    def _key(self):
        return (self.kind, self.dimension, self.count, float(self.spacing), tuple(self.coord_weights))

    def __eq__(self, other):
        return isinstance(other, SeminormFamily) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    @property
    def n_max(self) -> int:
        return self.count

    @property
    def hilbertian(self) -> bool:
        return self.kind in HILBERTIAN_KINDS

    def check_grade(self, n: int) -> int:
        if isinstance(n, bool) or int(n) != n or not 1 <= n <= self.count:
            raise GradeError(f"grade {n!r} outside 1..{self.count}")
        return int(n)

    def prefix(self, n: int) -> int:
        return math.ceil(n * self.dimension / self.count)

    def _weights(self) -> np.ndarray:
        if self.coord_weights:
            return np.asarray(self.coord_weights, dtype=float)
        return np.ones(self.dimension)

    def value(self, x, n: int):
        """Seminorm of grade ``n``; ``x`` may carry leading batch axes."""
        n = self.check_grade(n)
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise FamilyMismatch(f"vector of length {x.shape[-1]} in a {self.dimension}-dim family")
        if self.kind == "sup-grades":
            return np.max(np.abs(x[..., : self.prefix(n)]), axis=-1)
        if self.kind == "weighted-l2":
            k = self.prefix(n)
            return np.sqrt(np.sum(self._weights()[:k] * x[..., :k] ** 2, axis=-1))
        if self.kind == "sobolev-fd":
            total = 0.0
            for j in range(n):
                dx = x @ self._diffs[j].T
                total = total + self.spacing * np.sum(dx * dx, axis=-1)
            return np.sqrt(total)
        total = 0.0
        for j in range(n):
            total = total + np.max(np.abs(x @ self._diffs[j].T), axis=-1)
        return total

    def values(self, x) -> np.ndarray:
        """All grades at once, stacked on the last axis."""
        return np.stack([self.value(x, n) for n in range(1, self.count + 1)], axis=-1)

    def top(self, x):
        return self.value(x, self.count)

    def gram(self, n: int) -> np.ndarray:
        """Positive semidefinite Q_n with ``(|x|^n)^2 = x^T Q_n x`` (Hilbertian kinds only)."""
        n = self.check_grade(n)
        if not self.hilbertian:
            raise ValueError(f"{self.kind} is not Hilbertian")
        if self.kind == "weighted-l2":
            w = self._weights().copy()
            w[self.prefix(n):] = 0.0
            return np.diag(w)
        return sum(self.spacing * d.T @ d for d in self._diffs[:n])

    def to_config(self) -> dict:
        out = {"kind": self.kind, "dimension": self.dimension, "grades": self.count}
        if self.kind in ("sobolev-fd", "ck-grid"):
            out["spacing"] = self.spacing
        if self.coord_weights:
            out["coord_weights"] = list(self.coord_weights)
        return out


def family_from_config(cfg: dict) -> SeminormFamily:
    """Build a family from a config mapping (``kind``, ``dimension``, ``grades``...)."""
    dim = int(cfg.get("dimension", 64))
    kind = cfg.get("kind", "sup-grades")
    spacing = cfg.get("spacing")
    if spacing is None:
        spacing = 1.0 / (dim - 1) if kind in ("sobolev-fd", "ck-grid") and dim > 1 else 1.0
    return SeminormFamily(
        kind=kind,
        dimension=dim,
        count=int(cfg.get("grades", 3)),
        spacing=float(spacing),
        coord_weights=tuple(cfg.get("coord_weights", ())),
    )


@dataclass(frozen=True, eq=False)
class GradedVector:
    coords: np.ndarray
    family: SeminormFamily

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.shape[0] != self.family.dimension:
            raise FamilyMismatch(
                f"{c.shape[0]} coordinates for a {self.family.dimension}-dim family"
            )
        if not np.all(np.isfinite(c)):
            raise NonFiniteError("graded vector has non-finite coordinates")
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @classmethod
    def zeros(cls, family: SeminormFamily) -> "GradedVector":
        return cls(np.zeros(family.dimension), family)

    def _other(self, other: "GradedVector") -> np.ndarray:
        if not isinstance(other, GradedVector):
            return NotImplemented
        if other.family != self.family:
            raise FamilyMismatch("vectors belong to different seminorm families")
        return other.coords

    def __add__(self, other):
        return GradedVector(self.coords + self._other(other), self.family)

    def __sub__(self, other):
        return GradedVector(self.coords - self._other(other), self.family)

    def __neg__(self):
        return GradedVector(-self.coords, self.family)

    def __mul__(self, scalar: float):
        return GradedVector(float(scalar) * self.coords, self.family)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, GradedVector)
            and other.family == self.family
            and np.array_equal(other.coords, self.coords)
        )

    def __hash__(self):
        return hash((self.family, self.coords.tobytes()))

    def __repr__(self):
        return f"GradedVector({np.array2string(self.coords, threshold=8)}, kind={self.family.kind!r})"


@dataclass(frozen=True)
class MetricWeights:
    weights: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if not w or min(w) <= 0 or not all(math.isfinite(v) for v in w):
            raise ValueError("metric weights must be finite and strictly positive")
        if sum(w) > 1 + 1e-12:
            raise ValueError("metric weights must sum to at most 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def default(cls, count: int) -> "MetricWeights":
        return cls(tuple(2.0 ** -n for n in range(1, count + 1)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights)


def seminorm(x: GradedVector, n: int) -> float:
    return float(x.family.value(x.coords, n))


def bounded_metric(seminorm_values, weights: MetricWeights):
    """``sum_n w_n s_n / (1 + s_n)`` over the last axis of ``seminorm_values``."""
    s = np.asarray(seminorm_values, dtype=float)
    w = weights.as_array()
    if s.shape[-1] != w.shape[0]:
        raise GradeError(f"{w.shape[0]} weights for {s.shape[-1]} grades")
    return np.sum(w * s / (1.0 + s), axis=-1)


def frechet_metric(x: GradedVector, y: GradedVector, w: MetricWeights | None = None) -> float:
    """Translation-invariant metric generated by the seminorm family."""
    if x.family != y.family:
        raise FamilyMismatch("metric between vectors of different families")
    if w is None:
        w = MetricWeights.default(x.family.count)
    return float(bounded_metric(x.family.values(x.coords - y.coords), w))


def metric_arrays(family: SeminormFamily, x, y, w: MetricWeights | None = None):
    """Same metric on raw coordinate arrays (batched)."""
    if w is None:
        w = MetricWeights.default(family.count)
    return bounded_metric(family.values(np.asarray(x) - np.asarray(y)), w)


@dataclass(frozen=True)
class BornologySample:
    """Finite symmetric sample of a bounded set.

    Each generator lies in the ball of radius ``scale`` for every grade.
    """

    generators: tuple
    scale: float

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise EmptySampleError("bornology sample needs at least one generator")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        fam = gens[0].family
        for g in gens:
            if g.family != fam:
                raise FamilyMismatch("generators from different families")
            if np.max(fam.values(g.coords)) > self.scale * (1 + 1e-12):
                raise ValueError("generator exceeds the sample scale in some grade")
        keys = {(g.coords + 0.0).tobytes() for g in gens}
        for g in gens:
            if (-g.coords + 0.0).tobytes() not in keys:
                raise ValueError("bornology sample must be symmetric")
        object.__setattr__(self, "generators", gens)

    @property
    def family(self) -> SeminormFamily:
        return self.generators[0].family

    def matrix(self) -> np.ndarray:
        return np.stack([g.coords for g in self.generators])

    def scaled(self, factor: float) -> "BornologySample":
        return BornologySample(tuple(g * factor for g in self.generators), self.scale * abs(factor))


def coordinate_sample(family: SeminormFamily, scale: float = 1.0) -> BornologySample:
    """Symmetric sample of +-scale * e_k, each normalised in the top grade."""
    gens = []
    for k in range(family.dimension):
        e = np.zeros(family.dimension)
        e[k] = 1.0
        e *= scale / family.top(e)
        gens.append(GradedVector(e, family))
        gens.append(GradedVector(-e, family))
    return BornologySample(tuple(gens), scale)


LinearLike = Union[Callable[[np.ndarray], float], np.ndarray, GradedVector]


def _pairings(L: LinearLike, B: BornologySample) -> np.ndarray:
    gens = B.matrix()
    if isinstance(L, GradedVector):
        L = L.coords
    if isinstance(L, np.ndarray):
        return gens @ L
    vals = np.array([float(L(g)) for g in gens])
    # additivity spot check on a few generator pairs
    for i in range(min(3, len(gens) - 1)):
        lhs = float(L(gens[i] + gens[i + 1]))
        rhs = vals[i] + vals[i + 1]
        if abs(lhs - rhs) > 1e-10 * max(1.0, abs(lhs), abs(rhs)):
            raise LinearityError(f"L(x+y) != L(x)+L(y): {lhs} vs {rhs}")
    return vals


def dual_norm(L: LinearLike, B: BornologySample, n: int) -> float:
    """Lower estimate of ``sup_{e in B} |<L, e>|`` over the sample generators.

    ``L`` is either a callable on coordinate arrays or a coordinate
    representative (``<L, e> = L . e``).  Generators all lie in the grade-n
    ball of radius ``scale``, so the estimate is the same for every grade;
    ``n`` is still validated against the family.
    """
    B.family.check_grade(n)
    vals = _pairings(L, B)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("linear functional is non-finite on the sample")
    return float(np.max(np.abs(vals)))


def dual_norms(L: LinearLike, B: BornologySample) -> np.ndarray:
    """Dual norm estimate for every grade, as an array of length n_max."""
    v = dual_norm(L, B, 1)
    return np.full(B.family.count, v)


def metric_axiom_defects(dist, draw, cases: int = 1000, rng=None, shift=None) -> dict:
    """Worst defects of symmetry, triangle inequality and translation invariance.

    ``dist(x, y)`` is the metric, ``draw(rng)`` a random point and
    ``shift(x, z)`` translation (defaults to ``x + z``).  Each defect is
    ``max(0, violation)`` so a sound metric reports zeros up to roundoff.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if shift is None:
        shift = lambda x, z: x + z
    worst = {"symmetry": 0.0, "triangle": 0.0, "translation": 0.0, "identity": 0.0}
    for _ in range(cases):
        x, y, z = draw(rng), draw(rng), draw(rng)
        dxy, dyx = dist(x, y), dist(y, x)
        worst["symmetry"] = max(worst["symmetry"], abs(dxy - dyx))
        worst["triangle"] = max(worst["triangle"], dxy - dist(x, z) - dist(z, y))
        worst["translation"] = max(worst["translation"], abs(dist(shift(x, z), shift(y, z)) - dxy))
        worst["identity"] = max(worst["identity"], abs(dist(x, x)))
    return worst
