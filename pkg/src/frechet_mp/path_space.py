"""Piecewise-linear paths from 0 to f and the minimax functional on them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import FamilyMismatch, NonFiniteError, PathError
from .functional import FunctionalHandle, coords
from .graded_space import GradedVector, MetricWeights, SeminormFamily, bounded_metric

DEFAULT_INTERVALS = 32  # 33 nodes

ARGMAX_TOL = 1e-12


class DiscretePath:
    """Nodes gamma_0..gamma_m at t_i = i/m with gamma_0 = 0 and gamma_m = f.

    Node arrays are read-only; every operation returns a new path.
    """

    __slots__ = ("nodes", "family")

    def __init__(self, nodes, family: SeminormFamily):
        arr = np.array(nodes, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != family.dimension:
            raise PathError(f"nodes must have shape (m+1, {family.dimension}), got {arr.shape}")
        if arr.shape[0] < 3:
            raise PathError("a path needs m >= 2 intervals")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("path has non-finite nodes")
        if np.any(arr[0] != 0.0):
            raise PathError("path must start at 0")
        arr[0] = 0.0  # normalise -0.0
        arr.flags.writeable = False
        self.nodes = arr
        self.family = family

    @classmethod
    def straight(cls, f, family: SeminormFamily | None = None, m: int = DEFAULT_INTERVALS):
        if isinstance(f, GradedVector):
            family = f.family
        if family is None:
            raise PathError("family required for a raw endpoint")
        fc = coords(f)
        t = np.linspace(0.0, 1.0, m + 1)[:, None]
        nodes = t * fc[None, :]
        nodes[-1] = fc
        return cls(nodes, family)

    @classmethod
    def through(cls, waypoints, family: SeminormFamily, m: int = DEFAULT_INTERVALS):
        """Piecewise-linear path through ``waypoints`` (first must be 0), resampled on m intervals."""
        w = np.asarray(waypoints, dtype=float)
        base = cls(w, family) if len(w) >= 3 else cls(np.vstack([w[0], (w[0] + w[1]) / 2, w[1]]), family)
        return refine(base, m, allow_coarsen=True)

    @property
    def m(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @property
    def endpoint(self) -> np.ndarray:
        return self.nodes[-1]

    def node(self, i: int) -> GradedVector:
        return GradedVector(self.nodes[i], self.family)

    def replace_interior(self, interior) -> "DiscretePath":
        """New path with the same endpoints and the given interior nodes."""
        new = np.array(self.nodes)
        new[1:-1] = interior
        new[0] = self.nodes[0]
        new[-1] = self.nodes[-1]
        return DiscretePath(new, self.family)

    def __eq__(self, other):
        return (
            isinstance(other, DiscretePath)
            and other.family == self.family
            and np.array_equal(other.nodes, self.nodes)
        )

    def __repr__(self):
        return f"DiscretePath(m={self.m}, f={np.array2string(self.endpoint, threshold=6)})"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "t"] + [f"x{k}" for k in range(self.family.dimension)])
        for i, (t, x) in enumerate(zip(self.times, self.nodes)):
            w.writerow([i, repr(float(t))] + [repr(float(v)) for v in x])
        return buf.getvalue()


def _same_shape(g: DiscretePath, h: DiscretePath):
    if g.family != h.family:
        raise FamilyMismatch("paths live in different spaces")
    if g.m != h.m:
        raise PathError(f"node-count mismatch: {g.m + 1} vs {h.m + 1}")


def path_seminorm(gamma: DiscretePath, n: int) -> float:
    """Sup over the path of the grade-n seminorm (attained at a node for convex seminorms)."""
    return float(np.max(gamma.family.value(gamma.nodes, n)))


def path_seminorms(gamma: DiscretePath) -> np.ndarray:
    return np.max(gamma.family.values(gamma.nodes), axis=0)


def path_difference_seminorms(gamma: DiscretePath, eta: DiscretePath) -> np.ndarray:
    _same_shape(gamma, eta)
    return np.max(gamma.family.values(gamma.nodes - eta.nodes), axis=0)


def path_metric(gamma: DiscretePath, eta: DiscretePath, w: MetricWeights | None = None) -> float:
    if w is None:
        w = MetricWeights.default(gamma.family.count)
    return float(bounded_metric(path_difference_seminorms(gamma, eta), w))


@dataclass(frozen=True)
class PsiValue:
    value: float
    argmax_nodes: tuple
    node_values: np.ndarray

    @property
    def first(self) -> int:
        return self.argmax_nodes[0]


def psi_from_values(vals) -> PsiValue:
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise NonFiniteError(f"functional is non-finite at node {bad}")
    top = float(np.max(vals))
    idx = tuple(int(i) for i in np.flatnonzero(vals >= top - ARGMAX_TOL))
    return PsiValue(top, idx, vals)


def node_values(gamma: DiscretePath, phi: FunctionalHandle) -> np.ndarray:
    out = np.empty(gamma.m + 1)
    for i, x in enumerate(gamma.nodes):
        v = float(phi.eval(x))
        if not np.isfinite(v):
            raise NonFiniteError(f"functional is non-finite at node {i}")
        out[i] = v
    return out


def psi(gamma: DiscretePath, phi: FunctionalHandle) -> PsiValue:
    """Max of phi over the nodes, with every (near-)maximising node index."""
    return psi_from_values(node_values(gamma, phi))


def refine(gamma: DiscretePath, m_new: int, allow_coarsen: bool = False) -> DiscretePath:
    """Linear interpolation of the path onto ``m_new`` uniform intervals."""
    if m_new < 2:
        raise PathError("refined path needs m >= 2")
    if m_new < gamma.m and not allow_coarsen:
        raise PathError(f"refine cannot coarsen ({gamma.m} -> {m_new})")
    if m_new == gamma.m:
        return gamma
    t_old = gamma.times
    t_new = np.linspace(0.0, 1.0, m_new + 1)
    nodes = np.column_stack([np.interp(t_new, t_old, gamma.nodes[:, k]) for k in range(gamma.family.dimension)])
    nodes[0] = gamma.nodes[0]
    nodes[-1] = gamma.nodes[-1]
    return DiscretePath(nodes, gamma.family)


@dataclass(frozen=True)
class PathSup:
    value: float
    t: float
    point: np.ndarray
    node_values: np.ndarray


def path_sup(gamma: DiscretePath, phi: FunctionalHandle, per_segment: int = 4, refine_top: int = 3) -> PathSup:
    """Sup of phi along the piecewise-linear path, not just at its nodes.

    Each segment is sampled at ``per_segment`` interior points; the
    ``refine_top`` best segments are then maximised by a bounded scalar
    search.  A node-only maximum can be lowered by sliding nodes off a ridge
    while the path still crosses it; sampling the segments closes that gap
    down to the sampling resolution.
    """
    nv = node_values(gamma, phi)
    m = gamma.m
    s = np.linspace(0.0, 1.0, per_segment + 2)[1:-1]
    a, b = gamma.nodes[:-1], gamma.nodes[1:]
    seg_best = np.maximum(nv[:-1], nv[1:])
    seg_arg = np.where(nv[:-1] >= nv[1:], 0.0, 1.0)
    for u in s:
        pts = (1 - u) * a + u * b
        v = np.array([phi.eval(p) for p in pts], dtype=float)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("functional is non-finite along the path")
        better = v > seg_best
        seg_best = np.where(better, v, seg_best)
        seg_arg = np.where(better, u, seg_arg)
    j0 = int(np.argmax(seg_best))
    u0 = seg_arg[j0]
    best_val, best_t, best_pt = float(seg_best[j0]), (j0 + u0) / m, (1 - u0) * a[j0] + u0 * b[j0]
    # only segments peaking inside can hide a higher maximum
    inner = np.flatnonzero((seg_arg > 0.0) & (seg_arg < 1.0))
    for j in inner[np.argsort(-seg_best[inner], kind="stable")][:refine_top]:
        u0 = seg_arg[j]
        val, u = seg_best[j], u0
        if 0.0 < u0 < 1.0:
            lo, hi = u0 - 1.0 / (per_segment + 1), u0 + 1.0 / (per_segment + 1)
            res = minimize_scalar(lambda r: -float(phi.eval((1 - r) * a[j] + r * b[j])),
                                  bounds=(max(lo, 0.0), min(hi, 1.0)), method="bounded",
                                  options={"xatol": 1e-10})
            if -res.fun > val:
                val, u = -float(res.fun), float(res.x)
        if val > best_val:
            best_val, best_t = val, (j + u) / m
            best_pt = (1 - u) * a[j] + u * b[j]
    return PathSup(float(best_val), float(best_t), best_pt, nv)


def reparametrize(gamma: DiscretePath, m_new: int | None = None) -> DiscretePath:
    """Same polygon, nodes spread evenly by Euclidean arc length.

    Node spacing drifts as deformations move nodes; a long chord can then
    jump a ridge that the nodes never see.
    """
    m_new = gamma.m if m_new is None else m_new
    if m_new < 2:
        raise PathError("reparametrized path needs m >= 2")
    seg = np.linalg.norm(np.diff(gamma.nodes, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return refine(gamma, m_new, allow_coarsen=True)
    s_new = np.linspace(0.0, s[-1], m_new + 1)
    nodes = np.column_stack([np.interp(s_new, s, gamma.nodes[:, k]) for k in range(gamma.family.dimension)])
    nodes[0] = gamma.nodes[0]
    nodes[-1] = gamma.nodes[-1]
    return DiscretePath(nodes, gamma.family)
