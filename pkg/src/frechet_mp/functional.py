"""C^1 functionals on a truncated graded space and Palais-Smale diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MissingGradient, NonFiniteError
from .graded_space import (
    BornologySample,
    GradedVector,
    MetricWeights,
    SeminormFamily,
    dual_norms,
    metric_arrays,
)

CLUSTER_FOUND = "cluster-found"
PS_VIOLATED = "ps-violated"
INCONCLUSIVE = "inconclusive"

MIN_TAIL = 8


def coords(x) -> np.ndarray:
    if isinstance(x, GradedVector):
        return x.coords
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class FunctionalHandle:
    """An evaluatable functional with optional derivative information.

    ``eval`` maps a coordinate array to a float.  ``dderiv(x, h)`` is the
    directional derivative and ``grad(x)`` a coordinate representative of the
    derivative (``<grad(x), h> = dderiv(x, h)``).  Both are optional; missing
    pieces are filled in by central differences.
    """

    family: SeminormFamily
    eval: Callable[[np.ndarray], float]
    dderiv: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, x) -> float:
        v = float(self.eval(coords(x)))
        if not np.isfinite(v):
            raise NonFiniteError(f"{self.name or 'functional'} is non-finite at {coords(x)}")
        return v

    def values(self, xs) -> np.ndarray:
        """Evaluate at each row of ``xs``."""
        return np.array([self(x) for x in np.asarray(xs, dtype=float)])


def fd_step(phi: FunctionalHandle, x) -> float:
    return 1e-6 * (1.0 + float(phi.family.top(coords(x))))


def fd_quotient(phi: FunctionalHandle, x, h, t: float | None = None) -> float:
    x, h = coords(x), coords(h)
    if t is None:
        t = fd_step(phi, x)
    q = (phi(x + t * h) - phi(x - t * h)) / (2 * t)
    if not np.isfinite(q):
        raise NonFiniteError("finite-difference quotient is non-finite")
    return q


def directional_derivative(phi: FunctionalHandle, x, h) -> float:
    """``<phi'(x), h>`` from the handle if it can, else a central difference."""
    xc, hc = coords(x), coords(h)
    if phi.dderiv is not None:
        v = float(phi.dderiv(xc, hc))
    elif phi.grad is not None:
        v = float(np.dot(phi.grad(xc), hc))
    else:
        return fd_quotient(phi, xc, hc)
    if not np.isfinite(v):
        raise NonFiniteError("directional derivative is non-finite")
    return v


def gradient(phi: FunctionalHandle, x) -> np.ndarray:
    """Coordinate representative of phi'(x)."""
    xc = coords(x)
    if phi.grad is not None:
        g = np.asarray(phi.grad(xc), dtype=float)
    else:
        eye = np.eye(phi.family.dimension)
        g = np.array([directional_derivative(phi, xc, e) for e in eye])
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("gradient is non-finite")
    return g


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def gradient_check(phi: FunctionalHandle, x, directions: Sequence, floor: float = 1e-6) -> float:
    """Largest relative error of ``<grad(x), h>`` against the difference quotient."""
    if phi.grad is None:
        raise MissingGradient(f"{phi.name or 'functional'} has no gradient representative")
    g = gradient(phi, x)
    worst = 0.0
    for h in directions:
        worst = max(worst, relative_error(float(np.dot(g, coords(h))), fd_quotient(phi, x, h), floor))
    return worst


def derivative_check(phi: FunctionalHandle, x, directions: Sequence, floor: float = 1e-6) -> float:
    """Like :func:`gradient_check` but for whichever analytic derivative the handle has."""
    worst = 0.0
    for h in directions:
        worst = max(worst, relative_error(directional_derivative(phi, x, h), fd_quotient(phi, x, h), floor))
    return worst


@dataclass
class PSRecord:
    index: int
    value: float
    dual: np.ndarray
    gap_prev: float


@dataclass
class PSVerdict:
    kind: str
    cluster_point: Optional[GradedVector] = None
    trace: list = field(default_factory=list)
    reason: str = ""
    neighbours: int = 0
    min_tail_gap: float = float("nan")

    def to_csv(self) -> str:
        return ps_trace_csv(self.trace)


def ps_trace_csv(trace: Sequence[PSRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    grades = len(trace[0].dual) if trace else 0
    w.writerow(["index", "phi"] + [f"dual_{n}" for n in range(1, grades + 1)] + ["gap_prev"])
    for r in trace:
        w.writerow([r.index, repr(r.value)] + [repr(float(d)) for d in r.dual] + [repr(r.gap_prev)])
    return buf.getvalue()


def ps_diagnose(
    phi: FunctionalHandle,
    seq: Sequence,
    B: BornologySample,
    level: float | None = None,
    *,
    tol_dual: float = 1e-6,
    tol_cluster: float = 1e-3,
    level_tol: float = 1e-3,
    value_bound: float = 1e12,
    weights: MetricWeights | None = None,
) -> PSVerdict:
    """Sample-level Palais-Smale verdict for a finite sequence.

    The tail is the last half of ``seq``.  When the values are bounded (or
    within ``level_tol`` of ``level``) and every tail dual norm is below
    ``tol_dual``, the tail is either clustered (some element has at least
    three others within ``tol_cluster``), spread out (all pairwise gaps above
    ``10 * tol_cluster``: the sequence has no convergent subsequence), or
    neither.
    """
    pts = np.array([coords(x) for x in seq], dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("ps_diagnose needs a nonempty sequence of vectors")
    fam = phi.family
    if weights is None:
        weights = MetricWeights.default(fam.count)

    trace = []
    for i, x in enumerate(pts):
        gap = float(metric_arrays(fam, x, pts[i - 1], weights)) if i else float("nan")
        trace.append(PSRecord(i, phi(x), dual_norms(gradient(phi, x), B), gap))

    tail_start = len(pts) - len(pts) // 2
    tail = pts[tail_start:]
    if len(tail) < MIN_TAIL:
        return PSVerdict(INCONCLUSIVE, trace=trace, reason=f"tail of {len(tail)} < {MIN_TAIL}")

    vals = np.array([r.value for r in trace[tail_start:]])
    if level is None:
        bounded = bool(np.all(np.abs(vals) <= value_bound))
    else:
        bounded = bool(np.all(np.abs(vals - level) <= level_tol))
    if not bounded:
        return PSVerdict(INCONCLUSIVE, trace=trace, reason="values not bounded / not near level")
    worst_dual = max(float(np.max(r.dual)) for r in trace[tail_start:])
    if worst_dual > tol_dual:
        return PSVerdict(
            INCONCLUSIVE, trace=trace, reason=f"tail dual norm {worst_dual:.3e} > {tol_dual:.3e}"
        )

    gaps = metric_arrays(fam, tail[:, None, :], tail[None, :, :], weights)
    np.fill_diagonal(gaps, np.inf)
    close = (gaps <= tol_cluster).sum(axis=1)
    min_gap = float(np.min(gaps))
    best = int(np.argmax(close))
    if close[best] >= 3:
        return PSVerdict(
            CLUSTER_FOUND,
            cluster_point=GradedVector(tail[best], fam),
            trace=trace,
            neighbours=int(close[best]),
            min_tail_gap=min_gap,
        )
    if min_gap > 10 * tol_cluster:
        return PSVerdict(PS_VIOLATED, trace=trace, min_tail_gap=min_gap,
                         reason="tail has no convergent subsequence at sample level")
    return PSVerdict(INCONCLUSIVE, trace=trace, min_tail_gap=min_gap, reason="no cluster, gaps small")
