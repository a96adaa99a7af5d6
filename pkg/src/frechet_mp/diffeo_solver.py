"""Global solvability of tau(e) = f through the merit functional iota(tau(e) - f).

The surjectivity half is a damped Newton iteration using the supplied
inverse family nu(e) = tau'(e)^{-1}, globalised by backtracking on the
merit functional with a gradient fallback.  The injectivity half runs the
mountain-pass search on the merit functional between two preimages of the
same point.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import C1Violation, FamilyMismatch, NonFiniteError, PreconditionError
from .functional import FunctionalHandle, PSVerdict, coords, ps_diagnose
from .graded_space import (
    GradedVector,
    MetricWeights,
    SeminormFamily,
    coordinate_sample,
    metric_arrays,
)
from . import mountain_pass


@dataclass(frozen=True)
class TameMapHandle:
    """A map tau: E -> F with derivative action and inverse family.

    ``jacobian(e)``, when given, returns the matrix of ``tau'(e)`` and is used
    to form merit gradients without D calls to ``dtau``.  ``sample(rng)``
    draws a representative domain point for randomized checks.
    """

    domain: SeminormFamily
    codomain: SeminormFamily
    tau: Callable[[np.ndarray], np.ndarray]
    dtau: Callable[[np.ndarray, np.ndarray], np.ndarray]
    nu: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sample: Optional[Callable[[np.random.Generator], np.ndarray]] = None
    name: str = ""

    def apply(self, e) -> np.ndarray:
        v = np.asarray(self.tau(coords(e)), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"{self.name or 'tau'} is non-finite")
        return v

    def jac(self, e) -> np.ndarray:
        e = coords(e)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(e), dtype=float)
        eye = np.eye(self.domain.dimension)
        return np.column_stack([self.dtau(e, v) for v in eye])

    def draw(self, rng) -> np.ndarray:
        if self.sample is not None:
            return np.asarray(self.sample(rng), dtype=float)
        return rng.standard_normal(self.domain.dimension)


@dataclass
class C1Report:
    worst: float
    worst_grade: int
    worst_point: np.ndarray
    worst_check: str
    samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst": self.worst,
            "worst_grade": self.worst_grade,
            "worst_check": self.worst_check,
            "worst_point_sup": float(np.max(np.abs(self.worst_point))),
            "samples": self.samples,
            "tol": self.tol,
        }


def verify_c1(handle: TameMapHandle, sample_count: int = 100, tol: float = 1e-8, *,
              seed: int = 0, raise_on_fail: bool = False) -> C1Report:
    """Check ``dtau(e, nu(e, k)) = k`` and ``nu(e, dtau(e, p)) = p`` on samples.

    The origin is always among the sampled base points.  Non-finite results
    count as an infinite violation.
    """
    rng = np.random.default_rng(seed)
    dimE, dimF = handle.domain.dimension, handle.codomain.dimension
    worst = (-1.0, 1, np.zeros(dimE), "")
    for s in range(sample_count):
        e = np.zeros(dimE) if s == 0 else handle.draw(rng)
        k = rng.standard_normal(dimF)
        p = rng.standard_normal(dimE)
        with np.errstate(all="ignore"):
            rk = np.asarray(handle.dtau(e, handle.nu(e, k)), dtype=float) - k
            rp = np.asarray(handle.nu(e, handle.dtau(e, p)), dtype=float) - p
        for label, r, fam in (("dtau(nu k) - k", rk, handle.codomain), ("nu(dtau p) - p", rp, handle.domain)):
            if np.all(np.isfinite(r)):
                vals = fam.values(r)
            else:
                vals = np.full(fam.count, np.inf)
            n = int(np.argmax(vals))
            if vals[n] > worst[0]:
                worst = (float(vals[n]), n + 1, e, label)
    report = C1Report(worst[0], worst[1], worst[2], worst[3], sample_count, tol)
    if raise_on_fail and not report.passed:
        raise C1Violation(f"C1 fails: {report.worst_check} = {report.worst:.3e} > {tol:.1e}", report)
    return report


class MeritFunctional:
    """iota(x) = sum_n w_n (|x|^n)^2 over a Hilbertian seminorm family."""

    def __init__(self, family: SeminormFamily, weights=None):
        if not family.hilbertian:
            raise ValueError(f"merit functional needs a Hilbertian family, got {family.kind}")
        w = MetricWeights.default(family.count).weights if weights is None else tuple(float(v) for v in weights)
        if len(w) != family.count or min(w) <= 0:
            raise ValueError("one strictly positive weight per grade required")
        self.family = family
        self.weights = w
        self.matrix = sum(wn * family.gram(n) for n, wn in enumerate(w, start=1))
        # positive definite <=> iota(x) = 0 only at x = 0 and iota'(x) = 0 only at x = 0
        np.linalg.cholesky(self.matrix)

    def __call__(self, x) -> float:
        x = coords(x)
        return float(x @ self.matrix @ x)

    def grad(self, x) -> np.ndarray:
        return 2.0 * (self.matrix @ coords(x))


def merit(e, f, iota: MeritFunctional, handle: TameMapHandle) -> float:
    return iota(handle.apply(e) - coords(f))


def merit_functional(handle: TameMapHandle, f, iota: MeritFunctional, shift=None) -> FunctionalHandle:
    """phi_f(e) = iota(tau(e + shift) - f) as a functional on E, with chain-rule derivatives."""
    fc = np.array(coords(f), dtype=float)
    s = np.zeros(handle.domain.dimension) if shift is None else np.array(coords(shift), dtype=float)
    if iota.family.dimension != handle.codomain.dimension:
        raise FamilyMismatch("merit family and codomain dimensions differ")

    def value(e):
        return iota(handle.apply(e + s) - fc)

    def dderiv(e, h):
        return float(iota.grad(handle.apply(e + s) - fc) @ handle.dtau(e + s, h))

    def grad(e):
        return handle.jac(e + s).T @ iota.grad(handle.apply(e + s) - fc)

    return FunctionalHandle(handle.domain, value, dderiv, grad, name=f"merit[{handle.name}]")


def chain_rule_error(handle: TameMapHandle, f, iota: MeritFunctional, e, directions) -> float:
    """Worst gap between a difference quotient of the merit and iota'(r) . dtau(e, h).

    The gap is relative to the Cauchy-Schwarz scale ``2 |dtau h|_M |r|_M`` of
    the pairing (normwise relative error of an inner product), since the
    pairing itself can cancel far below its terms.
    """
    e = coords(e)
    fc = coords(f)
    r = handle.apply(e) - fc
    g = iota.grad(r)
    M = iota.matrix

    def diff(t, h):
        # iota(a) - iota(b) = (a - b)^T M (a + b): no cancellation when the residual is tiny
        a, b = handle.apply(e + t * h) - fc, handle.apply(e - t * h) - fc
        return float((a - b) @ M @ (a + b))

    worst = 0.0
    for h in directions:
        h = coords(h)
        t = 1e-3 * (1.0 + float(np.max(np.abs(e)))) / max(1.0, float(np.max(np.abs(h))))
        c1 = diff(t, h) / (2 * t)
        c2 = diff(0.5 * t, h) / t
        fd = (4.0 * c2 - c1) / 3.0
        dh = np.asarray(handle.dtau(e, h), dtype=float)
        scale = 2.0 * math.sqrt(max(float(dh @ M @ dh), 0.0) * max(float(r @ M @ r), 0.0))
        worst = max(worst, abs(float(g @ dh) - fd) / max(scale, abs(fd), 1e-12))
    return worst


def linearization_error(handle: TameMapHandle, e, directions) -> float:
    """Worst relative gap, in the top codomain grade, between dtau(e, h) and a central difference of tau."""
    e = coords(e)
    fam = handle.codomain
    worst = 0.0
    for h in directions:
        h = coords(h)
        t = 1e-3 * (1.0 + float(np.max(np.abs(e)))) / max(1.0, float(np.max(np.abs(h))))
        c1 = (handle.apply(e + t * h) - handle.apply(e - t * h)) / (2 * t)
        c2 = (handle.apply(e + 0.5 * t * h) - handle.apply(e - 0.5 * t * h)) / t
        fd = (4.0 * c2 - c1) / 3.0  # Richardson: higher grades amplify difference noise
        an = np.asarray(handle.dtau(e, h), dtype=float)
        worst = max(worst, fam.top(an - fd) / max(fam.top(an), 1e-6))
    return worst


@dataclass
class SolveConfig:
    tol_res: float = 1e-8
    max_iter: int = 100
    stall_window: int = 20
    stall_tol: float = 1e-14
    step_tol: float = 1e-6
    max_halvings: int = 40
    gauss_newton: bool = True
    start: Optional[np.ndarray] = None
    seed: int = 0


@dataclass
class StepRecord:
    iteration: int
    merit: float
    step_type: str
    step_size: float
    step_norm: float


@dataclass
class SolveReport:
    solution: GradedVector
    residual_seminorms: np.ndarray
    iterations: int
    method_trace: list
    solved: bool
    reason: str
    iterates: list = field(default_factory=list)
    ps_verdict: Optional[PSVerdict] = None

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "merit", "step_type", "step_size", "step_norm"])
        for r in self.method_trace:
            w.writerow([r.iteration, repr(r.merit), r.step_type, repr(r.step_size), repr(r.step_norm)])
        return buf.getvalue()

    def residual_table(self) -> str:
        return "grade,residual\n" + "".join(
            f"{n},{float(v)!r}\n" for n, v in enumerate(self.residual_seminorms, start=1)
        )

    def to_dict(self) -> dict:
        return {
            "solved": self.solved,
            "reason": self.reason,
            "iterations": self.iterations,
            "residual_seminorms": [float(v) for v in self.residual_seminorms],
            "final_merit": self.method_trace[-1].merit if self.method_trace else None,
            "ps_verdict": None if self.ps_verdict is None else self.ps_verdict.kind,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def solve(handle: TameMapHandle, f, iota: MeritFunctional, cfg: SolveConfig | None = None) -> SolveReport:
    """Solve tau(e) = f by Newton steps e <- e + s nu(e)(f - tau(e)) with merit backtracking.

    A point counts as solved when every residual grade is below ``tol_res``
    and the last Newton correction is below ``step_tol`` in the top domain
    grade; an iteration that keeps taking long steps while the residual
    shrinks is escaping to infinity, not converging.
    """
    cfg = cfg or SolveConfig()
    fc = np.array(coords(f), dtype=float)
    e = np.zeros(handle.domain.dimension) if cfg.start is None else np.array(cfg.start, dtype=float)
    phi = merit_functional(handle, fc, iota)
    trace: list[StepRecord] = []
    iterates = [e.copy()]
    m = phi(e)
    trace.append(StepRecord(0, m, "start", 0.0, 0.0))
    solved, reason = False, "max-iter"
    res = handle.codomain.values(handle.apply(e) - fc)
    last_step = np.inf
    it = 0
    while it < cfg.max_iter:
        r = handle.apply(e) - fc
        res = handle.codomain.values(r)
        step_type, s, d = None, 0.0, None
        if cfg.gauss_newton:
            with np.errstate(all="ignore"):
                p = np.asarray(handle.nu(e, -r), dtype=float)
            if np.all(np.isfinite(p)):
                last_step = float(handle.domain.top(p))
                if np.all(res <= cfg.tol_res) and last_step <= cfg.step_tol:
                    solved, reason = True, "converged"
                    break
                s = 1.0
                for _ in range(cfg.max_halvings):
                    mn = phi(e + s * p)
                    if mn < m:
                        step_type, d = "gauss-newton", p
                        break
                    s *= 0.5
        elif np.all(res <= cfg.tol_res):
            solved, reason = True, "converged"
            break
        if step_type is None:
            g = phi.grad(e)
            gg = float(g @ g)
            if gg == 0.0:
                reason = "zero-gradient"
                break
            s = 1.0
            for _ in range(cfg.max_halvings):
                mn = phi(e - s * g)
                if mn <= m - 1e-4 * s * gg:
                    step_type, d = "gradient", -g
                    break
                s *= 0.5
        if step_type is None:
            reason = "line-search-failed"
            break
        it += 1
        e = e + s * d
        m = mn
        iterates.append(e.copy())
        trace.append(StepRecord(it, m, step_type, s, float(handle.domain.top(s * d))))
        if it >= cfg.stall_window and trace[-cfg.stall_window - 1].merit - m < cfg.stall_tol:
            reason = "stall"
            break
    res = handle.codomain.values(handle.apply(e) - fc)
    verdict = ps_diagnose(phi, iterates, coordinate_sample(handle.domain), value_bound=1e12)
    return SolveReport(
        solution=GradedVector(e, handle.domain),
        residual_seminorms=res,
        iterations=it,
        method_trace=trace,
        solved=solved,
        reason=reason,
        iterates=iterates,
        ps_verdict=verdict,
    )


def injectivity_probe(
    handle: TameMapHandle,
    e1,
    e2,
    l,
    iota: MeritFunctional,
    cfg: mountain_pass.MountainPassConfig | None = None,
    *,
    tol: float = 1e-10,
    rho: float | None = None,
    sample_count: int = 256,
) -> mountain_pass.MountainPassResult:
    """Mountain-pass search on iota(tau(e) - l) between two preimages e1 != e2 of l.

    Coordinates are shifted so that e1 sits at the origin.  A critical point
    with positive merit would contradict the invertibility of tau'; a
    spread-out PS sequence instead shows the merit violates PS.  The
    returned ``h`` (if any) is in the original coordinates.
    """
    e1c, e2c, lc = (np.array(coords(v), dtype=float) for v in (e1, e2, l))
    m1, m2 = merit(e1c, lc, iota, handle), merit(e2c, lc, iota, handle)
    if m1 > tol or m2 > tol:
        raise PreconditionError(f"e1, e2 are not preimages of l (merits {m1:.3e}, {m2:.3e})")
    weights = MetricWeights.default(handle.domain.count)
    gap = float(metric_arrays(handle.domain, e1c, e2c, weights))
    if gap <= tol:
        raise PreconditionError("e1 and e2 coincide")
    phi = merit_functional(handle, lc, iota, shift=e1c)
    f = e2c - e1c
    rho = 0.5 * gap if rho is None else rho
    geometry = mountain_pass.check_geometry(phi, f, rho, sample_count, weights=weights)
    if geometry.margin <= 0:
        raise PreconditionError(f"no positive merit margin on the sphere of radius {rho:.4g}")
    result = mountain_pass.run(phi, f, geometry, cfg, weights=weights)
    if result.h is not None:
        h = result.h.coords + e1c
        result.h = GradedVector(h, handle.domain)
        if merit(h, lc, iota, handle) > tol:
            result.notes.append("critical point with positive merit: tau'(h) cannot be invertible")
    return result
