"""Numerical mountain-pass algorithm over discretised path spaces.

The outer loop follows the minimax argument directly:

1. for a decreasing tolerance ``eps_k``, compute an Ekeland almost-minimiser
   of ``Psi(gamma) = max_i phi(gamma_i)`` over paths from 0 to f, using
   cutoff/partition deformations and random node probes as competitors;
2. on the resulting path pick a node in the near-maximum set ``S(eps_k)``
   whose derivative has every dual norm <= eps_k and record it;
3. hand the recorded sequence to the Palais-Smale diagnostic: a cluster is
   polished into a critical point, a spread-out tail is reported as a PS
   failure.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ekeland import EkelandCertificate, almost_minimizer
from .errors import EpsilonCritical, PreconditionError
from .functional import (
    CLUSTER_FOUND,
    PS_VIOLATED,
    FunctionalHandle,
    PSVerdict,
    coords,
    directional_derivative,
    gradient,
    ps_diagnose,
)
from .graded_space import (
    BornologySample,
    GradedVector,
    MetricWeights,
    coordinate_sample,
    dual_norms,
    metric_arrays,
)
from .path_space import (DiscretePath, PsiValue, node_values, path_metric, path_sup, psi_from_values, refine,
                         reparametrize)

log = logging.getLogger(__name__)

CRITICAL_POINT_FOUND = "critical-point-found"
BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass
class GeometryCheck:
    rho: float
    boundary_min: float
    a: float
    samples: np.ndarray
    f_distance: float

    @property
    def margin(self) -> float:
        return self.boundary_min - self.a

    @property
    def valid(self) -> bool:
        return self.margin > 0 and self.f_distance > self.rho


def _radius_for(family, weights, u, rho, iters=200):
    """r > 0 with metric(0, r u) = rho, or None when the direction saturates below rho."""
    s = family.values(u)
    w = weights.as_array()
    if float(np.sum(w[s > 0])) <= rho:
        return None
    lo, hi = 0.0, 1.0
    while float(metric_arrays(family, hi * u, 0 * u, weights)) < rho:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if float(metric_arrays(family, mid * u, 0 * u, weights)) < rho:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def check_geometry(
    phi: FunctionalHandle,
    f,
    rho: float,
    sample_count: int = 256,
    *,
    seed: int = 0,
    weights: MetricWeights | None = None,
) -> GeometryCheck:
    """Sample the metric sphere of radius ``rho`` around 0 and compare phi there with phi(0), phi(f)."""
    fam = phi.family
    fc = coords(f)
    if weights is None:
        weights = MetricWeights.default(fam.count)
    f_dist = float(metric_arrays(fam, fc, np.zeros_like(fc), weights))
    if not rho > 0:
        raise PreconditionError("rho must be positive")
    if f_dist <= rho:
        raise PreconditionError(f"f lies inside the closed ball: d(0,f)={f_dist:.6g} <= rho={rho:.6g}")
    rng = np.random.default_rng(seed)
    dirs = []
    if fam.dimension == 1:
        dirs = [np.array([1.0]), np.array([-1.0])]
    else:
        eye = np.eye(fam.dimension)
        dirs = [e for e in eye] + [-e for e in eye]
        dirs += list(rng.standard_normal((max(sample_count - len(dirs), 0), fam.dimension)))
    pts = []
    for u in dirs:
        r = _radius_for(fam, weights, u, rho)
        if r is not None:
            pts.append(r * u)
    if not pts:
        raise PreconditionError("no sampled direction reaches the sphere of radius rho")
    pts = np.array(pts)
    vals = phi.values(pts)
    a = max(phi(np.zeros(fam.dimension)), phi(fc))
    return GeometryCheck(rho=rho, boundary_min=float(np.min(vals)), a=a, samples=pts, f_distance=f_dist)


@dataclass(frozen=True)
class NearMaxSet:
    epsilon: float
    c_current: float
    indices: tuple


def near_max_set(gamma: DiscretePath, phi: FunctionalHandle, c_current: float, eps: float,
                 values=None) -> NearMaxSet:
    """Node indices with phi(gamma_i) >= c_current - eps."""
    vals = node_values(gamma, phi) if values is None else np.asarray(values)
    a = max(vals[0], vals[-1])
    if not 0 < eps < c_current - a:
        raise PreconditionError(f"need 0 < eps < c - a, got eps={eps}, c-a={c_current - a}")
    idx = tuple(int(i) for i in np.flatnonzero(vals >= c_current - eps))
    return NearMaxSet(eps, c_current, idx)


def cutoff(values, c_current: float, eps: float) -> np.ndarray:
    """1 where phi >= c, 0 where phi <= c - eps, linear in between."""
    return np.clip((np.asarray(values) - (c_current - eps)) / eps, 0.0, 1.0)


def partition_weights(times, centres, halfwidth: float) -> np.ndarray:
    """chi_j(t_i) from distance-to-complement ratios over intervals (t_j - h, t_j + h).

    Returns an array of shape (len(times), len(centres)); rows sum to 1 inside
    the union of intervals and to 0 outside.
    """
    t = np.asarray(times)[:, None]
    c = np.asarray(centres)[None, :]
    dist = np.maximum(0.0, halfwidth - np.abs(t - c))
    total = dist.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, dist / np.where(total > 0, total, 1.0), 0.0)


def descent_direction(phi: FunctionalHandle, x: np.ndarray, tangent=None):
    """Top-grade unit direction with the most negative available pairing, or None.

    With ``tangent`` the gradient's component along it is removed first.
    """
    fam = phi.family
    if phi.grad is not None or phi.dderiv is not None:
        g = gradient(phi, x)
        if tangent is not None:
            tn = float(np.dot(tangent, tangent))
            if tn > 0:
                g = g - (np.dot(g, tangent) / tn) * tangent
        nrm = float(fam.top(g))
        if nrm == 0.0:
            return None, 0.0
        d = -g / nrm
        return d, directional_derivative(phi, x, d)
    best, best_p = None, 0.0
    for k in range(fam.dimension):
        e = np.zeros(fam.dimension)
        e[k] = 1.0
        e /= fam.top(e)
        for d in (e, -e):
            p = directional_derivative(phi, x, d)
            if p < best_p:
                best, best_p = d, p
    return best, best_p


@dataclass
class Deformation:
    path: DiscretePath
    alpha: float
    eps: float
    psi_before: float
    psi_after: float
    covered: tuple
    chi_min: float

    @property
    def decrease(self) -> float:
        return self.psi_before - self.psi_after


def deformation(
    gamma: DiscretePath,
    phi: FunctionalHandle,
    S: NearMaxSet,
    eps: float,
    alpha: float = 0.1,
    B: BornologySample | None = None,
    *,
    values=None,
    objective=None,
    max_halvings: int = 40,
    normal: bool = False,
) -> Deformation:
    """Push the near-maximal part of the path downhill.

    Nodes of ``S`` whose unit descent direction pairs below ``-eps`` with the
    derivative are covered; the displacement ``chi(t) sum_j chi_j(t) g_j`` is
    scaled by the largest ``alpha / 2^k`` that lowers Psi by at least
    ``eps * alpha / 2``.  Raises :class:`EpsilonCritical` when no node is
    covered or no step size achieves that decrease.

    ``objective`` measures Psi for the decrease test; the default is the
    node maximum.  With ``normal`` each direction drops its component along
    the local chord, which only reparametrizes the path.
    """
    if not S.indices:
        raise PreconditionError("empty near-maximum set")
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    vals = node_values(gamma, phi) if values is None else np.asarray(values)
    before = psi_from_values(vals)
    if objective is None:
        objective = lambda g: psi_from_values(node_values(g, phi)).value
    psi_before = objective(gamma)
    dirs, covered, stuck = [], [], []
    for j in S.indices:
        tangent = None
        if normal and 0 < j < gamma.m:
            tangent = gamma.nodes[j + 1] - gamma.nodes[j - 1]
        d, p = descent_direction(phi, gamma.nodes[j], tangent)
        if d is not None and p < -eps:
            dirs.append(d)
            covered.append(j)
        else:
            stuck.append(j)
    if not covered:
        raise EpsilonCritical("no near-maximal node admits a descent direction", stuck)
    times = gamma.times
    h = 1.0 / gamma.m
    chi_j = partition_weights(times, times[covered], h)
    chi = cutoff(vals, S.c_current, eps)
    disp = chi[:, None] * (chi_j @ np.array(dirs))
    chi_min = float(np.min(chi[list(before.argmax_nodes)]))
    a = alpha
    for _ in range(max_halvings + 1):
        mu = gamma.replace_interior(gamma.nodes[1:-1] + a * disp[1:-1])
        psi_after = objective(mu)
        if psi_before - psi_after >= 0.5 * eps * a:
            return Deformation(mu, a, eps, psi_before, psi_after, tuple(covered), chi_min)
        a *= 0.5
    raise EpsilonCritical("no step size achieves the predicted decrease", stuck or S.indices)


def deform(gamma, phi, S, eps, alpha=0.1, B=None, **kw) -> DiscretePath:
    return deformation(gamma, phi, S, eps, alpha, B, **kw).path


@dataclass
class MountainPassConfig:
    eps0: float = 0.1
    alpha0: float = 0.1
    intervals: int = 32
    max_intervals: int = 1024
    max_outer: int = 32
    ekeland_budget: int = 400
    proposals: int = 16
    tol_cluster: float = 1e-3
    tol_grad: float = 1e-8
    tol_c: float = 1e-3
    bornology_scale: float = 1.0
    seed: int = 0
    polish_iters: int = 60
    segment_samples: int = 3
    ps_window: int = 16
    ps_dual_tol: float = 1e-6
    max_guards: int = 4
    schedule: str = "geometric"  # eps0/2^j after j recorded points, or "harmonic": eps0/(j+1)

    def eps_at(self, eps0: float, k: int) -> float:
        if self.schedule == "harmonic":
            return eps0 / k
        if self.schedule == "geometric":
            return eps0 * 0.5 ** (k - 1)
        raise ValueError(f"unknown eps schedule {self.schedule!r}")


@dataclass
class PSPoint:
    k: int
    eps: float
    point: np.ndarray
    value: float
    dual: np.ndarray
    node: int
    t: float
    c_at_record: float


@dataclass
class IterationRecord:
    k: int
    eps: float
    psi: float
    c_estimate: float
    dual: np.ndarray
    accepted: int
    deformations: int
    intervals: int
    certificate_ok: bool


@dataclass
class MountainPassResult:
    c_estimate: float
    verdict: str
    h: Optional[GradedVector] = None
    ps_sequence: list = field(default_factory=list)
    path_trace: list = field(default_factory=list)
    deformations: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    ps_verdict: Optional[PSVerdict] = None
    path: Optional[DiscretePath] = None
    geometry: Optional[GeometryCheck] = None
    notes: list = field(default_factory=list)

    def envelope_violations(self) -> list:
        """PS points breaking |phi(f_k) - c| <= eps_k or dual_n <= eps_k when recorded."""
        bad = []
        for p in self.ps_sequence:
            if abs(p.value - p.c_at_record) > p.eps:
                bad.append((p.k, "value", p.value))
            for n, d in enumerate(p.dual, start=1):
                if d > p.eps:
                    bad.append((p.k, f"dual_{n}", float(d)))
        return bad

    def deformation_violations(self) -> list:
        return [d for d in self.deformations if not d["decrease"] >= 0.5 * d["eps"] * d["alpha"]]

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        grades = len(self.path_trace[0].dual) if self.path_trace else 0
        w.writerow(["k", "eps", "psi", "c_estimate"] + [f"dual_{n}" for n in range(1, grades + 1)]
                   + ["accepted", "deformations", "intervals"])
        for r in self.path_trace:
            w.writerow([r.k, repr(r.eps), repr(r.psi), repr(r.c_estimate)]
                       + [repr(float(d)) for d in r.dual] + [r.accepted, r.deformations, r.intervals])
        return buf.getvalue()

    def ps_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = len(self.ps_sequence[0].point) if self.ps_sequence else 0
        grades = len(self.ps_sequence[0].dual) if self.ps_sequence else 0
        w.writerow(["k", "eps", "node", "t", "phi"] + [f"dual_{n}" for n in range(1, grades + 1)]
                   + [f"x{i}" for i in range(dim)])
        for p in self.ps_sequence:
            w.writerow([p.k, repr(p.eps), p.node, repr(p.t), repr(p.value)]
                       + [repr(float(d)) for d in p.dual] + [repr(float(v)) for v in p.point])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "c_estimate": self.c_estimate,
            "h": None if self.h is None else self.h.coords.tolist(),
            "ps_points": len(self.ps_sequence),
            "iterations": len(self.path_trace),
            "accepted_deformations": len(self.deformations),
            "deformation_violations": len(self.deformation_violations()),
            "envelope_violations": len(self.envelope_violations()),
            "notes": list(self.notes),
        }


def _unit_perpendicular(rng, tangent, family):
    v = rng.standard_normal(family.dimension)
    tn = float(np.dot(tangent, tangent))
    if tn > 0:
        v = v - (np.dot(v, tangent) / tn) * tangent
    nrm = float(family.top(v))
    return None if nrm == 0.0 else v / nrm


class _PathSampler:
    """Competitors for the Ekeland descent over paths.

    First the cutoff/partition deformation, then the same deformation with
    directions projected off the local chord, then random
    single-node perturbations of near-maximal nodes.  Random moves are taken
    perpendicular to the local chord so they cannot lower the node maximum
    just by sliding nodes along the path, and any competitor whose segments
    rise well above its nodes is dropped.
    """

    def __init__(self, phi, eps, cfg, B, hop_tol):
        self.phi, self.eps, self.cfg, self.B = phi, eps, cfg, B
        self.hop_tol = hop_tol
        self.info = {}
        self.critical = None

    def __call__(self, gamma, psi_val, rng):
        vals = node_values(gamma, self.phi)
        try:
            S = near_max_set(gamma, self.phi, psi_val, self.eps, values=vals)
        except PreconditionError:
            return
        if not S.indices:
            return
        for normal, tag in ((True, "deform-normal"), (False, "deform")):
            try:
                dfm = deformation(gamma, self.phi, S, self.eps, self.cfg.alpha0, self.B, values=vals,
                                  normal=normal)
            except EpsilonCritical as exc:
                self.critical = exc
                continue
            if not self._hops(dfm.path):
                self.info[id(dfm.path)] = dfm
                yield dfm.path, tag
        if gamma.family.dimension < 2:
            return
        idx = np.array(S.indices)
        for _ in range(self.cfg.proposals):
            i = int(rng.choice(idx))
            if i in (0, gamma.m):
                continue
            tangent = gamma.nodes[i + 1] - gamma.nodes[i - 1]
            v = _unit_perpendicular(rng, tangent, gamma.family)
            if v is None:
                continue
            step = self.cfg.alpha0 * 10.0 ** (-rng.integers(0, 4))
            interior = np.array(gamma.nodes[1:-1])
            interior[i - 1] += step * v
            cand = gamma.replace_interior(interior)
            if not self._hops(cand):
                yield cand, "random"

    def _hops(self, gamma) -> bool:
        """True when a segment rises more than ``hop_tol`` above the node maximum.

        Such a path has nodes on both sides of a ridge it still crosses, so
        its node maximum understates its true maximum.
        """
        n = self.cfg.segment_samples
        if n <= 0:
            return False
        sup = path_sup(gamma, self.phi, per_segment=n, refine_top=0)
        return sup.value - float(np.max(sup.node_values)) > self.hop_tol


def _best_recordable(gamma, phi, S, eps, B, sup=None):
    """Point within eps of S.c_current with every dual norm <= eps and smallest dual norm, or None.

    Candidates are the nodes of S plus the path maximiser ``sup`` (node
    index -1).  Returns ``(node, t, point, value, duals)``.
    """
    cands = [(j, j / gamma.m, np.array(gamma.nodes[j])) for j in S.indices]
    if sup is not None and sup.point is not None:
        cands.append((-1, sup.t, np.array(sup.point)))
    best = None
    for j, t, x in cands:
        fx = float(phi.eval(x))
        if abs(fx - S.c_current) > eps:
            continue
        dn = dual_norms(gradient(phi, x), B)
        if np.all(dn <= eps) and (best is None or np.max(dn) < np.max(best[4])):
            best = (j, t, x, fx, dn)
    return best


def polish(phi: FunctionalHandle, x0, B: BornologySample, tol_grad: float = 1e-8, max_iter: int = 60):
    """Drive the derivative to zero from ``x0`` (Newton on the gradient field, backtracking).

    Returns ``(x, dual_norms)``.  Plain descent on phi would leave a saddle,
    so the iteration minimises the squared gradient instead.
    """
    x = np.array(coords(x0), dtype=float)
    g = gradient(phi, x)
    dn = dual_norms(g, B)
    for _ in range(max_iter):
        if np.max(dn) <= tol_grad:
            break
        dim = x.size
        hstep = 1e-6 * (1.0 + np.max(np.abs(x)))
        H = np.empty((dim, dim))
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = hstep
            H[:, k] = (gradient(phi, x + e) - gradient(phi, x - e)) / (2 * hstep)
        p = -np.linalg.lstsq(0.5 * (H + H.T), g, rcond=None)[0]
        r0 = float(g @ g)
        s = 1.0
        for _ in range(40):
            xn = x + s * p
            gn = gradient(phi, xn)
            if float(gn @ gn) < r0:
                break
            s *= 0.5
        else:
            break
        x, g = xn, gn
        dn = dual_norms(g, B)
    return x, dn


def run(
    phi: FunctionalHandle,
    f,
    geometry: GeometryCheck,
    cfg: MountainPassConfig | None = None,
    *,
    B: BornologySample | None = None,
    start: DiscretePath | None = None,
    weights: MetricWeights | None = None,
) -> MountainPassResult:
    """Mountain-pass search between 0 and ``f``."""
    cfg = cfg or MountainPassConfig()
    fam = phi.family
    if not geometry.valid:
        raise PreconditionError(f"mountain-pass geometry invalid (margin {geometry.margin:.6g})")
    if B is None:
        B = coordinate_sample(fam, cfg.bornology_scale)
    if weights is None:
        weights = MetricWeights.default(fam.count)
    rng = np.random.default_rng(cfg.seed)
    gamma = start if start is not None else DiscretePath.straight(coords(f), fam, cfg.intervals)
    sigma = lambda g1, g2: path_metric(g1, g2, weights)
    psi_of = lambda g: psi_from_values(node_values(g, phi)).value

    a = geometry.a
    c_est = psi_of(gamma)
    result = MountainPassResult(c_estimate=c_est, verdict=BUDGET_EXHAUSTED, geometry=geometry)
    if c_est <= a:
        raise PreconditionError("initial path maximum does not exceed a")
    eps0 = min(cfg.eps0, (c_est - a) / 2)
    pts: list[PSPoint] = []

    k = 0
    while k < cfg.max_outer:
        k += 1
        # the schedule only advances past iterations that recorded a point
        eps = min(cfg.eps_at(eps0, len(pts) + 1), (c_est - a) / 2)
        sampler = _PathSampler(phi, eps, cfg, B, eps)
        guards = 0
        accepted = []

        def on_move(mv, y, _acc=accepted, _s=sampler, _k=k):
            if mv.tag.startswith("deform"):
                d = _s.info[id(y)]
                _acc.append(d)
                result.deformations.append({
                    "k": _k, "eps": d.eps, "alpha": d.alpha, "decrease": mv.decrease,
                    "chi_min": d.chi_min, "distance": mv.distance,
                })

        while True:
            cert = almost_minimizer(psi_of, sigma, gamma, eps, sampler, cfg.ekeland_budget, rng, on_move)
            sampler.info.clear()
            gamma = cert.point
            result.certificates.append(cert)
            sup = path_sup(gamma, phi)
            rec = None
            if sup.value - cert.value <= eps:
                S = near_max_set(gamma, phi, cert.value, eps)
                rec = _best_recordable(gamma, phi, S, eps, B, sup)
            if rec is not None or guards >= cfg.max_guards:
                break
            # nodes slid off a ridge the segments still cross: respace them along the polygon
            guards += 1
            m_new = gamma.m * 2 if guards > 1 and gamma.m * 2 <= cfg.max_intervals else gamma.m
            log.info("k=%d: no eps-critical node (sup gap %.3g), respacing on %d intervals",
                     k, sup.value - cert.value, m_new)
            gamma = reparametrize(gamma, m_new)
        c_est = cert.value
        if rec is None:
            result.notes.append(f"k={k}: no node with all dual norms <= eps={eps:.3g}")
            dn = np.full(fam.count, np.nan)
        else:
            j, t, x, fx, dn = rec
            pts.append(PSPoint(k, eps, x, fx, dn, j, t, c_est))
        result.path_trace.append(IterationRecord(
            k, eps, cert.value, c_est, dn, len(cert.moves), len(accepted), gamma.m, not cert.violations()))

        if len(pts) >= cfg.ps_window:
            window = pts[-cfg.ps_window:]
            tail = window[len(window) - len(window) // 2:]
            verdict = ps_diagnose(
                phi, [p.point for p in window], B, level=c_est,
                tol_dual=tail[0].eps, level_tol=tail[0].eps,
                tol_cluster=cfg.tol_cluster, weights=weights,
            )
            result.ps_verdict = verdict
            if verdict.kind == CLUSTER_FOUND:
                h, dn_h = polish(phi, verdict.cluster_point.coords, B, cfg.tol_grad, cfg.polish_iters)
                if np.max(dn_h) <= cfg.tol_grad and abs(phi(h) - c_est) <= cfg.tol_c:
                    result.h = GradedVector(h, fam)
                    result.verdict = CRITICAL_POINT_FOUND
                    break
                result.notes.append(f"k={k}: polish stalled at dual {np.max(dn_h):.3e}")
            elif verdict.kind == PS_VIOLATED:
                # only a tail that is critical to ps_dual_tol counts as escape
                if max(float(np.max(p.dual)) for p in tail) <= cfg.ps_dual_tol:
                    result.verdict = PS_VIOLATED
                    break

    result.c_estimate = c_est
    result.ps_sequence = pts
    result.path = gamma
    return result
