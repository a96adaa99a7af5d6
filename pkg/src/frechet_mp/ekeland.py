"""Constructive epsilon-almost-minimisers with checkable certificates.

Given a lower-bounded ``psi`` on a metric space ``(X, sigma)`` the descent

    x <- y   whenever   psi(y) < psi(x) - eps * sigma(x, y)

can only be taken finitely often (each move lowers psi by a positive amount
tied to the distance moved).  When a round of competitor proposals offers
no such ``y``, the current point satisfies the perturbed-minimality
inequality against every probe of that round, which is what the certificate
records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

import numpy as np

from .errors import NonFiniteError, PreconditionError

CERT_TOL = 1e-12


@dataclass
class Probe:
    competitor: Any
    value: float
    distance: float
    tag: str = ""


@dataclass
class Move:
    before: float
    after: float
    distance: float
    tag: str = ""
    kind: str = "descent"  # or "restart"

    @property
    def decrease(self) -> float:
        return self.before - self.after


@dataclass
class EkelandCertificate:
    point: Any
    value: float
    epsilon: float
    inf_estimate: float
    probes: list = field(default_factory=list)
    moves: list = field(default_factory=list)
    rounds: int = 0
    stable: bool = True

    def violations(self, tol: float = CERT_TOL) -> list:
        """Every failed inequality, as human-readable strings (empty means certified)."""
        out = []
        if self.value > self.inf_estimate + self.epsilon + tol:
            out.append(f"almost-minimality: {self.value!r} > {self.inf_estimate!r} + {self.epsilon!r}")
        for k, p in enumerate(self.probes):
            if self.value > p.value + self.epsilon * p.distance + tol:
                out.append(f"probe {k}: {self.value!r} > {p.value!r} + eps*{p.distance!r}")
        for k, mv in enumerate(self.moves):
            if mv.kind == "descent" and not mv.decrease > self.epsilon * mv.distance:
                out.append(f"move {k}: decrease {mv.decrease!r} <= eps*{mv.distance!r}")
        return out

    def check(self, tol: float = CERT_TOL):
        bad = self.violations(tol)
        if bad:
            raise AssertionError("Ekeland certificate violated:\n  " + "\n  ".join(bad))
        return self

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "value": self.value,
            "inf_estimate": self.inf_estimate,
            "stable": self.stable,
            "rounds": self.rounds,
            "point": _plain(self.point),
            "moves": [
                {"before": m.before, "after": m.after, "distance": m.distance, "tag": m.tag, "kind": m.kind}
                for m in self.moves
            ],
            "probes": [{"value": p.value, "distance": p.distance, "tag": p.tag} for p in self.probes],
            "violations": self.violations(),
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _plain(obj):
    if hasattr(obj, "nodes"):
        return np.asarray(obj.nodes).tolist()
    if hasattr(obj, "coords"):
        return np.asarray(obj.coords).tolist()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (float, int)):
        return obj
    return repr(obj)


def _split(item):
    if isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], str):
        return item
    return item, ""


def almost_minimizer(
    psi: Callable[[Any], float],
    sigma: Callable[[Any, Any], float],
    start: Any,
    eps: float,
    sampler: Callable[[Any, float, np.random.Generator], Iterable],
    budget: int = 200,
    rng: Optional[np.random.Generator] = None,
    on_move: Optional[Callable[[Move, Any], None]] = None,
) -> EkelandCertificate:
    """Descend until a full round of competitors fails to improve.

    ``sampler(x, psi_x, rng)`` yields competitors, optionally as
    ``(competitor, tag)`` pairs.  The first competitor that beats the
    perturbed threshold is accepted and a new round starts.  Non-finite
    competitor values are skipped.  If the point is stable but not within
    ``eps`` of the best value seen so far, the descent restarts from that
    best point.  ``budget`` bounds the number of rounds; running out yields
    a certificate with ``stable=False``.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    x = start
    fx = float(psi(x))
    if not math.isfinite(fx):
        raise NonFiniteError("psi is non-finite at the start point")
    best, f_best = x, fx
    moves = []
    probes = []
    rounds = 0
    stable = False
    while rounds < budget:
        rounds += 1
        probes = []
        moved = False
        for item in sampler(x, fx, rng):
            y, tag = _split(item)
            fy = float(psi(y))
            if not math.isfinite(fy):
                continue
            d = float(sigma(x, y))
            if fy < f_best:
                best, f_best = y, fy
            if fy < fx - eps * d:
                mv = Move(fx, fy, d, tag)
                moves.append(mv)
                if on_move is not None:
                    on_move(mv, y)
                x, fx = y, fy
                moved = True
                break
            probes.append(Probe(y, fy, d, tag))
        if moved:
            continue
        if fx > f_best + eps:
            mv = Move(fx, f_best, float(sigma(x, best)), "best-seen", kind="restart")
            moves.append(mv)
            if on_move is not None:
                on_move(mv, best)
            x, fx = best, f_best
            continue
        stable = True
        break
    return EkelandCertificate(
        point=x, value=fx, epsilon=eps, inf_estimate=f_best, probes=probes, moves=moves,
        rounds=rounds, stable=stable,
    )


def line_sampler(scales=(1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4), random_probes: int = 4,
                 grad: Optional[Callable] = None):
    """Competitor generator for functionals on R^d (arrays or floats).

    Proposes negative-gradient steps at several scales (when ``grad`` is
    given), coordinate steps and a few random directions.
    """

    def sample(x, fx, rng):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        scalar = np.ndim(x) == 0
        dirs = []
        if grad is not None:
            g = np.atleast_1d(np.asarray(grad(x), dtype=float))
            nrm = np.linalg.norm(g)
            if nrm > 0:
                dirs.append(("grad", -g / nrm))
        for k in range(xa.size):
            e = np.zeros(xa.size)
            e[k] = 1.0
            dirs.append(("coord", e))
            dirs.append(("coord", -e))
        for _ in range(random_probes):
            v = rng.standard_normal(xa.size)
            dirs.append(("random", v / np.linalg.norm(v)))
        for s in scales:
            for tag, d in dirs:
                y = xa + s * d
                yield (float(y[0]) if scalar else y), tag

    return sample
