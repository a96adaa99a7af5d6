"""Built-in problems: mountain-pass test functionals and maps for the solver.

The Volterra problem is the initial value problem

    x'(t) + int_0^t K(t, s, x(s)) ds = y(t),   x(0) = x0,   t in [0, 1]

on a uniform grid of N points.  Row 0 of tau enforces the initial
condition; row i >= 1 is the equation at t_i with a backward difference
(second order from i = 2 on) and trapezoidal quadrature.  Row i only sees
x_0..x_i, so tau' is lower triangular and nu is a triangular solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.linalg import solve_triangular

from .diffeo_solver import MeritFunctional, TameMapHandle, merit_functional
from .errors import NonFiniteError, PreconditionError, UnknownProblem
from .functional import FunctionalHandle
from .graded_space import SeminormFamily


@dataclass(frozen=True)
class Reference:
    value: object
    provenance: str  # TRIVIAL / DERIVED / ...


@dataclass
class ProblemSpec:
    name: str
    family: SeminormFamily
    functional: Optional[FunctionalHandle] = None
    endpoint: Optional[np.ndarray] = None
    handle: Optional[TameMapHandle] = None
    target: Optional[np.ndarray] = None
    merit: Optional[MeritFunctional] = None
    references: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    c1_violating: bool = False
    preimages: Optional[tuple] = None  # (e1, e2, l) for injectivity probes

    def __post_init__(self):
        for key, ref in self.references.items():
            if not isinstance(ref, Reference) or not ref.provenance:
                raise ValueError(f"reference {key!r} lacks a provenance tag")
        for key, val in self.params.items():
            if isinstance(val, (int, float)) and not isinstance(val, bool) and key in POSITIVE_PARAMS and val <= 0:
                raise ValueError(f"parameter {key} must be positive")


POSITIVE_PARAMS = ("N", "dimension", "grades", "intervals")


# ---------------------------------------------------------------- functionals

def _double_well_1d(grades: int = 3) -> ProblemSpec:
    fam = SeminormFamily("sup-grades", 1, grades)

    def value(x):
        return ((x[0] - 1.0) ** 2 - 1.0) ** 2

    def grad(x):
        s = x[0] - 1.0
        return np.array([4.0 * s * (s * s - 1.0)])

    phi = FunctionalHandle(fam, value, grad=grad, name="double-well-1d")
    return ProblemSpec(
        "double-well-1d", fam, functional=phi, endpoint=np.array([2.0]),
        references={"c": Reference(1.0, "TRIVIAL: every path from 0 to 2 crosses x=1"),
                    "saddle": Reference(np.array([1.0]), "TRIVIAL")},
    )


def _double_well_2d(grades: int = 3) -> ProblemSpec:
    fam = SeminormFamily("weighted-l2", 2, grades)

    def value(x):
        return ((x[0] - 1.0) ** 2 - 1.0) ** 2 + x[1] ** 2

    def grad(x):
        s = x[0] - 1.0
        return np.array([4.0 * s * (s * s - 1.0), 2.0 * x[1]])

    phi = FunctionalHandle(fam, value, grad=grad, name="double-well-2d")
    return ProblemSpec(
        "double-well-2d", fam, functional=phi, endpoint=np.array([2.0, 0.0]),
        references={"c": Reference(1.0, "DERIVED: brute force over grid paths"),
                    "saddle": Reference(np.array([1.0, 0.0]), "DERIVED")},
    )


# ------------------------------------------------------------------- maps

def _identity(dimension: int = 4, grades: int = 3) -> ProblemSpec:
    fam = SeminormFamily("weighted-l2", dimension, grades)
    eye = np.eye(dimension)
    h = TameMapHandle(
        fam, fam,
        tau=lambda e: np.array(e, dtype=float),
        dtau=lambda e, p: np.array(p, dtype=float),
        nu=lambda e, k: np.array(k, dtype=float),
        jacobian=lambda e: eye,
        name="identity",
    )
    return ProblemSpec("identity", fam, handle=h, target=np.arange(1.0, dimension + 1.0),
                       merit=MeritFunctional(fam),
                       references={"iterations": Reference(1, "TRIVIAL")})


def linear_map(A: np.ndarray, grades: int = 3, name: str = "linear") -> TameMapHandle:
    A = np.asarray(A, dtype=float)
    fam = SeminormFamily("weighted-l2", A.shape[0], grades)
    Ainv = np.linalg.inv(A)
    return TameMapHandle(
        fam, fam,
        tau=lambda e: A @ e,
        dtau=lambda e, p: A @ p,
        nu=lambda e, k: Ainv @ k,
        jacobian=lambda e: A,
        name=name,
    )


def _linear(dimension: int = 4, grades: int = 3) -> ProblemSpec:
    rng = np.random.default_rng(7)
    A = np.eye(dimension) + 0.3 * rng.standard_normal((dimension, dimension))
    h = linear_map(A, grades)
    return ProblemSpec("linear", h.domain, handle=h, target=np.ones(dimension),
                       merit=MeritFunctional(h.codomain),
                       references={"solution": Reference(np.linalg.solve(A, np.ones(dimension)),
                                                         "DERIVED: matrix inverse")})


def _cubic(dimension: int = 1, grades: int = 3) -> ProblemSpec:
    fam = SeminormFamily("weighted-l2", dimension, grades)
    h = TameMapHandle(
        fam, fam,
        tau=lambda e: np.asarray(e, dtype=float) ** 3,
        dtau=lambda e, p: 3.0 * np.asarray(e) ** 2 * p,
        nu=lambda e, k: np.asarray(k) / (3.0 * np.asarray(e) ** 2),
        jacobian=lambda e: np.diag(3.0 * np.asarray(e) ** 2),
        name="cubic-degenerate",
    )
    return ProblemSpec("cubic-degenerate", fam, handle=h, target=np.full(dimension, 8.0),
                       merit=MeritFunctional(fam), c1_violating=True,
                       references={"c1": Reference("fails at e=0", "TRIVIAL: tau'(0) = 0")})


def complex_exp_map(grades: int = 3) -> TameMapHandle:
    """tau(x, y) = (e^x cos y, e^x sin y): a local diffeomorphism that is neither onto nor 1-1."""
    fam = SeminormFamily("weighted-l2", 2, grades)

    def tau(e):
        r = math.exp(e[0])
        return np.array([r * math.cos(e[1]), r * math.sin(e[1])])

    def jac(e):
        r = math.exp(e[0])
        c, s = math.cos(e[1]), math.sin(e[1])
        return np.array([[r * c, -r * s], [r * s, r * c]])

    def jac_inv(e):
        r = math.exp(-e[0])
        c, s = math.cos(e[1]), math.sin(e[1])
        return np.array([[r * c, r * s], [-r * s, r * c]])

    return TameMapHandle(
        fam, fam,
        tau=tau,
        dtau=lambda e, p: jac(e) @ p,
        nu=lambda e, k: jac_inv(e) @ k,
        jacobian=jac,
        sample=lambda rng: np.array([rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi)]),
        name="complex-exp",
    )


def _complex_exp(grades: int = 3) -> ProblemSpec:
    h = complex_exp_map(grades)
    iota = MeritFunctional(h.codomain)
    return ProblemSpec(
        "complex-exp", h.domain, handle=h, target=np.zeros(2), merit=iota,
        preimages=(np.zeros(2), np.array([0.0, 2 * math.pi]), np.array([1.0, 0.0])),
        references={"target_reachable": Reference(False, "DERIVED: |tau| = e^x > 0")},
    )


def _complex_exp_merit(grades: int = 3) -> ProblemSpec:
    base = _complex_exp(grades)
    e1, e2, l = base.preimages
    phi = merit_functional(base.handle, l, base.merit)
    # merit along x -> -inf tends to iota((-1, 0))
    limit = base.merit(np.array([-1.0, 0.0]))
    return ProblemSpec(
        "complex-exp-merit", base.family, functional=phi, endpoint=e2, handle=base.handle,
        target=l, merit=base.merit, preimages=base.preimages,
        references={"merit_limit": Reference(limit, "DERIVED: tau -> 0 as x -> -inf")},
    )


# --------------------------------------------------------------- Volterra

KERNELS = {
    # name: (K(t, s, x), dK/dx)
    "linear": (lambda t, s, x: x, lambda t, s, x: np.ones_like(x)),
    "sin": (lambda t, s, x: np.sin(x), lambda t, s, x: np.cos(x)),
    "zero": (lambda t, s, x: np.zeros_like(x), lambda t, s, x: np.zeros_like(x)),
}


def _difference_matrix(N: int, h: float) -> np.ndarray:
    """Backward differences: first order at t_1, second order (BDF2) from t_2 on; row 0 empty."""
    Dm = np.zeros((N, N))
    Dm[1, 0], Dm[1, 1] = -1.0 / h, 1.0 / h
    for i in range(2, N):
        Dm[i, i - 2], Dm[i, i - 1], Dm[i, i] = 0.5 / h, -2.0 / h, 1.5 / h
    return Dm


def _trapezoid_weights(N: int, h: float) -> np.ndarray:
    """W[i, j]: weight of node j in the trapezoid rule for int_0^{t_i}."""
    W = np.zeros((N, N))
    for i in range(1, N):
        W[i, : i + 1] = h
        W[i, 0] = W[i, i] = 0.5 * h
    return W


def volterra_build(kernel, y, x0: float = 1.0, N: int = 64, dkernel=None, grades: int = 3) -> TameMapHandle:
    """Grid discretisation of the Volterra integro-differential operator.

    ``kernel`` and ``dkernel`` (its x-derivative) are vectorised callables
    ``(t, s, x)``; ``y`` is a callable of t or a length-N array.  Without
    ``dkernel`` the x-derivative is taken by central differences.
    """
    if N < 8:
        raise PreconditionError("Volterra grid needs N >= 8")
    h = 1.0 / (N - 1)
    t = np.linspace(0.0, 1.0, N)
    yv = np.asarray(y(t) if callable(y) else y, dtype=float)
    if yv.shape != (N,):
        raise ValueError("y must evaluate to N grid values")
    if dkernel is None:
        def dkernel(tt, ss, xx):
            d = 1e-6 * (1.0 + np.abs(xx))
            return (kernel(tt, ss, xx + d) - kernel(tt, ss, xx - d)) / (2 * d)
    Dm = _difference_matrix(N, h)
    W = _trapezoid_weights(N, h)
    T, S = np.meshgrid(t, t, indexing="ij")
    mask = W != 0
    probe = np.asarray(kernel(T, S, np.ones((N, N))), dtype=float)
    if not np.all(np.isfinite(probe)):
        raise NonFiniteError("kernel is non-finite on the grid")
    fam = SeminormFamily("ck-grid", N, grades, spacing=h)

    def tau(x):
        x = np.asarray(x, dtype=float)
        K = np.where(mask, kernel(T, S, np.broadcast_to(x[None, :], (N, N))), 0.0)
        out = Dm @ x + np.sum(W * K, axis=1) - yv
        out[0] = x[0] - x0
        return out

    def jac(x):
        x = np.asarray(x, dtype=float)
        dK = np.where(mask, dkernel(T, S, np.broadcast_to(x[None, :], (N, N))), 0.0)
        J = Dm + W * dK
        J[0] = 0.0
        J[0, 0] = 1.0
        return J

    def dtau(x, p):
        return jac(x) @ np.asarray(p, dtype=float)

    def nu(x, k):
        return solve_triangular(jac(x), np.asarray(k, dtype=float), lower=True)

    def sample(rng):
        # smooth random grid function
        c = rng.standard_normal(4)
        return c[0] + c[1] * t + c[2] * np.sin(np.pi * t) + c[3] * np.cos(2 * t)

    return TameMapHandle(fam, fam, tau, dtau, nu, jacobian=jac, sample=sample, name="volterra")


def volterra_merit(N: int, grades: int = 3) -> MeritFunctional:
    return MeritFunctional(SeminormFamily("sobolev-fd", N, grades, spacing=1.0 / (N - 1)))


def sin_forcing(t) -> np.ndarray:
    """y(t) = cos t + int_0^t sin(sin s) ds, so that x*(t) = sin t solves the sin-kernel problem."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([math.cos(v) + integrate.quad(lambda s: math.sin(math.sin(s)), 0.0, v,
                                                  epsabs=1e-14, epsrel=1e-14)[0] for v in t])


def _volterra_linear(N: int = 64, x0: float = 1.0, grades: int = 3) -> ProblemSpec:
    K, dK = KERNELS["linear"]
    h = volterra_build(K, lambda t: np.zeros_like(t), x0, N, dK, grades)
    t = np.linspace(0, 1, N)
    return ProblemSpec(
        "volterra-linear", h.domain, handle=h, target=np.zeros(N), merit=volterra_merit(N, grades),
        params={"N": N, "x0": x0, "kernel": "linear"},
        references={"exact": Reference(x0 * np.cos(t), "DERIVED: x' + int x = 0 gives x0 cos t")},
    )


def _volterra_sin(N: int = 64, grades: int = 3) -> ProblemSpec:
    K, dK = KERNELS["sin"]
    h = volterra_build(K, sin_forcing, 0.0, N, dK, grades)
    t = np.linspace(0, 1, N)
    return ProblemSpec(
        "volterra-sin", h.domain, handle=h, target=np.zeros(N), merit=volterra_merit(N, grades),
        params={"N": N, "x0": 0.0, "kernel": "sin"},
        references={"exact": Reference(np.sin(t), "DERIVED: manufactured solution")},
    )


def _volterra_zero(N: int = 64, x0: float = 1.0, grades: int = 3) -> ProblemSpec:
    K, dK = KERNELS["zero"]
    h = volterra_build(K, np.cos, x0, N, dK, grades)
    t = np.linspace(0, 1, N)
    return ProblemSpec(
        "volterra-zero", h.domain, handle=h, target=np.zeros(N), merit=volterra_merit(N, grades),
        params={"N": N, "x0": x0, "kernel": "zero"},
        references={"exact": Reference(x0 + np.sin(t), "TRIVIAL: x = x0 + int_0^t cos")},
    )


BUILTINS = {
    "double-well-1d": _double_well_1d,
    "double-well-2d": _double_well_2d,
    "identity": _identity,
    "linear": _linear,
    "cubic-degenerate": _cubic,
    "complex-exp": _complex_exp,
    "complex-exp-merit": _complex_exp_merit,
    "volterra-linear": _volterra_linear,
    "volterra-sin": _volterra_sin,
    "volterra-zero": _volterra_zero,
}


def builtin(name: str, **overrides) -> ProblemSpec:
    """Fully configured built-in problem; keyword overrides go to its factory (N, grades, ...)."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; known: {', '.join(sorted(BUILTINS))}") from None
    return factory(**overrides)


def from_config(cfg: dict) -> ProblemSpec:
    """Problem from a config mapping: ``name`` plus optional ``N``, ``grades``, ``x0``, ``kernel``, ``dimension``."""
    name = cfg.get("name") or cfg.get("problem")
    if name is None:
        raise UnknownProblem("config has no problem name")
    over = {}
    if "grades" in cfg:
        over["grades"] = int(cfg["grades"])
    if name.startswith("volterra"):
        if "N" in cfg:
            over["N"] = int(cfg["N"])
        kernel = cfg.get("kernel")
        if kernel is not None and name == "volterra-linear" and kernel != "linear":
            raise ValueError("volterra-linear uses the linear kernel")
        if "x0" in cfg and name != "volterra-sin":
            over["x0"] = float(cfg["x0"])
    elif "dimension" in cfg and name in ("identity", "linear", "cubic-degenerate"):
        over["dimension"] = int(cfg["dimension"])
    return builtin(name, **over)
