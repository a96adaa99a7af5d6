import math

import numpy as np
import pytest
from scipy.integrate import quad

from frechet_mp.diffeo_solver import SolveConfig, solve
from frechet_mp.errors import NonFiniteError, PreconditionError, UnknownProblem
from frechet_mp.functional import gradient_check
from frechet_mp.problems import (
    BUILTINS,
    KERNELS,
    ProblemSpec,
    Reference,
    builtin,
    from_config,
    sin_forcing,
    volterra_build,
)


def sup_error(name, N):
    p = builtin(name, N=N)
    r = solve(p.handle, p.target, p.merit, SolveConfig(tol_res=1e-8))
    assert r.solved, (name, N, r.reason)
    return float(np.max(np.abs(r.solution.coords - p.references["exact"].value)))


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_have_provenance(name):
    p = builtin(name)
    assert p.name == name
    for ref in p.references.values():
        assert isinstance(ref, Reference) and ref.provenance
    assert p.functional is not None or p.handle is not None


def test_unknown_name():
    with pytest.raises(UnknownProblem):
        builtin("double-well-3d")


def test_reference_without_provenance_rejected():
    with pytest.raises(ValueError):
        ProblemSpec("x", builtin("identity").family, references={"c": Reference(1.0, "")})
    with pytest.raises(ValueError):
        ProblemSpec("x", builtin("identity").family, params={"N": 0})


def test_double_well_1d_definition():
    p = builtin("double-well-1d")
    assert p.references["c"].value == 1.0
    assert p.functional([0.0]) == 0.0 and p.functional([2.0]) == 0.0 and p.functional([1.0]) == 1.0
    assert np.array_equal(p.endpoint, [2.0])


def test_complex_exp_jacobian_inverse():
    h = builtin("complex-exp").handle
    rng = np.random.default_rng(0)
    for _ in range(20):
        e = h.draw(rng)
        J = h.jac(e)
        assert np.linalg.det(J) == pytest.approx(math.exp(2 * e[0]), rel=1e-12)
        k = rng.standard_normal(2)
        assert np.allclose(J @ h.nu(e, k), k, atol=1e-12)


@pytest.mark.parametrize("name", sorted(n for n in BUILTINS if builtin(n).functional is not None))
def test_builtin_functional_gradients(name):
    p = builtin(name)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.uniform(-1, 3, p.family.dimension)
        assert gradient_check(p.functional, x, [rng.standard_normal(p.family.dimension)]) <= 1e-5


def test_volterra_linear_cos():
    assert sup_error("volterra-linear", 64) <= 1e-3


def test_volterra_linear_refinement_order():
    e64, e128 = sup_error("volterra-linear", 64), sup_error("volterra-linear", 128)
    assert e64 / e128 >= 3.0


def test_volterra_zero_kernel_is_quadrature():
    assert sup_error("volterra-zero", 64) <= 1e-3


def test_volterra_sin_manufactured():
    assert sup_error("volterra-sin", 64) <= 1e-3


def test_sin_forcing_against_series():
    t = np.array([0.0, 0.5, 1.0])
    ref = [math.cos(v) + quad(lambda s: math.sin(math.sin(s)), 0.0, v, epsabs=1e-13)[0] for v in t]
    assert np.allclose(sin_forcing(t), ref, atol=1e-9)


def test_volterra_first_row_is_initial_condition():
    p = builtin("volterra-linear", N=16, x0=2.5)
    x = np.linspace(1, 2, 16)
    assert p.handle.apply(x)[0] == pytest.approx(1.0 - 2.5)
    J = p.handle.jac(x)
    assert np.allclose(np.triu(J, 1), 0.0)


def test_volterra_preconditions():
    K, dK = KERNELS["linear"]
    with pytest.raises(PreconditionError):
        volterra_build(K, np.zeros(4), 1.0, 4, dK)
    with pytest.raises(NonFiniteError), np.errstate(all="ignore"):
        volterra_build(lambda t, s, x: x / 0.0 * 0.0, lambda t: 0 * t, 1.0, 16)


def test_volterra_fd_kernel_derivative():
    K, dK = KERNELS["sin"]
    exact = volterra_build(K, np.cos, 0.0, 16, dK)
    approx = volterra_build(K, np.cos, 0.0, 16)
    x = np.linspace(0, 1, 16) ** 2
    assert np.allclose(exact.jac(x), approx.jac(x), atol=1e-8)


def test_from_config():
    p = from_config({"name": "volterra-linear", "N": 32, "grades": 2, "x0": 2.0})
    assert p.family.dimension == 32 and p.family.count == 2 and p.params["x0"] == 2.0
    p = from_config({"problem": "identity", "dimension": 3})
    assert p.family.dimension == 3
    with pytest.raises(UnknownProblem):
        from_config({})
    with pytest.raises(ValueError):
        from_config({"name": "volterra-linear", "kernel": "sin"})
