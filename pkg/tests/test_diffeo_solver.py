import math

import numpy as np
import pytest

from frechet_mp import mountain_pass as mp
from frechet_mp.diffeo_solver import (
    MeritFunctional,
    SolveConfig,
    TameMapHandle,
    chain_rule_error,
    injectivity_probe,
    linearization_error,
    merit,
    merit_functional,
    solve,
    verify_c1,
)
from frechet_mp.errors import C1Violation, PreconditionError
from frechet_mp.functional import PS_VIOLATED
from frechet_mp.graded_space import SeminormFamily, coordinate_sample, dual_norms
from frechet_mp.problems import builtin, linear_map


def test_c1_identity_exact():
    r = verify_c1(builtin("identity").handle, 100, 1e-12)
    assert r.worst == 0.0 and r.passed


def test_c1_linear_matrix():
    r = verify_c1(builtin("linear").handle, 100, 1e-12)
    assert r.passed and r.worst <= 1e-12


def test_c1_cubic_fails_at_origin():
    h = builtin("cubic-degenerate").handle
    r = verify_c1(h, 100, 1e-8)
    assert not r.passed
    assert np.max(np.abs(r.worst_point)) <= 1e-6
    with pytest.raises(C1Violation) as exc:
        verify_c1(h, 100, 1e-8, raise_on_fail=True)
    assert exc.value.report.worst == r.worst


def test_c1_complex_exp_and_volterra():
    for name in ("complex-exp", "volterra-linear", "volterra-sin", "volterra-zero"):
        assert verify_c1(builtin(name).handle, 100, 1e-8).passed, name


def test_merit_hand_example():
    fam = SeminormFamily("weighted-l2", 2, 2)
    h = linear_map(np.eye(2), 2)
    iota = MeritFunctional(fam, (0.5, 0.25))
    assert merit(np.array([1.0, 0.0]), np.zeros(2), iota, h) == pytest.approx(0.75)


def test_merit_zero_at_preimage_and_reparametrisation():
    p = builtin("complex-exp")
    e = np.array([0.3, -1.1])
    f = p.handle.apply(e)
    assert merit(e, f, p.merit, p.handle) == 0.0
    l = np.array([0.5, 0.2])
    m1 = merit(e, l, p.merit, p.handle)
    m2 = merit(e + [0.0, 2 * math.pi], l, p.merit, p.handle)
    assert m1 == pytest.approx(m2, rel=1e-12)


def test_merit_positivity():
    rng = np.random.default_rng(0)
    for name in ("identity", "volterra-linear"):
        iota = builtin(name).merit
        B = coordinate_sample(iota.family)
        for _ in range(1000):
            x = rng.standard_normal(iota.family.dimension) * 10.0 ** rng.uniform(-4, 2)
            assert iota(x) > 0
            assert np.max(dual_norms(iota.grad(x), B)) > 0
        assert iota(np.zeros(iota.family.dimension)) == 0.0


def test_merit_needs_hilbertian_family():
    with pytest.raises(ValueError):
        MeritFunctional(SeminormFamily("sup-grades", 3, 3))


def test_solve_identity_one_step():
    p = builtin("identity")
    f = np.array([1.0, -2.0, 3.0, 0.5])
    r = solve(p.handle, f, p.merit)
    assert r.solved and r.iterations == 1
    assert np.array_equal(r.solution.coords, f)


def test_solve_linear_matches_inverse():
    p = builtin("linear")
    r = solve(p.handle, p.target, p.merit)
    assert r.solved
    assert np.allclose(r.solution.coords, p.references["solution"].value, atol=1e-10)


def test_gauss_newton_direction_solves_linearisation():
    p = builtin("volterra-sin")
    e = p.handle.draw(np.random.default_rng(1))
    k = p.target - p.handle.apply(e)
    step = p.handle.nu(e, k)
    assert np.max(p.handle.codomain.values(p.handle.dtau(e, step) - k)) <= 1e-8


def test_solve_volterra_linear():
    p = builtin("volterra-linear")
    r = solve(p.handle, p.target, p.merit, SolveConfig(tol_res=1e-8))
    assert r.solved
    assert np.all(r.residual_seminorms <= 1e-8)
    assert np.max(np.abs(r.solution.coords - p.references["exact"].value)) <= 1e-3
    resid = p.handle.apply(r.solution.coords) - p.target
    assert p.merit(resid) <= sum(w * 1e-16 for w in p.merit.weights)


def test_solve_complex_exp_origin_is_unsolved():
    p = builtin("complex-exp")
    r = solve(p.handle, p.target, p.merit)
    assert not r.solved
    xs = [e[0] for e in r.iterates]
    assert xs[-1] < xs[0] - 5  # escaping to x -> -inf
    assert r.ps_verdict is not None and r.ps_verdict.kind == PS_VIOLATED


def test_solve_reports_stall_and_step_types():
    p = builtin("complex-exp")
    r = solve(p.handle, p.target, p.merit, SolveConfig(gauss_newton=False, max_iter=50))
    assert not r.solved
    assert {s.step_type for s in r.method_trace[1:]} == {"gradient"}


def test_report_exports():
    p = builtin("identity")
    r = solve(p.handle, np.ones(4), p.merit)
    assert r.trace_csv().splitlines()[0] == "iteration,merit,step_type,step_size,step_norm"
    assert r.residual_table().splitlines()[0] == "grade,residual"
    assert '"solved": true' in r.to_text()


def test_chain_rule_consistency():
    rng = np.random.default_rng(2)
    for name in ("complex-exp", "volterra-sin", "linear"):
        p = builtin(name)
        for _ in range(5):
            e = p.handle.draw(rng)
            dirs = [p.handle.draw(rng) for _ in range(3)]
            assert chain_rule_error(p.handle, p.target, p.merit, e, dirs) <= 1e-6, name
            assert linearization_error(p.handle, e, dirs) <= 1e-6, name


def test_merit_gradient_is_chain_rule():
    p = builtin("complex-exp")
    phi = merit_functional(p.handle, np.array([1.0, 0.0]), p.merit)
    e = np.array([0.2, 0.4])
    r = p.handle.apply(e) - [1.0, 0.0]
    assert np.allclose(phi.grad(e), p.handle.jac(e).T @ p.merit.grad(r))


def test_injectivity_probe_complex_exp():
    p = builtin("complex-exp")
    e1, e2, l = p.preimages
    r = injectivity_probe(p.handle, e1, e2, l, p.merit)
    assert r.verdict == mp.PS_VIOLATED
    assert r.h is None
    last = r.ps_sequence[-1]
    assert last.point[0] < -5 and np.max(last.dual) <= 1e-6


def test_injectivity_probe_refuses_injective_setups():
    p = builtin("identity")
    l = np.ones(4)
    with pytest.raises(PreconditionError):
        injectivity_probe(p.handle, l, l + 1.0, l, p.merit)
    with pytest.raises(PreconditionError):
        injectivity_probe(p.handle, l, l, l, p.merit)
    # strictly monotone 1D map: a second preimage does not exist
    fam = SeminormFamily("weighted-l2", 1, 3)
    mono = TameMapHandle(fam, fam, tau=lambda e: e + e ** 3, dtau=lambda e, q: (1 + 3 * e ** 2) * q,
                         nu=lambda e, k: k / (1 + 3 * e ** 2))
    with pytest.raises(PreconditionError):
        injectivity_probe(mono, np.zeros(1), np.ones(1), np.zeros(1), MeritFunctional(fam))
