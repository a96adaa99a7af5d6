import numpy as np
import pytest

from frechet_mp.errors import MissingGradient, NonFiniteError
from frechet_mp.functional import (
    CLUSTER_FOUND,
    INCONCLUSIVE,
    PS_VIOLATED,
    FunctionalHandle,
    directional_derivative,
    fd_quotient,
    gradient,
    gradient_check,
    ps_diagnose,
)
from frechet_mp.graded_space import GradedVector, SeminormFamily, coordinate_sample, metric_arrays

FAM2 = SeminormFamily("weighted-l2", 2, 2)
FAM3 = SeminormFamily("sup-grades", 3, 3)


def square_norm(fam, with_grad=True):
    return FunctionalHandle(fam, lambda x: float(x @ x), grad=(lambda x: 2 * x) if with_grad else None, name="sq")


def test_constant_functional_has_zero_derivative():
    phi = FunctionalHandle(FAM3, lambda x: 4.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert directional_derivative(phi, rng.standard_normal(3), rng.standard_normal(3)) == 0.0


def test_square_norm_derivative():
    phi = square_norm(FAM2, with_grad=False)
    assert abs(directional_derivative(phi, [1.0, 0.0], [0.0, 1.0])) <= 1e-9
    x, h = np.array([0.3, -1.2]), np.array([2.0, 0.7])
    assert directional_derivative(phi, x, h) == pytest.approx(2 * x @ h, rel=1e-8)


def test_derivative_linear_in_direction():
    phi = FunctionalHandle(FAM3, lambda x: float(np.sin(x[0]) * x[1] + x[2] ** 3))
    rng = np.random.default_rng(1)
    x, h = rng.standard_normal(3), rng.standard_normal(3)
    assert directional_derivative(phi, x, 2 * h) == pytest.approx(2 * directional_derivative(phi, x, h), abs=1e-8)


def test_graded_vector_inputs():
    phi = square_norm(FAM2)
    x = GradedVector([1.0, 2.0], FAM2)
    assert phi(x) == 5.0
    assert np.allclose(gradient(phi, x), [2.0, 4.0])


def test_gradient_check_quadratic():
    A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 3.0]])
    phi = FunctionalHandle(FAM3, lambda x: float(0.5 * x @ A @ x), grad=lambda x: A @ x)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(3)
    assert gradient_check(phi, x, [rng.standard_normal(3) for _ in range(5)]) <= 1e-9


def test_gradient_check_cubic():
    phi = FunctionalHandle(FAM3, lambda x: float(x[0] ** 3), grad=lambda x: np.array([3 * x[0] ** 2, 0.0, 0.0]))
    assert gradient_check(phi, np.ones(3), [np.array([1.0, 0.0, 0.0])]) <= 1e-6


def test_gradient_check_zero_functional():
    phi = FunctionalHandle(FAM3, lambda x: 0.0, grad=lambda x: np.zeros(3))
    assert gradient_check(phi, np.ones(3), [np.ones(3)]) == 0.0


def test_gradient_check_needs_grad():
    with pytest.raises(MissingGradient):
        gradient_check(square_norm(FAM2, with_grad=False), np.ones(2), [np.ones(2)])


def test_nonfinite_evaluation():
    phi = FunctionalHandle(FAM2, lambda x: float("nan"))
    with pytest.raises(NonFiniteError):
        phi(np.zeros(2))
    with pytest.raises(NonFiniteError):
        fd_quotient(phi, np.zeros(2), np.ones(2))


def test_fd_convergence_order():
    phi = FunctionalHandle(FAM3, lambda x: float(np.exp(x[0]) * np.cos(x[1]) + x[2] ** 4))
    x, h = np.array([0.3, 0.7, -0.4]), np.array([1.0, -0.5, 0.25])
    exact = np.exp(x[0]) * np.cos(x[1]) * 1.0 - np.exp(x[0]) * np.sin(x[1]) * (-0.5) + 4 * x[2] ** 3 * 0.25
    ts = [1e-2, 1e-3]
    errs = [abs(fd_quotient(phi, x, h, t) - exact) for t in ts]
    order = np.log(errs[0] / errs[1]) / np.log(ts[0] / ts[1])
    assert order >= 1.8


# ---------------------------------------------------------------- PS diagnostics

def test_constant_sequence_at_critical_point_clusters():
    phi = square_norm(FAM2)
    v = ps_diagnose(phi, [np.zeros(2)] * 16, coordinate_sample(FAM2))
    assert v.kind == CLUSTER_FOUND
    assert v.neighbours >= 3
    assert np.array_equal(v.cluster_point.coords, np.zeros(2))


def test_escaping_exponential_violates_ps():
    fam = SeminormFamily("sup-grades", 1, 3)
    phi = FunctionalHandle(fam, lambda x: float(np.exp(2 * x[0])), grad=lambda x: np.array([2 * np.exp(2 * x[0])]))
    seq = [np.array([-float(i)]) for i in range(20)]
    v = ps_diagnose(phi, seq, coordinate_sample(fam))
    assert v.kind == PS_VIOLATED
    assert v.min_tail_gap > 10 * 1e-3


def test_two_elements_inconclusive():
    phi = square_norm(FAM2)
    v = ps_diagnose(phi, [np.zeros(2), np.zeros(2)], coordinate_sample(FAM2))
    assert v.kind == INCONCLUSIVE


def test_large_dual_norm_inconclusive():
    phi = square_norm(FAM2)
    seq = [np.array([1.0 + i, 0.0]) for i in range(16)]
    assert ps_diagnose(phi, seq, coordinate_sample(FAM2)).kind == INCONCLUSIVE


def test_level_check():
    phi = square_norm(FAM2)
    seq = [np.zeros(2)] * 16
    assert ps_diagnose(phi, seq, coordinate_sample(FAM2), level=1.0).kind == INCONCLUSIVE
    assert ps_diagnose(phi, seq, coordinate_sample(FAM2), level=0.0).kind == CLUSTER_FOUND


def test_cluster_claim_is_backed_by_trace():
    rng = np.random.default_rng(3)
    phi = square_norm(FAM2)
    seq = [1e-8 * rng.standard_normal(2) for _ in range(20)]
    v = ps_diagnose(phi, seq, coordinate_sample(FAM2), tol_dual=1e-6)
    assert v.kind == CLUSTER_FOUND
    tail = np.array(seq[10:])
    d = metric_arrays(FAM2, tail, v.cluster_point.coords)
    assert np.sum(d <= 1e-3) - 1 >= 3


def test_trace_csv_columns():
    phi = square_norm(FAM2)
    v = ps_diagnose(phi, [np.zeros(2)] * 4, coordinate_sample(FAM2))
    lines = v.to_csv().splitlines()
    assert lines[0] == "index,phi,dual_1,dual_2,gap_prev"
    assert len(lines) == 5


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        ps_diagnose(square_norm(FAM2), [], coordinate_sample(FAM2))
