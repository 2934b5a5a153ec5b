import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssmflow.continuation import continue_branch, newton_solve, tangent
from ssmflow.errors import BranchStallError, NoConvergenceError
from ssmflow.spectral import cheb_matrices


class Circle:
    """x^2 + p^2 = 1: folds at p = +-1."""

    def residual(self, x, p):
        return np.array([x[0] ** 2 + p**2 - 1.0])

    def jacobian(self, x, p):
        return np.array([[2 * x[0]]])

    def dparam(self, x, p):
        return np.array([2 * p])


class SaddleNode:
    """p - x^2 = 0."""

    def residual(self, x, p):
        return np.array([p - x[0] ** 2])

    def jacobian(self, x, p):
        return np.array([[-2 * x[0]]])


class Bratu:
    """u'' + p e^u = 0 on [-1, 1], u(+-1) = 0, Chebyshev collocation in coefficient space."""

    def __init__(self, n=24):
        cb = cheb_matrices(n)
        self.E, self.D2 = cb.eval, cb.d2

    def residual(self, c, p):
        u = self.E @ c
        r = self.D2 @ c + p * np.exp(u)
        r[0], r[-1] = u[0], u[-1]
        return r

    def jacobian(self, c, p):
        u = self.E @ c
        J = self.D2 + p * np.exp(u)[:, None] * self.E
        J[0], J[-1] = self.E[0], self.E[-1]
        return J


def test_newton_converges_quadratically():
    class Sqrt2:
        def residual(self, x, p=None):
            return np.array([x[0] ** 2 - 2.0])

        def jacobian(self, x, p=None):
            return np.array([[2 * x[0]]])

    res = newton_solve(Sqrt2(), np.array([1.0]), tol=1e-14)
    assert abs(res.x[0] - np.sqrt(2)) < 1e-15
    assert res.iterations <= 6


def test_newton_reports_failure_with_last_iterate():
    class NoRoot:
        def residual(self, x, p=None):
            return np.array([x[0] ** 2 + 1.0])

        def jacobian(self, x, p=None):
            return np.array([[2 * x[0]]])

    with pytest.raises(NoConvergenceError) as info:
        newton_solve(NoRoot(), np.array([0.3]), max_iter=5)
    assert info.value.last is not None and info.value.residual > 0.5


def test_circle_folds_found():
    br = continue_branch(Circle(), (np.array([-1.0]), 0.0), direction=1, step0=0.05, max_points=200, param_range=(-2, 2))
    folds = sorted(f.param for f in br.folds)
    assert len(folds) >= 2
    assert abs(folds[-1] - 1.0) < 1e-3 and abs(folds[0] + 1.0) < 1e-3
    for pt in br.points:
        assert abs(pt.x[0] ** 2 + pt.param**2 - 1) < 1e-10


def test_saddle_node_rounded_with_fd_parameter_derivative():
    br = continue_branch(SaddleNode(), (np.array([-1.0]), 1.0), direction=-1, step0=0.1, max_points=60, param_range=(-1, 2))
    assert len(br.folds) == 1
    assert abs(br.folds[0].param) < 1e-3
    assert br.points[-1].x[0] > 0  # continued onto the other half


def test_bratu_fold_matches_known_value():
    prob = Bratu()
    c0 = np.zeros(25)
    br = continue_branch(
        prob, (c0, 0.0), direction=1, step0=0.1, step_max=0.5, max_points=30, param_range=(-0.1, 1.0), fold_tol=1e-6
    )
    assert br.folds, "no fold detected"
    # classical value 3.513830719 on [0, 1] scales by 1/4 on [-1, 1]
    assert abs(br.folds[0].param - 3.513830719 / 4) < 1e-6


def test_tangent_is_unit_and_in_null_space():
    prob = Bratu(16)
    x = newton_solve(prob, np.zeros(17), param=0.5).x
    t = tangent(prob, x, 0.5, direction=1)
    J = prob.jacobian(x, 0.5)
    h = 1e-7
    fp = (prob.residual(x, 0.5 + h) - prob.residual(x, 0.5 - h)) / (2 * h)
    assert abs(np.linalg.norm(t) - 1) < 1e-12
    assert np.linalg.norm(J @ t[:-1] + fp * t[-1]) < 1e-8
    assert t[-1] > 0


def test_stall_returns_partial_branch():
    class Jump:
        def residual(self, x, p):
            return np.array([x[0] - p - (0.0 if p < 0.5 else 1.0)])

        def jacobian(self, x, p):
            return np.array([[1.0]])

    with pytest.raises(BranchStallError) as info:
        continue_branch(Jump(), (np.array([0.0]), 0.0), step0=0.1, max_iter=5, param_range=(-1, 2))
    pts = info.value.branch.points
    assert len(pts) >= 3 and all(p.param < 0.5 for p in pts)


@settings(max_examples=20, deadline=None)
@given(r=st.floats(0.5, 3.0), step=st.floats(0.01, 0.2))
def test_circle_radius_property(r, step):
    class Ring(Circle):
        def residual(self, x, p):
            return np.array([x[0] ** 2 + p**2 - r**2])

    br = continue_branch(Ring(), (np.array([-r]), 0.0), step0=step * r, max_points=40, param_range=(-2 * r, 2 * r))
    for pt in br.points:
        assert abs(pt.x[0] ** 2 + pt.param**2 - r**2) < 1e-9 * r**2
    for f in br.folds:
        assert abs(abs(f.param) - r) < 1e-3 * r
