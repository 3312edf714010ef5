"""Dual-number algebra and the finite-difference checker."""

from __future__ import annotations

import numpy as np

from panodepth import dual as dm
from panodepth.dual import Dual, directional_derivative, finite_difference


def test_square_derivative():
    assert directional_derivative(lambda x: x * x, [3.0], [1.0]) == 6.0


def test_exp_at_zero():
    assert directional_derivative(lambda x: dm.exp(x), [0.0], [1.0]) == 1.0


def test_product_rule():
    x = Dual(np.array([2.0, 5.0]), np.array([1.0, 0.0]))
    y = x[0] * x[1]
    assert float(y.val) == 10.0
    assert float(y.dot) == 5.0


def test_quotient_rule():
    f = lambda x: x[0] / x[1]
    d = directional_derivative(f, [1.0, 4.0], [0.0, 1.0])
    assert abs(d - (-1.0 / 16.0)) < 1e-15


def test_abs_derivative_and_zero_convention():
    assert directional_derivative(lambda x: dm.absolute(x), [-2.0], [1.0]) == -1.0
    assert directional_derivative(lambda x: dm.absolute(x), [0.0], [1.0]) == 0.0


def test_log_chain():
    d = directional_derivative(lambda x: dm.log(x * x), [3.0], [1.0])
    assert abs(d - 2.0 / 3.0) < 1e-15


def test_minimum_selects_branch_derivative():
    def f(x):
        return dm.dsum(dm.minimum(x[0], x[1]))

    assert directional_derivative(f, [1.0, 2.0], [1.0, 0.0]) == 1.0
    assert directional_derivative(f, [1.0, 2.0], [0.0, 1.0]) == 0.0


def test_minimum_tie_takes_first_operand():
    def f(x):
        return dm.dsum(dm.minimum(x[0], x[1]))

    assert directional_derivative(f, [1.0, 1.0], [1.0, 0.0]) == 1.0
    assert directional_derivative(f, [1.0, 1.0], [0.0, 1.0]) == 0.0


def test_mixed_numpy_expressions_defer_to_dual():
    a = np.array([1.0, 2.0])
    x = Dual(np.array([3.0, 4.0]), np.array([1.0, 1.0]))
    y = a * x  # ndarray.__mul__ must yield to Dual.__rmul__
    assert isinstance(y, Dual)
    np.testing.assert_array_equal(y.val, [3.0, 8.0])
    np.testing.assert_array_equal(y.dot, [1.0, 2.0])


def test_finite_difference_sin():
    d = finite_difference(lambda x: np.sin(x).sum(), [0.0], [1.0])
    assert abs(d - 1.0) < 1e-8


def test_finite_difference_linear_exact():
    f = lambda x: (3.0 * x).sum()
    for step in (1e-2, 1e-4, 1e-6):
        assert abs(finite_difference(f, [1.0], [1.0], step=step) - 3.0) < 1e-9


def test_dual_matches_fd_on_random_quadratics():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = 6
        a = rng.standard_normal((n, n))
        a = a + a.T
        b = rng.standard_normal(n)

        def f(x):
            total = 0.0
            for i in range(n):
                row = 0.0
                for j in range(n):
                    row = row + a[i, j] * x[j]
                total = total + x[i] * row + b[i] * x[i]
            return total

        x0 = rng.standard_normal(n)
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        dd = directional_derivative(f, x0, d)
        fd = finite_difference(f, x0, d)
        assert abs(dd - fd) < 1e-8 * max(1.0, abs(fd))
