import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.hermite import hermgauss
from scipy.interpolate import PchipInterpolator

from decumulation.errors import InfeasibleActionError, InvalidInputError, InvalidStartError, OutOfRangeError
from decumulation.numerics import (
    build_pchip,
    expect_over_return,
    gauss_hermite,
    nelder_mead,
    optimize_action,
    return_nodes,
)


def monotone_data(gen, n):
    xs = np.cumsum(gen.uniform(0.05, 2.0, n))
    ys = np.cumsum(gen.uniform(0.0, 3.0, n)) * gen.choice([-1.0, 1.0])
    return xs, ys


# -- PCHIP -------------------------------------------------------------------


def test_pchip_matches_scipy_reference(gen):
    # [DERIVED] scipy's PchipInterpolator uses the same interior and end rules
    for _ in range(50):
        n = int(gen.integers(3, 30))
        xs = np.sort(gen.uniform(0, 10, n))
        xs = xs[np.concatenate([[True], np.diff(xs) > 1e-6])]
        ys = gen.normal(size=xs.size)
        x = np.linspace(xs[0], xs[-1], 501)
        np.testing.assert_allclose(build_pchip(xs, ys)(x), PchipInterpolator(xs, ys)(x), rtol=1e-12, atol=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.integers(min_value=2, max_value=25), st.integers(min_value=0, max_value=2**32 - 1))
def test_pchip_monotone_and_reproduces_nodes(n, seed):
    xs, ys = monotone_data(np.random.default_rng(seed), n)
    f = build_pchip(xs, ys)
    np.testing.assert_allclose(f(xs), ys, rtol=0, atol=1e-12 * (1 + np.abs(ys).max()))
    x = np.linspace(xs[0], xs[-1], 400)
    v = f(x)
    slack = 1e-10 * (1 + np.abs(ys).max())
    if ys[-1] >= ys[0]:
        assert np.all(np.diff(v) >= -slack)
    else:
        assert np.all(np.diff(v) <= slack)
    assert v.min() >= ys.min() - slack and v.max() <= ys.max() + slack


def test_pchip_two_points_is_linear():
    f = build_pchip([0.0, 2.0], [1.0, 5.0])
    assert f(0.5) == pytest.approx(2.0)


def test_pchip_clamps_outside_range():
    f = build_pchip([1.0, 2.0, 4.0], [0.0, 1.0, 3.0])
    assert f(-5.0, clamp=True) == 0.0
    assert f(10.0, clamp=True) == 3.0
    with pytest.raises(OutOfRangeError):
        f(10.0)


@pytest.mark.parametrize("xs, ys", [([0, 0, 1], [1, 2, 3]), ([0, 1], [1]), ([0], [1]), ([0, 1], [np.nan, 1])])
def test_pchip_rejects_bad_input(xs, ys):
    with pytest.raises(InvalidInputError):
        build_pchip(xs, ys)


def test_pchip_flat_segment_stays_flat():
    f = build_pchip([0, 1, 2, 3], [0.0, 1.0, 1.0, 2.0])
    np.testing.assert_allclose(f(np.linspace(1, 2, 11)), 1.0)


# -- Gauss-Hermite -----------------------------------------------------------


@pytest.mark.parametrize("order", [1, 2, 3, 5, 10, 25, 40])
def test_gauss_hermite_matches_numpy(order):
    # [DERIVED] numpy's hermgauss as an independent construction
    q = gauss_hermite(order)
    x, w = hermgauss(order)
    np.testing.assert_allclose(q.nodes, x, atol=1e-12)
    np.testing.assert_allclose(q.weights, w, rtol=1e-9, atol=1e-14)


@pytest.mark.parametrize("order", [2, 5, 10])
def test_gauss_hermite_moment_exactness(order):
    # [DERIVED] int x^k exp(-x^2) dx = Gamma((k+1)/2) for even k, 0 for odd k
    q = gauss_hermite(order)
    for k in range(2 * order):
        exact = math.gamma((k + 1) / 2) if k % 2 == 0 else 0.0
        got = float(np.sum(q.weights * q.nodes ** k))
        assert got == pytest.approx(exact, rel=1e-10, abs=1e-10), k


def test_gauss_hermite_not_exact_beyond_degree():
    q = gauss_hermite(2)
    assert float(np.sum(q.weights * q.nodes ** 4)) != pytest.approx(math.gamma(2.5), rel=1e-6)


def test_five_point_reference_values():
    # [PAPER] five-node rule listed in the standard tables
    q = gauss_hermite(5)
    np.testing.assert_allclose(q.nodes, [-2.0201828705, -0.9585724646, 0.0, 0.9585724646, 2.0201828705], atol=1e-10)
    np.testing.assert_allclose(q.weights, [0.0199532421, 0.3936193232, 0.9453087205, 0.3936193232, 0.0199532421],
                               atol=1e-10)


def test_lognormal_mean():
    # [DERIVED] E[exp(Z)] = exp(mu + sigma^2/2)
    mu, sigma = 0.056, 0.133
    got = expect_over_return(np.exp, mu, sigma, gauss_hermite(5))
    assert got == pytest.approx(math.exp(mu + sigma ** 2 / 2), rel=1e-9)


def test_return_nodes_are_probabilities():
    z, w = return_nodes(0.0, 1.0, gauss_hermite(7))
    assert w.sum() == pytest.approx(1.0)
    assert np.sum(w * z ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("order", [0, -1, 2.5, 65])
def test_gauss_hermite_bad_order(order):
    with pytest.raises(InvalidInputError):
        gauss_hermite(order)


def test_expectation_rejects_negative_sigma():
    with pytest.raises(InvalidInputError):
        expect_over_return(np.exp, 0.0, -1.0, gauss_hermite(3))


# -- Nelder-Mead -------------------------------------------------------------


@pytest.mark.parametrize("dim", range(1, 10))
def test_nelder_mead_convex_quadratic(dim, gen):
    A = gen.normal(size=(dim, dim))
    Q = A @ A.T + dim * np.eye(dim)
    c = gen.uniform(-2, 2, dim)
    res = nelder_mead(lambda x: (x - c) @ Q @ (x - c), np.zeros(dim), step=np.ones(dim), xatol=1e-9, maxiter=20000)
    assert res.converged
    np.testing.assert_allclose(res.x, c, atol=1e-6)


def test_nelder_mead_projects_into_bounds():
    res = nelder_mead(lambda x: float(np.sum((x - 3.0) ** 2)), [0.0, 0.0], step=[0.5, 0.5],
                      bounds=([-1, -1], [1, 2]), xatol=1e-10)
    np.testing.assert_allclose(res.x, [1.0, 2.0], atol=1e-8)


def test_nelder_mead_callback_and_resume():
    seen = []
    f = lambda x: float(np.sum((x - 1.0) ** 2))  # noqa: E731
    res = nelder_mead(f, [0.0, 0.0, 0.0], step=0.5, xatol=1e-3, callback=lambda s, fs: seen.append((s, fs)))
    assert len(seen) == res.nit
    assert np.all(np.diff(seen[-1][1]) >= 0)
    again = nelder_mead(f, seen[-1][0][0], initial_simplex=seen[-1][0], xatol=1e-10)
    np.testing.assert_allclose(again.x, 1.0, atol=1e-8)


def test_nelder_mead_nonfinite_start():
    with pytest.raises(InvalidStartError):
        nelder_mead(lambda x: math.inf, [0.0])


def test_nelder_mead_treats_nan_as_inf():
    f = lambda x: math.nan if x[0] < 0 else (x[0] - 1) ** 2  # noqa: E731
    res = nelder_mead(f, [0.5], step=1.0, xatol=1e-10)
    assert res.x[0] == pytest.approx(1.0, abs=1e-8)


def test_nelder_mead_maxiter_reports_not_converged():
    res = nelder_mead(lambda x: float(np.sum(x ** 2)), np.ones(5), maxiter=3)
    assert not res.converged and res.nit == 3


# -- action optimiser --------------------------------------------------------


def test_optimize_action_matches_exhaustive_grid():
    # [DERIVED] brute force on a fine grid of a smooth concave objective
    f = lambda a, d: -(a - 0.3) ** 2 - 2 * (d - 0.7) ** 2 + 0.5 * a * d  # noqa: E731
    res = optimize_action(f, (-0.5, 1.0))
    A, D = np.meshgrid(np.linspace(-0.5, 1.0, 1501), np.linspace(0, 1, 1001), indexing="ij")
    brute = f(A, D).max()
    assert res.value >= brute - 1e-9
    assert res.converged


def test_optimize_action_corner_and_infeasible_region():
    f = lambda a, d: -math.inf if a < 0.2 else a + d  # noqa: E731
    res = optimize_action(f, (0.0, 1.0))
    assert res.alpha == pytest.approx(1.0) and res.delta == pytest.approx(1.0)


def test_optimize_action_fixed_delta():
    res = optimize_action(lambda a, d: -(a - 0.25) ** 2 + d, (0.0, 1.0), (0.437, 0.437))
    assert res.delta == 0.437
    assert res.alpha == pytest.approx(0.25, abs=1e-8)


def test_optimize_action_all_infeasible():
    with pytest.raises(InfeasibleActionError):
        optimize_action(lambda a, d: -math.inf, (0.0, 1.0))


def test_optimize_action_empty_box():
    with pytest.raises(InvalidInputError):
        optimize_action(lambda a, d: 0.0, (1.0, 0.0))
