import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as npleg

from nsnpp import spectral as sp


@pytest.mark.parametrize("N, nodes, weights", [
    (1, [-1, 1], [1, 1]),
    (2, [-1, 0, 1], [1 / 3, 4 / 3, 1 / 3]),
    (3, [-1, -1 / np.sqrt(5), 1 / np.sqrt(5), 1], [1 / 6, 5 / 6, 5 / 6, 1 / 6]),
])
def test_lgl_closed_forms(N, nodes, weights):
    rule = sp.lgl_rule(N)
    np.testing.assert_allclose(rule.nodes, nodes, atol=1e-15)
    np.testing.assert_allclose(rule.weights, weights, atol=1e-15)


@pytest.mark.parametrize("N", [0, -3, 2.5])
def test_lgl_rejects_bad_degree(N):
    with pytest.raises(ValueError):
        sp.lgl_rule(N)


@pytest.mark.parametrize("N", [4, 9, 32, 64, 128])
def test_lgl_nodes_are_roots_of_derivative(N):
    # oracle: numpy's Legendre series derivative
    rule = sp.lgl_rule(N)
    dLN = npleg.legder([0] * N + [1])
    interior = rule.nodes[1:-1]
    assert np.max(np.abs(npleg.legval(interior, dLN))) < 1e-10 * N ** 2
    assert rule.weights.sum() == pytest.approx(2.0, abs=1e-13)
    np.testing.assert_allclose(rule.nodes, -rule.nodes[::-1], atol=0)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 40), data=st.data())
def test_quadrature_exact_to_degree_2n_minus_1(N, data):
    rule = sp.lgl_rule(N)
    deg = data.draw(st.integers(0, 2 * N - 1))
    coef = np.zeros(deg + 1)
    coef[-1] = 1.0
    exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
    quad = np.sum(rule.weights * rule.nodes ** deg)
    assert quad == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("N", [1, 3, 10])
def test_inner_of_ones_is_area(N):
    rule = sp.lgl_rule(N)
    one = np.ones(rule.shape)
    assert sp.discrete_inner(one, one, rule) == pytest.approx(4.0, abs=1e-13)


@pytest.mark.parametrize("N", [2, 5, 12])
def test_inner_x_x(N):
    rule = sp.lgl_rule(N)
    X, _ = sp.grid(rule)
    assert sp.discrete_inner(X, X, rule) == pytest.approx(4.0 / 3.0, abs=1e-13)


def test_inner_cosines_spectral():
    rule = sp.lgl_rule(16)
    X, Y = sp.grid(rule)
    f = np.cos(np.pi * X) * np.cos(np.pi * Y)
    assert abs(sp.discrete_inner(f, f, rule) - 1.0) < 1e-10


def test_inner_shape_mismatch():
    rule = sp.lgl_rule(4)
    with pytest.raises(ValueError):
        sp.discrete_inner(np.ones((5, 5)), np.ones((6, 6)), rule)


def test_grid_layout():
    rule = sp.lgl_rule(5)
    X, Y = sp.grid(rule)
    # f[k, j] = f(x_j, y_k)
    assert np.all(X[2, :] == rule.nodes)
    assert np.all(Y[:, 3] == rule.nodes)


def test_gradient_of_constant_is_zero():
    rule = sp.lgl_rule(12)
    g = sp.differentiate(np.full(rule.shape, 3.7), rule, "gradient")
    assert np.max(np.abs(g)) < 1e-12


@pytest.mark.parametrize("N", [4, 7, 16])
def test_laplacian_polynomial_exact(N):
    rule = sp.lgl_rule(N)
    X, Y = sp.grid(rule)
    f = (1 - X ** 2) * (1 - Y ** 2)
    expect = -2 * (1 - Y ** 2) - 2 * (1 - X ** 2)
    assert np.max(np.abs(sp.laplacian(f, rule) - expect)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(N=st.integers(3, 20), p=st.integers(0, 20), q=st.integers(0, 20))
def test_derivative_exact_on_monomials(N, p, q):
    p, q = min(p, N), min(q, N)
    rule = sp.lgl_rule(N)
    X, Y = sp.grid(rule)
    f = X ** p * Y ** q
    dx = p * X ** max(p - 1, 0) * Y ** q if p else np.zeros_like(X)
    dy = q * X ** p * Y ** max(q - 1, 0) if q else np.zeros_like(X)
    g = sp.gradient(f, rule)
    tol = 1e-13 * N ** 2 * max(1, p, q)
    assert np.max(np.abs(g[0] - dx)) < tol
    assert np.max(np.abs(g[1] - dy)) < tol


def test_divergence_of_example_velocity_vanishes():
    rule = sp.lgl_rule(32)
    X, Y = sp.grid(rule)
    u = np.stack([np.pi * np.sin(2 * np.pi * Y) * np.sin(np.pi * X) ** 2,
                  -np.pi * np.sin(2 * np.pi * X) * np.sin(np.pi * Y) ** 2])
    assert np.max(np.abs(sp.divergence(u, rule))) < 1e-8


def test_curl_and_kinds():
    rule = sp.lgl_rule(6)
    X, Y = sp.grid(rule)
    u = np.stack([-Y, X])
    np.testing.assert_allclose(sp.differentiate(u, rule, "curl"), 2.0, atol=1e-12)
    with pytest.raises(ValueError):
        sp.differentiate(X, rule, "hessian")


def test_shape_check():
    rule = sp.lgl_rule(4)
    with pytest.raises(ValueError, match="N=4"):
        sp.grad_x(np.ones((4, 4)), rule)


def test_modal_of_constant_and_x():
    rule = sp.lgl_rule(6)
    X, _ = sp.grid(rule)
    c = sp.legendre_transform(np.ones(rule.shape), rule, "to_modal")
    expect = np.zeros(rule.shape)
    expect[0, 0] = 1.0
    assert np.max(np.abs(c - expect)) < 1e-14
    c = sp.to_modal(X, rule)
    expect = np.zeros(rule.shape)
    expect[0, 1] = 1.0  # coef[q, p]: degree p in x
    assert np.max(np.abs(c - expect)) < 1e-14


def test_modal_of_x_squared():
    rule = sp.lgl_rule(4)
    X, _ = sp.grid(rule)
    c = sp.to_modal(X ** 2, rule)
    assert c[0, 0] == pytest.approx(1 / 3, abs=1e-14)
    assert c[0, 2] == pytest.approx(2 / 3, abs=1e-14)
    c[0, 0] = c[0, 2] = 0.0
    assert np.max(np.abs(c)) < 1e-14


@settings(max_examples=25, deadline=None)
@given(N=st.integers(1, 24), seed=st.integers(0, 2 ** 31 - 1))
def test_transform_roundtrip(N, seed):
    rule = sp.lgl_rule(N)
    f = np.random.default_rng(seed).standard_normal(rule.shape)
    back = sp.legendre_transform(sp.to_modal(f, rule), rule, "to_nodal")
    assert np.max(np.abs(back - f)) < 1e-11


def test_modal_matches_numpy_legendre_fit():
    # oracle: numpy's Legendre interpolation on the same nodes
    rule = sp.lgl_rule(9)
    x = rule.nodes
    f = np.exp(x)
    ref = npleg.legfit(x, f, rule.N)
    F = np.tile(f, (rule.N + 1, 1))  # constant in y
    c = sp.to_modal(F, rule)
    np.testing.assert_allclose(c[0], ref, atol=1e-12)


def test_project_pressure_space():
    rule = sp.lgl_rule(8)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(rule.shape)
    g = sp.project_pressure_space(f, rule)
    # idempotent, zero mean, and the residual is orthogonal to zero-mean P_{N-2}
    np.testing.assert_allclose(sp.project_pressure_space(g, rule), g, atol=1e-12)
    assert abs(sp.discrete_mean(g, rule)) < 1e-13
    X, Y = sp.grid(rule)
    for p in range(rule.N - 1):
        for q in range(rule.N - 1):
            if p + q == 0:
                continue
            test = X ** p * Y ** q
            test = test - sp.discrete_mean(test, rule)
            assert abs(sp.discrete_inner(f - g, test, rule)) < 1e-11
