"""Legendre-Gauss-Lobatto machinery on the reference square (-1, 1)^2.

Grid layout
-----------
A scalar field of degree ``N`` is an ``(N+1, N+1)`` float array ``f`` with
``f[k, j] = f(x_j, y_k)``: the first axis runs over ``y`` and the second over
``x``, so flattening in C order is row-major with the x-index fastest.  Vector
fields stack their two components along a leading axis, shape
``(2, N+1, N+1)``.  Nodes are stored in ascending order, ``x_0 = -1``.

Modal coefficients use the same orientation: ``coef[q, p]`` multiplies
``L_p(x) L_q(y)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "QuadratureRule",
    "lgl_rule",
    "legendre_table",
    "discrete_inner",
    "discrete_norm",
    "discrete_mean",
    "grad_x",
    "grad_y",
    "gradient",
    "laplacian",
    "divergence",
    "curl",
    "differentiate",
    "to_modal",
    "to_nodal",
    "legendre_transform",
    "grid",
    "project_pressure_space",
]

_NEWTON_TOL = 1e-14
_NEWTON_MAXIT = 100


def legendre_table(n: int, x: np.ndarray) -> np.ndarray:
    """Values ``L_0(x), ..., L_n(x)`` by the three-term recurrence.

    Returns an array of shape ``(n+1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    if n >= 1:
        out[1] = x
    for k in range(1, n):
        out[k + 1] = ((2 * k + 1) * x * out[k] - k * out[k - 1]) / (k + 1)
    return out


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """(N+1)-point Legendre-Gauss-Lobatto rule with its collocation derivative.

    Attributes
    ----------
    N : int
        Polynomial degree.
    nodes : ndarray, shape (N+1,)
        Ascending LGL nodes, ``nodes[0] = -1`` and ``nodes[N] = 1``.
    weights : ndarray, shape (N+1,)
        Quadrature weights, exact for degree ``<= 2N-1``.
    diff : ndarray, shape (N+1, N+1)
        First-derivative collocation matrix at the nodes.
    """

    N: int
    nodes: np.ndarray
    weights: np.ndarray
    diff: np.ndarray

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.diff):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N + 1, self.N + 1)

    @cached_property
    def vandermonde(self) -> np.ndarray:
        """``V[j, p] = L_p(x_j)``."""
        v = legendre_table(self.N, self.nodes).T.copy()
        v.setflags(write=False)
        return v

    @cached_property
    def diff2(self) -> np.ndarray:
        d2 = self.diff @ self.diff
        d2.setflags(write=False)
        return d2

    @cached_property
    def weights2d(self) -> np.ndarray:
        """Tensor weights ``w[k] * w[j]`` in grid layout."""
        w = np.outer(self.weights, self.weights)
        w.setflags(write=False)
        return w

    @cached_property
    def modal_norms(self) -> np.ndarray:
        """Discrete norms ``(L_p, L_p)_N``; the top mode is ``2/N``, not ``2/(2N+1)``."""
        g = 2.0 / (2.0 * np.arange(self.N + 1) + 1.0)
        g[-1] = 2.0 / self.N
        g.setflags(write=False)
        return g

    def check(self, f: np.ndarray, vector: bool = False) -> None:
        expected = ((2,) if vector else ()) + self.shape
        if np.shape(f) != expected:
            raise ValueError(
                f"field shape {np.shape(f)} does not match degree N={self.N} "
                f"(expected {expected})"
            )


def _lgl_nodes(N: int) -> tuple[np.ndarray, np.ndarray]:
    # Newton on (1 - x^2) L_N'(x) written as x L_N - L_{N-1}, seeded at CGL points.
    x = -np.cos(np.pi * np.arange(N + 1) / N)
    for _ in range(_NEWTON_MAXIT):
        P = legendre_table(N, x)
        dx = (x * P[N] - P[N - 1]) / ((N + 1) * P[N])
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    x[0], x[-1] = -1.0, 1.0
    if N % 2 == 0:
        x[N // 2] = 0.0
    # symmetrise so the rule is exactly mirror-invariant
    x = 0.5 * (x - x[::-1])
    LN = legendre_table(N, x)[N]
    return x, LN


def lgl_rule(N: int) -> QuadratureRule:
    """Build the degree-``N`` Legendre-Gauss-Lobatto rule.

    >>> lgl_rule(2).weights
    array([0.33333333, 1.33333333, 0.33333333])
    """
    if int(N) != N or N < 1:
        raise ValueError(f"LGL rule needs N >= 1, got {N!r}")
    N = int(N)
    x, LN = _lgl_nodes(N)
    w = 2.0 / (N * (N + 1) * LN**2)

    dxm = x[:, None] - x[None, :]
    np.fill_diagonal(dxm, 1.0)
    D = (LN[:, None] / LN[None, :]) / dxm
    np.fill_diagonal(D, 0.0)
    # negative-sum trick: rows annihilate constants exactly
    np.fill_diagonal(D, -D.sum(axis=1))
    return QuadratureRule(N=N, nodes=x, weights=w, diff=D)


def grid(rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Nodal coordinate arrays ``(X, Y)`` in grid layout."""
    X, Y = np.meshgrid(rule.nodes, rule.nodes, indexing="xy")
    return X, Y


def discrete_inner(f, g, rule: QuadratureRule) -> float:
    """``(f, g)_N``: tensor LGL quadrature of ``f g``.

    Vector fields (leading axis of length 2) are contracted componentwise.
    """
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    if f.shape[-2:] != rule.shape:
        raise ValueError(f"field degree does not match rule N={rule.N}")
    return float(np.sum(f * g * rule.weights2d))


def discrete_norm(f, rule: QuadratureRule) -> float:
    return float(np.sqrt(max(discrete_inner(f, f, rule), 0.0)))


def discrete_mean(f, rule: QuadratureRule) -> float:
    return float(np.sum(np.asarray(f) * rule.weights2d) / 4.0)


def grad_x(f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    rule.check(f)
    return f @ rule.diff.T


def grad_y(f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    rule.check(f)
    return rule.diff @ f


def gradient(f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    return np.stack([grad_x(f, rule), grad_y(f, rule)])


def laplacian(f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    rule.check(f)
    return f @ rule.diff2.T + rule.diff2 @ f


def divergence(u: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    rule.check(u, vector=True)
    return u[0] @ rule.diff.T + rule.diff @ u[1]


def curl(u: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Scalar curl ``d_x u_2 - d_y u_1``."""
    rule.check(u, vector=True)
    return u[1] @ rule.diff.T - rule.diff @ u[0]


_KINDS = {
    "grad_x": grad_x,
    "grad_y": grad_y,
    "gradient": gradient,
    "laplacian": laplacian,
    "divergence": divergence,
    "curl": curl,
}


def differentiate(f: np.ndarray, rule: QuadratureRule, kind: str) -> np.ndarray:
    """Dispatch to one of the collocation derivative operators by name."""
    try:
        op = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown derivative kind {kind!r}; choose from {sorted(_KINDS)}")
    return op(f, rule)


def to_modal(f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Tensor Legendre coefficients of the nodal interpolant of ``f``.

    Uses the discrete transform ``c_p = (f, L_p)_N / (L_p, L_p)_N``, which is
    the exact inverse of nodal evaluation on the LGL grid.
    """
    rule.check(f)
    A = (rule.vandermonde * rule.weights[:, None]).T / rule.modal_norms[:, None]
    return A @ f @ A.T


def to_nodal(coef: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Evaluate ``sum coef[q, p] L_p(x) L_q(y)`` at the LGL grid."""
    rule.check(coef)
    V = rule.vandermonde
    return V @ coef @ V.T


def legendre_transform(f: np.ndarray, rule: QuadratureRule, direction: str) -> np.ndarray:
    if direction == "to_modal":
        return to_modal(f, rule)
    if direction == "to_nodal":
        return to_nodal(f, rule)
    raise ValueError(f"direction must be 'to_modal' or 'to_nodal', got {direction!r}")


def project_pressure_space(f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Discrete L2 projection onto zero-mean ``P_{N-2}`` (modal truncation).

    Legendre modes up to degree ``N-2`` are orthogonal to ``L_{N-1}`` and
    ``L_N`` under the LGL rule, so dropping the top two modes in each
    direction and the constant mode is the ``(.,.)_N`` projection.
    """
    coef = to_modal(f, rule)
    coef[-2:, :] = 0.0
    coef[:, -2:] = 0.0
    coef[0, 0] = 0.0
    return to_nodal(coef, rule)
