"""Fast-diagonalization solvers for ``(alpha u, v)_N + beta (grad u, grad v)_N = (f, v)_N``.

Each operator works in a compact Legendre trial space per direction:

``dirichlet``
    ``phi_k = L_k - L_{k+2}``, ``k = 0..N-2`` (vanishes at +-1).
``neumann``
    ``psi_k = L_k - k(k+1)/((k+2)(k+3)) L_{k+2}``, ``k = 0..N-2``, completed with
    ``L_{N-1}`` and ``L_N`` so that the space is all of ``P_N``; the Neumann
    condition is natural.
``pressure``
    ``L_k``, ``k = 0..N-2`` (the space ``P_{N-2}``).

Mass and stiffness matrices are assembled with the LGL rule, so the discrete
problem is the quadrature Galerkin system, not the exactly integrated one.
The generalized eigenproblem ``S V = M V diag(lam)`` diagonalizes both
directions at once; a 2D solve is four small matrix products.

For ``neumann`` and ``pressure`` operators with ``alpha == 0`` the
(constant, constant) eigenpair is singular.  Its coefficient is set to zero,
which discards the constant part of the weak right-hand side and returns the
zero-mean solution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spectral import QuadratureRule

logger = logging.getLogger(__name__)

BC_KINDS = ("dirichlet", "neumann", "pressure")


class EllipticSetupError(RuntimeError):
    pass


def basis_coefficients(N: int, bc_kind: str) -> np.ndarray:
    """Legendre coefficients of the trial basis, shape ``(N+1, dim)``."""
    if bc_kind == "dirichlet":
        C = np.zeros((N + 1, N - 1))
        for k in range(N - 1):
            C[k, k] = 1.0
            C[k + 2, k] = -1.0
    elif bc_kind == "neumann":
        C = np.zeros((N + 1, N + 1))
        for k in range(N - 1):
            C[k, k] = 1.0
            C[k + 2, k] = -k * (k + 1) / ((k + 2) * (k + 3))
        C[N - 1, N - 1] = 1.0
        C[N, N] = 1.0
    elif bc_kind == "pressure":
        C = np.eye(N + 1, N - 1)
    else:
        raise ValueError(f"unknown bc_kind {bc_kind!r}; choose from {BC_KINDS}")
    return C


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """Precomputed data for one constant-coefficient elliptic problem.

    ``basis`` holds the trial functions evaluated at the LGL nodes and
    ``dbasis`` their derivatives.  ``eigvecs`` is M-orthonormal.
    """

    bc_kind: str
    alpha: float
    beta: float
    rule: QuadratureRule
    basis: np.ndarray
    dbasis: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    denom: np.ndarray
    singular: tuple[int, int] | None

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def weak_rhs(self, f: np.ndarray) -> np.ndarray:
        """``F[l, k] = (f, b_k(x) b_l(y))_N`` for a nodal field ``f``.

        Leading axes are batched.
        """
        if np.shape(f)[-2:] != self.rule.shape:
            self.rule.check(f)
        B = self.basis
        return B.T @ (f * self.rule.weights2d) @ B

    def weak_rhs_grad(self, u: np.ndarray) -> np.ndarray:
        """``F[l, k] = (u, grad(b_k(x) b_l(y)))_N`` for a nodal vector field ``u``."""
        self.rule.check(u, vector=True)
        B, dB = self.basis, self.dbasis
        W = self.rule.weights2d
        return B.T @ (u[0] * W) @ dB + dB.T @ (u[1] * W) @ B

    def solve_weak(self, F: np.ndarray) -> np.ndarray:
        """Solve given the weak right-hand side matrix; returns the nodal solution."""
        V = self.eigvecs
        G = V.T @ F @ V
        with np.errstate(divide="ignore", invalid="ignore"):
            H = G / self.denom
        if self.singular is not None:
            H[(Ellipsis,) + self.singular] = 0.0
        coef = V @ H @ V.T
        B = self.basis
        return B @ coef @ B.T

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.solve_weak(self.weak_rhs(rhs))

    def constant_defect(self, F: np.ndarray) -> float:
        """Magnitude of the weak right-hand side component that a singular solve discards."""
        if self.singular is None:
            return 0.0
        V = self.eigvecs
        return float(np.max(np.abs((V.T @ F @ V)[(Ellipsis,) + self.singular])))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Weak operator applied to a nodal field in the trial space, as a matrix over the basis."""
        coef = self.coefficients(u)
        M, S = self.mass, self.stiffness
        return self.alpha * M @ coef @ M.T + self.beta * (M @ coef @ S.T + S @ coef @ M.T)

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Trial-basis coefficients of a nodal field (least squares on the basis)."""
        B = self.basis
        pinv = np.linalg.pinv(B)
        return pinv @ u @ pinv.T


def build_operator(alpha: float, beta: float, bc_kind: str, rule: QuadratureRule) -> EllipticOperator:
    """Assemble and diagonalize ``alpha M + beta S`` on the chosen trial space."""
    alpha = float(alpha)
    beta = float(beta)
    if bc_kind not in BC_KINDS:
        raise ValueError(f"unknown bc_kind {bc_kind!r}; choose from {BC_KINDS}")
    if alpha < 0 or beta < 0 or (beta == 0 and alpha <= 0):
        raise ValueError(f"need beta > 0, or beta == 0 and alpha > 0 (got alpha={alpha}, beta={beta})")
    N = rule.N
    if bc_kind == "pressure" and N < 3:
        raise ValueError("pressure space P_{N-2} needs N >= 3")
    if bc_kind == "dirichlet" and N < 2:
        raise ValueError("dirichlet space needs N >= 2")

    C = basis_coefficients(N, bc_kind)
    B = rule.vandermonde @ C
    dB = rule.diff @ B
    w = rule.weights
    M = B.T @ (w[:, None] * B)
    S = dB.T @ (w[:, None] * dB)
    M = 0.5 * (M + M.T)
    S = 0.5 * (S + S.T)
    try:
        lam, V = scipy.linalg.eigh(S, M)
    except np.linalg.LinAlgError as exc:
        mineig = np.linalg.eigvalsh(M).min()
        raise EllipticSetupError(
            f"{bc_kind} mass matrix not SPD at N={N} (min eigenvalue {mineig:.3e})"
        ) from exc
    lam = np.where(np.abs(lam) < 1e-12 * max(1.0, np.abs(lam).max()), 0.0, lam)

    denom = alpha + beta * (lam[:, None] + lam[None, :])
    singular = None
    if alpha == 0.0 and bc_kind != "dirichlet":
        i0 = int(np.argmin(np.abs(lam)))
        singular = (i0, i0)
    for arr in (B, dB, M, S, lam, V, denom):
        arr.setflags(write=False)
    return EllipticOperator(
        bc_kind=bc_kind, alpha=alpha, beta=beta, rule=rule, basis=B, dbasis=dB,
        mass=M, stiffness=S, eigvals=lam, eigvecs=V, denom=denom, singular=singular,
    )


def solve_elliptic(op: EllipticOperator, rhs: np.ndarray) -> np.ndarray:
    """Nodal Galerkin solution of ``(alpha u, v)_N + beta (grad u, grad v)_N = (rhs, v)_N``."""
    F = op.weak_rhs(rhs)
    if op.singular is not None:
        defect = op.constant_defect(F)
        scale = float(np.abs(F).max()) or 1.0
        if defect > 1e-8 * scale:
            logger.debug("%s solve: discarded constant RHS component %.3e", op.bc_kind, defect)
    return op.solve_weak(F)


class OperatorCache:
    """Builds operators on first use and hands back the same instance afterwards."""

    def __init__(self, rule: QuadratureRule):
        self.rule = rule
        self._ops: dict[tuple, EllipticOperator] = {}

    def get(self, alpha: float, beta: float, bc_kind: str) -> EllipticOperator:
        key = (float(alpha), float(beta), bc_kind)
        op = self._ops.get(key)
        if op is None:
            op = build_operator(alpha, beta, bc_kind, self.rule)
            self._ops[key] = op
        return op

    def __len__(self) -> int:
        return len(self._ops)
