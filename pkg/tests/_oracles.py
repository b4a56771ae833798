"""Dense direct-solve oracles shared by the solver and scheme tests."""
import numpy as np
from scipy.interpolate import BarycentricInterpolator


def trial_nodal(rule, kind):
    """Oracle trial bases, independent of the Legendre ones in the solver.

    Returns ``(B, dB)``: values and x-derivatives at the nodes, one column
    per basis function.  Dirichlet and Neumann use nodal Lagrange functions;
    the pressure space uses Lagrange functions of degree ``N-2`` on
    Chebyshev points.
    """
    N = rule.N
    I = np.eye(N + 1)
    D = rule.diff
    if kind == "dirichlet":
        B = I[:, 1:-1]
        return B, D @ B
    if kind == "neumann":
        return I, D.copy()
    z = -np.cos(np.pi * np.arange(N - 1) / (N - 2))
    B = np.column_stack([BarycentricInterpolator(z, I[j, : N - 1])(rule.nodes) for j in range(N - 1)])
    dB = D @ B
    return B, dB


def dense_oracle(rule, alpha, beta, kind, f):
    """Assemble the 2D Galerkin system with Kronecker products and solve it
    directly; a zero-mean constraint is bordered in when the system is singular."""
    B, _ = trial_nodal(rule, kind)
    return dense_weak_solve(rule, alpha, beta, kind, B.T @ (f * rule.weights2d) @ B)


def dense_weak_solve(rule, alpha, beta, kind, Fmat):
    """Like :func:`dense_oracle` but from the weak right-hand side
    ``Fmat[l, k] = F(b_k(x) b_l(y))`` in the oracle basis."""
    B, dB = trial_nodal(rule, kind)
    W = np.diag(rule.weights)
    M = B.T @ W @ B
    S = dB.T @ W @ dB
    A = alpha * np.kron(M, M) + beta * (np.kron(M, S) + np.kron(S, M))
    # unknown vector is vec(C) with u = B C B^T (row = y, col = x), column-major
    F = Fmat.T.reshape(-1)
    n = A.shape[0]
    singular = alpha == 0 and kind != "dirichlet"
    if singular:
        ones = np.ones(rule.shape)
        c = (B.T @ (ones * rule.weights2d) @ B).T.reshape(-1)
        A = np.block([[A, c[:, None]], [c[None, :], np.zeros((1, 1))]])
        F = np.concatenate([F, [0.0]])
    x = np.linalg.solve(A, F)[:n]
    C = x.reshape(B.shape[1], B.shape[1]).T
    return B @ C @ B.T
