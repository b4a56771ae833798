"""Manufactured solutions and their source terms.

All three cases share one spatial structure,

    u   = a(t) (pi sin(2 pi y) sin^2(pi x), -pi sin(2 pi x) sin^2(pi y))
    p   = b(t) sin(pi x) sin(pi y)
    c_i = alpha_i(t) + beta_i(t) cos(pi x) cos(pi y)
    phi = f(t) cos(pi x) cos(pi y) / pi^2

so the sources are assembled from closed-form derivatives of these four
shapes.  ``residual_oracle`` re-checks them independently with spectral
differentiation on a fine grid and finite differences in time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import spectral as sp
from .model import PhysicsParams, SpeciesParams, chemical_potentials, energy_npp
from .schemes import Forcing
from .spectral import QuadratureRule

PI = np.pi
CASES = ("example1", "example2", "example3")


@dataclass(frozen=True)
class TimeFactors:
    """Scalar time profiles and their derivatives."""

    a: Callable[[float], float]
    da: Callable[[float], float]
    b: Callable[[float], float]
    phi: Callable[[float], float]
    alpha: Callable[[float], np.ndarray]
    dalpha: Callable[[float], np.ndarray]
    beta: Callable[[float], np.ndarray]
    dbeta: Callable[[float], np.ndarray]


def _sin2(t):
    return np.sin(t) ** 2


def _dsin2(t):
    return np.sin(2.0 * t)


_EX1 = TimeFactors(
    a=_sin2, da=_dsin2, b=_sin2, phi=_sin2,
    alpha=lambda t: np.array([1.1, 1.1]),
    dalpha=lambda t: np.zeros(2),
    beta=lambda t: np.array([1.0, -1.0]) * _sin2(t),
    dbeta=lambda t: np.array([1.0, -1.0]) * _dsin2(t),
)

_EX3 = TimeFactors(
    a=lambda t: np.exp(-t), da=lambda t: -np.exp(-t), b=lambda t: np.exp(-t),
    phi=lambda t: np.exp(-t),
    alpha=lambda t: np.array([2.0, 6.0, 2.0]) * np.exp(-t),
    dalpha=lambda t: -np.array([2.0, 6.0, 2.0]) * np.exp(-t),
    beta=lambda t: np.array([1.0, -2.0, -1.0]) * np.exp(-t),
    dbeta=lambda t: -np.array([1.0, -2.0, -1.0]) * np.exp(-t),
)


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    species: SpeciesParams
    physics: PhysicsParams
    factors: TimeFactors | None
    forced: bool

    def forcing_at(self, rule: QuadratureRule) -> Callable[[float], Forcing]:
        """Callable ``t -> Forcing`` for the stepper."""
        if not self.forced:
            raise ValueError(f"{self.name} is forcing-free")

        def fn(t):
            f_u, f_sigma = forcing(self, t, rule)
            _, _, c, phi = exact_fields(self, t, rule)
            f_c = f_sigma * c
            rate = np.sum(f_c * rule.weights2d, axis=(-2, -1))
            return Forcing(f_u=f_u, f_sigma=f_sigma, mass_rate=rate,
                           f_r=r_source(self, c, phi, f_c, rule))

        return fn


def r_source(case: ManufacturedCase, c, phi, f_c, rule: QuadratureRule) -> float:
    """Source of the auxiliary-variable equation for the exact solution.

    Along a smooth solution ``dE_npp/dt`` gains ``sum_i (mu_i, f_c_i)`` from the
    concentration sources, so ``r = sqrt(E_npp + C0)`` needs
    ``sum_i (mu_i, f_c_i) / (2 r)`` on the right-hand side.
    """
    mu = chemical_potentials(c, phi, case.species)
    E = energy_npp(c, phi, case.species, rule)
    work = float(np.sum(mu * f_c * rule.weights2d))
    return work / (2.0 * np.sqrt(E + case.physics.c0))


def get_case(name: str, c0: float = 100.0) -> ManufacturedCase:
    if name == "example1":
        return ManufacturedCase(name, SpeciesParams(z=(1, -1), D=(1, 1)),
                                PhysicsParams(eps=1.0, nu=0.1, c0=c0), _EX1, True)
    if name == "example2":
        return ManufacturedCase(name, SpeciesParams(z=(1, -1), D=(1, 1)),
                                PhysicsParams(eps=1.0, nu=0.01, c0=c0), None, False)
    if name == "example3":
        return ManufacturedCase(name, SpeciesParams(z=(1, -1, 2), D=(1, 1, 1)),
                                PhysicsParams(eps=0.5, nu=0.1, c0=c0), _EX3, True)
    raise ValueError(f"unknown case {name!r}; choose from {CASES}")


def _as_case(case) -> ManufacturedCase:
    return get_case(case) if isinstance(case, str) else case


# spatial shapes and their derivatives ------------------------------------

def _shapes(X, Y):
    sx, cx = np.sin(PI * X), np.cos(PI * X)
    sy, cy = np.sin(PI * Y), np.cos(PI * Y)
    s2x, c2x = np.sin(2 * PI * X), np.cos(2 * PI * X)
    s2y, c2y = np.sin(2 * PI * Y), np.cos(2 * PI * Y)
    U = np.stack([PI * s2y * sx**2, -PI * s2x * sy**2])
    # dU[i][j] = d U_i / d x_j
    dU = np.array([
        [PI**2 * s2x * s2y, 2 * PI**2 * c2y * sx**2],
        [-2 * PI**2 * c2x * sy**2, -PI**2 * s2x * s2y],
    ])
    lapU = np.stack([2 * PI**3 * s2y * (2 * c2x - 1), -2 * PI**3 * s2x * (2 * c2y - 1)])
    P = sx * sy
    gradP = np.stack([PI * cx * sy, PI * sx * cy])
    C = cx * cy
    gradC = np.stack([-PI * sx * cy, -PI * cx * sy])
    lapC = -2 * PI**2 * C
    return U, dU, lapU, P, gradP, C, gradC, lapC


def initial_fields(case, rule: QuadratureRule):
    """Nodal ``(u0, c0)`` for a case at t = 0."""
    case = _as_case(case)
    X, Y = sp.grid(rule)
    if case.name == "example2":
        U, _, _, _, _, C, _, _ = _shapes(X, Y)
        return U, np.stack([1.1 + C, 1.1 - C])
    u, _, c, _ = exact_fields(case, 0.0, rule)
    return u, c


def exact_fields(case, t: float, rule: QuadratureRule):
    """Nodal ``(u, p, c, phi)`` of the manufactured solution at time ``t``."""
    case = _as_case(case)
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if case.factors is None:
        if t != 0:
            raise ValueError(f"{case.name} has no closed-form solution for t > 0")
        u, c = initial_fields(case, rule)
        return u, np.zeros(rule.shape), c, None
    return _exact_xy(case, t, *sp.grid(rule))


def _exact_xy(case, t, X, Y):
    f = case.factors
    U, _, _, P, _, C, _, _ = _shapes(X, Y)
    u = f.a(t) * U
    p = f.b(t) * P
    c = f.alpha(t)[:, None, None] + f.beta(t)[:, None, None] * C[None]
    phi = f.phi(t) * C / PI**2
    return u, p, c, phi


def forcing(case, t: float, rule: QuadratureRule):
    """Momentum source ``f_u`` and log-concentration sources ``f_sigma`` at time ``t``.

    ``f_sigma`` is the residual of the transport form ``-div(sigma u)`` that
    the steppers discretize; for the divergence-free exact velocity it
    equals the concentration source divided by ``c``.
    """
    case = _as_case(case)
    if not case.forced:
        raise ValueError(f"{case.name} is forcing-free")
    return _forcing_xy(case, t, *sp.grid(rule))


def _forcing_xy(case, t, X, Y):
    f = case.factors
    sp_ = case.species
    nu = case.physics.nu
    U, dU, lapU, P, gradP, C, gradC, lapC = _shapes(X, Y)
    a, da, b, ph = f.a(t), f.da(t), f.b(t), f.phi(t)
    alpha, dalpha, beta, dbeta = f.alpha(t), f.dalpha(t), f.beta(t), f.dbeta(t)
    z = np.asarray(sp_.z)

    conv = np.stack([U[0] * dU[0][0] + U[1] * dU[0][1], U[0] * dU[1][0] + U[1] * dU[1][1]])
    rho = float(z @ alpha) + float(z @ beta) * C
    gradPhi = ph * gradC / PI**2
    lapPhi = ph * lapC / PI**2
    f_u = da * U + a * a * conv - nu * a * lapU + b * gradP + rho[None] * gradPhi

    gradC_sq = gradC[0] ** 2 + gradC[1] ** 2
    u = a * U
    f_sigma = np.empty((sp_.m,) + X.shape)
    for i in range(sp_.m):
        c = alpha[i] + beta[i] * C
        dc = dalpha[i] + dbeta[i] * C
        lap_c = beta[i] * lapC
        gc_gphi = beta[i] * ph * gradC_sq / PI**2
        u_gc = beta[i] * (u[0] * gradC[0] + u[1] * gradC[1])
        D, zi = sp_.D[i], sp_.z[i]
        f_sigma[i] = (dc - D * (lap_c + zi * (gc_gphi + c * lapPhi)) + u_gc) / c
    return f_u, f_sigma


def _fd6(fun, t, h):
    return (-fun(t - 3 * h) + 9 * fun(t - 2 * h) - 45 * fun(t - h)
            + 45 * fun(t + h) - 9 * fun(t + 2 * h) + fun(t + 3 * h)) / (60.0 * h)


def residual_oracle(case, t: float, rule_fine: QuadratureRule | None = None, h: float = 1e-3,
                    forcing_override=None) -> dict[str, float]:
    """Max-norm residuals of every governing equation for the exact solution.

    Space derivatives are spectral on ``rule_fine`` (default N = 128); time
    derivatives are sixth-order central differences with step ``h``.
    ``forcing_override`` replaces ``(f_u, f_sigma)`` (negative controls).
    """
    case = _as_case(case)
    if case.factors is None:
        raise ValueError(f"{case.name} has no closed-form solution")
    rule = rule_fine or sp.lgl_rule(128)
    X, Y = sp.grid(rule)
    sp_ = case.species
    eps, nu = case.physics.eps, case.physics.nu

    def fields(s):
        return _exact_xy(case, s, X, Y)

    u, p, c, phi = fields(t)
    u_t = _fd6(lambda s: fields(s)[0], t, h)
    sig_t = _fd6(lambda s: np.log(fields(s)[2]), t, h)
    if forcing_override is None:
        f_u, f_sigma = _forcing_xy(case, t, X, Y)
    else:
        f_u, f_sigma = forcing_override

    rho = np.sum(np.asarray(sp_.z)[:, None, None] * c, axis=0)
    gphi = sp.gradient(phi, rule)
    lphi = sp.laplacian(phi, rule)
    g0, g1 = sp.gradient(u[0], rule), sp.gradient(u[1], rule)
    conv = np.stack([u[0] * g0[0] + u[1] * g0[1], u[0] * g1[0] + u[1] * g1[1]])
    lap_u = np.stack([sp.laplacian(u[0], rule), sp.laplacian(u[1], rule)])
    mom = u_t + conv - nu * lap_u + sp.gradient(p, rule) + rho[None] * gphi - f_u

    out = {
        "momentum_x": float(np.max(np.abs(mom[0]))),
        "momentum_y": float(np.max(np.abs(mom[1]))),
        "continuity": float(np.max(np.abs(sp.divergence(u, rule)))),
        "poisson": float(np.max(np.abs(-eps * lphi - rho))),
    }
    for i in range(sp_.m):
        sig = np.log(c[i])
        gs = sp.gradient(sig, rule)
        res = (sig_t[i]
               - sp_.D[i] * (sp.laplacian(sig, rule) + gs[0] ** 2 + gs[1] ** 2
                             + sp_.z[i] * (gs[0] * gphi[0] + gs[1] * gphi[1] + lphi))
               + sp.divergence(sig[None] * u, rule) - f_sigma[i])
        out[f"species_{i + 1}"] = float(np.max(np.abs(res)))
    return out


def boundary_defects(case, t: float, rule: QuadratureRule) -> dict[str, float]:
    """Max boundary values of ``|u|``, ``|dc/dn|`` and ``|dphi/dn|``."""
    case = _as_case(case)
    u, _, c, phi = exact_fields(case, t, rule)

    def edges(f):
        return np.concatenate([f[..., 0, :], f[..., -1, :], f[..., :, 0], f[..., :, -1]], axis=None)

    def normal(f):
        gx, gy = sp.grad_x(f, rule), sp.grad_y(f, rule)
        return np.concatenate([gy[0, :], gy[-1, :], gx[:, 0], gx[:, -1]])

    out = {"u": float(np.max(np.abs(edges(u))))}
    out["dc_dn"] = max(float(np.max(np.abs(normal(ci)))) for ci in c)
    if phi is not None:
        out["dphi_dn"] = float(np.max(np.abs(normal(phi))))
    return out
