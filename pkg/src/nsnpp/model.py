"""Parameters, solution state, energies and the t = 0 initialization."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .elliptic import OperatorCache
from .spectral import QuadratureRule


class PositivityError(ValueError):
    """A concentration is non-positive at some grid node."""

    def __init__(self, species: int, node: tuple[int, int], value: float):
        self.species = species
        self.node = node
        self.value = value
        super().__init__(
            f"concentration of species {species + 1} is {value:.6e} at node "
            f"(y={node[0]}, x={node[1]}); it must be strictly positive"
        )


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class SpeciesParams:
    """Valences ``z`` and diffusivities ``D``, one entry per ionic species."""

    z: tuple[float, ...]
    D: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))
        object.__setattr__(self, "D", tuple(float(v) for v in self.D))
        if len(self.z) == 0:
            raise ValueError("need at least one species")
        if len(self.z) != len(self.D):
            raise ValueError(f"{len(self.z)} valences but {len(self.D)} diffusivities")
        for i, d in enumerate(self.D):
            if not d > 0:
                raise ValueError(f"diffusivity of species {i + 1} must be positive, got {d}")

    @property
    def m(self) -> int:
        return len(self.z)

    @property
    def z_array(self) -> np.ndarray:
        return np.asarray(self.z)[:, None, None]


@dataclass(frozen=True)
class PhysicsParams:
    eps: float
    nu: float
    c0: float = 100.0

    def __post_init__(self):
        for name in ("eps", "nu", "c0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def check_positive(c: np.ndarray) -> None:
    for i, ci in enumerate(c):
        if not np.all(np.isfinite(ci)):
            k = np.unravel_index(np.argmax(~np.isfinite(ci)), ci.shape)
            raise PositivityError(i, tuple(int(v) for v in k), float(ci[k]))
        k = np.unravel_index(np.argmin(ci), ci.shape)
        if ci[k] <= 0:
            raise PositivityError(i, tuple(int(v) for v in k), float(ci[k]))


def charge_density(c: np.ndarray, species: SpeciesParams) -> np.ndarray:
    """``sum_i z_i c_i`` at the nodes."""
    return np.sum(species.z_array * c, axis=0)


def energy_npp(c: np.ndarray, phi_bar: np.ndarray, species: SpeciesParams, rule: QuadratureRule) -> float:
    """Quadrature of ``sum_i c_i (log c_i - 1) + 0.5 (sum_i z_i c_i) phi``."""
    c = np.asarray(c)
    check_positive(c)
    density = np.sum(c * (np.log(c) - 1.0), axis=0) + 0.5 * charge_density(c, species) * phi_bar
    return float(np.sum(density * rule.weights2d))


def chemical_potentials(c: np.ndarray, phi_bar: np.ndarray, species: SpeciesParams) -> np.ndarray:
    """``mu_i = log c_i + z_i phi`` nodally, shape ``(m, N+1, N+1)``."""
    c = np.asarray(c)
    check_positive(c)
    return np.log(c) + species.z_array * phi_bar[None]


def dissipation(c: np.ndarray, mu: np.ndarray, species: SpeciesParams, rule: QuadratureRule) -> np.ndarray:
    """Per-species ``D_i (c_i, |grad mu_i|^2)_N``."""
    out = np.empty(species.m)
    for i in range(species.m):
        g = sp.gradient(mu[i], rule)
        out[i] = species.D[i] * float(np.sum(c[i] * (g[0] ** 2 + g[1] ** 2) * rule.weights2d))
    return out


def masses(c: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    return np.array([float(np.sum(ci * rule.weights2d)) for ci in c])


@dataclass
class EnergyReport:
    E_ns: float
    E_npp: float
    E_total: float
    scheme_energy: float
    dissipation: np.ndarray
    mu: np.ndarray | None = None


@dataclass
class NsnppState:
    """Solution at one time level plus the history the BDF2 steppers read.

    Species fields are stacked along the first axis, shape ``(m, N+1, N+1)``.
    ``prev`` holds the previous level's ``u, sigma, phi, r, mass`` (``None`` at
    step 0).  ``p_bar`` is ``p + nu div(u_tilde)`` for the modified rotational
    projection, and ``omega`` is the accumulated projected divergence used in
    the rotational-projection energy.
    """

    t: float
    step: int
    u: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    phi_bar: np.ndarray
    c: np.ndarray
    sigma: np.ndarray
    r: float
    xi: float
    mass0: np.ndarray
    mass: np.ndarray
    u_tilde: np.ndarray
    p_bar: np.ndarray
    omega: np.ndarray
    prev: dict | None = None
    sigma_raw: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.u.shape[-1] - 1

    @property
    def m(self) -> int:
        return self.c.shape[0]

    def copy(self) -> "NsnppState":
        return copy.deepcopy(self)


def initial_pressure(u0: np.ndarray, c0: np.ndarray, phi0: np.ndarray, species: SpeciesParams,
                     rule: QuadratureRule, ops: OperatorCache) -> np.ndarray:
    """Pressure at t = 0 in the zero-mean space ``P_{N-2}``.

    Weak form ``(grad p, grad q)_N = (-(sum z c) grad phi - (u . grad) u, grad q)_N``.
    """
    rho = charge_density(c0, species)
    gphi = sp.gradient(phi0, rule)
    gu0 = sp.gradient(u0[0], rule)
    gu1 = sp.gradient(u0[1], rule)
    conv = np.stack([u0[0] * gu0[0] + u0[1] * gu0[1], u0[0] * gu1[0] + u0[1] * gu1[1]])
    g = -rho[None] * gphi - conv
    op = ops.get(0.0, 1.0, "pressure")
    return op.solve_weak(op.weak_rhs_grad(g))


def init_state(u0: np.ndarray, c0: np.ndarray, species: SpeciesParams, physics: PhysicsParams,
               rule: QuadratureRule, ops: OperatorCache | None = None, t0: float = 0.0,
               boundary_tol: float = 1e-10) -> NsnppState:
    """Build the step-0 state from nodal initial velocity and concentrations.

    The potential solves ``eps (grad phi, grad q)_N = (sum z c, q)_N`` with zero
    mean, ``r = sqrt(E_npp + C0)`` and ``xi = 1``.
    """
    u0 = np.array(u0, dtype=float)
    c0 = np.array(c0, dtype=float)
    rule.check(u0, vector=True)
    if c0.ndim != 3 or c0.shape[0] != species.m or c0.shape[1:] != rule.shape:
        raise ValueError(f"initial concentrations have shape {c0.shape}, expected ({species.m}, {rule.N + 1}, {rule.N + 1})")
    check_positive(c0)
    edge = np.concatenate([u0[:, 0, :], u0[:, -1, :], u0[:, :, 0], u0[:, :, -1]], axis=None)
    if np.max(np.abs(edge)) > boundary_tol:
        raise BoundaryError(f"initial velocity is {np.max(np.abs(edge)):.3e} on the boundary; must vanish")
    # boundary values are snapped to exact zeros
    u0[:, 0, :] = u0[:, -1, :] = u0[:, :, 0] = u0[:, :, -1] = 0.0

    ops = ops or OperatorCache(rule)
    pot = ops.get(0.0, physics.eps, "neumann")
    phi_bar = pot.solve(charge_density(c0, species))
    E = energy_npp(c0, phi_bar, species, rule)
    if E + physics.c0 < 1.0:
        raise ValueError(f"E_npp + C0 = {E + physics.c0:.6g} < 1; increase C0")
    r0 = float(np.sqrt(E + physics.c0))
    p0 = initial_pressure(u0, c0, phi_bar, species, rule, ops)
    m0 = masses(c0, rule)
    zeros = np.zeros(rule.shape)
    return NsnppState(
        t=float(t0), step=0, u=u0, p=p0, phi=phi_bar.copy(), phi_bar=phi_bar,
        c=c0, sigma=np.log(c0), r=r0, xi=1.0, mass0=m0.copy(), mass=m0,
        u_tilde=u0.copy(), p_bar=p0.copy(), omega=zeros.copy(), prev=None,
    )
