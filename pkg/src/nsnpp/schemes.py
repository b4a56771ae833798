"""SAV time steppers: BDF1 with standard projection, BDF2 with rotational
(RPC) or modified rotational (MRPC) pressure correction.

One step is five stages:

1. implicit-diffusion solve for each ``sigma_i = log c_i``, exponentiate and
   rescale to the target mass;
2. zero-mean Neumann Poisson solve for the potential ``phi_bar``;
3. two Dirichlet Helmholtz solves for the velocity, one carrying the history
   and pressure terms, one carrying the explicit coupling ``w``;
4. the scalar ``xi`` from a closed-form quotient, then ``r``, ``u_tilde`` and
   ``phi``;
5. pressure-Poisson projection and the pressure update of the variant.

BDF2 runs bootstrap their first step with the BDF1 scheme.
"""
from __future__ import annotations

import logging
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral as sp
from .diagnostics import discrete_energy
from .elliptic import OperatorCache
from .model import (
    NsnppState,
    PhysicsParams,
    SpeciesParams,
    charge_density,
    check_positive,
    chemical_potentials,
    dissipation,
    energy_npp,
    masses,
)
from .spectral import QuadratureRule

logger = logging.getLogger(__name__)

SIGMA_OVERFLOW = 700.0

_NAMES = {
    "bdf1": (1, "standard"),
    "bdf2-rpc": (2, "rpc"),
    "bdf2-mrpc": (2, "mrpc"),
}


@dataclass(frozen=True)
class SchemeVariant:
    order: int
    projection: str

    def __post_init__(self):
        if (self.order, self.projection) not in _NAMES.values():
            raise ValueError(
                f"invalid scheme: order {self.order} with {self.projection!r} projection "
                "(order 1 uses 'standard', order 2 uses 'rpc' or 'mrpc')"
            )

    @classmethod
    def from_name(cls, name: str) -> "SchemeVariant":
        try:
            order, proj = _NAMES[name]
        except KeyError:
            raise ValueError(f"unknown scheme {name!r}; choose from {sorted(_NAMES)}")
        return cls(order, proj)

    @property
    def name(self) -> str:
        return {v: k for k, v in _NAMES.items()}[(self.order, self.projection)]

    @property
    def energy_provable(self) -> bool:
        return self.projection in ("standard", "mrpc")


BDF1 = SchemeVariant(1, "standard")


@dataclass
class Forcing:
    """Manufactured source terms at one time level.

    ``mass_rate`` is ``(f_c_i, 1)_N``, the rate of change of each species mass
    implied by the concentration source, and ``f_r`` the matching source of
    the auxiliary-variable equation.
    """

    f_u: np.ndarray | None = None
    f_sigma: np.ndarray | None = None
    mass_rate: np.ndarray | None = None
    f_r: float = 0.0


class StepFailure(RuntimeError):
    """An invariant check failed during a time step."""

    def __init__(self, step: int, invariant: str, magnitude: float, detail: str = ""):
        self.step = step
        self.invariant = invariant
        self.magnitude = float(magnitude)
        self.detail = detail
        super().__init__(f"step {step}: {invariant} violated (magnitude {magnitude:.3e}) {detail}".rstrip())

    def to_dict(self) -> dict:
        return {"step": self.step, "invariant": self.invariant,
                "magnitude": self.magnitude, "detail": self.detail}


@dataclass
class StepWorkspace:
    sigma: np.ndarray | None = None
    c_bar: np.ndarray | None = None
    lam: np.ndarray | None = None
    c: np.ndarray | None = None
    phi_bar: np.ndarray | None = None
    w: np.ndarray | None = None
    u1: np.ndarray | None = None
    u2: np.ndarray | None = None
    E_bar: float = 0.0
    diss: np.ndarray | None = None
    xi: float = 1.0
    r: float = 0.0
    u_tilde: np.ndarray | None = None
    phi: np.ndarray | None = None
    psi: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def concentration_rescale(sigma: np.ndarray, target_mass, rule: QuadratureRule):
    """``c_bar = exp(sigma)``, ``lam = mass / (c_bar, 1)_N``, ``c = lam c_bar``."""
    sigma = np.asarray(sigma)
    target_mass = np.atleast_1d(np.asarray(target_mass, dtype=float))
    if np.any(target_mass <= 0):
        raise ValueError(f"target masses must be positive, got {target_mass}")
    peak = float(np.max(sigma))
    if not np.isfinite(peak) or peak > SIGMA_OVERFLOW:
        raise OverflowError(f"sigma reaches {peak:.6g}; exp would overflow")
    c_bar = np.exp(sigma)
    lam = target_mass / masses(c_bar, rule)
    c = lam[:, None, None] * c_bar
    return c, lam, c_bar


def xi_quotient(hist_r: float, gamma: float, dt: float, E_bar: float, c0: float,
                w_u1: float, w_u2: float, diss_sum: float, f_r: float = 0.0) -> float:
    """Closed-form solution of the discrete ``r`` equation for ``xi``.

    ``hist_r`` is ``r^n`` (BDF1) or ``2 r^n - r^{n-1}/2`` (BDF2) and ``gamma``
    the matching leading coefficient, 1 or 3/2.  ``f_r`` is a manufactured
    source added to the right-hand side of the ``r`` equation.
    """
    s = np.sqrt(E_bar + c0)
    k = dt / (2.0 * s)
    den = gamma * s + k * (diss_sum - w_u2)
    if not den > 0.5 * gamma * s:
        raise ZeroDivisionError(f"xi denominator {den:.6e} too small (gamma*sqrt(E+C0) = {gamma * s:.6e})")
    return float((hist_r + dt * f_r + k * w_u1) / den)


def _extrap(now, before, order):
    if order == 1:
        return now
    return 2.0 * now - before


class Stepper:
    """Advances an :class:`NsnppState` by one time step of a chosen scheme.

    Parameters
    ----------
    rule : QuadratureRule
    species, physics :
        Model parameters.
    variant : SchemeVariant
    dt : float
    forcing : callable, optional
        ``forcing(t) -> Forcing`` evaluated at the new time level.
    assert_energy : bool, optional
        Check per-step decay of the scheme energy.  Defaults to on for the
        provably stable variants; never applied to forced runs.
    sigma_resync : bool
        Shift ``sigma`` by ``log(lam)`` after rescaling so that ``sigma = log c``.
    transport_form : {"div-sigma-u", "u-grad-sigma"}
    laplace_phi : {"spectral", "poisson"}
        How ``lap(phi)`` in the sigma equation is formed.
    """

    def __init__(self, rule: QuadratureRule, species: SpeciesParams, physics: PhysicsParams,
                 variant: SchemeVariant, dt: float, forcing: Callable[[float], Forcing] | None = None,
                 ops: OperatorCache | None = None, assert_energy: bool | None = None,
                 sigma_resync: bool = True, transport_form: str = "div-sigma-u",
                 laplace_phi: str = "spectral", energy_rtol: float = 1e-10,
                 check_invariants: bool = True):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if transport_form not in ("div-sigma-u", "u-grad-sigma"):
            raise ValueError(f"unknown transport_form {transport_form!r}")
        if laplace_phi not in ("spectral", "poisson"):
            raise ValueError(f"unknown laplace_phi {laplace_phi!r}")
        self.rule = rule
        self.species = species
        self.physics = physics
        self.variant = variant
        self.dt = float(dt)
        self.forcing = forcing
        self.ops = ops or OperatorCache(rule)
        if assert_energy is None:
            assert_energy = variant.energy_provable
        self.assert_energy = bool(assert_energy) and forcing is None
        self.sigma_resync = sigma_resync
        self.transport_form = transport_form
        self.laplace_phi = laplace_phi
        self.energy_rtol = energy_rtol
        self.check_invariants = check_invariants
        self.energy_bound: float | None = None
        self.timings: dict[str, float] = defaultdict(float)
        self.last_workspace: StepWorkspace | None = None

    @contextmanager
    def _timed(self, phase: str):
        tic = time.perf_counter()
        try:
            yield
        finally:
            self.timings[phase] += time.perf_counter() - tic

    # -- operators -------------------------------------------------------
    def _gamma(self, order: int) -> float:
        return 1.0 if order == 1 else 1.5

    def sigma_operator(self, order: int, i: int):
        return self.ops.get(self._gamma(order) / self.dt, self.species.D[i], "neumann")

    def velocity_operator(self, order: int):
        return self.ops.get(self._gamma(order) / self.dt, self.physics.nu, "dirichlet")

    @property
    def potential_operator(self):
        return self.ops.get(0.0, self.physics.eps, "neumann")

    @property
    def pressure_operator(self):
        return self.ops.get(0.0, 1.0, "pressure")

    def step_order(self, state: NsnppState) -> int:
        return 1 if self.variant.order == 1 or state.prev is None else 2

    # -- stage 1 ---------------------------------------------------------
    def sigma_rhs(self, state: NsnppState, order: int, forcing: Forcing | None = None) -> np.ndarray:
        rule = self.rule
        dt = self.dt
        prev = state.prev or {}
        sig_s = _extrap(state.sigma, prev.get("sigma"), order)
        phi_s = _extrap(state.phi, prev.get("phi"), order)
        u_s = _extrap(state.u, prev.get("u"), order)
        if order == 1:
            hist = state.sigma / dt
        else:
            hist = (4.0 * state.sigma - prev["sigma"]) / (2.0 * dt)

        gphi = sp.gradient(phi_s, rule)
        if self.laplace_phi == "spectral":
            lphi = sp.laplacian(phi_s, rule)
        else:
            xi_s = _extrap(state.xi, prev.get("xi"), order)
            rho_s = _extrap(charge_density(state.c, self.species),
                            None if order == 1 else charge_density(prev["c"], self.species), order)
            lphi = -xi_s * rho_s / self.physics.eps
        g = np.empty_like(state.sigma)
        for i in range(self.species.m):
            D, z = self.species.D[i], self.species.z[i]
            gs = sp.gradient(sig_s[i], rule)
            nonlin = gs[0] ** 2 + gs[1] ** 2 + z * (gs[0] * gphi[0] + gs[1] * gphi[1] + lphi)
            if self.transport_form == "div-sigma-u":
                transport = sp.divergence(sig_s[i][None] * u_s, rule)
            else:
                transport = u_s[0] * gs[0] + u_s[1] * gs[1]
            g[i] = hist[i] + D * nonlin - transport
        if forcing is not None and forcing.f_sigma is not None:
            g += forcing.f_sigma
        return g

    def sigma_step(self, state: NsnppState, order: int, forcing: Forcing | None = None) -> np.ndarray:
        """Solve the implicit diffusion problem for every ``sigma_i``."""
        with self._timed("explicit"):
            g = self.sigma_rhs(state, order, forcing)
        out = np.empty_like(g)
        with self._timed("elliptic"):
            for i in range(self.species.m):
                out[i] = self.sigma_operator(order, i).solve(g[i])
        return out

    def target_mass(self, state: NsnppState, order: int, forcing: Forcing | None) -> np.ndarray:
        if forcing is None or forcing.mass_rate is None:
            return state.mass.copy()
        rate = np.asarray(forcing.mass_rate, dtype=float)
        if order == 1:
            return state.mass + self.dt * rate
        return (4.0 * state.mass - state.prev["mass"] + 2.0 * self.dt * rate) / 3.0

    # -- stage 2 ---------------------------------------------------------
    def potential_step(self, c: np.ndarray) -> np.ndarray:
        with self._timed("elliptic"):
            return self.potential_operator.solve(charge_density(c, self.species))

    # -- stage 3 ---------------------------------------------------------
    def velocity_substeps(self, state: NsnppState, c: np.ndarray, phi_bar: np.ndarray, order: int,
                          projection: str, forcing: Forcing | None = None):
        """Return ``(u1, u2, w)`` for the two Dirichlet Helmholtz substeps."""
        rule = self.rule
        dt = self.dt
        prev = state.prev or {}
        tic = time.perf_counter()
        u_s = _extrap(state.u, prev.get("u"), order)
        g0 = sp.gradient(u_s[0], rule)
        g1 = sp.gradient(u_s[1], rule)
        conv = np.stack([u_s[0] * g0[0] + u_s[1] * g0[1], u_s[0] * g1[0] + u_s[1] * g1[1]])
        w = conv + charge_density(c, self.species)[None] * sp.gradient(phi_bar, rule)

        if order == 1:
            hist = state.u / dt
        else:
            hist = (4.0 * state.u - prev["u"]) / (2.0 * dt)
        p_used = state.p_bar if projection == "mrpc" else state.p
        f = hist - sp.gradient(p_used, rule)
        if forcing is not None and forcing.f_u is not None:
            f = f + forcing.f_u
        op = self.velocity_operator(order)
        self.timings["explicit"] += time.perf_counter() - tic
        with self._timed("elliptic"):
            sol = op.solve(np.concatenate([f, -w]))
        return sol[:2], sol[2:], w

    # -- stage 5 ---------------------------------------------------------
    def pressure_projection(self, u_tilde: np.ndarray, state: NsnppState, order: int, projection: str):
        """Return ``(u, p, psi, p_bar, omega)`` at the new level."""
        rule = self.rule
        gamma = self._gamma(order)
        op = self.pressure_operator
        with self._timed("elliptic"):
            psi = op.solve_weak(op.weak_rhs_grad(u_tilde) * (gamma / self.dt))
        u = u_tilde - (self.dt / gamma) * sp.gradient(psi, rule)
        nu = self.physics.nu
        omega = state.omega
        if projection == "standard":
            p = state.p + psi
            p_bar = p.copy()
        elif projection == "rpc":
            proj_div = sp.project_pressure_space(sp.divergence(u_tilde, rule), rule)
            p = psi + state.p - nu * proj_div
            omega = state.omega + proj_div
            p_bar = p.copy()
        else:
            p_bar = state.p_bar + psi
            p = p_bar - nu * sp.divergence(u_tilde, rule)
        return u, p, psi, p_bar, omega

    # -- full step -------------------------------------------------------
    def advance(self, state: NsnppState) -> NsnppState:
        """One time step; returns a new state and leaves ``state`` untouched."""
        rule = self.rule
        dt = self.dt
        order = self.step_order(state)
        gamma = self._gamma(order)
        projection = "standard" if order == 1 else self.variant.projection
        step = state.step + 1
        t_new = state.t + dt
        forcing = self.forcing(t_new) if self.forcing is not None else None
        ws = StepWorkspace()
        tic = time.perf_counter()

        # stage 1
        sigma = self.sigma_step(state, order, forcing)
        target = self.target_mass(state, order, forcing)
        try:
            c, lam, c_bar = concentration_rescale(sigma, target, rule)
        except OverflowError as exc:
            raise StepFailure(step, "sigma overflow", float(np.max(sigma)), str(exc)) from exc
        except ValueError as exc:
            raise StepFailure(step, "mass positivity", float(np.min(target)), str(exc)) from exc
        ws.sigma, ws.c_bar, ws.lam, ws.c = sigma, c_bar, lam, c
        sigma_raw = sigma
        if self.sigma_resync:
            sigma = sigma + np.log(lam)[:, None, None]

        # stage 2
        phi_bar = self.potential_step(c)
        ws.phi_bar = phi_bar

        # stage 3
        u1, u2, w = self.velocity_substeps(state, c, phi_bar, order, projection, forcing)
        ws.u1, ws.u2, ws.w = u1, u2, w

        # stage 4
        tic4 = time.perf_counter()
        E_bar = energy_npp(c, phi_bar, self.species, rule)
        if E_bar + self.physics.c0 < 1.0:
            raise StepFailure(step, "E_npp + C0 >= 1", E_bar + self.physics.c0)
        mu = chemical_potentials(c, phi_bar, self.species)
        diss = dissipation(c, mu, self.species, rule)
        if order == 1:
            hist_r = state.r
        else:
            hist_r = 2.0 * state.r - 0.5 * state.prev["r"]
        w_u1 = sp.discrete_inner(w, u1, rule)
        w_u2 = sp.discrete_inner(w, u2, rule)
        f_r = forcing.f_r if forcing is not None else 0.0
        try:
            xi = xi_quotient(hist_r, gamma, dt, E_bar, self.physics.c0, w_u1, w_u2, float(diss.sum()), f_r)
        except ZeroDivisionError as exc:
            raise StepFailure(step, "xi denominator", 0.0, str(exc)) from exc
        sq = float(np.sqrt(E_bar + self.physics.c0))
        r = xi * sq
        u_tilde = u1 + xi * u2
        phi = xi * phi_bar
        ws.E_bar, ws.diss, ws.xi, ws.r, ws.u_tilde, ws.phi = E_bar, diss, xi, r, u_tilde, phi
        self.timings["explicit"] += time.perf_counter() - tic4

        # stage 5
        u, p, psi, p_bar, omega = self.pressure_projection(u_tilde, state, order, projection)
        ws.psi = psi
        self.timings["step"] += time.perf_counter() - tic

        prev = {
            "u": state.u, "sigma": state.sigma, "phi": state.phi, "r": state.r,
            "xi": state.xi, "c": state.c, "mass": state.mass, "u_tilde": state.u_tilde,
            "p": state.p, "p_bar": state.p_bar,
        }
        new = NsnppState(
            t=t_new, step=step, u=u, p=p, phi=phi, phi_bar=phi_bar, c=c, sigma=sigma,
            r=r, xi=xi, mass0=state.mass0, mass=target, u_tilde=u_tilde, p_bar=p_bar,
            omega=omega, prev=prev, sigma_raw=sigma_raw,
            info={"order": order, "lam": lam, "E_bar": E_bar, "dissipation": diss,
                  "w_u1": w_u1, "w_u2": w_u2, "hist_r": hist_r, "gamma": gamma, "f_r": f_r},
        )
        self.last_workspace = ws
        if self.check_invariants:
            with self._timed("checks"):
                self._check(state, new, ws, order, projection)
        return new

    def run(self, state: NsnppState, nsteps: int, callback=None) -> NsnppState:
        for _ in range(nsteps):
            state = self.advance(state)
            if callback is not None:
                callback(state)
        return state

    # -- invariants ------------------------------------------------------
    def _check(self, old: NsnppState, new: NsnppState, ws: StepWorkspace, order: int, projection: str):
        rule = self.rule
        step = new.step
        try:
            check_positive(new.c)
        except ValueError as exc:
            raise StepFailure(step, "positivity", getattr(exc, "value", np.nan), str(exc)) from exc

        m = masses(new.c, rule)
        dm = np.abs(m - new.mass) / np.abs(new.mass)
        if np.max(dm) > 1e-12:
            raise StepFailure(step, "mass conservation", float(np.max(dm)))

        if self.sigma_resync:
            ds = np.max(np.abs(new.sigma - np.log(new.c)) / np.maximum(1.0, np.abs(new.sigma)))
            if ds > 1e-12:
                raise StepFailure(step, "sigma = log c", float(ds))

        mean_phi = abs(sp.discrete_mean(new.phi_bar, rule))
        if mean_phi > 1e-12 * max(1.0, float(np.max(np.abs(new.phi_bar)))):
            raise StepFailure(step, "zero-mean potential", mean_phi)

        # r equation residual after substitution
        gamma = new.info["gamma"]
        sq = np.sqrt(ws.E_bar + self.physics.c0)
        lhs = gamma * new.r - new.info["hist_r"]
        rhs = -self.dt / (2.0 * sq) * (new.xi * float(ws.diss.sum())
                                       - sp.discrete_inner(ws.w, ws.u_tilde, rule))
        rhs += self.dt * new.info["f_r"]
        scale = max(abs(gamma * new.r), abs(new.info["hist_r"]), 1.0)
        if abs(lhs - rhs) > 1e-12 * scale:
            raise StepFailure(step, "r equation residual", abs(lhs - rhs) / scale)

        op = self.pressure_operator
        div_res = float(np.max(np.abs(op.weak_rhs_grad(new.u))))
        div_scale = max(1.0, float(np.max(np.abs(op.weak_rhs_grad(ws.u_tilde)))))
        if div_res > 1e-10 * div_scale:
            raise StepFailure(step, "discrete divergence", div_res / div_scale)

        for name, val in (("u", new.u), ("p", new.p), ("phi", new.phi)):
            if not np.all(np.isfinite(val)):
                raise StepFailure(step, f"finite {name}", np.nan)

        if self.forcing is None:
            variant = self.variant if order == 2 else BDF1
            e_old = discrete_energy(old, variant, self.dt, self.physics.nu, rule)
            e_new = discrete_energy(new, variant, self.dt, self.physics.nu, rule)
            new.info["energy"] = e_new
            new.info["energy_old"] = e_old
            if self.energy_bound is None:
                self.energy_bound = 2.0 * max(e_old, e_new)
            if self.assert_energy and e_new > e_old + self.energy_rtol * abs(e_old):
                raise StepFailure(step, "energy dissipation", (e_new - e_old) / abs(e_old),
                                  f"{variant.name} energy {e_old:.17g} -> {e_new:.17g}")
            if not self.variant.energy_provable and e_new > e_old:
                logger.info("step %d: %s energy increased by %.3e", step, variant.name, e_new - e_old)
            bound = 10.0 * self.energy_bound
            usq = sp.discrete_inner(new.u, new.u, rule)
            big = max(usq, new.r ** 2, new.xi ** 2)
            if big > bound:
                raise StepFailure(step, "boundedness", big / bound)
