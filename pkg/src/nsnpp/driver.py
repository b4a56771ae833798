"""Batch drivers behind the command line: single runs and convergence sweeps."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import mms
from . import spectral as sp
from .config import ConfigError, RunConfig
from .elliptic import OperatorCache
from .model import (
    NsnppState,
    PhysicsParams,
    SpeciesParams,
    energy_npp,
    init_state,
    masses,
)
from .schemes import SchemeVariant, StepFailure, Stepper

logger = logging.getLogger(__name__)

SNAPSHOT_VARS = ("u_x", "u_y", "p", "phi")


@dataclass
class RunResult:
    state: NsnppState
    status: str
    failure: StepFailure | None = None
    wall_time: float = 0.0
    timings: dict = field(default_factory=dict)
    rows: int = 0

    @property
    def exit_code(self) -> int:
        return 0 if self.failure is None else 1


def _species(cfg: RunConfig) -> SpeciesParams:
    return SpeciesParams(z=tuple(z for z, _ in cfg.species), D=tuple(d for _, d in cfg.species))


def _physics(cfg: RunConfig) -> PhysicsParams:
    return PhysicsParams(eps=cfg.eps, nu=cfg.nu, c0=cfg.c0)


def _case(cfg: RunConfig):
    """The manufactured case of ``cfg`` with its parameters overridden by the config."""
    base = mms.get_case(cfg.initial_condition, c0=cfg.c0)
    return replace(base, species=_species(cfg), physics=_physics(cfg))


def load_snapshot_dir(path, m: int, rule: sp.QuadratureRule):
    """``(u, c, t)`` from a directory of field snapshots written by :func:`write_state`."""
    path = Path(path)
    fields = {}
    t = 0.0
    for var in ("u_x", "u_y") + tuple(f"c_{i + 1}" for i in range(m)):
        f = path / f"{var}.txt"
        if not f.exists():
            raise ConfigError(f"snapshot directory {path} has no {f.name}", "snapshot_dir")
        arr, meta = dg.read_snapshot(f)
        if meta["N"] != rule.N:
            raise ConfigError(f"{f} has N={meta['N']}, config asks for N={rule.N}", "snapshot_dir")
        fields[var] = arr
        t = meta["t"]
    u = np.stack([fields["u_x"], fields["u_y"]])
    c = np.stack([fields[f"c_{i + 1}"] for i in range(m)])
    return u, c, t


def write_state(state: NsnppState, directory) -> Path:
    """One snapshot file per variable in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = {"u_x": state.u[0], "u_y": state.u[1], "p": state.p, "phi": state.phi}
    data.update({f"c_{i + 1}": ci for i, ci in enumerate(state.c)})
    for var, arr in data.items():
        dg.write_snapshot(arr, directory / f"{var}.txt", t=state.t, var=var)
    return directory


def setup(cfg: RunConfig, ops: OperatorCache | None = None, rule: sp.QuadratureRule | None = None):
    """Build ``(rule, state, stepper)`` for a resolved config."""
    rule = rule or sp.lgl_rule(cfg.N)
    ops = ops or OperatorCache(rule)
    species, physics = _species(cfg), _physics(cfg)
    t0 = 0.0
    boundary_tol = 1e-10
    if cfg.initial_condition == "snapshot-dir":
        u0, c0, t0 = load_snapshot_dir(cfg.snapshot_dir, species.m, rule)
        # a projected velocity keeps a tangential slip of order dt on the wall
        boundary_tol = np.inf
    else:
        case = _case(cfg)
        if case.species.m != mms.get_case(cfg.initial_condition).species.m:
            raise ConfigError(f"{cfg.initial_condition} has {mms.get_case(cfg.initial_condition).species.m} "
                              f"species, config lists {species.m}", "species")
        u0, c0 = mms.initial_fields(case, rule)
    state = init_state(u0, c0, species, physics, rule, ops=ops, t0=t0, boundary_tol=boundary_tol)
    forcing = _case(cfg).forcing_at(rule) if cfg.forced else None
    stepper = Stepper(
        rule, species, physics, SchemeVariant.from_name(cfg.scheme), cfg.dt, forcing=forcing,
        ops=ops, assert_energy=cfg.assert_energy, sigma_resync=cfg.sigma_resync,
        transport_form=cfg.transport_form, laplace_phi=cfg.laplace_phi,
    )
    return rule, state, stepper


def errors(state: NsnppState, cfg: RunConfig, rule: sp.QuadratureRule) -> dict[str, float]:
    """L2 errors against the manufactured solution at ``state.t``."""
    u, p, c, phi = mms.exact_fields(_case(cfg), state.t, rule)
    out = {"u": dg.l2_error(state.u, u, rule), "p": dg.l2_error(state.p, p, rule)}
    for i in range(len(c)):
        out[f"c{i + 1}"] = dg.l2_error(state.c[i], c[i], rule)
    out["phi"] = dg.l2_error(state.phi, phi, rule)
    return out


def timeseries_row(state: NsnppState, stepper: Stepper, cfg: RunConfig) -> dg.TimeSeriesRow:
    rule = stepper.rule
    variant = stepper.variant
    E_ns = 0.5 * sp.discrete_inner(state.u, state.u, rule)
    E_npp = energy_npp(state.c, state.phi_bar, stepper.species, rule)
    scheme_energy = dg.discrete_energy(state, variant, stepper.dt, stepper.physics.nu, rule)
    div = float(np.max(np.abs(stepper.pressure_operator.weak_rhs_grad(state.u))))
    errs = errors(state, cfg, rule) if cfg.is_manufactured else {}
    return dg.TimeSeriesRow(
        step=state.step, t=state.t, E_ns=E_ns, E_npp=E_npp, E_total=E_ns + E_npp,
        scheme_energy=scheme_energy, r=state.r, xi=state.xi, mass=list(masses(state.c, rule)),
        min_c=[float(ci.min()) for ci in state.c], div_norm=div, errors=errs,
    )


def run(cfg: RunConfig, output_dir=None, progress: bool = False) -> RunResult:
    """Run one simulation and write its artifacts.

    Writes ``timeseries.csv``, ``snapshots/step_<n>/`` every ``snapshot_every``
    steps plus the final state, ``summary.json`` and, on an invariant
    failure, ``failure.json``.
    """
    cfg = cfg.resolved()
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rule, state, stepper = setup(cfg)
    nsteps = cfg.nsteps
    failure = None
    rows = 0
    tic = time.perf_counter()
    with dg.TimeSeriesWriter(out / "timeseries.csv") as ts:
        ts.write(timeseries_row(state, stepper, cfg))
        rows += 1
        try:
            for _ in range(nsteps):
                state = stepper.advance(state)
                n = state.step
                if n % cfg.diag_every == 0 or n == nsteps:
                    ts.write(timeseries_row(state, stepper, cfg))
                    rows += 1
                if cfg.snapshot_every and n % cfg.snapshot_every == 0:
                    write_state(state, out / "snapshots" / f"step_{n:06d}")
                if progress and n % max(1, nsteps // 10) == 0:
                    logger.info("step %d/%d t=%.6g xi=%.12f", n, nsteps, state.t, state.xi)
        except StepFailure as exc:
            failure = exc
            logger.error("%s", exc)
    wall = time.perf_counter() - tic
    write_state(state, out / "snapshots" / "final")

    result = RunResult(state=state, status="failed" if failure else "ok", failure=failure,
                       wall_time=wall, timings=dict(stepper.timings), rows=rows)
    if failure is not None:
        _write_json(out / "failure.json", failure.to_dict())
    _write_json(out / "summary.json", summary(result, stepper, cfg))
    return result


def summary(result: RunResult, stepper: Stepper, cfg: RunConfig) -> dict:
    state = result.state
    row = timeseries_row(state, stepper, cfg)
    out = {
        "status": result.status,
        "scheme": cfg.scheme,
        "steps": state.step,
        "t": state.t,
        "E_ns": row.E_ns,
        "E_npp": row.E_npp,
        "E_total": row.E_total,
        "scheme_energy": row.scheme_energy,
        "r": state.r,
        "xi": state.xi,
        "mass": row.mass,
        "mass_initial": [float(m) for m in state.mass0],
        "min_c": row.min_c,
        "wall_time": result.wall_time,
        "timings": result.timings,
        "config": cfg.to_dict(),
    }
    if row.errors:
        out["errors"] = row.errors
    if result.failure is not None:
        out["failure"] = result.failure.to_dict()
    return out


def _write_json(path: Path, data: dict) -> None:
    try:
        path.write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    """``"dt=1e-1,1e-2"`` -> ``("dt", [0.1, 0.01])``."""
    if "=" not in spec:
        raise ConfigError(f"sweep must look like dt=a,b,... or N=a,b,..., got {spec!r}", "sweep")
    name, vals = (s.strip() for s in spec.split("=", 1))
    if name not in ("dt", "N"):
        raise ConfigError(f"can only sweep dt or N, got {name!r}", "sweep")
    try:
        values = [float(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad sweep values {vals!r}", "sweep") from None
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values", "sweep")
    if name == "N":
        if any(v != int(v) for v in values):
            raise ConfigError(f"N values must be integers, got {vals!r}", "sweep")
        values = [int(v) for v in values]
    return name, values


def convergence(cfg: RunConfig, parameter: str, values, output_dir=None,
                write: bool = True) -> tuple[dg.ConvergenceTable, list[RunResult]]:
    """Run a manufactured case once per sweep value and tabulate final-time errors.

    Operators are shared between sweep points with the same ``N``.
    """
    cfg = cfg.resolved()
    if not cfg.is_manufactured:
        raise ConfigError("convergence needs a manufactured initial_condition (example1 or example3)",
                          "initial_condition")
    if parameter not in ("dt", "N"):
        raise ConfigError(f"can only sweep dt or N, got {parameter!r}", "sweep")
    caches: dict[int, tuple[sp.QuadratureRule, OperatorCache]] = {}
    errs: dict[str, list[float]] = {}
    results = []
    for v in values:
        point = replace(cfg, **{parameter: v})
        point.validate()
        if point.N not in caches:
            rule = sp.lgl_rule(point.N)
            caches[point.N] = (rule, OperatorCache(rule))
        rule, ops = caches[point.N]
        _, state, stepper = setup(point, ops=ops, rule=rule)
        tic = time.perf_counter()
        failure = None
        try:
            state = stepper.run(state, point.nsteps)
        except StepFailure as exc:
            failure = exc
        res = RunResult(state=state, status="failed" if failure else "ok", failure=failure,
                        wall_time=time.perf_counter() - tic, timings=dict(stepper.timings))
        results.append(res)
        if failure is not None:
            raise failure
        for k, e in errors(state, point, rule).items():
            errs.setdefault(k, []).append(e)
        logger.info("%s=%s: %s", parameter, v, ", ".join(f"{k}={e[-1]:.6e}" for k, e in errs.items()))

    table = dg.ConvergenceTable(parameter, list(values), errs)
    if write:
        out = Path(output_dir or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        dg.write_table(table, out / "convergence.csv")
        _write_json(out / "convergence.json", {
            "parameter": parameter, "values": list(values), "errors": errs,
            "rates": table.rates(), "fitted_rates": table.fitted(),
            "wall_time": [r.wall_time for r in results], "config": cfg.to_dict(),
        })
    return table, results
