"""Scheme energies, error norms and the on-disk formats.

Formats
-------
timeseries CSV
    First line ``# nsnpp-timeseries 1``, then a header row, then one row per
    diagnostic interval.  Floats carry 17 significant digits.
field snapshot
    Line 1 ``nsnpp-field 1``; line 2 ``N=<int> t=<float> var=<name>``; then
    ``(N+1)**2`` values one per line, row-major with the x-index fastest.
convergence table CSV
    Sweep value, one error column per variable, one rate column per
    variable (empty on the first row).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import spectral as sp
from .spectral import QuadratureRule

TIMESERIES_SCHEMA = "nsnpp-timeseries 1"
SNAPSHOT_MAGIC = "nsnpp-field 1"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _grad_sq(f, rule):
    g = sp.gradient(f, rule)
    return float(np.sum((g[0] ** 2 + g[1] ** 2) * rule.weights2d))


def discrete_energy(state, variant, dt: float, nu: float, rule: QuadratureRule | None = None) -> float:
    """The Lyapunov functional of ``variant`` evaluated at ``state``.

    BDF2 energies need the previous level; at step 0 the BDF1 energy is
    returned instead.

    The velocity and pressure terms carry half the weight of the ``r``
    terms, as ``1/2 |u|^2`` does against ``r^2 = E_npp + C0`` in the
    continuous energy.  Testing the momentum equation with ``dt u~`` gives
    ``dt xi (w, u~)``, exactly what the ``r`` equation produces after
    multiplication by ``2 dt r``; with equal weights the two coupling terms
    do not cancel and the functional is not monotone.  At rest both
    functionals reduce to ``r^2``.
    """
    rule = rule or _rule_for(state)
    usq = sp.discrete_inner(state.u, state.u, rule)
    if variant.order == 1 or state.prev is None:
        return 0.5 * (usq + dt ** 2 * _grad_sq(state.p, rule)) + state.r ** 2
    u_old = state.prev["u"]
    r_old = state.prev["r"]
    v = 2.0 * state.u - u_old
    e = 0.25 * usq + 0.25 * sp.discrete_inner(v, v, rule)
    e += 0.5 * state.r ** 2 + 0.5 * (2.0 * state.r - r_old) ** 2
    if variant.projection == "mrpc":
        e += (1.0 / 3.0) * dt ** 2 * _grad_sq(state.p_bar, rule)
    else:
        H = state.p + nu * state.omega
        e += (1.0 / 3.0) * dt ** 2 * _grad_sq(H, rule)
        e += 0.5 * nu * dt * sp.discrete_inner(state.omega, state.omega, rule)
    return float(e)


_RULES: dict[int, QuadratureRule] = {}


def _rule_for(state) -> QuadratureRule:
    N = state.N
    rule = _RULES.get(N)
    if rule is None:
        rule = _RULES[N] = sp.lgl_rule(N)
    return rule


def l2_error(f, g, rule: QuadratureRule) -> float:
    """``||f - g||_{0,N}``; vector fields are summed over components."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    return sp.discrete_norm(f - g, rule)


def convergence_rates(h: Sequence[float], err: Sequence[float]) -> list[float]:
    """Consecutive-pair rates ``log(e_k/e_{k+1}) / log(h_k/h_{k+1})``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    return [float(np.log(err[k] / err[k + 1]) / np.log(h[k] / h[k + 1])) for k in range(len(h) - 1)]


def fitted_rate(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    slope, _ = np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(err, float)), 1)
    return float(slope)


@dataclass
class ConvergenceTable:
    parameter: str
    values: list[float]
    errors: dict[str, list[float]]

    def rates(self) -> dict[str, list[float]]:
        return {k: convergence_rates(self.values, v) for k, v in self.errors.items()}

    def fitted(self) -> dict[str, float]:
        return {k: fitted_rate(self.values, v) for k, v in self.errors.items()}


def write_table(table: ConvergenceTable, path) -> Path:
    path = Path(path)
    names = list(table.errors)
    rates = table.rates()
    try:
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([table.parameter] + [f"err_{n}" for n in names] + [f"rate_{n}" for n in names])
            for k, val in enumerate(table.values):
                row = [_fmt(val)] + [_fmt(table.errors[n][k]) for n in names]
                row += ["" if k == 0 else _fmt(rates[n][k - 1]) for n in names]
                wr.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write convergence table {path}: {exc}") from exc
    return path


def read_table(path) -> ConvergenceTable:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    names = [h[4:] for h in header if h.startswith("err_")]
    values = [float(r[0]) for r in rows[1:]]
    errors = {n: [float(r[1 + i]) for r in rows[1:]] for i, n in enumerate(names)}
    return ConvergenceTable(header[0], values, errors)


@dataclass
class TimeSeriesRow:
    step: int
    t: float
    E_ns: float
    E_npp: float
    E_total: float
    scheme_energy: float
    r: float
    xi: float
    mass: list[float]
    min_c: list[float]
    div_norm: float
    errors: dict[str, float] = field(default_factory=dict)

    def columns(self) -> list[str]:
        cols = ["step", "t", "E_ns", "E_npp", "E_total", "scheme_energy", "r", "xi"]
        cols += [f"mass_{i + 1}" for i in range(len(self.mass))]
        cols += [f"min_c_{i + 1}" for i in range(len(self.min_c))]
        cols += ["div_norm"] + [f"err_{k}" for k in self.errors]
        return cols

    def values(self) -> list[str]:
        vals = [self.step, self.t, self.E_ns, self.E_npp, self.E_total, self.scheme_energy, self.r, self.xi]
        vals += list(self.mass) + list(self.min_c) + [self.div_norm] + list(self.errors.values())
        return [_fmt(v) for v in vals]


class TimeSeriesWriter:
    """Append rows to a CSV whose header is fixed by the first row written."""

    def __init__(self, path):
        self.path = Path(path)
        self._columns: list[str] | None = None
        try:
            self._fh = self.path.open("w", newline="")
        except OSError as exc:
            raise OSError(f"cannot open time series {self.path}: {exc}") from exc
        self._fh.write(f"# {TIMESERIES_SCHEMA}\n")
        self._csv = csv.writer(self._fh)

    def write(self, row: TimeSeriesRow) -> None:
        cols = row.columns()
        if self._columns is None:
            self._columns = cols
            self._csv.writerow(cols)
        elif cols != self._columns:
            raise ValueError(f"time series columns changed: {cols} != {self._columns}")
        self._csv.writerow(row.values())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(rows: Sequence[TimeSeriesRow], path) -> Path:
    with TimeSeriesWriter(path) as wr:
        for row in rows:
            wr.write(row)
    return Path(path)


def read_timeseries(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {TIMESERIES_SCHEMA}":
            raise ValueError(f"{path}: not a time series file (first line {first!r})")
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    return {h: np.array([float(r[i]) if r[i] else math.nan for r in data]) for i, h in enumerate(header)}


def write_snapshot(f: np.ndarray, path, *, t: float, var: str) -> Path:
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError(f"snapshot needs a square 2D field, got shape {f.shape}")
    if any(ch.isspace() for ch in var):
        raise ValueError(f"variable name may not contain whitespace: {var!r}")
    N = f.shape[0] - 1
    path = Path(path)
    lines = [SNAPSHOT_MAGIC, f"N={N} t={float(t)!r} var={var}"]
    lines += [repr(float(v)) for v in f.ravel(order="C")]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc
    return path


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    """Return ``(field, meta)`` with ``meta = {"N", "t", "var"}``."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: missing '{SNAPSHOT_MAGIC}' header")
    meta = dict(item.split("=", 1) for item in lines[1].split())
    N = int(meta["N"])
    vals = np.array([float(v) for v in lines[2:2 + (N + 1) ** 2]])
    if vals.size != (N + 1) ** 2:
        raise ValueError(f"{path}: expected {(N + 1) ** 2} values, found {vals.size}")
    return vals.reshape(N + 1, N + 1), {"N": N, "t": float(meta["t"]), "var": meta["var"]}
