"""Run configuration: a flat ``key = value`` text file.

Example::

    # Example 2 with the modified rotational scheme
    scheme = bdf2-mrpc
    initial_condition = example2
    N = 64
    dt = 1e-3
    t_end = 1.0
    species.1.z = 1
    species.1.D = 1
    species.2.z = -1
    species.2.D = 1

Keys left out fall back to the parameters of the chosen manufactured case
(``eps``, ``nu`` and the species list), then to the defaults below.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

SCHEMES = ("bdf1", "bdf2-rpc", "bdf2-mrpc")
INITIAL_CONDITIONS = ("example1", "example2", "example3", "snapshot-dir")
FORCINGS = ("auto-from-case", "none")
TRANSPORT_FORMS = ("div-sigma-u", "u-grad-sigma")
LAPLACE_PHI = ("spectral", "poisson")

_SPECIES_KEY = re.compile(r"^species\.(\d+)\.(z|D)$")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Bad configuration; ``key`` and ``line`` point at the offending entry."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass
class RunConfig:
    scheme: str = "bdf2-mrpc"
    N: int = 32
    dt: float = 1e-3
    t_end: float = 1.0
    eps: float | None = None
    nu: float | None = None
    c0: float = 100.0
    species: list[tuple[float, float]] = field(default_factory=list)
    initial_condition: str = "example2"
    snapshot_dir: str | None = None
    forcing: str = "auto-from-case"
    output_dir: str = "nsnpp-out"
    diag_every: int = 1
    snapshot_every: int = 0
    assert_energy: bool | None = None
    sigma_resync: bool = True
    transport_form: str = "div-sigma-u"
    laplace_phi: str = "spectral"

    @property
    def nsteps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def is_manufactured(self) -> bool:
        return self.initial_condition in ("example1", "example3")

    @property
    def forced(self) -> bool:
        return self.forcing == "auto-from-case" and self.is_manufactured

    def resolved(self) -> "RunConfig":
        """Fill case-dependent gaps (``eps``, ``nu``, species) and validate."""
        from .mms import get_case

        cfg = replace(self, species=list(self.species))
        if cfg.initial_condition in ("example1", "example2", "example3"):
            case = get_case(cfg.initial_condition, c0=cfg.c0)
            if cfg.eps is None:
                cfg.eps = case.physics.eps
            if cfg.nu is None:
                cfg.nu = case.physics.nu
            if not cfg.species:
                cfg.species = list(zip(case.species.z, case.species.D))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(msg, key)

        need(self.scheme in SCHEMES, "scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        need(self.initial_condition in INITIAL_CONDITIONS, "initial_condition",
             f"must be one of {INITIAL_CONDITIONS}, got {self.initial_condition!r}")
        need(self.forcing in FORCINGS, "forcing", f"must be one of {FORCINGS}, got {self.forcing!r}")
        need(self.transport_form in TRANSPORT_FORMS, "transport_form",
             f"must be one of {TRANSPORT_FORMS}, got {self.transport_form!r}")
        need(self.laplace_phi in LAPLACE_PHI, "laplace_phi",
             f"must be one of {LAPLACE_PHI}, got {self.laplace_phi!r}")
        need(self.N >= 4, "N", f"must be >= 4, got {self.N}")
        need(self.dt > 0, "dt", f"must be > 0, got {self.dt}")
        need(self.t_end >= self.dt, "t_end", f"must be >= dt ({self.dt}), got {self.t_end}")
        need(self.c0 > 0, "c0", f"must be > 0, got {self.c0}")
        need(self.eps is not None and self.eps > 0, "eps", f"must be > 0, got {self.eps}")
        need(self.nu is not None and self.nu > 0, "nu", f"must be > 0, got {self.nu}")
        need(len(self.species) >= 1, "species", "at least one species is required")
        for k, (_, D) in enumerate(self.species):
            need(D > 0, f"species.{k + 1}.D", f"must be > 0, got {D}")
        need(self.diag_every >= 1, "diag_every", f"must be >= 1, got {self.diag_every}")
        need(self.snapshot_every >= 0, "snapshot_every", f"must be >= 0, got {self.snapshot_every}")
        if self.initial_condition == "snapshot-dir":
            need(self.snapshot_dir, "snapshot_dir", "required when initial_condition = snapshot-dir")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["species"] = [list(s) for s in self.species]
        return d


_CASTS = {
    "scheme": str, "N": int, "dt": float, "t_end": float, "eps": float, "nu": float, "c0": float,
    "initial_condition": str, "snapshot_dir": str, "forcing": str, "output_dir": str,
    "diag_every": int, "snapshot_every": int, "assert_energy": bool, "sigma_resync": bool,
    "transport_form": str, "laplace_phi": str,
}


def _cast(raw: str, kind, key: str, line: int):
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if kind is int:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {kind.__name__}", key, line) from None


def parse_config(text: str) -> RunConfig:
    """Parse config text; raises :class:`ConfigError` with line and key context."""
    values: dict = {}
    species: dict[int, dict[str, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if not val:
            raise ConfigError("missing value", key, lineno)
        m = _SPECIES_KEY.match(key)
        if m:
            idx = int(m.group(1))
            if idx < 1:
                raise ConfigError("species indices start at 1", key, lineno)
            entry = species.setdefault(idx, {})
            if m.group(2) in entry:
                raise ConfigError("duplicate key", key, lineno)
            entry[m.group(2)] = _cast(val, float, key, lineno)
            continue
        if key not in _CASTS:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        values[key] = _cast(val, _CASTS[key], key, lineno)

    if species:
        idx = sorted(species)
        if idx != list(range(1, len(idx) + 1)):
            raise ConfigError(f"species indices must run 1..m without gaps, got {idx}", "species")
        for i in idx:
            for part in ("z", "D"):
                if part not in species[i]:
                    raise ConfigError("missing", f"species.{i}.{part}")
        values["species"] = [(species[i]["z"], species[i]["D"]) for i in idx]
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
