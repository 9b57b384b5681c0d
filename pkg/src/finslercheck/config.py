"""Run configuration: a TOML file describing Lagrangian, sampling and suites.

See ``docs/config.md`` for the full schema.  All validation errors raise
:class:`ConfigError`, which the CLI maps to exit code 2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import dsl
from .axioms import DEFAULT_TOL, SUITE_IDS, X_BOX, Y_SHELL
from .connections import KINDS, BASIS_TAGS, ExpressionField, FinslerConnection, catalogue, custom
from .core import PIPELINE_ORDER

CONFIG_DIR_ENV = "FINSLERCHECK_CONFIG_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: dsl.LagrangianSpec
    lagrangian: dict
    seed: int = 0
    count: int = 50
    x_box: list = field(default_factory=lambda: list(X_BOX))
    y_shell: list = field(default_factory=lambda: list(Y_SHELL))
    suites: list = field(default_factory=lambda: list(SUITE_IDS))
    connection_names: list = field(default_factory=lambda: list(KINDS))
    custom: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL
    tolerances: dict = field(default_factory=dict)
    order: int = PIPELINE_ORDER
    output: str | None = None
    probe_trials: int = 20
    probe_points: int = 5
    N_table: list | None = None

    @property
    def n(self) -> int:
        return self.spec.n

    def suite_tol(self, suite: str) -> float:
        return float(self.tolerances.get(suite, self.tol))

    def connections(self) -> list[FinslerConnection]:
        out = []
        for name in self.connection_names:
            if name in KINDS:
                out.append(catalogue(name))
            else:
                c = self.custom[name]
                out.append(custom(c["H"], c["V"], self.n, c.get("basis", "bar"), name))
        return out

    def N_field(self):
        if self.N_table is None:
            return None
        return ExpressionField.from_table(self.N_table, self.n)

    def echo(self) -> dict:
        """Normalized, JSON-ready view of the configuration."""
        return {
            "lagrangian": {"text": self.spec.text, "n": self.n, "label": self.spec.label,
                           "guard": None if self.spec.guard is None else dsl.to_text(self.spec.guard),
                           "source": self.lagrangian},
            "sampling": {"seed": self.seed, "count": self.count, "x_box": self.x_box, "y_shell": self.y_shell},
            "suites": list(self.suites),
            "connections": list(self.connection_names),
            "custom": self.custom,
            "tol": self.tol,
            "tolerances": dict(sorted(self.tolerances.items())),
            "order": self.order,
            "probe": {"trials": self.probe_trials, "points": self.probe_points},
            "compatibility_N": self.N_table,
        }


def resolve_path(path: str | os.PathLike) -> Path:
    """The path itself, or relative to $FINSLERCHECK_CONFIG_DIR when not found."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base:
        alt = Path(base) / p
        if alt.exists():
            return alt
    return p


def load(path: str | os.PathLike) -> RunConfig:
    p = resolve_path(path)
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from exc
    return from_dict(data)


def _both_positive(a, b):
    """min(a, b) = (a + b - sqrt((a - b)^2)) / 2, positive iff both are."""
    diff = dsl.Pow(dsl.BinOp("-", a, b), 2)
    total = dsl.BinOp("-", dsl.BinOp("+", a, b), dsl.Sqrt(diff))
    return dsl.BinOp("/", total, dsl.Num(2.0))


def _lagrangian(section: dict) -> dsl.LagrangianSpec:
    if not isinstance(section, dict):
        raise ConfigError("[lagrangian] section is required")
    label = section.get("label", "")
    if "builtin" in section:
        name = section["builtin"]
        if name not in dsl.BUILTINS:
            raise ConfigError(f"unknown builtin {name!r}; choose from {sorted(dsl.BUILTINS)}")
        params = section.get("params", {})
        try:
            spec = dsl.BUILTINS[name](**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad parameters for builtin {name!r}: {exc}") from exc
        guard = spec.guard
        if "guard" in section:
            try:
                extra = dsl.parse(section["guard"], spec.n)
            except dsl.ParseError as exc:
                raise ConfigError(f"cannot parse guard: {exc}") from exc
            guard = extra if guard is None else _both_positive(guard, extra)
        if label or guard is not spec.guard:
            spec = dsl.LagrangianSpec(spec.n, spec.expr, guard, label or spec.label)
        return spec
    if "expression" not in section or "n" not in section:
        raise ConfigError("[lagrangian] needs either 'builtin' or both 'expression' and 'n'")
    try:
        return dsl.LagrangianSpec.from_text(section["expression"], int(section["n"]),
                                            section.get("guard"), label)
    except dsl.ParseError as exc:
        raise ConfigError(f"cannot parse Lagrangian: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    known = {"lagrangian", "sampling", "run", "tolerances", "custom", "probe", "compatibility"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    try:
        spec = _lagrangian(data.get("lagrangian"))
    except dsl.ParseError as exc:
        raise ConfigError(str(exc)) from exc
    if spec.n < 2:
        raise ConfigError("dimension must be at least 2")
    sampling = data.get("sampling", {})
    run = data.get("run", {})
    cfg = RunConfig(spec=spec, lagrangian=dict(data["lagrangian"]))
    cfg.seed = int(sampling.get("seed", 0))
    cfg.count = int(sampling.get("count", 50))
    if cfg.count < 1:
        raise ConfigError("sampling.count must be at least 1")
    cfg.x_box = sampling.get("x_box", list(X_BOX))
    cfg.y_shell = [float(v) for v in sampling.get("y_shell", list(Y_SHELL))]
    if len(cfg.y_shell) != 2 or not 0 < cfg.y_shell[0] <= cfg.y_shell[1]:
        raise ConfigError("sampling.y_shell must be [r_min, r_max] with 0 < r_min <= r_max")

    suites = run.get("suites", "all")
    cfg.suites = list(SUITE_IDS) if suites == "all" else list(suites)
    bad = [s for s in cfg.suites if s not in SUITE_IDS]
    if bad:
        raise ConfigError(f"unknown suite id(s) {bad}; known: {list(SUITE_IDS)}")

    cfg.custom = {}
    for name, c in data.get("custom", {}).items():
        if name in KINDS:
            raise ConfigError(f"custom connection may not shadow catalogue name {name!r}")
        if "H" not in c or "V" not in c:
            raise ConfigError(f"custom connection {name!r} needs H and V tables")
        if c.get("basis", "bar") not in BASIS_TAGS:
            raise ConfigError(f"custom connection {name!r}: basis must be one of {BASIS_TAGS}")
        try:
            custom(c["H"], c["V"], spec.n, c.get("basis", "bar"), name)
        except (dsl.ParseError, ValueError) as exc:
            raise ConfigError(f"custom connection {name!r}: {exc}") from exc
        cfg.custom[name] = {"H": c["H"], "V": c["V"], "basis": c.get("basis", "bar")}
    cfg.connection_names = list(run.get("connections", list(KINDS) + sorted(cfg.custom)))
    for name in cfg.connection_names:
        if name not in KINDS and name not in cfg.custom:
            raise ConfigError(f"unknown connection {name!r}")

    cfg.tol = float(run.get("tol", DEFAULT_TOL))
    cfg.order = int(run.get("order", PIPELINE_ORDER))
    if cfg.order < 2:
        raise ConfigError("order must be at least 2")
    cfg.output = run.get("output")
    cfg.tolerances = {k: float(v) for k, v in data.get("tolerances", {}).items()}
    bad = [k for k in cfg.tolerances if k not in SUITE_IDS]
    if bad:
        raise ConfigError(f"tolerance override for unknown suite(s) {bad}")
    probe = data.get("probe", {})
    cfg.probe_trials = int(probe.get("trials", 20))
    cfg.probe_points = int(probe.get("points", 5))
    comp = data.get("compatibility", {})
    if "N" in comp:
        try:
            f = ExpressionField.from_table(comp["N"], spec.n)
        except dsl.ParseError as exc:
            raise ConfigError(f"compatibility.N: {exc}") from exc
        if f.shape != (spec.n, spec.n):
            raise ConfigError(f"compatibility.N must be {spec.n} x {spec.n}")
        cfg.N_table = comp["N"]
    return cfg
