"""Experiment configuration: YAML with an explicit schema version.

Every key is checked against :data:`DEFAULTS`. Unknown keys, wrong types
and unsupported versions raise :class:`ConfigError`, which carries the
source line taken from the YAML parser marks.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .model import BumpSpec, PotentialSpec, PowerTail

__all__ = [
    "SCHEMA_VERSION",
    "SCENARIOS",
    "DEFAULTS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "default_config_text",
]

SCHEMA_VERSION = 1
SCENARIOS = ("lap", "iterated", "mourre", "classical", "microlocal", "decay", "spectral", "wkb")

# Per-scenario blocks may override ``rmax``/``n``/``domain`` of the grid block.
DEFAULTS: dict = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "potential": {"mu": 1.0, "c1": 1.0, "dim": 3, "ell": 0,
                  "v2": {"kind": "bump", "amplitude": 0.0, "center": 0.0, "radius": 1.0, "power": 2.0}},
    "grid": {"rmax": 4000.0, "n": 4000, "domain": "radial"},
    "sweep": {"theta": math.pi / 2, "emin": 1e-4, "emax": 1.0, "points": 17, "args": 3},
    "scenarios": [],
    "output": {"summary": "summary.json"},
    "lap": {"s": 1.3, "control_s": 0.6, "spread_max": 5.0, "control_growth": 10.0, "tol": 1e-6, "maxiter": 200},
    "iterated": {"ms": [2, 3], "eps": 0.1, "rmax": 20000.0, "n": 20000, "emin": 1e-4, "emax": 1e-1,
                 "points": 10, "stat_max": 5.0, "tol": 1e-6, "maxiter": 200},
    "mourre": {"rmax": 40.0, "n": 300, "domain": "line", "energies": [1e-3, 1e-2, 1e-1, 1.0],
               "epsilons": [1e-3, 1e-2, 1e-1], "ratio_max": 50.0, "identity_max": 1e-12, "C2": 2.0,
               "derivative_eps": 0.1, "order_tol": 0.2},
    "classical": {"count": 20, "T": 1e4, "tol": 1e-10, "mono_tol": 1e-8, "proxy_min": 0.9, "bracket_max": 1e-6},
    "microlocal": {"n": 1024, "dx": 1.0, "emin": 1e-3, "emax": 1.0, "points": 7, "ms": [2, 3],
                   "extent": 20000.0, "stat_max": 10.0, "partition_max": 1e-8, "moyal_max": 1e-10},
    "decay": {"rmax": 3000.0, "n": 3000, "cap": 8.0, "s": 4.0, "eps": 0.5, "eps_prime": 0.0, "points": 25,
              "t_min": 10.0, "slope_low": -2.3, "slope_high": -1.7, "velocity_tolerance": 0.15},
    "spectral": {"rho_min": 5.0, "rho_max": 200.0, "rho_points": 40, "count": 12, "n": 2000,
                 "min_crossings": 5, "F_s": 0.9, "r_max": 2000.0, "r_points": 40001},
    "wkb": {"x_min": 10.0, "x_max": 1e4, "samples": 400, "exponent_tol": 0.05},
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, key: str = "", line: int | None = None, source: str = "<config>"):
        self.key, self.line, self.source = key, line, source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {key + ': ' if key else ''}{message}")


def _node_to_data(node, path, marks, source):
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError("duplicate key", ".".join(path + (key,)), k.start_mark.line + 1, source)
            out[key] = _node_to_data(v, path + (key,), marks, source)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_node_to_data(v, path + (str(i),), marks, source) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _check(data, defaults, path, marks, source):
    out = copy.deepcopy(defaults)
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", ".".join(path), marks.get(path), source)
    for key, val in data.items():
        kp = path + (key,)
        dotted = ".".join(kp)
        if key not in defaults:
            raise ConfigError(f"unknown key (valid: {', '.join(sorted(defaults))})", dotted, marks.get(kp), source)
        ref = defaults[key]
        if isinstance(ref, dict):
            out[key] = _check(val, ref, kp, marks, source)
        elif isinstance(ref, list):
            if not isinstance(val, list):
                raise ConfigError("expected a list", dotted, marks.get(kp), source)
            out[key] = val
        elif isinstance(ref, bool) or isinstance(ref, str):
            if not isinstance(val, type(ref)):
                raise ConfigError(f"expected {type(ref).__name__}", dotted, marks.get(kp), source)
            out[key] = val
        elif isinstance(ref, int):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError("expected an integer", dotted, marks.get(kp), source)
            out[key] = val
        elif isinstance(ref, float):
            if isinstance(val, str):
                # YAML 1.1 reads 1e-4 (no dot) as a string
                try:
                    val = float(val)
                except ValueError:
                    pass
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError("expected a number", dotted, marks.get(kp), source)
            out[key] = float(val)
        else:  # pragma: no cover - DEFAULTS only holds the types above
            out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``data`` has every default filled in."""

    data: dict
    source: str = "<defaults>"

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def scenarios(self) -> list[str]:
        return list(self.data["scenarios"])

    def block(self, name: str) -> dict:
        return self.data[name]

    def potential(self) -> PotentialSpec:
        p = self.data["potential"]
        v2 = p["v2"]
        if v2["kind"] == "bump":
            tail = BumpSpec(v2["amplitude"], v2["center"], v2["radius"])
        else:
            tail = PowerTail(v2["amplitude"], v2["power"])
        return PotentialSpec(p["mu"], p["c1"], tail, p["dim"], p["ell"])

    def grid_params(self, scenario: str | None = None) -> tuple[float, int, str]:
        g = dict(self.data["grid"])
        if scenario is not None:
            blk = self.data[scenario]
            for key in ("rmax", "n", "domain"):
                if key in blk:
                    g[key] = blk[key]
        return float(g["rmax"]), int(g["n"]), str(g["domain"])

    def with_overrides(self, **top) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        data.update(top)
        return ExperimentConfig(data, self.source)


def _validate(data: dict, marks: dict, source: str) -> ExperimentConfig:
    if "schema_version" not in data:
        raise ConfigError("missing schema_version", "schema_version", 1, source)
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported version {data['schema_version']!r} (this build reads {SCHEMA_VERSION})",
                          "schema_version", marks.get(("schema_version",)), source)
    full = _check(data, DEFAULTS, (), marks, source)
    for i, name in enumerate(full["scenarios"]):
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r} (valid: {', '.join(SCENARIOS)})",
                              f"scenarios.{i}", marks.get(("scenarios", str(i))), source)
    if len(set(full["scenarios"])) != len(full["scenarios"]):
        raise ConfigError("scenario listed twice", "scenarios", marks.get(("scenarios",)), source)
    v2kind = full["potential"]["v2"]["kind"]
    if v2kind not in ("bump", "power"):
        raise ConfigError("kind must be 'bump' or 'power'", "potential.v2.kind",
                          marks.get(("potential", "v2", "kind")), source)
    if full["grid"]["domain"] not in ("radial", "line"):
        raise ConfigError("domain must be 'radial' or 'line'", "grid.domain", marks.get(("grid", "domain")), source)
    sw = full["sweep"]
    if not (0 < sw["emin"] < sw["emax"] <= 1):
        raise ConfigError("need 0 < emin < emax <= 1", "sweep", marks.get(("sweep",)), source)
    if sw["points"] < 2 or sw["args"] < 1:
        raise ConfigError("need points >= 2 and args >= 1", "sweep", marks.get(("sweep",)), source)
    cfg = ExperimentConfig(full, source)
    try:
        cfg.potential()
    except ValueError as exc:
        raise ConfigError(str(exc), "potential", marks.get(("potential",)), source) from exc
    return cfg


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate YAML text."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", "",
                          mark.line + 1 if mark else None, source) from exc
    if node is None:
        raise ConfigError("empty configuration", "", 1, source)
    marks: dict = {}
    data = _node_to_data(node, (), marks, source)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", "", 1, source)
    return _validate(data, marks, source)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read ``path``; ``None`` gives the defaults with an empty scenario list."""
    if path is None:
        return ExperimentConfig(copy.deepcopy(DEFAULTS))
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", "", None, str(p)) from exc
    return parse_config(text, str(p))


def default_config_text(scenarios=SCENARIOS) -> str:
    """The defaults as YAML, with the given scenario list."""
    data = copy.deepcopy(DEFAULTS)
    data["scenarios"] = list(scenarios)
    return yaml.safe_dump(data, sort_keys=False)
