"""Run configuration: a flat ``section.key = value`` text format.

Grammar, one statement per line::

    # comment            (also allowed after a value)
    grid.res = 64
    flow.mode = chf
    grid.side = 6.283185307179586
    initial.center = 3.1, 3.1

Keys are the dotted names in :data:`SCHEMA`; unknown or repeated keys are
errors.  Values are parsed by the key's type: ``int``, ``float``, ``str``,
or a comma-separated list of numbers.  ``auto`` selects a derived default
where the schema allows ``None``.  Missing keys take their defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .diagnostics import DEFAULT_THRESHOLD, ProbeSet, format_probes, parse_probes
from .exceptions import ConfigError, NCHFError
from .fixtures import FIXTURES
from .flow import MODES, StepControl
from .grid import GridSpec
from .sphere import FlowConstants, SphereTarget

INT, FLOAT, STR, INTS, FLOATS = "int", "float", "str", "ints", "floats"

# key -> (type, default); default None means "auto"
SCHEMA = {
    "grid.dim": (INT, 2),
    "grid.res": (INT, 32),
    "grid.side": (FLOAT, 2 * math.pi),
    "target.L": (INT, None),
    "target.C_N": (FLOAT, 1.0),
    "target.constraint_tol": (FLOAT, 1e-12),
    "flow.eps": (FLOAT, 0.1),
    "flow.a": (FLOAT, 1.0),
    "flow.b": (FLOAT, 4.0),
    "flow.mode": (STR, "chf"),
    "flow.t_end": (FLOAT, 0.5),
    "control.cfl_safety": (FLOAT, 0.4),
    "control.dt_min": (FLOAT, 1e-9),
    "control.dt_max": (FLOAT, 1e-2),
    "initial.fixture": (STR, "random_bandlimited"),
    "initial.max_freq": (INT, 2),
    "initial.center": (FLOATS, None),
    "initial.radius": (FLOAT, 1.5),
    "initial.amplitude": (FLOAT, 4.0),
    "initial.degree": (INT, 1),
    "probes.spec": (STR, ""),
    "probes.threshold": (FLOAT, DEFAULT_THRESHOLD),
    "outputs.dir": (STR, "out"),
    "outputs.cadence": (INT, 1),
    "outputs.checkpoint_every": (INT, 0),
    "seed": (INT, 0),
    "corpus.samples": (INT, 100),
    "corpus.resolutions": (INTS, [32, 64]),
    "corpus.max_freq": (INT, 1),
    "corpus.beta": (FLOAT, 0.0),
    "corpus.radius": (FLOAT, math.pi / 2),
    "gradcheck.directions": (INT, 20),
    "gradcheck.step": (FLOAT, 1e-5),
}


def _parse_value(key, kind, text):
    text = text.strip()
    if text == "auto" and SCHEMA[key][1] is None:
        return None
    if key == "probes.spec" and text:
        try:
            return format_probes(parse_probes(text))
        except NCHFError as exc:
            raise ConfigError(f"field '{key}': {exc}") from exc
    try:
        if kind == INT:
            return int(text)
        if kind == FLOAT:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == STR:
            return text
        items = [t.strip() for t in text.split(",") if t.strip()]
        return [int(t) if kind == INTS else float(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"field '{key}': cannot parse {text!r} as {kind}") from exc


def _format_value(kind, value):
    if value is None:
        return "auto"
    if kind == FLOAT:
        return repr(float(value))
    if kind in (INTS, FLOATS):
        return ", ".join(repr(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({k: (list(d) if isinstance(d, list) else d) for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **pairs) -> "RunConfig":
        vals = dict(self.values)
        for k, v in pairs.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown key '{k}'")
            vals[k] = v
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    # typed views -----------------------------------------------------
    @property
    def grid(self) -> GridSpec:
        return GridSpec(self["grid.dim"], self["grid.res"], self["grid.side"])

    @property
    def L(self) -> int:
        if self["target.L"] is not None:
            return self["target.L"]
        return self["grid.dim"] + 1 if self["initial.fixture"] == "bump" else 3

    @property
    def target(self) -> SphereTarget:
        return SphereTarget(self.L, self["target.C_N"], self["target.constraint_tol"])

    @property
    def constants(self) -> FlowConstants:
        return FlowConstants(self["grid.dim"], self["flow.a"], self["flow.b"], self["flow.eps"], self["target.C_N"])

    @property
    def control(self) -> StepControl:
        return StepControl(self["control.cfl_safety"], self["control.dt_min"], self["control.dt_max"], self["flow.mode"])

    @property
    def probes(self) -> ProbeSet:
        return ProbeSet(parse_probes(self["probes.spec"]), self["probes.threshold"])

    def fixture_params(self) -> dict:
        name = self["initial.fixture"]
        if name == "bump":
            p = {"radius": self["initial.radius"], "amplitude": self["initial.amplitude"]}
            if self["initial.center"] is not None:
                p["center"] = list(self["initial.center"])
            return p
        if name == "random_bandlimited":
            return {"seed": self["seed"], "max_freq": self["initial.max_freq"]}
        if name == "equator_wrap":
            return {"degree": self["initial.degree"]}
        return {}

    def validate(self):
        """Build every typed view once so errors surface at load time."""
        views = [
            ("grid.res", lambda: self.grid),
            ("target.L", lambda: self.target),
            ("flow.b", lambda: self.constants),
            ("control.cfl_safety", lambda: self.control),
            ("probes.spec", lambda: self.probes.validate(self.grid)),
        ]
        for key, build in views:
            try:
                build()
            except NCHFError as exc:
                msg = str(exc)
                if key == "flow.b" and "eps" in msg:
                    key = "flow.eps"
                raise ConfigError(f"field '{key}': {msg}") from exc
        grid = self.grid
        name = self["initial.fixture"]
        if name not in FIXTURES:
            raise ConfigError(f"field 'initial.fixture': unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
        if name == "bump" and self.L < grid.dim + 1:
            raise ConfigError(f"field 'target.L': bump fixture needs L >= {grid.dim + 1}")
        if self["flow.mode"] not in MODES:
            raise ConfigError(f"field 'flow.mode': must be one of {MODES}")
        if not self["flow.t_end"] > 0:
            raise ConfigError("field 'flow.t_end': must be positive")
        for key in ("outputs.cadence", "corpus.samples", "gradcheck.directions"):
            if self[key] < 1:
                raise ConfigError(f"field '{key}': must be >= 1")
        if self["outputs.checkpoint_every"] < 0:
            raise ConfigError("field 'outputs.checkpoint_every': must be >= 0")
        if self["outputs.checkpoint_every"] % self["outputs.cadence"]:
            raise ConfigError("field 'outputs.checkpoint_every': must be a multiple of outputs.cadence")
        if self["seed"] < 0 or self["seed"] >= 2**64:
            raise ConfigError("field 'seed': must be an unsigned 64-bit integer")
        if not self["corpus.resolutions"]:
            raise ConfigError("field 'corpus.resolutions': needs at least one resolution")
        if self["initial.center"] is not None and len(self["initial.center"]) != grid.dim:
            raise ConfigError("field 'initial.center': needs one coordinate per dimension")
        return self


def loads(text: str) -> RunConfig:
    vals = RunConfig.defaults().values
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown field '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: field '{key}' already set on line {seen[key]}")
        seen[key] = lineno
        try:
            vals[key] = _parse_value(key, SCHEMA[key][0], value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    cfg = RunConfig(vals)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(_locate(str(exc), seen)) from exc
    return cfg


def _locate(message, seen):
    for key, lineno in seen.items():
        if f"'{key}'" in message:
            return f"line {lineno}: {message}"
    return message


def dumps(cfg: RunConfig) -> str:
    lines = []
    section = None
    for key, (kind, _) in SCHEMA.items():
        head = key.split(".", 1)[0] if "." in key else ""
        if head != section and lines:
            lines.append("")
        section = head
        value = cfg.values[key]
        lines.append(f"{key} = {_format_value(kind, value)}")
    return "\n".join(lines) + "\n"


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)
