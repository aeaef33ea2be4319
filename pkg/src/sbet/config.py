"""Run configuration: YAML schema, validation with source locations, fixtures.

A config file is a YAML mapping. Every section maps onto a frozen dataclass
below; unknown keys are rejected with ``file:line:column`` so typos never
silently fall back to defaults. ``fixture: NAME`` pulls in one of the
shipped fixture definitions, and any other key in the file overrides it.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal

import yaml

from .errors import ValidationError

__all__ = [
    "TASKS",
    "ConfigError",
    "SpectralConfig",
    "DiscretizeConfig",
    "BathConfig",
    "LeadConfig",
    "InitialConfig",
    "ModelConfig",
    "WindowConfig",
    "GridConfig",
    "TailConfig",
    "PulseConfig",
    "DriveConfig",
    "ClassicalConfig",
    "VerifyConfig",
    "InputsConfig",
    "RunConfig",
    "parse_config",
    "load_config_text",
    "fixture_names",
    "fixture_text",
    "config_hash",
    "config_to_dict",
    "dump_config",
    "with_overrides",
]

TASKS = ("bath-corr", "sbet-boson", "sbet-fermion", "classical", "oracle", "verify")


class ConfigError(ValidationError):
    """Schema violation. ``location`` is ``(source, line, column)``, 1-based."""

    def __init__(self, message: str, location: tuple | None = None):
        self.message = message
        self.location = location
        if location is not None:
            src, line, col = location
            message = f"{src}:{line}:{col}: {message}"
        super().__init__(message)


class _FieldError(ValidationError):
    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(message)


def _positive(obj, *names):
    for n in names:
        val = getattr(obj, n)
        if val is not None and not val > 0:
            raise _FieldError(n, f"must be positive, got {val}")


# ----------------------------------------------------------------- schema


@dataclass(frozen=True)
class SpectralConfig:
    """``drude``: ``reorganization``/``cutoff``. ``modes``: explicit
    ``frequencies`` with one coupling row per system mode. A continuous
    Drude density needs ``frequency_cutoff`` for kernels at ``t = 0``."""

    type: Literal["drude", "modes"] = "drude"
    reorganization: float | None = None
    cutoff: float | None = None
    frequency_cutoff: float | None = None
    frequencies: tuple[float, ...] = ()
    couplings: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.type == "drude":
            for n in ("reorganization", "cutoff"):
                if getattr(self, n) is None:
                    raise _FieldError(n, "is required for a Drude spectral density")
            _positive(self, "reorganization", "cutoff", "frequency_cutoff")
        else:
            if not self.frequencies:
                raise _FieldError("frequencies", "explicit modes need at least one frequency")
            if any(w <= 0 for w in self.frequencies):
                raise _FieldError("frequencies", "must all be positive")
            if not self.couplings or any(len(r) != len(self.frequencies) for r in self.couplings):
                raise _FieldError("couplings", "need one row per system mode with one entry per frequency")


@dataclass(frozen=True)
class DiscretizeConfig:
    n: int = 400
    max_frequency: float = 10.0
    taper: float | None = None
    scheme: Literal["uniform", "gauss-legendre"] = "uniform"

    def __post_init__(self):
        _positive(self, "n", "max_frequency", "taper")


@dataclass(frozen=True)
class BathConfig:
    """One bosonic reservoir. ``dipole`` holds ``mu_{alpha v}`` (only used
    by bath-targeted pulses)."""

    name: str = "bath"
    beta: float = 1.0
    eta: tuple[float, ...] = (1.0,)
    dipole: tuple[float, ...] | None = None
    spectral: SpectralConfig = SpectralConfig(reorganization=0.3, cutoff=1.0)
    discretize: DiscretizeConfig | None = None

    def __post_init__(self):
        _positive(self, "beta")
        if self.dipole is not None and len(self.dipole) != len(self.eta):
            raise _FieldError("dipole", "needs one entry per system mode, like eta")


@dataclass(frozen=True)
class LeadConfig:
    """Flat (optionally tapered) wide band discretized into ``n`` levels.
    ``couples_to[u]`` scales the tunnelling into impurity orbital ``u``."""

    name: str = "lead"
    beta: float = 1.0
    chemical_potential: float = 0.0
    gamma: float = 0.5
    half_width: float = 5.0
    n: int = 400
    taper: float | None = None
    center: float = 0.0
    couples_to: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        _positive(self, "beta", "half_width", "n", "taper")
        if self.gamma < 0:
            raise _FieldError("gamma", f"must be non-negative, got {self.gamma}")


@dataclass(frozen=True)
class InitialConfig:
    kind: Literal["thermal", "factorized"] = "thermal"
    t_relax: float = 0.0
    beta_system: float | None = None

    def __post_init__(self):
        if self.t_relax < 0:
            raise _FieldError("t_relax", f"must be non-negative, got {self.t_relax}")
        _positive(self, "beta_system")


@dataclass(frozen=True)
class ModelConfig:
    kind: Literal["boson", "fermion", "classical"] = "boson"
    system_frequencies: tuple[float, ...] = (1.0,)
    impurity: tuple[tuple[float, ...], ...] = ((0.0,),)
    impurity_occupation: tuple[float, ...] | None = None
    baths: tuple[BathConfig, ...] = ()
    leads: tuple[LeadConfig, ...] = ()
    initial: InitialConfig = InitialConfig()
    hbar: float = 1.0

    def __post_init__(self):
        if any(w <= 0 for w in self.system_frequencies):
            raise _FieldError("system_frequencies", "must all be positive")
        _positive(self, "hbar")
        nu = len(self.impurity)
        if any(len(r) != nu for r in self.impurity):
            raise _FieldError("impurity", "must be a square matrix")
        if self.impurity_occupation is not None and len(self.impurity_occupation) != nu:
            raise _FieldError("impurity_occupation", "needs one entry per impurity orbital")
        nv = len(self.system_frequencies)
        for b in self.baths:
            if len(b.eta) != nv:
                raise _FieldError("baths", f"bath {b.name!r} needs {nv} eta entries")
        for L in self.leads:
            if len(L.couples_to) != nu:
                raise _FieldError("leads", f"lead {L.name!r} needs {nu} couples_to entries")


@dataclass(frozen=True)
class WindowConfig:
    """Driven two-time window ``[t_start, t_stop]`` on the quadrature step;
    output rows/columns every ``output_step`` starting at the drive onset."""

    t_start: float = 0.0
    t_stop: float = 9.8
    output_step: float = 0.2

    def __post_init__(self):
        _positive(self, "output_step")
        if not self.t_stop > self.t_start:
            raise _FieldError("t_stop", "must exceed t_start")


@dataclass(frozen=True)
class GridConfig:
    """``span`` is the lag range of the stationary inputs (default: just
    under half the oracle recurrence time)."""

    dt: float = 0.02
    t_max: float = 10.0
    span: float | None = None
    window: WindowConfig | None = None

    def __post_init__(self):
        _positive(self, "dt", "t_max", "span")


@dataclass(frozen=True)
class TailConfig:
    t_tail: float | None = None
    eps: float = 1e-6
    probe: float = 0.1
    margin: float = 1.25

    def __post_init__(self):
        _positive(self, "t_tail", "eps", "probe", "margin")


@dataclass(frozen=True)
class PulseConfig:
    target: Literal["system", "bath"] = "system"
    mode: int = 0
    bath: int = 0
    dipole: float = 1.0
    shape: Literal["gaussian", "cosine-burst"] = "gaussian"
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    carrier: float = 0.0
    phase: float = 0.0
    start: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        _positive(self, "width", "duration")
        if self.mode < 0 or self.bath < 0:
            raise _FieldError("mode", "indices must be non-negative")


@dataclass(frozen=True)
class DriveConfig:
    t_on: float = 0.0
    pulses: tuple[PulseConfig, ...] = ()


@dataclass(frozen=True)
class ClassicalConfig:
    """Langevin ensemble controls; ``ensemble: false`` skips the sampling."""

    ensemble: bool = True
    n_traj: int = 10_000
    h: float = 0.01
    sample_every: int = 2
    burn_in: float = 0.0
    z_max: float = 3.0

    def __post_init__(self):
        _positive(self, "n_traj", "h", "sample_every", "z_max")
        if self.burn_in < 0:
            raise _FieldError("burn_in", "must be non-negative")


@dataclass(frozen=True)
class VerifyConfig:
    """``corrupt_kernel`` scales the bath couplings seen by the SBET side
    only; anything but 1 is a deliberate fault for testing the verdict."""

    tolerance: float = 0.02
    equal_time_tolerance: float = 0.02
    mirror_tolerance: float = 1e-6
    corrupt_kernel: float = 1.0

    def __post_init__(self):
        _positive(self, "tolerance", "equal_time_tolerance", "mirror_tolerance")


@dataclass(frozen=True)
class InputsConfig:
    """CSV files (each with a JSON sidecar) holding reduced-system inputs."""

    files: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    task: Literal["bath-corr", "sbet-boson", "sbet-fermion", "classical", "oracle", "verify"]
    fixture: str | None = None
    seed: int = 0
    out: str = "runs"
    model: ModelConfig = ModelConfig()
    grid: GridConfig = GridConfig()
    tail: TailConfig = TailConfig()
    drive: DriveConfig = DriveConfig()
    classical: ClassicalConfig = ClassicalConfig()
    verify: VerifyConfig = VerifyConfig()
    inputs: InputsConfig = InputsConfig()

    def __post_init__(self):
        m = self.model
        if self.task in ("sbet-fermion",) and m.kind != "fermion":
            raise _FieldError("model", "sbet-fermion needs model.kind: fermion")
        if self.task == "sbet-boson" and m.kind != "boson":
            raise _FieldError("model", "sbet-boson needs model.kind: boson")
        if self.task == "classical" and m.kind != "classical":
            raise _FieldError("model", "classical needs model.kind: classical")
        if m.kind == "fermion":
            if not m.leads:
                raise _FieldError("model", "a fermionic model needs at least one lead")
            if m.initial.kind != "factorized":
                raise _FieldError("model", "fermionic oracles start factorized; set model.initial.kind: factorized")
        elif not m.baths:
            raise _FieldError("model", "a bosonic model needs at least one bath")
        if m.kind == "classical":
            b = m.baths[0]
            if len(m.baths) != 1 or len(m.system_frequencies) != 1 or b.spectral.type != "drude" or b.discretize is None:
                raise _FieldError("model", "the classical task supports one discretized Drude bath on one system mode")
        if self.drive.pulses:
            if m.kind != "boson":
                raise _FieldError("drive", "drives are supported for bosonic models only")
            if self.grid.window is None:
                raise _FieldError("grid", "a driven run needs grid.window")
            if self.drive.t_on < self.grid.window.t_start:
                raise _FieldError("drive", "t_on must lie inside the driven window")
            seen = set()
            for p in self.drive.pulses:
                key = (p.target, p.mode, p.bath if p.target == "bath" else None)
                if key in seen:
                    raise _FieldError("drive", f"two pulses address the same target {key}")
                seen.add(key)
                if p.mode >= len(m.system_frequencies) or (p.target == "bath" and p.bath >= len(m.baths)):
                    raise _FieldError("drive", f"pulse target {key} does not exist")
                if p.target == "bath" and m.baths[p.bath].dipole is None:
                    raise _FieldError("drive", f"bath {p.bath} is driven but has no dipole")


# ----------------------------------------------------------------- loading


class _Source:
    """Parsed YAML plus the ``Mark`` of every key and value, by path."""

    def __init__(self):
        self.value_marks: dict = {}
        self.key_marks: dict = {}

    def at(self, path, key=False):
        marks = self.key_marks if key else self.value_marks
        while path:
            if path in marks:
                m = marks[path]
                return (m.name, m.line + 1, m.column + 1)
            path = path[:-1]
        m = self.value_marks.get(())
        return (m.name, m.line + 1, m.column + 1) if m else None


def _load(text: str, name: str, src: _Source, prefix=()):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = (name, mark.line + 1, mark.column + 1) if mark else (name, 1, 1)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", loc) from None
    if node is None:
        raise ConfigError("empty configuration", (name, 1, 1))
    for n in _iter_nodes(node):
        n.start_mark.name = name
    loader = yaml.SafeLoader("")

    def walk(n, path):
        src.value_marks[prefix + path] = n.start_mark
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                if not isinstance(k, yaml.ScalarNode):
                    raise ConfigError("keys must be plain strings", (name, k.start_mark.line + 1, k.start_mark.column + 1))
                key = k.value
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", (name, k.start_mark.line + 1, k.start_mark.column + 1))
                src.key_marks[prefix + path + (key,)] = k.start_mark
                out[key] = walk(v, path + (key,))
            return out
        if isinstance(n, yaml.SequenceNode):
            return [walk(v, path + (i,)) for i, v in enumerate(n.value)]
        return loader.construct_object(n, deep=True)

    return walk(node, ())


def _iter_nodes(node):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                stack.extend((k, v))
        elif isinstance(n, yaml.SequenceNode):
            stack.extend(n.value)


def _dotted(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _convert(tp, value, path, src: _Source):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    where = _dotted(path)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path, src)
    if origin is Literal:
        if value not in args:
            raise ConfigError(f"{where} must be one of {', '.join(map(str, args))}; got {value!r}", src.at(path))
        return value
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list", src.at(path))
        item = args[0]
        return tuple(_convert(item, v, path + (i,), src) for i, v in enumerate(value))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path, src)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", src.at(path))
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer; got {value!r}", src.at(path))
        return value
    if tp is float:
        if isinstance(value, str):
            # YAML 1.1 reads 1e-6 (no dot) as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number; got {value!r}", src.at(path))
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string", src.at(path))
        return value
    raise TypeError(f"unsupported schema type {tp!r}")


def _build(cls, data, path, src: _Source):
    if not isinstance(data, dict):
        raise ConfigError(f"{_dotted(path)} must be a mapping", src.at(path))
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for k in data:
        if k not in names:
            raise ConfigError(
                f"unknown key {k!r} in {_dotted(path)} (allowed: {', '.join(names)})",
                src.at(path + (k,), key=True),
            )
    kwargs = {n: _convert(hints[n], data[n], path + (n,), src) for n in names if n in data}
    try:
        return cls(**kwargs)
    except _FieldError as exc:
        p = path + (exc.name,)
        raise ConfigError(f"{_dotted(p)} {exc}", src.at(p)) from None
    except TypeError as exc:
        raise ConfigError(f"{_dotted(path)}: {exc}", src.at(path)) from None


# ----------------------------------------------------------------- fixtures


def fixture_names() -> list[str]:
    root = resources.files("sbet") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def fixture_text(name: str) -> str:
    path = resources.files("sbet") / "fixtures" / f"{name}.yaml"
    if not path.is_file():
        raise ValidationError(f"unknown fixture {name!r}; shipped fixtures: {', '.join(fixture_names())}")
    return path.read_text()


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config_text(text: str, name: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    src = _Source()
    data = _load(text, name, src)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", src.at(()))
    fx = data.get("fixture")
    if fx is not None:
        if not isinstance(fx, str):
            raise ConfigError("fixture must be a name", src.at(("fixture",)))
        try:
            ftext = fixture_text(fx)
        except ValidationError as exc:
            raise ConfigError(str(exc), src.at(("fixture",))) from None
        fsrc = _Source()
        fdata = _load(ftext, f"fixture:{fx}", fsrc)
        if "task" in fdata or "fixture" in fdata:
            raise ConfigError("fixture files may not set task or fixture", fsrc.at(()))
        # user marks win where both define a path
        merged = _merge(fdata, data)
        for attr in ("value_marks", "key_marks"):
            marks = dict(getattr(fsrc, attr))
            marks.update(getattr(src, attr))
            setattr(src, attr, marks)
        data = merged
    if "task" not in data:
        raise ConfigError("missing required key 'task'", src.at(()))
    cfg = _build(RunConfig, data, (), src)
    if cfg.inputs.files:
        base = base_dir or Path.cwd()
        resolved = []
        for i, f in enumerate(cfg.inputs.files):
            p = (base / f).resolve()
            if not p.is_file():
                raise ConfigError(f"inputs.files[{i}]: file {f!r} does not exist", src.at(("inputs", "files", i)))
            resolved.append(str(p))
        cfg = dataclasses.replace(cfg, inputs=InputsConfig(tuple(resolved)))
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", (str(path), 1, 1)) from None
    return load_config_text(text, str(path), path.parent)


# ----------------------------------------------------------------- output


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain nested dict/list form (tuples become lists)."""
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 over the canonical JSON of every setting except ``out``."""
    d = config_to_dict(cfg)
    d.pop("out", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def with_overrides(cfg: RunConfig, *, task: str | None = None, seed: int | None = None, dt: float | None = None, t_max: float | None = None, out: str | None = None) -> RunConfig:
    """Command-line overrides, validated like file settings."""
    try:
        grid = cfg.grid
        if dt is not None:
            grid = dataclasses.replace(grid, dt=float(dt))
        if t_max is not None:
            grid = dataclasses.replace(grid, t_max=float(t_max))
        changes = {"grid": grid}
        if task is not None:
            if task not in TASKS:
                raise _FieldError("task", f"must be one of {', '.join(TASKS)}")
            changes["task"] = task
        if seed is not None:
            changes["seed"] = int(seed)
        if out is not None:
            changes["out"] = str(out)
        return dataclasses.replace(cfg, **changes)
    except _FieldError as exc:
        where = "grid." + exc.name if exc.name in ("dt", "t_max") else exc.name
        raise ConfigError(f"{where} {exc}") from None
