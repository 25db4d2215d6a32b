"""Run configuration: YAML text with explicit units.

Frequencies carry a unit suffix (``GHz`` = rad/ns, ``MHz`` = rad/us,
``kHz``) and durations one of ``ns``, ``us``, ``ms``; internally everything
is rad/ns and ns. A config is a mapping of named sections::

    experiment: compare
    scheme: interleaved
    layout: {n_sites: 2, boundary: open, n_max: 2}
    array: {omega_e: 1000000 GHz, omega_ab: 30 GHz, omega_c: 999942 GHz, j_c: 0.2 GHz}
    xy: {delta_a: 30 GHz, delta1: -0.0165 GHz, rabi_a: 2 GHz, ...}

Unknown keys, missing units and invalid values are reported with the line
and column of the offending node.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources

import yaml

from . import elimination as el
from . import models as m
from .experiments import InterleaveSpec, ROUNDING
from .propagation import IntegratorConfig

FREQ_UNITS = {"GHz": 1.0, "MHz": 1e-3, "kHz": 1e-6}
TIME_UNITS = {"ns": 1.0, "us": 1e3, "μs": 1e3, "ms": 1e6}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zμ]+)\s*$")

EXPERIMENTS = ("validate", "params", "evolve", "compare", "cluster", "sweep", "feasibility")
PRESETS = ("fig3a", "fig3b", "cluster2", "pbg-device", "chip-device")


class ConfigError(ValueError):
    """Invalid configuration; ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


# Section records ----------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    n_sites: int = 2
    boundary: str = "open"
    n_max: int = 2


@dataclass(frozen=True)
class Array:
    omega_e: float = 0.0
    omega_ab: float = 0.0
    omega_c: float = 0.0
    j_c: float = 0.0


@dataclass(frozen=True)
class XYSection:
    delta_a: float = 0.0
    delta1: float = 0.0
    rabi_a: float = 0.0
    rabi_b: float = 0.0
    g_a: float = 0.0
    g_b: float = 0.0


@dataclass(frozen=True)
class ZZSection:
    delta_a: float = 0.0
    delta_tilde_a: float = 0.0
    rabi_a: float = 0.0
    rabi_b: float = 0.0
    lam_a: float = 0.0
    lam_b: float = 0.0
    g_a: float = 0.0
    g_b: float = 0.0


@dataclass(frozen=True)
class SpinSection:
    B: float | None = None
    B_tilde: float | None = None
    B_tot: float | None = None
    Jx: float | None = None
    Jy: float | None = None
    Jz: float | None = None


@dataclass(frozen=True)
class InterleaveSection:
    dt1: float = 50.0
    dt2: float = 50.0
    total_time: float = 60_000.0
    mode: str = "interleaved"
    rounding: str = "matched"


@dataclass(frozen=True)
class IntegratorSection:
    method: str = "auto"
    steps_per_fastest_period: int = 320
    sample_interval: float = 10.0
    norm_drift_budget: float = 1e-6
    sample_alignment: str = "period"


@dataclass(frozen=True)
class ClusterSection:
    jz_target: float | None = None
    t_factor: float = 1.3
    use_full_model: bool = True
    invert: bool = False


@dataclass(frozen=True)
class SweepSection:
    key: str = "delta1"
    values: tuple = ()
    outputs: str = "derived-params"


@dataclass(frozen=True)
class DeviceSection:
    name: str = "device"
    g: float = 0.0
    gamma_e: float = 0.0
    gamma_c: float = 0.0
    scheme: str = "xy"


@dataclass(frozen=True)
class OutputSection:
    dir: str = "results"


# key -> (kind, extra); kinds: freq, time, int, float, bool, str, freq_list
_F = ("freq", None)
_T = ("time", None)
SCHEMA = {
    "layout": (Layout, {"n_sites": ("int", None), "boundary": ("str", ("open", "periodic")),
                        "n_max": ("int", None)}),
    "array": (Array, {k: _F for k in ("omega_e", "omega_ab", "omega_c", "j_c")}),
    "xy": (XYSection, {f.name: _F for f in fields(XYSection)}),
    "zz": (ZZSection, {f.name: _F for f in fields(ZZSection)}),
    "spin": (SpinSection, {f.name: _F for f in fields(SpinSection)}),
    "interleave": (InterleaveSection, {"dt1": _T, "dt2": _T, "total_time": _T,
                                       "mode": ("str", ("interleaved", "simultaneous")),
                                       "rounding": ("str", ROUNDING)}),
    "integrator": (IntegratorSection, {"method": ("str", ("auto", "rk4", "exact")),
                                       "steps_per_fastest_period": ("int", None),
                                       "sample_interval": _T,
                                       "norm_drift_budget": ("float", None),
                                       "sample_alignment": ("str", ("exact", "period"))}),
    "cluster": (ClusterSection, {"jz_target": _F, "t_factor": ("float", None),
                                 "use_full_model": ("bool", None), "invert": ("bool", None)}),
    "sweep": (SweepSection, {"key": ("str", None), "values": ("freq_list", None),
                             "outputs": ("str", ("derived-params", "dynamics-summary"))}),
    "device": (DeviceSection, {"name": ("str", None), "g": _F, "gamma_e": _F, "gamma_c": _F,
                               "scheme": ("str", ("xy", "zz"))}),
    "output": (OutputSection, {"dir": ("str", None)}),
}
TOP = {"experiment": ("str", EXPERIMENTS), "scheme": ("str", ("xy", "zz", "interleaved")),
       "model": ("str", ("full", "effective", "both")), "seed": ("int", None),
       "fit": ("bool", None)}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; sections absent from the text are ``None``."""

    experiment: str = "compare"
    scheme: str = "interleaved"
    model: str = "both"
    seed: int = 0
    fit: bool = False
    layout: Layout = field(default_factory=Layout)
    array: Array | None = None
    xy: XYSection | None = None
    zz: ZZSection | None = None
    spin: SpinSection | None = None
    interleave: InterleaveSection = field(default_factory=InterleaveSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    cluster: ClusterSection | None = None
    sweep: SweepSection | None = None
    device: DeviceSection | None = None
    output: OutputSection = field(default_factory=OutputSection)

    # builders -------------------------------------------------------------

    def _common(self, sec) -> dict:
        if self.array is None:
            raise ConfigError("section 'array' is required for drive parameters")
        kw = {f.name: getattr(self.array, f.name) for f in fields(Array)}
        kw.update(n_sites=self.layout.n_sites, boundary=self.layout.boundary)
        kw.update({k: getattr(sec, k) for k in ("rabi_a", "rabi_b", "g_a", "g_b")})
        return kw

    def xy_params(self) -> m.XYDriveParams | None:
        if self.xy is None or self.scheme == "zz":
            return None
        return m.XYDriveParams.from_detunings(delta_a=self.xy.delta_a, delta1=self.xy.delta1,
                                              **self._common(self.xy))

    def zz_params(self) -> m.ZZDriveParams | None:
        if self.zz is None or self.scheme == "xy":
            return None
        return m.ZZDriveParams.from_detunings(delta_a=self.zz.delta_a,
                                              delta_tilde_a=self.zz.delta_tilde_a,
                                              lam_a=self.zz.lam_a, lam_b=self.zz.lam_b,
                                              **self._common(self.zz))

    def spin_params(self) -> m.SpinParams | None:
        if self.spin is None:
            return None
        return m.SpinParams(**{f.name: getattr(self.spin, f.name) for f in fields(SpinSection)})

    def interleave_spec(self) -> InterleaveSpec:
        s = self.interleave
        return InterleaveSpec(s.dt1, s.dt2, s.total_time, s.mode, s.rounding)

    def integrator_config(self) -> IntegratorConfig:
        s = self.integrator
        return IntegratorConfig(s.method, s.steps_per_fastest_period, s.sample_interval,
                                s.norm_drift_budget, s.sample_alignment)

    def device_preset(self) -> el.DevicePreset | None:
        if self.device is None:
            return None
        d = self.device
        return el.DevicePreset(d.name, d.g, d.gamma_e, d.gamma_c)

    def with_nmax(self, n_max: int) -> "RunConfig":
        return replace(self, layout=replace(self.layout, n_max=n_max))


# Parsing ------------------------------------------------------------------

def _err(msg: str, node) -> ConfigError:
    mk = node.start_mark
    return ConfigError(msg, mk.line + 1, mk.column + 1)


def _scalar(node, path: str):
    if not isinstance(node, yaml.ScalarNode):
        raise _err(f"{path}: expected a scalar", node)
    return node.value


def _quantity(node, path: str, units: dict, what: str) -> float | None:
    text = _scalar(node, path)
    if node.tag == "tag:yaml.org,2002:null":
        return None
    mt = _QUANTITY.match(text)
    if mt is None:
        try:
            float(text)
        except ValueError:
            raise _err(f"{path}: cannot read {text!r} as a {what}", node) from None
        raise _err(f"{path}: missing unit on {what} {text!r} (use one of {', '.join(units)})",
                   node)
    num, unit = mt.groups()
    if unit not in units:
        raise _err(f"{path}: unit {unit!r} is not a {what} unit ({', '.join(units)})", node)
    v = float(num) * units[unit]
    if not math.isfinite(v):
        raise _err(f"{path}: value must be finite", node)
    return v


def _value(node, path: str, kind: str, extra):
    if kind == "freq":
        return _quantity(node, path, FREQ_UNITS, "frequency")
    if kind == "time":
        v = _quantity(node, path, TIME_UNITS, "duration")
        if v is None:
            raise _err(f"{path}: duration required", node)
        return v
    if kind == "freq_list":
        if not isinstance(node, yaml.SequenceNode):
            raise _err(f"{path}: expected a list of frequencies", node)
        out = []
        for i, item in enumerate(node.value):
            v = _quantity(item, f"{path}[{i}]", FREQ_UNITS, "frequency")
            if v is None:
                raise _err(f"{path}[{i}]: frequency required", item)
            out.append(v)
        return tuple(out)
    text = _scalar(node, path)
    if kind == "str":
        if extra is not None and text not in extra:
            raise _err(f"{path}: {text!r} is not one of {', '.join(extra)}", node)
        return text
    if kind == "bool":
        if node.tag != "tag:yaml.org,2002:bool":
            raise _err(f"{path}: expected true or false", node)
        return text.lower() in ("true", "yes", "on")
    try:
        if kind == "int":
            if node.tag != "tag:yaml.org,2002:int":
                raise ValueError
            return int(text)
        return float(text)
    except ValueError:
        raise _err(f"{path}: expected a{'n integer' if kind == 'int' else ' number'}, "
                   f"got {text!r}", node) from None


def _mapping(node, path: str) -> list:
    if not isinstance(node, yaml.MappingNode):
        raise _err(f"{path or 'config'}: expected a mapping", node)
    seen = set()
    for k, _ in node.value:
        key = _scalar(k, path)
        if key in seen:
            raise _err(f"{path + '.' if path else ''}{key}: duplicate key", k)
        seen.add(key)
    return [(k.value, k, v) for k, v in node.value]


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML config text.

    Raises
    ------
    ConfigError
        With line and column for syntax errors, unknown keys, missing units
        and values that violate an invariant of the referenced type.
    """
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mk = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax: {getattr(exc, 'problem', exc)}",
                          mk.line + 1 if mk else None, mk.column + 1 if mk else None) from None
    if root is None:
        raise ConfigError("empty configuration")
    kw = {}
    for key, knode, vnode in _mapping(root, ""):
        if key in TOP:
            kw[key] = _value(vnode, key, *TOP[key])
        elif key in SCHEMA:
            cls, keys = SCHEMA[key]
            sec = {}
            for sk, sknode, svnode in _mapping(vnode, key):
                if sk not in keys:
                    raise _err(f"{key}.{sk}: unknown key (allowed: {', '.join(keys)})", sknode)
                sec[sk] = _value(svnode, f"{key}.{sk}", *keys[sk])
            try:
                kw[key] = cls(**sec)
            except (TypeError, ValueError) as exc:
                raise _err(f"{key}: {exc}", vnode) from None
        else:
            raise _err(f"{key}: unknown key", knode)
    cfg = RunConfig(**kw)
    _validate(cfg, root)
    return cfg


def _node_of(root, key):
    for k, v in root.value:
        if k.value == key:
            return v
    return root


def _validate(cfg: RunConfig, root) -> None:
    """Build every referenced domain object so that its invariants are enforced here."""
    def layout():
        if cfg.layout.n_sites < 1 or cfg.layout.n_max < 1:
            raise ValueError("n_sites and n_max must be at least 1")

    checks = [
        ("layout", layout),
        ("xy", cfg.xy_params), ("zz", cfg.zz_params), ("spin", cfg.spin_params),
        ("interleave", cfg.interleave_spec), ("integrator", cfg.integrator_config),
        ("device", cfg.device_preset),
    ]
    for name, fn in checks:
        try:
            fn()
        except ConfigError as exc:
            raise _err(str(exc), _node_of(root, name)) from None
        except (TypeError, ValueError) as exc:
            raise _err(f"{name}: {exc}", _node_of(root, name)) from None
    if cfg.scheme in ("xy", "interleaved") and cfg.xy is None and cfg.spin is None \
            and cfg.experiment not in ("feasibility",) and cfg.device is None:
        raise _err(f"scheme {cfg.scheme!r} needs an 'xy' section", root)
    if cfg.scheme in ("zz", "interleaved") and cfg.zz is None and cfg.spin is None \
            and cfg.experiment not in ("feasibility",) and cfg.device is None:
        raise _err(f"scheme {cfg.scheme!r} needs a 'zz' section", root)


# Serialization ------------------------------------------------------------

def _fmt(kind: str, v) -> object:
    if v is None:
        return None
    if kind == "freq":
        return f"{float(v)!r} GHz"
    if kind == "time":
        return f"{float(v)!r} ns"
    if kind == "freq_list":
        return [f"{float(x)!r} GHz" for x in v]
    if kind == "float":
        return float(v)
    return v


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain mapping in canonical units (GHz, ns); the inverse of :func:`parse_config`."""
    out = {k: getattr(cfg, k) for k in TOP}
    for name, (_, keys) in SCHEMA.items():
        sec = getattr(cfg, name)
        if sec is not None:
            out[name] = {k: _fmt(kind, getattr(sec, k)) for k, (kind, _) in keys.items()}
    return out


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, allow_unicode=True)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_text(name: str) -> str:
    if name not in available_presets():
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(available_presets())})")
    return resources.files("cavityspin").joinpath("presets", f"{name}.yaml").read_text("utf-8")


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_text(name))


def available_presets() -> list:
    d = resources.files("cavityspin").joinpath("presets")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".yaml"))
