"""Experiment configuration files.

An INI-style file of ``key = value`` lines grouped under ``[instance]``,
``[streams]``, ``[walk]``, ``[harness]`` and an optional ``[sweep]``.  Lines
starting with ``#`` or ``;`` are comments.  The README lists every key.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from ..hierarchy import NodeAddress, PlacementMode, StreamFamily
from ..streams import Family
from ..walk import WalkConfig, WalkMode

INSTANCE_KINDS = ("synthetic", "file", "group-testing", "adaptive-sampling", "hhh")


class ConfigError(ValueError):
    def __init__(self, message: str, section: Optional[str] = None, key: Optional[str] = None,
                 line: Optional[int] = None, path: Optional[str] = None):
        self.section, self.key, self.line, self.path = section, key, line, path
        where = ".".join(p for p in (section, key) if p)
        loc = ":".join(str(p) for p in (path, line) if p is not None)
        prefix = " ".join(p for p in (loc, where) if p)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class InstanceSpec:
    kind: str = "synthetic"
    depth: int = 6
    thresholds: Tuple[float, ...] = (0.0,)
    targets: Tuple[NodeAddress, ...] = ()
    random_targets: int = 0
    delta: float = 1.0
    placement: PlacementMode = PlacementMode.LEAF_ONLY
    path: Optional[str] = None
    # group testing
    population: int = 64
    defects: Tuple[int, ...] = ()
    random_defects: int = 0
    q_fa: float = 0.2
    q_d: float = 0.8
    # adaptive sampling
    z_star: Optional[float] = 0.37
    noise: str = "flip"
    noise_level: float = 0.2
    # heavy hitters
    width: int = 32
    hierarchical: bool = False


@dataclass(frozen=True)
class ExperimentSpec:
    instance: InstanceSpec = field(default_factory=InstanceSpec)
    streams: StreamFamily = field(default_factory=lambda: StreamFamily(Family.GAUSSIAN, variance=1.0))
    walk: WalkConfig = field(default_factory=WalkConfig)
    s_max: Optional[int] = None
    trials: int = 100
    seed: int = 0
    workers: int = 1
    wall_clock: bool = True
    out: Optional[str] = None
    sweep_param: Optional[str] = None
    sweep_values: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1", "harness", "trials")
        if self.s_max is not None and self.s_max < 1:
            raise ConfigError("s_max must be >= 1", "walk", "s_max")

    def with_param(self, name: str, value: str) -> "ExperimentSpec":
        """Copy with one ``section.key`` replaced, re-validated through the parser."""
        section, _, key = name.partition(".")
        if not key:
            raise ConfigError(f"sweep parameter must be section.key, got {name!r}", "sweep", "param")
        raw = to_raw(self)
        raw.setdefault(section, {})[key] = value
        return from_raw(raw)


_NODE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")


def _parse_nodes(text: str) -> Tuple[NodeAddress, ...]:
    found = _NODE.findall(text)
    rest = _NODE.sub("", text).replace(",", " ").strip()
    if rest:
        raise ValueError(f"cannot parse node list {text!r}; use (k,l) pairs")
    return tuple(NodeAddress(int(k), int(l)) for k, l in found)


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none") else int(float(text))


_KNOWN = {
    "instance": {"kind", "depth", "thresholds", "targets", "delta", "placement", "path", "population",
                 "defects", "q_fa", "q_d", "z_star", "noise", "width", "hierarchical"},
    "streams": {"family", "variance", "xi", "b", "u", "tail_index", "scale"},
    "walk": {"p0", "epsilon", "mode", "budget", "step_cap", "sample_cap", "s_max"},
    "harness": {"trials", "seed", "workers", "wall_clock", "out"},
    "sweep": {"param", "values"},
}


def _line_of(text: Optional[str], section: str, key: str) -> Optional[int]:
    if text is None:
        return None
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]", line)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return i
    return None


def from_raw(raw, text: Optional[str] = None, path: Optional[str] = None,
             base_dir: Optional[Path] = None) -> ExperimentSpec:
    """Build an ExperimentSpec from a nested {section: {key: str}} mapping."""
    for section, keys in raw.items():
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]", section, path=path)
        for key in keys:
            if key not in _KNOWN[section]:
                raise ConfigError("unknown key", section, key, _line_of(text, section, key), path)

    def get(section, key, conv, default):
        value = raw.get(section, {}).get(key)
        if value is None:
            return default
        try:
            return conv(value)
        except (ValueError, TypeError) as err:
            raise ConfigError(str(err), section, key, _line_of(text, section, key), path) from None

    def build(section, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (ValueError, TypeError) as err:
            raise ConfigError(str(err), section, path=path) from None

    inst = raw.get("instance", {})
    kind = get("instance", "kind", str.strip, "synthetic")
    if kind not in INSTANCE_KINDS:
        raise ConfigError(f"kind must be one of {', '.join(INSTANCE_KINDS)}", "instance", "kind",
                          _line_of(text, "instance", "kind"), path)

    targets, random_targets = (), 0
    spec_targets = inst.get("targets", "").strip()
    if spec_targets.startswith("random"):
        random_targets = get("instance", "targets", lambda s: int(s.split(":", 1)[1]) if ":" in s else 1, 1)
    elif spec_targets:
        targets = get("instance", "targets", _parse_nodes, ())

    defects, random_defects = (), 0
    spec_defects = inst.get("defects", "").strip()
    if spec_defects.startswith("random"):
        random_defects = get("instance", "defects", lambda s: int(s.split(":", 1)[1]) if ":" in s else 1, 1)
    elif spec_defects:
        defects = get("instance", "defects", lambda s: tuple(int(float(t)) for t in s.replace(",", " ").split()), ())

    noise, noise_level = "flip", 0.2
    if "noise" in inst:
        def conv_noise(s):
            name, _, level = s.partition(":")
            name = name.strip()
            if name not in ("flip", "additive", "none"):
                raise ValueError("noise must be flip:P, additive:VARIANCE or none")
            return name, float(level) if level else (0.0 if name == "none" else 0.2)
        noise, noise_level = get("instance", "noise", conv_noise, (noise, noise_level))

    path_value = inst.get("path")
    if path_value and base_dir is not None and not Path(path_value).is_absolute():
        path_value = str(base_dir / path_value)

    def z_conv(s):
        return None if s.strip() == "random" else float(s)

    instance = build("instance", lambda: InstanceSpec(
        kind=kind,
        depth=get("instance", "depth", int, 6),
        thresholds=get("instance", "thresholds", _floats, (0.0,)),
        targets=targets, random_targets=random_targets,
        delta=get("instance", "delta", float, 1.0),
        placement=get("instance", "placement", PlacementMode, PlacementMode.LEAF_ONLY),
        path=path_value,
        population=get("instance", "population", int, 64),
        defects=defects, random_defects=random_defects,
        q_fa=get("instance", "q_fa", float, 0.2), q_d=get("instance", "q_d", float, 0.8),
        z_star=get("instance", "z_star", z_conv, 0.37),
        noise=noise, noise_level=noise_level,
        width=get("instance", "width", int, 32),
        hierarchical=get("instance", "hierarchical", _bool, False),
    ))
    if instance.kind in ("file", "hhh") and not instance.path:
        raise ConfigError(f"kind={instance.kind} needs a path", "instance", "path", path=path)
    if instance.kind == "synthetic" and len(instance.thresholds) not in (1, instance.depth + 1):
        raise ConfigError(f"need 1 or {instance.depth + 1} thresholds", "instance", "thresholds",
                          _line_of(text, "instance", "thresholds"), path)

    def opt_float(s):
        return None if s.strip().lower() in ("", "none") else float(s)

    streams = build("streams", lambda: StreamFamily(
        family=get("streams", "family", Family, Family.GAUSSIAN),
        variance=get("streams", "variance", float, 1.0),
        xi=get("streams", "xi", opt_float, None),
        b=get("streams", "b", opt_float, None),
        u=get("streams", "u", opt_float, None),
        tail_index=get("streams", "tail_index", float, 2.5),
        scale=get("streams", "scale", float, 1.0),
    ))
    if streams.family is Family.HEAVY_TAIL and streams.b is None:
        raise ConfigError("heavy-tail family needs b", "streams", "b", path=path)

    walk = build("walk", lambda: WalkConfig(
        p0=get("walk", "p0", float, 0.2),
        epsilon=get("walk", "epsilon", float, 0.1),
        mode=get("walk", "mode", WalkMode, WalkMode.LEAF),
        budget=get("walk", "budget", lambda s: int(float(s)), 10_000_000),
        step_cap=get("walk", "step_cap", _opt_int, None),
        sample_cap=get("walk", "sample_cap", _opt_int, None),
    ))
    sweep_values = get("sweep", "values", lambda s: tuple(v.strip() for v in s.split(",") if v.strip()), ())
    spec = build("harness", lambda: ExperimentSpec(
        instance=instance, streams=streams, walk=walk,
        s_max=get("walk", "s_max", _opt_int, None),
        trials=get("harness", "trials", int, 100),
        seed=get("harness", "seed", int, 0),
        workers=get("harness", "workers", int, 1),
        wall_clock=get("harness", "wall_clock", _bool, True),
        out=get("harness", "out", str.strip, None),
        sweep_param=get("sweep", "param", str.strip, None),
        sweep_values=sweep_values,
    ))
    if spec.sweep_param and not sweep_values:
        raise ConfigError("sweep.param given without values", "sweep", "values", path=path)
    return spec


def parse_config(text: str, path: Optional[str] = None, base_dir: Optional[Path] = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as err:
        line = getattr(err, "lineno", None)
        raise ConfigError(err.message.splitlines()[0] if hasattr(err, "message") else str(err),
                          line=line, path=path) from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    return from_raw(raw, text, path, base_dir)


def load_config(path) -> ExperimentSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror}", path=str(p)) from None
    return parse_config(text, str(p), p.parent)


def to_raw(spec: ExperimentSpec) -> dict:
    """Inverse of from_raw, used to apply sweep overrides."""
    inst = spec.instance
    raw = {"instance": {
        "kind": inst.kind, "depth": str(inst.depth),
        "thresholds": " ".join(repr(t) for t in inst.thresholds),
        "delta": repr(inst.delta), "placement": inst.placement.value,
        "population": str(inst.population), "q_fa": repr(inst.q_fa), "q_d": repr(inst.q_d),
        "z_star": "random" if inst.z_star is None else repr(inst.z_star),
        "noise": f"{inst.noise}:{inst.noise_level!r}", "width": str(inst.width),
        "hierarchical": str(inst.hierarchical).lower(),
    }}
    if inst.random_targets:
        raw["instance"]["targets"] = f"random:{inst.random_targets}"
    elif inst.targets:
        raw["instance"]["targets"] = " ".join(str(t) for t in inst.targets)
    if inst.random_defects:
        raw["instance"]["defects"] = f"random:{inst.random_defects}"
    elif inst.defects:
        raw["instance"]["defects"] = ",".join(str(d) for d in inst.defects)
    if inst.path:
        raw["instance"]["path"] = inst.path
    st = spec.streams
    raw["streams"] = {"family": st.family.value, "variance": repr(st.variance),
                      "tail_index": repr(st.tail_index), "scale": repr(st.scale)}
    for key in ("xi", "b", "u"):
        if getattr(st, key) is not None:
            raw["streams"][key] = repr(getattr(st, key))
    w = spec.walk
    raw["walk"] = {"p0": repr(w.p0), "epsilon": repr(w.epsilon), "mode": w.mode.value, "budget": str(w.budget)}
    if w.step_cap is not None:
        raw["walk"]["step_cap"] = str(w.step_cap)
    if w.sample_cap is not None:
        raw["walk"]["sample_cap"] = str(w.sample_cap)
    if spec.s_max is not None:
        raw["walk"]["s_max"] = str(spec.s_max)
    raw["harness"] = {"trials": str(spec.trials), "seed": str(spec.seed), "workers": str(spec.workers),
                      "wall_clock": str(spec.wall_clock).lower()}
    if spec.out:
        raw["harness"]["out"] = spec.out
    return raw


def replace(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    return dataclasses.replace(spec, **kw)
