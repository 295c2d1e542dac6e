"""Run configuration: one TOML file fully determines a run.

Every key and its default is listed in ``README.md``; unknown keys are
rejected so typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .attributes import HOLD_KINDS, KINDS, AttributeSpec, SharpnessConstants, SpecError
from .decoders import W_SPACE, Z_SPACE
from .traversal import DEFAULT_TOLERANCES, TraversalConfig

DIRECTIONS = ("decrease", "increase")


class ConfigError(ValueError):
    pass


def parse_resolution(text):
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not m:
        raise ConfigError(f"resolution must look like WIDTHxHEIGHT, got {text!r}")
    width, height = int(m.group(1)), int(m.group(2))
    if width < 16 or height < 16:
        raise ConfigError(f"resolution {width}x{height} is too small (minimum 16x16)")
    return width, height


@dataclass
class DecoderSettings:
    kind: str = "procedural"
    seed: int = 0
    dim: int = 32
    width: int = 160
    height: int = 120
    tau: float = 2.0
    mapping: bool = False
    channels: int = 8
    weights: str | None = None


@dataclass
class LatentSettings:
    seed: int = 0
    space: str = Z_SPACE


@dataclass(frozen=True)
class AttributeEntry:
    """A targeted attribute takes ``target`` (absolute) or ``relative`` (times the start value)."""

    kind: str
    target: float | None = None
    relative: float | None = None
    weight: float = 1.0

    def resolve(self, start_value=None):
        if self.kind in HOLD_KINDS:
            return AttributeSpec(self.kind, None, self.weight)
        target = self.target if self.target is not None else self.relative * start_value
        return AttributeSpec(self.kind, target, self.weight)


@dataclass
class OutputSettings:
    directory: str = "runs"
    format: str = "pgm"


@dataclass
class PlanSettings:
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    attributes: list = field(default_factory=lambda: ["pupil_radius", "iris_radius"])
    directions: list = field(default_factory=lambda: list(DIRECTIONS))
    target_count: int = 2
    target_spacing: float = 0.15
    identity_arms: list = field(default_factory=lambda: [True, False])
    spaces: list = field(default_factory=lambda: [Z_SPACE])
    extra_holds: dict = field(default_factory=dict)
    save_artifacts: bool = True
    workers: int = 1


def default_space_compare():
    return PlanSettings(attributes=["pupil_radius"], identity_arms=[True], spaces=[Z_SPACE, W_SPACE])


@dataclass
class InvertSettings:
    image: str | None = None
    target_seed: int = 1000
    tolerance: float = 1e-4
    max_iterations: int = 2000


@dataclass
class RunConfig:
    decoder: DecoderSettings = field(default_factory=DecoderSettings)
    latent: LatentSettings = field(default_factory=LatentSettings)
    traversal: TraversalConfig = field(default_factory=TraversalConfig)
    sharpness: SharpnessConstants = field(default_factory=SharpnessConstants)
    attributes: list = field(default_factory=list)
    output: OutputSettings = field(default_factory=OutputSettings)
    matrix: PlanSettings = field(default_factory=PlanSettings)
    space_compare: PlanSettings = field(default_factory=default_space_compare)
    invert: InvertSettings = field(default_factory=InvertSettings)
    source: str = "<defaults>"

    def with_overrides(self, *, out=None, workers=None, resolution=None, seed=None):
        cfg = replace(self)
        if out is not None:
            cfg.output = replace(cfg.output, directory=str(out))
        if workers is not None:
            if workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.matrix = replace(cfg.matrix, workers=workers)
            cfg.space_compare = replace(cfg.space_compare, workers=workers)
        if resolution is not None:
            w, h = parse_resolution(resolution)
            cfg.decoder = replace(cfg.decoder, width=w, height=h)
        if seed is not None:
            cfg.latent = replace(cfg.latent, seed=int(seed))
            n = len(cfg.matrix.seeds)
            cfg.matrix = replace(cfg.matrix, seeds=list(range(seed, seed + n)))
            n = len(cfg.space_compare.seeds)
            cfg.space_compare = replace(cfg.space_compare, seeds=list(range(seed, seed + n)))
        return cfg


# ---------------------------------------------------------------------------
# parsing

def _take(table, key, kind, default, where):
    if key not in table:
        return default
    value = table[key]
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "bool": isinstance(value, bool),
        "str": isinstance(value, str),
        "list": isinstance(value, list),
        "table": isinstance(value, dict),
    }[kind]
    if not ok:
        raise ConfigError(f"{where}.{key}: expected {kind}, got {type(value).__name__} {value!r}")
    if kind == "float":
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}.{key}: must be finite")
    return value


def _check_keys(table, allowed, where):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(unknown)}; allowed: {', '.join(allowed)}")


def _decoder(t):
    where = "decoder"
    _check_keys(t, ("kind", "seed", "dim", "resolution", "tau", "mapping", "channels", "weights"), where)
    d = DecoderSettings()
    d.kind = _take(t, "kind", "str", d.kind, where)
    if d.kind not in ("procedural", "conv"):
        raise ConfigError(f"decoder.kind must be 'procedural' or 'conv', got {d.kind!r}")
    d.seed = _take(t, "seed", "int", d.seed, where)
    d.dim = _take(t, "dim", "int", d.dim, where)
    if "resolution" in t:
        d.width, d.height = parse_resolution(_take(t, "resolution", "str", None, where))
    d.tau = _take(t, "tau", "float", d.tau, where)
    if d.tau <= 0:
        raise ConfigError("decoder.tau must be > 0")
    d.mapping = _take(t, "mapping", "bool", d.mapping, where)
    d.channels = _take(t, "channels", "int", d.channels, where)
    d.weights = _take(t, "weights", "str", d.weights, where) or None
    return d


def _latent(t):
    _check_keys(t, ("seed", "space"), "latent")
    lat = LatentSettings(_take(t, "seed", "int", 0, "latent"), _take(t, "space", "str", Z_SPACE, "latent"))
    if lat.space not in (Z_SPACE, W_SPACE):
        raise ConfigError(f"latent.space must be 'Z' or 'W', got {lat.space!r}")
    return lat


def _traversal(t):
    where = "traversal"
    keys = ("learning_rate", "optimizer", "weight_decay", "clip_norm", "max_iterations",
            "snapshot_stride", "latent_weight", "tolerances")
    _check_keys(t, keys, where)
    tol = dict(DEFAULT_TOLERANCES)
    tol_table = _take(t, "tolerances", "table", {}, where)
    _check_keys(tol_table, tuple(DEFAULT_TOLERANCES), "traversal.tolerances")
    for k in tol_table:
        tol[k] = _take(tol_table, k, "float", None, "traversal.tolerances")
        if tol[k] <= 0:
            raise ConfigError(f"traversal.tolerances.{k} must be > 0")
    base = TraversalConfig()
    try:
        return TraversalConfig(
            learning_rate=_take(t, "learning_rate", "float", base.learning_rate, where),
            optimizer=_take(t, "optimizer", "str", base.optimizer, where),
            weight_decay=_take(t, "weight_decay", "float", base.weight_decay, where),
            clip_norm=_take(t, "clip_norm", "float", base.clip_norm, where),
            max_iterations=_take(t, "max_iterations", "int", base.max_iterations, where),
            snapshot_stride=_take(t, "snapshot_stride", "int", base.snapshot_stride, where),
            latent_weight=_take(t, "latent_weight", "float", base.latent_weight, where),
            tolerances=tol,
        )
    except ValueError as exc:
        raise ConfigError(f"[traversal] {exc}") from exc


def _sharpness(t):
    _check_keys(t, ("C", "gain"), "sharpness")
    base = SharpnessConstants()
    c = _take(t, "C", "float", base.C, "sharpness")
    gain = _take(t, "gain", "float", base.gain, "sharpness")
    if c <= 0 or gain <= 0:
        raise ConfigError("sharpness.C and sharpness.gain must be > 0")
    return SharpnessConstants(C=c, gain=gain)


def _attributes(items):
    if not isinstance(items, list):
        raise ConfigError("[[attributes]] must be an array of tables")
    out, seen = [], set()
    for n, t in enumerate(items):
        where = f"attributes[{n}]"
        if not isinstance(t, dict):
            raise ConfigError(f"{where} must be a table")
        _check_keys(t, ("kind", "target", "relative", "weight"), where)
        kind = _take(t, "kind", "str", None, where)
        if kind not in KINDS:
            raise ConfigError(f"{where}.kind: unknown attribute {kind!r}; expected one of {', '.join(KINDS)}")
        if kind in seen:
            raise ConfigError(f"{where}: duplicate attribute kind {kind!r}")
        seen.add(kind)
        target = _take(t, "target", "float", None, where)
        relative = _take(t, "relative", "float", None, where)
        weight = _take(t, "weight", "float", 1.0, where)
        if kind in HOLD_KINDS:
            if target is not None or relative is not None:
                raise ConfigError(f"{where}: hold term {kind!r} takes no target")
        elif (target is None) == (relative is None):
            raise ConfigError(f"{where}: give exactly one of 'target' or 'relative' for {kind!r}")
        if weight < 0:
            raise ConfigError(f"{where}.weight must be >= 0")
        out.append(AttributeEntry(kind, target, relative, weight))
    return out


def _output(t):
    _check_keys(t, ("directory", "format"), "output")
    o = OutputSettings(_take(t, "directory", "str", "runs", "output"), _take(t, "format", "str", "pgm", "output"))
    if o.format not in ("pgm", "png"):
        raise ConfigError(f"output.format must be 'pgm' or 'png', got {o.format!r}")
    return o


def _plan(t, base, where):
    keys = ("seeds", "attributes", "directions", "target_count", "target_spacing", "identity_arms",
            "spaces", "extra_holds", "save_artifacts", "workers")
    _check_keys(t, keys, where)
    p = replace(base)
    p.seeds = _take(t, "seeds", "list", p.seeds, where)
    p.attributes = _take(t, "attributes", "list", p.attributes, where)
    p.directions = _take(t, "directions", "list", p.directions, where)
    p.target_count = _take(t, "target_count", "int", p.target_count, where)
    p.target_spacing = _take(t, "target_spacing", "float", p.target_spacing, where)
    p.identity_arms = _take(t, "identity_arms", "list", p.identity_arms, where)
    p.spaces = _take(t, "spaces", "list", p.spaces, where)
    holds = _take(t, "extra_holds", "table", p.extra_holds, where)
    p.save_artifacts = _take(t, "save_artifacts", "bool", p.save_artifacts, where)
    p.workers = _take(t, "workers", "int", p.workers, where)
    if not p.seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in p.seeds):
        raise ConfigError(f"{where}.seeds must be a non-empty list of integers")
    if not p.attributes or any(a not in KINDS for a in p.attributes):
        raise ConfigError(f"{where}.attributes must be a non-empty list drawn from {', '.join(KINDS)}")
    if len(set(p.attributes)) != len(p.attributes):
        raise ConfigError(f"{where}.attributes has duplicates")
    if not p.directions or any(d not in DIRECTIONS for d in p.directions):
        raise ConfigError(f"{where}.directions must be a non-empty list of 'decrease'/'increase'")
    if p.target_count < 1:
        raise ConfigError(f"{where}.target_count must be >= 1")
    if p.target_spacing <= 0:
        raise ConfigError(f"{where}.target_spacing must be > 0")
    if not p.identity_arms or any(not isinstance(a, bool) for a in p.identity_arms):
        raise ConfigError(f"{where}.identity_arms must be a non-empty list of booleans")
    if not p.spaces or any(s not in (Z_SPACE, W_SPACE) for s in p.spaces):
        raise ConfigError(f"{where}.spaces must be a non-empty list of 'Z'/'W'")
    if p.workers < 1:
        raise ConfigError(f"{where}.workers must be >= 1")
    for attr, kinds in holds.items():
        if attr not in KINDS or not isinstance(kinds, list) or any(k not in HOLD_KINDS for k in kinds):
            raise ConfigError(f"{where}.extra_holds.{attr} must list hold kinds ({', '.join(HOLD_KINDS)})")
    p.extra_holds = {k: list(v) for k, v in holds.items()}
    return p


def _invert(t):
    _check_keys(t, ("image", "target_seed", "tolerance", "max_iterations"), "invert")
    inv = InvertSettings()
    inv.image = _take(t, "image", "str", None, "invert") or None
    inv.target_seed = _take(t, "target_seed", "int", inv.target_seed, "invert")
    inv.tolerance = _take(t, "tolerance", "float", inv.tolerance, "invert")
    inv.max_iterations = _take(t, "max_iterations", "int", inv.max_iterations, "invert")
    if inv.tolerance <= 0 or inv.max_iterations < 1:
        raise ConfigError("invert.tolerance must be > 0 and invert.max_iterations >= 1")
    return inv


SECTIONS = ("decoder", "latent", "traversal", "sharpness", "attributes", "output", "matrix",
            "space_compare", "invert")


def from_dict(data, source="<dict>"):
    _check_keys(data, SECTIONS, "top level")
    for name in SECTIONS:
        if name != "attributes" and name in data and not isinstance(data[name], dict):
            raise ConfigError(f"[{name}] must be a table")
    try:
        return RunConfig(
            decoder=_decoder(data.get("decoder", {})),
            latent=_latent(data.get("latent", {})),
            traversal=_traversal(data.get("traversal", {})),
            sharpness=_sharpness(data.get("sharpness", {})),
            attributes=_attributes(data.get("attributes", [])),
            output=_output(data.get("output", {})),
            matrix=_plan(data.get("matrix", {}), PlanSettings(), "matrix"),
            space_compare=_plan(data.get("space_compare", {}), default_space_compare(), "space_compare"),
            invert=_invert(data.get("invert", {})),
            source=source,
        )
    except SpecError as exc:
        raise ConfigError(str(exc)) from exc


def loads(text, source="<string>"):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+)", msg)
        if m:
            lines = text.splitlines()
            n = int(m.group(1))
            if 1 <= n <= len(lines):
                msg += f"\n  {n} | {lines[n - 1]}"
        raise ConfigError(f"{source}: {msg}") from exc
    try:
        return from_dict(data, source)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return loads(text, str(path))
