"""Flat ``key=value`` run configuration with dotted keys.

Example file::

    # comments and blank lines are ignored
    seed=3
    train.batch=12
    train.strategy=oommix
    synth.classes=4
    data.train=corpus/train.csv

Sections map onto dataclasses (``train`` onto :class:`TrainConfig`); the
single top-level ``seed`` drives every random stream of a run.
"""

from __future__ import annotations

import dataclasses
import sys
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .corpus import SynthConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSettings:
    train: str = ""  # CSV path; empty -> synthetic data
    valid: str = ""  # empty -> carve a stratified validation set from train
    test: str = ""
    label_column: int = 0
    text_columns: tuple[int, ...] = ()
    one_based: bool = True
    n_train: int = 0  # 0 -> keep all remaining training rows
    n_valid: int = 200


@dataclass
class SynthSettings:
    classes: int = 4
    keywords: int = 8
    q: float = 0.2
    vocab: int = 400
    length: int = 16
    noise: float = 0.0
    n_train: int = 2000
    n_valid: int = 400
    n_test: int = 400

    def synth_config(self, seed: int) -> SynthConfig:
        return SynthConfig(self.classes, self.keywords, self.q, self.vocab, self.length, self.noise, seed)


@dataclass
class AnalyzeSettings:
    run: str = ""  # directory of a previous train run
    split: str = "valid"
    neighbors: int = 15
    out_dim: int = 3
    pairs: int = 500
    bins: int = 20
    phases: int = 2
    pca_target: float = 0.8
    max_points: int = 0  # 0 -> all points


@dataclass
class SweepSettings:
    m_g: tuple[int, ...] = (0, 1, 2, 3)
    m_d: tuple[int, ...] = (1, 2, 3, 4)
    seeds: tuple[int, ...] = (0,)
    allow_equal: bool = False


@dataclass
class GradcheckSettings:
    instances: int = 20
    eps: float = 1e-5
    only: tuple[str, ...] = ()


@dataclass
class PlotSettings:
    run: str = ""  # directory holding the CSVs to render
    planes: tuple[str, ...] = ("xy", "xz", "yz")


@dataclass
class RunConfig:
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSettings = field(default_factory=DataSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    analyze: AnalyzeSettings = field(default_factory=AnalyzeSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    gradcheck: GradcheckSettings = field(default_factory=GradcheckSettings)
    plots: PlotSettings = field(default_factory=PlotSettings)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def to_lines(self) -> str:
        """Serialize back to the file format (every key, sorted by section)."""
        out = [f"seed={self.seed}"]
        for sec in SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                if sec == "train" and f.name == "seed":
                    continue
                out.append(f"{sec}.{f.name}={_render(getattr(obj, f.name))}")
        return "\n".join(out) + "\n"


SECTIONS = ("train", "data", "synth", "analyze", "sweep", "gradcheck", "plots")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse(raw: str, hint, key: str):
    raw = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if origin is typing.Union or (origin is not None and type(None) in args):
            inner = [a for a in args if a is not type(None)]
            if raw.lower() in ("none", ""):
                return None
            return _parse(raw, inner[0], key)
        if origin is tuple:
            item = args[0]
            return tuple(_parse(x, item, key) for x in raw.split(",") if x.strip())
        if hint is bool:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(hint, '__name__', hint)}") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def _hints(cls) -> dict:
    module = sys.modules[cls.__module__]
    return typing.get_type_hints(cls, vars(module))


def parse_pairs(pairs) -> dict[str, str]:
    """``["a.b=1", ...]`` -> ordered mapping; later keys win."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_file(path) -> dict[str, str]:
    lines = []
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        lines.append(line)
    return parse_pairs(lines)


def build(values: dict[str, str]) -> RunConfig:
    """Apply dotted-key values on top of the defaults; unknown keys are errors."""
    cfg = RunConfig()
    per_section: dict[str, dict] = {s: {} for s in SECTIONS}
    for key, raw in values.items():
        if key == "seed":
            cfg.seed = _parse(raw, int, key)
            continue
        sec, _, name = key.partition(".")
        if sec not in per_section or not name:
            raise ConfigError(f"unknown key {key!r}")
        obj = getattr(cfg, sec)
        hints = _hints(type(obj))
        if name not in hints or (sec == "train" and name == "seed"):
            hint = " (use the top-level 'seed')" if name == "seed" else ""
            raise ConfigError(f"unknown key {key!r}{hint}")
        per_section[sec][name] = _parse(raw, hints[name], key)
    for sec, updates in per_section.items():
        if updates:
            try:
                # built fresh so layer-dependent defaults (m_g, m_d) follow train.layers
                setattr(cfg, sec, type(getattr(cfg, sec))(**updates))
            except (TypeError, ValueError) as err:
                raise ConfigError(f"{sec}: {err}") from None
    try:
        cfg.train = cfg.train_config()
    except ValueError as err:
        raise ConfigError(f"train: {err}") from None
    return cfg


def load(path=None, overrides=()) -> RunConfig:
    values = read_file(path) if path else {}
    values.update(parse_pairs(overrides))
    return build(values)
