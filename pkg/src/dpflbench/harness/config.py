"""Experiment configuration: a small sectioned ``key = value`` grammar.

Grammar (documented in README)::

    # comment            full-line comments start with '#' or ';'
    [section]            one of: experiment, data, model, train, dp, fl
    key = value          lists are comma separated; 'inf' is infinity

Unknown sections or keys, duplicate keys, unparsable values and violated
invariants raise :class:`ConfigError` carrying the offending line number.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from ..errors import ConfigError

SETUPS = ("centralized", "centralized-dp", "fl-iid", "fl-noniid", "dpfl-iid", "dpfl-noniid")
DP_SETUPS = frozenset({"centralized-dp", "dpfl-iid", "dpfl-noniid"})
MODEL_KINDS = ("linear", "mlp")


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "experiment"
    setups: tuple[str, ...] = ("centralized",)
    epsilons: tuple[float, ...] = (math.inf,)
    models: tuple[str, ...] = ("linear",)
    seeds: tuple[int, ...] = (1, 2, 3)
    output_dir: str = "results"
    workers: int = 1


@dataclass(frozen=True)
class DataSection:
    source: str = "synth"
    text_column: str = "text"
    label_column: str = "label"
    delimiter: str = ","
    train_fraction: float = 0.8
    split_seed: int = 0
    feature_dim: int = 1024
    ngram_max: int = 1
    synth_examples: int = 2500
    synth_categories: int = 2
    synth_dim: int = 512
    synth_separation: float = 7.0
    synth_seed: int = 0


@dataclass(frozen=True)
class ModelSection:
    hidden_dim: int = 32


@dataclass(frozen=True)
class TrainSection:
    lr: float = 0.5
    epochs: int = 5
    batch_size: int = 50


@dataclass(frozen=True)
class DpSection:
    clip_norm: float = 1.0
    delta: str = "auto"  # 'auto' = min(1e-5, 1/(2 N_train)), else a number


@dataclass(frozen=True)
class FlSection:
    num_clients: int = 10
    fraction: float = 0.5
    rounds: int = 20
    local_epochs: int = 1
    batch_size: int = 32
    lr: float = 0.5
    num_shards: int = 10
    shard_size: int = 200
    shards_per_client: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    dp: DpSection = field(default_factory=DpSection)
    fl: FlSection = field(default_factory=FlSection)

    def resolved_delta(self, n_train: int) -> float:
        if self.dp.delta == "auto":
            return min(1e-5, 1.0 / (2 * n_train))
        return float(self.dp.delta)

    def render(self) -> str:
        return render_config(self)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)}


# --------------------------------------------------------------------------- value codecs


def _parse_float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity", "∞"):
        return math.inf
    value = float(t)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_str(text: str) -> str:
    return text.strip()


def _list(parse):
    def inner(text: str):
        items = [p.strip() for p in text.split(",")]
        if items == [""]:
            return ()
        if any(not p for p in items):
            raise ValueError("empty list item")
        return tuple(parse(p) for p in items)

    return inner


_PARSERS = {
    "int": _parse_int,
    "float": _parse_float,
    "str": _parse_str,
    "tuple[str, ...]": _list(_parse_str),
    "tuple[int, ...]": _list(_parse_int),
    "tuple[float, ...]": _list(_parse_float),
}


def _render_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(_render_value(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config_text(render_config(c)) == c``."""
    out = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            if name == "data" and f.name == "delimiter":
                value = {"\t": "tab", ",": "comma"}.get(value, value)
            out.append(f"{f.name} = {_render_value(value)}")
        out.append("")
    return "\n".join(out)


# --------------------------------------------------------------------------- parsing


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    values: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    lines_of: dict[tuple[str, str], int] = {}
    section: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        known = {f.name: f for f in dataclasses.fields(SECTIONS[section]())}
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        parser = _PARSERS[known[key].type]
        if section == "data" and key == "delimiter":
            value = {"tab": "\t", "comma": ","}.get(value, value)
            if len(value) != 1:
                raise ConfigError("delimiter must be a single character, 'tab' or 'comma'", lineno)
        try:
            values[section][key] = parser(value) if key != "delimiter" else value
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {value!r} as {known[key].type} ({exc})", lineno) from None
        lines_of[(section, key)] = lineno

    data = values["data"]
    if "source" in data and data["source"] != "synth":
        src = Path(data["source"])
        if not src.is_absolute() and base_dir is not None:
            src = base_dir / src
        data["source"] = str(src.resolve())

    cfg = ExperimentConfig(**{name: SECTIONS[name](**values[name]) for name in SECTIONS})
    validate_config(cfg, lines_of)
    return cfg


def validate_config(cfg: ExperimentConfig, lines_of: dict[tuple[str, str], int] | None = None) -> None:
    lines_of = lines_of or {}

    def fail(section, key, message):
        raise ConfigError(f"{section}.{key}: {message}", lines_of.get((section, key)))

    e = cfg.experiment
    for key, allowed in (("setups", SETUPS), ("models", MODEL_KINDS)):
        items = getattr(e, key)
        if not items:
            fail("experiment", key, "must not be empty")
        bad = [s for s in items if s not in allowed]
        if bad:
            fail("experiment", key, f"unknown {bad}; choose from {list(allowed)}")
        if len(set(items)) != len(items):
            fail("experiment", key, "duplicate entries")
    if not e.epsilons:
        fail("experiment", "epsilons", "must not be empty")
    if any(not eps > 0 for eps in e.epsilons):
        fail("experiment", "epsilons", "every epsilon must be > 0 (use 'inf' for no noise)")
    if len(set(e.epsilons)) != len(e.epsilons):
        fail("experiment", "epsilons", "duplicate entries")
    if not e.seeds:
        fail("experiment", "seeds", "must not be empty")
    if e.workers < 1:
        fail("experiment", "workers", "must be >= 1")

    d = cfg.data
    if not 0 < d.train_fraction < 1:
        fail("data", "train_fraction", "must lie in (0, 1)")
    if d.feature_dim < 2:
        fail("data", "feature_dim", "must be >= 2")
    if d.ngram_max not in (1, 2):
        fail("data", "ngram_max", "must be 1 or 2")
    if d.source == "synth":
        if d.synth_categories < 2:
            fail("data", "synth_categories", "must be >= 2")
        if d.synth_examples < d.synth_categories:
            fail("data", "synth_examples", "must be >= synth_categories")
        if d.synth_dim < 1:
            fail("data", "synth_dim", "must be >= 1")
        if d.synth_separation < 0:
            fail("data", "synth_separation", "must be >= 0")

    if cfg.model.hidden_dim < 1:
        fail("model", "hidden_dim", "must be >= 1")
    for key in ("epochs", "batch_size"):
        if getattr(cfg.train, key) < 1:
            fail("train", key, "must be >= 1")
    if not cfg.train.lr > 0:
        fail("train", "lr", "must be > 0")

    if not cfg.dp.clip_norm > 0:
        fail("dp", "clip_norm", "must be > 0")
    if cfg.dp.delta != "auto":
        try:
            delta = float(cfg.dp.delta)
        except ValueError:
            fail("dp", "delta", "must be 'auto' or a number")
        if not 0 < delta < 1:
            fail("dp", "delta", "must lie in (0, 1)")

    f = cfg.fl
    for key in ("num_clients", "rounds", "local_epochs", "batch_size", "num_shards", "shard_size", "shards_per_client"):
        if getattr(f, key) < 1:
            fail("fl", key, "must be >= 1")
    if not 0 < f.fraction <= 1:
        fail("fl", "fraction", "must lie in (0, 1]")
    if not f.lr > 0:
        fail("fl", "lr", "must be > 0")
    if any(s.endswith("noniid") for s in e.setups) and f.num_shards != f.num_clients * f.shards_per_client:
        fail("fl", "num_shards", "must equal num_clients * shards_per_client")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a config file; the name ``demo`` selects the bundled demo config."""
    if str(path) in BUNDLED:
        text = resources.files("dpflbench").joinpath("configs", f"{path}.ini").read_text(encoding="utf-8")
        return parse_config_text(text)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    return parse_config_text(p.read_text(encoding="utf-8"), base_dir=p.parent)


BUNDLED = ("demo", "full_protocol")
