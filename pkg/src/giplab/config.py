"""Run configuration: a flat dataclass with a line-based key = value format.

Config files use dotted keys (`objective.kind = GRACE`, `view1.p = 0.5`),
`#` comments, and blank lines. Serialization is canonical: every key is
emitted, sorted, with shortest round-trip float formatting, so equal
configs produce byte-equal text. The same serialization is embedded in
checkpoints as a single `; `-joined line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .augment import AugKind, AugSpec
from .encoder import EncoderConfig
from .errors import ConfigError
from .objectives import ObjectiveConfig, ObjectiveKind

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything a pretraining run depends on, minus the dataset contents.

    input_dim is resolved from the dataset at run time and is therefore
    optional here; checkpoints always carry the resolved value.
    """

    objective: ObjectiveConfig = ObjectiveConfig(ObjectiveKind.GRACE)
    view1: AugSpec = AugSpec(AugKind.GIP, 0.5)
    view2: AugSpec = AugSpec(AugKind.GIP, 0.5)
    hidden_dim: int = 64
    num_layers: int = 3
    gip_start_layer: int = 0
    input_dim: int | None = None
    epochs: int = 100
    batch_size: int = 32
    lr: float = 5e-4
    seed: int = 0
    freeze_views: bool = False
    dataset: str = "synth-2M"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        # delegate encoder range checks without requiring a resolved input_dim
        EncoderConfig(
            input_dim=self.input_dim if self.input_dim is not None else 1,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            gip_start_layer=self.gip_start_layer,
        )

    def encoder_config(self, input_dim: int | None = None) -> EncoderConfig:
        dim = input_dim if input_dim is not None else self.input_dim
        if dim is None:
            raise ConfigError("input_dim is not resolved; provide it or set config.input_dim")
        return EncoderConfig(
            input_dim=dim,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            gip_start_layer=self.gip_start_layer,
        )

    def with_updates(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


def _parse_bool(value: str, key: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ConfigError(f"{key} must be true or false, got {value!r}")


def _parse_int(value: str, key: str) -> int:
    try:
        return int(value, 10)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _parse_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def _parse_objective_kind(value: str) -> ObjectiveKind:
    try:
        return ObjectiveKind(value)
    except ValueError:
        raise ConfigError(f"unknown objective: {value}") from None


def _parse_aug_kind(value: str) -> AugKind:
    try:
        return AugKind[value]
    except KeyError:
        raise ConfigError(f"unknown augmentation: {value}") from None


def parse_pairs(pairs: list[tuple[str, str]], base: TrainConfig | None = None) -> TrainConfig:
    """Fold dotted key/value string pairs into a TrainConfig."""
    cfg = base if base is not None else TrainConfig()
    objective = dict(
        kind=cfg.objective.kind,
        tau=cfg.objective.tau,
        lam=cfg.objective.lam,
        ema_decay=cfg.objective.ema_decay,
        symmetrize=cfg.objective.symmetrize,
    )
    views = {
        "view1": dict(kind=cfg.view1.kind, p=cfg.view1.p),
        "view2": dict(kind=cfg.view2.kind, p=cfg.view2.p),
    }
    top: dict[str, object] = {}
    for key, value in pairs:
        if key == "objective.kind":
            objective["kind"] = _parse_objective_kind(value)
        elif key == "objective.tau":
            objective["tau"] = _parse_float(value, key)
        elif key == "objective.lam":
            objective["lam"] = None if value == "none" else _parse_float(value, key)
        elif key == "objective.ema_decay":
            objective["ema_decay"] = _parse_float(value, key)
        elif key == "objective.symmetrize":
            objective["symmetrize"] = _parse_bool(value, key)
        elif key in ("view1.kind", "view2.kind"):
            views[key.split(".")[0]]["kind"] = _parse_aug_kind(value)
        elif key in ("view1.p", "view2.p"):
            views[key.split(".")[0]]["p"] = _parse_float(value, key)
        elif key == "encoder.hidden_dim":
            top["hidden_dim"] = _parse_int(value, key)
        elif key == "encoder.num_layers":
            top["num_layers"] = _parse_int(value, key)
        elif key == "encoder.gip_start_layer":
            top["gip_start_layer"] = _parse_int(value, key)
        elif key == "encoder.input_dim":
            top["input_dim"] = None if value == "none" else _parse_int(value, key)
        elif key == "epochs":
            top["epochs"] = _parse_int(value, key)
        elif key == "batch_size":
            top["batch_size"] = _parse_int(value, key)
        elif key == "lr":
            top["lr"] = _parse_float(value, key)
        elif key == "seed":
            top["seed"] = _parse_int(value, key)
        elif key == "freeze_views":
            top["freeze_views"] = _parse_bool(value, key)
        elif key == "dataset":
            top["dataset"] = value
        else:
            raise ConfigError(f"unknown config key: {key}")
    return cfg.with_updates(
        objective=ObjectiveConfig(**objective),
        view1=AugSpec(**views["view1"]),
        view2=AugSpec(**views["view2"]),
        **top,
    )


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse the line-based config format; raises ConfigError with line numbers."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw.strip()!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        pairs.append((key, value))
    return parse_pairs(pairs, base)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_items(cfg: TrainConfig) -> list[tuple[str, str]]:
    """Canonical (key, value) pairs, sorted by key."""
    items = {
        "objective.kind": cfg.objective.kind.value,
        "objective.tau": _fmt(cfg.objective.tau),
        "objective.lam": _fmt(cfg.objective.lam),
        "objective.ema_decay": _fmt(cfg.objective.ema_decay),
        "objective.symmetrize": _fmt(cfg.objective.symmetrize),
        "view1.kind": cfg.view1.kind.name,
        "view1.p": _fmt(cfg.view1.p),
        "view2.kind": cfg.view2.kind.name,
        "view2.p": _fmt(cfg.view2.p),
        "encoder.hidden_dim": _fmt(cfg.hidden_dim),
        "encoder.num_layers": _fmt(cfg.num_layers),
        "encoder.gip_start_layer": _fmt(cfg.gip_start_layer),
        "encoder.input_dim": _fmt(cfg.input_dim),
        "epochs": _fmt(cfg.epochs),
        "batch_size": _fmt(cfg.batch_size),
        "lr": _fmt(cfg.lr),
        "seed": _fmt(cfg.seed),
        "freeze_views": _fmt(cfg.freeze_views),
        "dataset": cfg.dataset,
    }
    return sorted(items.items())


def serialize_config(cfg: TrainConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in config_items(cfg)) + "\n"


def config_echo_line(cfg: TrainConfig) -> str:
    """Single-line canonical form for embedding in checkpoint headers."""
    return "; ".join(f"{k} = {v}" for k, v in config_items(cfg))


def parse_echo_line(line: str) -> TrainConfig:
    pairs = []
    for part in line.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        pairs.append((key.strip(), value.strip()))
    return parse_pairs(pairs)
