"""Training/model configuration and its flat ``key=value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .encoder import EncoderConfig
from .errors import ContractError
from .io_utils import atomic_write_text


@dataclass(frozen=True)
class TrainConfig:
    # loss trade-offs
    alpha: float = 0.6
    beta: float = 1.0
    gamma: float = 0.3
    lam: float = 0.5
    # optimization
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    grad_clip: float | None = None
    # ablations
    disable_lar: bool = False
    disable_lsi: bool = False
    disable_gil: bool = False
    teacher_forcing: bool = True
    # graph
    delta: float | None = None  # None -> 1/n per utterance
    window: int = 1
    gat_layers: int = 2
    gat_heads: int = 1
    gat_activation: str = "leaky_relu"
    max_intents: int = 3
    # encoders
    d: int = 64
    blocks: int = 2
    heads: int = 4
    ff_dim: int = 128
    pool_dim: int = 32
    max_len: int = 64
    # numerics and open-question switches
    ridge: float = 1e-6
    slope: float = 0.01
    exclude_self_pairs: bool = False
    node_grad: bool = True
    slot_intra: str = "token"
    lar_target_grad: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("beta", "gamma", "lam", "ridge"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("epochs", "batch_size", "gat_layers", "gat_heads", "max_intents"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.window < 0:
            raise ContractError(f"window must be >= 0, got {self.window}")
        if self.delta is not None and not 0.0 <= self.delta < 1.0:
            raise ContractError(f"delta must lie in [0, 1), got {self.delta}")
        if self.lr <= 0:
            raise ContractError(f"lr must be > 0, got {self.lr}")
        if self.gat_activation not in ("leaky_relu", "sigmoid"):
            raise ContractError(f"gat_activation must be leaky_relu or sigmoid, got {self.gat_activation!r}")
        if self.slot_intra not in ("token", "all_pairs"):
            raise ContractError(f"slot_intra must be token or all_pairs, got {self.slot_intra!r}")
        self.encoder()  # validates encoder extents

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(d=self.d, blocks=self.blocks, heads=self.heads, max_len=self.max_len,
                             pool_dim=self.pool_dim, ff_dim=self.ff_dim)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_OPTIONAL = {"delta", "grad_clip"}


def _coerce(key: str, raw: str) -> Any:
    if key not in _FIELDS:
        raise ContractError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    text = raw.strip()
    if key in _OPTIONAL and text.lower() in ("none", "auto", ""):
        return None
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or key in _OPTIONAL:
            return float(text)
        return text
    except ValueError:
        raise ContractError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ContractError(f"{source}:{lineno}: expected key=value, got {line!r}")
        values[key.strip()] = _coerce(key.strip(), value)
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)))
    for k, v in (overrides or {}).items():
        if k not in _FIELDS:
            raise ContractError(f"unknown config key {k!r}")
        if v is not None:
            values[k] = v
    return TrainConfig(**values)


def config_text(config: TrainConfig) -> str:
    return "".join(f"{k}={getattr(config, k)!r}\n".replace("'", "") for k in _FIELDS)


def save_config(path: str | Path, config: TrainConfig) -> None:
    atomic_write_text(path, config_text(config))
