"""Checkpoint directory: binary parameter container plus text side files.

``params.bin`` layout (all integers little-endian)::

    b"DGIFCKPT"  u32 version  u32 count
    count x [u32 name_len, name utf-8, u32 ndim, u64 x ndim shape, f64 x prod(shape)]
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import TrainConfig, load_config, save_config
from .data_io import load_labels, save_labels
from .encoder import Vocab
from .errors import ContractError
from .io_utils import atomic_write_bytes, atomic_write_text
from .label_space import INTENT, SLOT, load_overrides
from .model import DGIFModel, ModelParams
from .numerics import Tensor

MAGIC = b"DGIFCKPT"
VERSION = 1


def encode_params(params: ModelParams) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", t.ndim))
        out.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(out)


def decode_params(payload: bytes) -> ModelParams:
    if payload[:8] != MAGIC:
        raise ContractError("not a checkpoint parameter file (bad magic)")
    version, count = struct.unpack_from("<II", payload, 8)
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    pos, params = 16, {}
    for _ in range(count):
        (length,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        name = payload[pos : pos + length].decode("utf-8")
        pos += length
        (ndim,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", payload, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(payload, dtype="<f8", count=size, offset=pos).astype(np.float64)
        pos += 8 * size
        params[name] = Tensor(data.reshape(shape), requires_grad=True)
    if pos != len(payload):
        raise ContractError("trailing bytes in checkpoint parameter file")
    return params


def save_checkpoint(directory: str | Path, model: DGIFModel) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(d / "params.bin", encode_params(model.params))
    model.vocab.save(d / "vocab.txt")
    model.label_vocab.save(d / "label_vocab.txt")
    save_labels(d / "intents.txt", model.intents)
    save_labels(d / "slots.txt", model.slots)
    save_config(d / "config.txt", model.config)
    if model.overrides:
        atomic_write_text(d / "verbalize.txt", "".join(f"{k}\t{v}\n" for k, v in model.overrides.items()))


def load_checkpoint(directory: str | Path) -> DGIFModel:
    d = Path(directory)
    if not (d / "params.bin").is_file():
        raise ContractError(f"{d} is not a checkpoint directory (params.bin missing)")
    overrides = load_overrides(d / "verbalize.txt") if (d / "verbalize.txt").exists() else None
    config: TrainConfig = load_config(d / "config.txt")
    params = decode_params((d / "params.bin").read_bytes())
    return DGIFModel(
        config,
        Vocab.load(d / "vocab.txt"),
        Vocab.load(d / "label_vocab.txt"),
        load_labels(d / "intents.txt", INTENT, overrides),
        load_labels(d / "slots.txt", SLOT, overrides),
        params=params,
        overrides=overrides,
    )
