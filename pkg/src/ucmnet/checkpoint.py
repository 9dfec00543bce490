"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"UCMN"  u32 version  u32 header_len  header (UTF-8 JSON, sorted keys)
    u32 tensor_count
    per tensor, sorted by name:
        u16 name_len  name  u8 dtype_code  u8 ndim  u32 dims[ndim]  raw data

Tensor names are ``param/<dotted>`` for every model tensor (memory tokens
included) and ``adam_m/<dotted>`` / ``adam_v/<dotted>`` for the optimizer
moments.  The header holds the run config, step, optimizer scalars and the
bit-generator state, which is what makes resumed training bit-identical.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .network import UCMNet
from .trainer import OptimizerState, Trainer

MAGIC = b"UCMN"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")


@dataclass
class Checkpoint:
    config: RunConfig
    tensors: dict[str, np.ndarray]
    step: int = 0
    dtype: str = "float32"
    rng_state: dict | None = None
    optimizer: dict = field(default_factory=dict)
    version: int = VERSION

    def header(self) -> dict:
        return {
            "config": {k: v for k, v in self.config.to_flat().items()},
            "dtype": self.dtype,
            "optimizer": self.optimizer,
            "rng_state": self.rng_state,
            "step": self.step,
        }

    def build_model(self) -> UCMNet:
        model = UCMNet(self.config.model, dtype=np.dtype(self.dtype), seed=0)
        state = model.state_tensors()
        expected = {f"param/{k}" for k in state}
        present = {k for k in self.tensors if k.startswith("param/")}
        if expected != present:
            missing = sorted(expected - present)[:3]
            extra = sorted(present - expected)[:3]
            raise CheckpointError(f"checkpoint tensors do not match the model (missing {missing}, unexpected {extra})")
        for name, t in state.items():
            data = self.tensors[f"param/{name}"]
            if data.shape != t.shape:
                raise CheckpointError(f"tensor {name!r} has shape {data.shape}, model expects {t.shape}")
            t.data = data.astype(model.dtype, copy=True)
        return model

    def build_trainer(self, model: UCMNet | None = None) -> Trainer:
        model = model if model is not None else self.build_model()
        o = self.optimizer
        params = model.parameters()
        opt = OptimizerState(
            lr=o["lr"],
            beta1=o["beta1"],
            beta2=o["beta2"],
            eps=o["eps"],
            total_steps=o["total_steps"],
            step=self.step,
            m={k: self.tensors[f"adam_m/{k}"].astype(model.dtype, copy=True) for k in params},
            v={k: self.tensors[f"adam_v/{k}"].astype(model.dtype, copy=True) for k in params},
        )
        rng = np.random.default_rng()
        if self.rng_state is not None:
            rng.bit_generator.state = self.rng_state
        return Trainer(model, self.config.loss, self.config.train, optimizer=opt, rng=rng)


def from_trainer(trainer: Trainer, config: RunConfig) -> Checkpoint:
    model = trainer.model
    tensors = {f"param/{k}": t.data for k, t in model.state_tensors().items()}
    opt = trainer.optimizer
    tensors.update({f"adam_m/{k}": a for k, a in opt.m.items()})
    tensors.update({f"adam_v/{k}": a for k, a in opt.v.items()})
    return Checkpoint(
        config=config,
        tensors=tensors,
        step=opt.step,
        dtype=model.dtype.name,
        rng_state=trainer.rng.bit_generator.state,
        optimizer={
            "lr": opt.lr,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "total_steps": opt.total_steps,
        },
    )


def from_model(model: UCMNet, config: RunConfig) -> Checkpoint:
    """Checkpoint of a model with fresh optimizer state (for inference use)."""
    return from_trainer(Trainer(model, config.loss, config.train), config)


def encode(ckpt: Checkpoint) -> bytes:
    header = json.dumps(ckpt.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", ckpt.version, len(header)), header, struct.pack("<I", len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name])
        dt = arr.dtype.newbyteorder("<")
        if dt not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<BB{arr.ndim}I", _CODES[dt], arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated file while reading {what}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes", 0)
    version, hlen = r.unpack("<II", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (this build reads {VERSION})", 4)
    at = r.pos
    try:
        header = json.loads(r.take(hlen, "header").decode("utf-8"))
        config = RunConfig.from_flat(header["config"])
        step, dtype = int(header["step"]), str(header["dtype"])
        rng_state, optimizer = header["rng_state"], header["optimizer"]
    except CheckpointError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"corrupt header: {e}", at) from None

    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        at = r.pos
        (nlen,) = r.unpack("<H", "name length")
        try:
            name = r.take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("tensor name is not UTF-8", at) from None
        at = r.pos
        code, ndim = r.unpack("<BB", "dtype")
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for tensor {name!r}", at)
        shape = r.unpack(f"<{ndim}I", "shape")
        dt = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        data = np.frombuffer(r.take(nbytes, f"data of {name!r}"), dtype=dt).reshape(shape)
        tensors[name] = data.astype(dt.newbyteorder("="))
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after last tensor", r.pos)
    return Checkpoint(config, tensors, step, dtype, rng_state, optimizer, version)


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(ckpt))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {os.fspath(path)}: {e.strerror}") from None
    return decode(buf)
