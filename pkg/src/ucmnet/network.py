"""U-shaped encoder-decoder assembling FCM encoders and FCM+UPT decoders."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .fcm import FcmParams, fcm_forward
from .tensor import ShapeError, Tensor
from .upt import MemoryContextBank, UptParams, upt_forward


@dataclass
class ModelConfig:
    stages: int = 3
    base_channels: int = 16
    blocks_per_stage: int = 1
    bank_size: int = 256
    growth: int = 2
    momentum: float = 0.999
    alpha_init: float = 256.0
    beta_init: float = 256.0

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        for name in ("base_channels", "blocks_per_stage", "bank_size", "growth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.alpha_init <= 0 or self.beta_init <= 0:
            raise ValueError("attention scales must be positive")

    def widths(self) -> list[int]:
        """Channel width at each resolution level, full resolution first."""
        return [self.base_channels * self.growth**k for k in range(self.stages + 1)]

    @property
    def multiple(self) -> int:
        return 2**self.stages


PRESETS = {
    "tiny": ModelConfig(stages=1, base_channels=4, bank_size=8),
    "desk": ModelConfig(stages=3, base_channels=16, bank_size=256),
    "paper-scale": ModelConfig(stages=4, base_channels=32, blocks_per_stage=2, bank_size=256),
}


@dataclass
class StageOutput:
    image: Tensor  # [B, h, w, 3]
    uncertainty: Tensor  # s_k, [B, h, w, 1]
    features: Tensor  # F_U, [B, h, w, C_k]


@dataclass
class EncoderParams:
    fcms: list[FcmParams]
    down_w: Tensor
    down_b: Tensor


@dataclass
class DecoderParams:
    fcms: list[FcmParams]
    upt: UptParams
    up_w: Tensor
    up_b: Tensor
    mean_w: Tensor
    mean_b: Tensor


@dataclass
class NetworkParams:
    embed_w: Tensor
    embed_b: Tensor
    encoders: list[EncoderParams]
    middle: list[FcmParams]
    decoders: list[DecoderParams]  # deepest first
    head_w: Tensor
    head_b: Tensor


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)


def _zeros(shape, dtype):
    return T.parameter(np.zeros(shape), dtype=dtype)


def init_params(config: ModelConfig, rng: np.random.Generator, dtype=np.float32, zero_residual: bool = True) -> NetworkParams:
    """Build all parameters.  ``zero_residual`` zeroes the output head (so the
    network starts as the identity on its input) and the last conv of every
    FCM sub-block."""
    widths = config.widths()
    nb = config.blocks_per_stage

    def fcm(c):
        return FcmParams.init(rng, c, dtype=dtype, zero_residual=zero_residual)

    embed_w = _uniform(rng, (3, 3, 3, widths[0]), 27, dtype)
    embed_b = _uniform(rng, (widths[0],), 27, dtype)
    encoders = []
    for k in range(config.stages):
        c, c2 = widths[k], widths[k + 1]
        encoders.append(
            EncoderParams(
                fcms=[fcm(c) for _ in range(nb)],
                down_w=_uniform(rng, (2, 2, c, c2), 4 * c, dtype),
                down_b=_uniform(rng, (c2,), 4 * c, dtype),
            )
        )
    middle = [fcm(widths[-1]) for _ in range(nb)]
    decoders = []
    for k in range(config.stages, 0, -1):
        c, c_up = widths[k], widths[k - 1]
        decoders.append(
            DecoderParams(
                fcms=[fcm(c) for _ in range(nb)],
                upt=UptParams.init(
                    rng, c, config.bank_size, config.momentum, config.alpha_init, config.beta_init, dtype
                ),
                up_w=_uniform(rng, (2, 2, c_up, c), 4 * c, dtype),
                up_b=_uniform(rng, (c_up,), 4 * c, dtype),
                mean_w=_uniform(rng, (3, 3, c, 3), 9 * c, dtype),
                mean_b=_uniform(rng, (3,), 9 * c, dtype),
            )
        )
    c0 = widths[0]
    if zero_residual:
        head_w, head_b = _zeros((3, 3, c0, 3), dtype), _zeros((3,), dtype)
    else:
        head_w, head_b = _uniform(rng, (3, 3, c0, 3), 9 * c0, dtype), _uniform(rng, (3,), 9 * c0, dtype)
    return NetworkParams(embed_w, embed_b, encoders, middle, decoders, head_w, head_b)


def named_tensors(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Walk a params tree yielding ``(dotted.name, tensor)`` for every tensor."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_tensors(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_tensors(item, f"{prefix}.{i}")


def named_parameters(params: NetworkParams) -> dict[str, Tensor]:
    return {k: t for k, t in named_tensors(params) if t.requires_grad}


def banks(params: NetworkParams) -> list[MemoryContextBank]:
    return [d.upt.bank for d in params.decoders]


def encode_block(F: Tensor, p: EncoderParams) -> tuple[Tensor, Tensor]:
    """Returns ``(downsampled, skip)``; the skip is taken before downsampling."""
    if F.shape[1] % 2 or F.shape[2] % 2:
        raise ShapeError(f"encoder needs even extents, got {F.shape[1]}x{F.shape[2]}")
    for fp in p.fcms:
        F = fcm_forward(F, fp)
    return T.conv2d(F, p.down_w, p.down_b, stride=2), F


def decode_block(F: Tensor, skip: Tensor, p: DecoderParams, image_in: Tensor) -> tuple[Tensor, StageOutput]:
    """FCM -> UPT -> transposed-conv upsample, then add the skip.

    ``image_in`` is the network input area-averaged to this block's
    resolution; the stage mean estimator predicts a correction to it.
    """
    for fp in p.fcms:
        F = fcm_forward(F, fp)
    F, F_U = upt_forward(F, p.upt)
    image = T.add(image_in, T.conv2d(F, p.mean_w, p.mean_b, padding=1))
    s = T.mean(F_U, axis=-1, keepdims=True)
    up = T.conv_transpose2d(F, p.up_w, p.up_b, stride=2)
    if up.shape != skip.shape:
        raise ShapeError(f"upsampled {list(up.shape)} does not match skip {list(skip.shape)}")
    return T.add(up, skip), StageOutput(image, s, F_U)


def _pad_amounts(n: int, multiple: int) -> tuple[int, int]:
    extra = (-n) % multiple
    return extra // 2, extra - extra // 2


class UCMNet:
    """Restoration network: ``forward(I_in) -> (I_hat, stage outputs)``."""

    def __init__(self, config: ModelConfig, params: NetworkParams | None = None, seed: int = 0, dtype=np.float32, zero_residual: bool = True):
        self.config = config
        self.dtype = np.dtype(dtype)
        if params is None:
            params = init_params(config, np.random.default_rng(seed), self.dtype, zero_residual)
        self.params = params

    def parameters(self) -> dict[str, Tensor]:
        return named_parameters(self.params)

    def banks(self) -> list[MemoryContextBank]:
        return banks(self.params)

    def state_tensors(self) -> dict[str, Tensor]:
        """Every tensor that defines the model, memory tokens included."""
        return dict(named_tensors(self.params))

    def forward(self, image: Tensor | np.ndarray) -> tuple[Tensor, list[StageOutput]]:
        """Restore ``[B, H, W, 3]`` (or ``[H, W, 3]``) images.

        Extents not divisible by ``2**stages`` are reflect-padded and the
        final image is cropped back.  Stage outputs stay at padded size.
        """
        x = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=self.dtype))
        squeeze = x.ndim == 3
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[-1] != 3:
            raise ShapeError(f"expected a 3-channel image, got shape {list(x.shape)}")
        _, H, W, _ = x.shape
        m = self.config.multiple
        (pt, pb), (pl, pr) = _pad_amounts(H, m), _pad_amounts(W, m)
        if pt or pb or pl or pr:
            mode = "reflect" if max(pt, pb) < H and max(pl, pr) < W else "zero"
            x = T.pad2d(x, (pt, pb, pl, pr), mode)

        p = self.params
        F = T.conv2d(x, p.embed_w, p.embed_b, padding=1)
        skips = []
        for enc in p.encoders:
            F, skip = encode_block(F, enc)
            skips.append(skip)
        for fp in p.middle:
            F = fcm_forward(F, fp)
        stages = []
        for k, dec in zip(range(self.config.stages, 0, -1), p.decoders):
            F, out = decode_block(F, skips[k - 1], dec, T.avg_pool2d(x, 2**k))
            stages.append(out)
        y = T.add(x, T.conv2d(F, p.head_w, p.head_b, padding=1))
        if pt or pb or pl or pr:
            y = T.slice_axis(T.slice_axis(y, 1, pt, pt + H), 2, pl, pl + W)
        if squeeze:
            y = T.reshape(y, y.shape[1:])
        return y, stages

    __call__ = forward

    def count_parameters(self) -> int:
        return int(np.sum([t.size for t in self.parameters().values()]))

    def count_memory_tokens(self) -> int:
        return int(np.sum([b.memory.size for b in self.banks()]))


def count_parameters(config: ModelConfig) -> int:
    """Learnable scalars, context tokens included and memory tokens excluded."""
    return UCMNet(config, seed=0, dtype=np.float32).count_parameters()


def forward(image, config: ModelConfig, params: NetworkParams):
    return UCMNet(config, params, dtype=params.embed_w.dtype).forward(image)
