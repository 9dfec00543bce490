"""Training objectives: UDL, high-frequency UDL, PSNR/L1 fidelity and their total."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

MSE_FLOOR = 1e-12
VARIANTS = ("psnr-total", "l1-total")


@dataclass
class LossConfig:
    lambda1: float = 100.0
    lambda2: float = 0.5
    variant: str = "psnr-total"

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("loss weights must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}; expected one of {VARIANTS}")


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _batched(x: Tensor) -> Tensor:
    return T.reshape(x, (1,) + x.shape) if x.ndim == 3 else x


def laplacian(image) -> Tensor:
    """4-neighbour Laplacian per channel with reflect padding."""
    x = _batched(_t(image))
    _, h, w, _ = x.shape
    if h < 3 or w < 3:
        raise ShapeError(f"laplacian needs at least 3x3, got {h}x{w}")
    p = T.pad2d(x, 1, "reflect")
    up = T.slice_axis(T.slice_axis(p, 1, 0, h), 2, 1, w + 1)
    down = T.slice_axis(T.slice_axis(p, 1, 2, h + 2), 2, 1, w + 1)
    left = T.slice_axis(T.slice_axis(p, 1, 1, h + 1), 2, 0, w)
    right = T.slice_axis(T.slice_axis(p, 1, 1, h + 1), 2, 2, w + 2)
    out = T.sub(T.add(T.add(up, down), T.add(left, right)), T.mul(x, 4.0))
    return T.reshape(out, out.shape[1:]) if _t(image).ndim == 3 else out


def _check_pair(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {list(pred.shape)} and target {list(target.shape)} differ")


def _uncertainty_weighted(err: Tensor, s: Tensor) -> Tensor:
    # err: per-pixel channel-summed L1, [..., h, w, 1]
    per_pixel = T.add(T.mul(T.exp(T.neg(s)), err), T.mul(s, 2.0))
    return T.mean(per_pixel)


def udl(pred, target, s) -> Tensor:
    """Mean over pixels of ``exp(-s) * |pred - target|_1 + 2 s``.

    The L1 norm sums over channels; ``s`` is a per-pixel map with a trailing
    singleton channel axis (or anything broadcastable to it).
    """
    pred, target, s = _t(pred), _t(target), _t(s)
    _check_pair(pred, target)
    err = T.sum(T.absolute(T.sub(pred, target)), axis=-1, keepdims=True)
    T._broadcast_shape(err.shape, s.shape)
    return _uncertainty_weighted(err, s)


def hf_udl(pred, target, s) -> Tensor:
    """:func:`udl` on the Laplacians of both images."""
    pred, target = _t(pred), _t(target)
    _check_pair(pred, target)
    return udl(laplacian(pred), laplacian(T.stop_gradient(target)), s)


def psnr_loss(pred, target) -> Tensor:
    """Negative PSNR (peak 1.0) averaged over the batch."""
    pred, target = _t(pred), _t(target)
    _check_pair(pred, target)
    d = T.sub(pred, target)
    sq = T.mul(d, d)
    if pred.ndim == 4:
        mse = T.mean(sq, axis=(1, 2, 3))
    else:
        mse = T.mean(sq)
    mse = T.clamp_min(mse, MSE_FLOOR)
    # -10*log10(1/mse) = 10*log10(mse)
    return T.mean(T.mul(T.log(mse), 10.0 / np.log(10.0)))


def l1_loss(pred, target) -> Tensor:
    pred, target = _t(pred), _t(target)
    _check_pair(pred, target)
    return T.mean(T.absolute(T.sub(pred, target)))


def stage_targets(target: np.ndarray, stages: Sequence) -> list[np.ndarray]:
    """Area-average ``target`` down to every stage's resolution."""
    tgt = np.asarray(target.data if isinstance(target, Tensor) else target)
    if tgt.ndim == 3:
        tgt = tgt[None]
    out = []
    for st in stages:
        h, w = st.image.shape[1], st.image.shape[2]
        f = tgt.shape[1] // h
        if f * h != tgt.shape[1] or f * w != tgt.shape[2]:
            raise ShapeError(f"stage size {h}x{w} does not divide target {tgt.shape[1]}x{tgt.shape[2]}")
        B, H, W, C = tgt.shape
        out.append(tgt.reshape(B, h, f, w, f, C).mean(axis=(2, 4)))
    return out


def total_loss(stages: Sequence, target, final, cfg: LossConfig | None = None) -> tuple[Tensor, dict[str, float]]:
    """``lambda1 * mean_k hf_udl_k + lambda2 * fidelity``.

    Returns the scalar and the weighted terms, which sum to it.
    """
    cfg = cfg or LossConfig()
    final, target = _t(final), _t(target)
    _check_pair(final, target)
    targets = stage_targets(target.data, stages)
    if stages:
        hf = [hf_udl(st.image, Tensor(tg.astype(st.image.dtype)), st.uncertainty) for st, tg in zip(stages, targets)]
        hf_term = T.mul(_average(hf), cfg.lambda1)
    else:
        hf_term = Tensor(np.zeros((), dtype=final.dtype))
    if cfg.variant == "psnr-total":
        fid = psnr_loss(final, target)
    else:
        fid = l1_loss(final, target)
    fid_term = T.mul(fid, cfg.lambda2)
    total = T.add(hf_term, fid_term)
    return total, {"hf_udl": float(hf_term.data), "fidelity": float(fid_term.data)}


def _average(scalars: list[Tensor]) -> Tensor:
    acc = scalars[0]
    for t in scalars[1:]:
        acc = T.add(acc, t)
    return T.mul(acc, 1.0 / len(scalars))
