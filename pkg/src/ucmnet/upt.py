"""Uncertainty-Prior Transformer block and its paired memory/context bank."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

COSINE_EPS = 1e-8


@dataclass
class MemoryContextBank:
    """``memory`` is plain state moved by momentum updates; ``context`` is a
    trainable parameter.  Both are ``[N, C]``."""

    memory: Tensor
    context: Tensor
    momentum: float = 0.999

    def __post_init__(self):
        if self.memory.shape != self.context.shape:
            raise ShapeError(
                f"memory {list(self.memory.shape)} and context {list(self.context.shape)} differ"
            )
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {self.momentum}")

    @property
    def size(self) -> int:
        return self.memory.shape[0]

    @property
    def channels(self) -> int:
        return self.memory.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, size: int, channels: int, momentum: float = 0.999, dtype=np.float32):
        m = rng.standard_normal((size, channels))
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        c = 0.02 * rng.standard_normal((size, channels))
        return cls(Tensor(m, dtype=dtype), T.parameter(c, dtype=dtype), momentum)


@dataclass
class UptParams:
    est_w1: Tensor
    est_b1: Tensor
    est_w2: Tensor
    est_b2: Tensor
    wq1: Tensor
    wk1: Tensor
    wv1: Tensor
    wq2: Tensor
    wk2: Tensor
    wv2: Tensor
    log_alpha: Tensor
    log_beta: Tensor
    bank: MemoryContextBank

    @property
    def channels(self) -> int:
        return self.wq1.shape[0]

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        channels: int,
        bank_size: int = 256,
        momentum: float = 0.999,
        alpha: float = 256.0,
        beta: float = 256.0,
        dtype=np.float32,
    ) -> "UptParams":
        C = channels

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return T.parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)

        return cls(
            est_w1=uniform((3, 3, C, C), 9 * C),
            est_b1=uniform((C,), 9 * C),
            est_w2=uniform((C, C), C),
            est_b2=uniform((C,), C),
            wq1=uniform((C, C), C),
            wk1=uniform((C, C), C),
            wv1=uniform((C, C), C),
            wq2=uniform((C, C), C),
            wk2=uniform((C, C), C),
            wv2=uniform((C, C), C),
            log_alpha=T.parameter(np.log(alpha), dtype=dtype),
            log_beta=T.parameter(np.log(beta), dtype=dtype),
            bank=MemoryContextBank.init(rng, bank_size, C, momentum, dtype),
        )


def estimate_uncertainty(F_in: Tensor, p: UptParams) -> Tensor:
    """Non-negative uncertainty features, same shape as the input."""
    h = T.gelu(T.conv2d(F_in, p.est_w1, p.est_b1, padding=1))
    return T.softplus(T.linear(h, p.est_w2, p.est_b2))


def cosine_scores(F_U: Tensor, memory: Tensor) -> Tensor:
    """``s[b, j, i]``: cosine between pixel ``j`` of ``F_U`` and memory token ``i``.

    The memory enters as a constant, so no derivative ever reaches it.
    """
    B, H, W, C = F_U.shape
    if memory.shape[1] != C:
        raise ShapeError(f"bank has {memory.shape[1]} channels, features have {C}")
    f = T.reshape(F_U, (B, H * W, C))
    m = memory.data
    m_norm = np.linalg.norm(m, axis=1)
    f_norm = T.sqrt(T.sum(T.mul(f, f), axis=-1, keepdims=True))
    dots = T.matmul(f, Tensor(m.T))
    denom = T.add(T.mul(f_norm, Tensor(m_norm[None, None, :])), COSINE_EPS)
    return T.div(dots, denom)


def retrieval_weights(F_U: Tensor, memory: Tensor) -> Tensor:
    """Softmax over tokens of the cosine scores, ``[B, H'W', N]``."""
    return T.softmax(cosine_scores(F_U, memory), axis=-1)


def retrieve_context(F_U: Tensor, bank: MemoryContextBank) -> Tensor:
    B, H, W, C = F_U.shape
    w = retrieval_weights(F_U, bank.memory)
    F_C = T.matmul(w, bank.context)
    return T.reshape(F_C, (B, H, W, C))


def _attend(q: Tensor, k: Tensor, v: Tensor, inv_scale: Tensor) -> Tensor:
    scores = T.mul(T.matmul(q, T.permute(k, (0, 2, 1))), inv_scale)
    return T.matmul(T.softmax(scores, axis=-1), v)


def directional_cross_attention(F_in: Tensor, F_C: Tensor, p: UptParams) -> Tensor:
    """Row-wise and column-wise cross-attention with ``F_C`` as the key source.

    Vertical tokens are image rows (``[H', W'C]``); horizontal tokens are
    columns (``[W', H'C]``).  Output is ``0.5 * (F_v + F_h) + F_in``.
    """
    if F_in.shape != F_C.shape:
        raise ShapeError(f"F_in {list(F_in.shape)} and F_C {list(F_C.shape)} differ")
    B, H, W, C = F_in.shape
    q = T.linear(F_in, p.wq1)
    k = T.linear(F_C, p.wk1)
    v = T.linear(F_in, p.wv1)
    inv = T.exp(T.mul(p.log_alpha, -0.5))

    rows = lambda t: T.reshape(t, (B, H, W * C))  # noqa: E731
    F_v = T.reshape(_attend(rows(q), rows(k), rows(v), inv), (B, H, W, C))

    def cols(t):
        return T.reshape(T.permute(t, (0, 2, 1, 3)), (B, W, H * C))

    F_h = _attend(cols(q), cols(k), cols(v), inv)
    F_h = T.permute(T.reshape(F_h, (B, W, H, C)), (0, 2, 1, 3))
    return T.add(T.mul(T.add(F_v, F_h), 0.5), F_in)


def vanilla_transformer(F_hat: Tensor, p: UptParams) -> Tensor:
    """Channel self-attention: a ``C x C`` map over the flattened pixels."""
    B, H, W, C = F_hat.shape
    flat = T.reshape(F_hat, (B, H * W, C))
    q = T.linear(flat, p.wq2)
    k = T.linear(flat, p.wk2)
    v = T.linear(flat, p.wv2)
    inv = T.exp(T.mul(p.log_beta, -0.5))
    qt = T.permute(q, (0, 2, 1))  # [B, C, HW]
    vt = T.permute(v, (0, 2, 1))
    attn = T.softmax(T.mul(T.matmul(qt, k), inv), axis=-1)  # [B, C, C]
    out = T.permute(T.matmul(attn, vt), (0, 2, 1))
    return T.add(T.reshape(out, (B, H, W, C)), F_hat)


def upt_forward(F_in: Tensor, p: UptParams) -> tuple[Tensor, Tensor]:
    """Returns ``(F_out, F_U)``."""
    if F_in.ndim != 4 or F_in.shape[-1] != p.channels:
        raise ShapeError(f"UPT with {p.channels} channels got input {list(F_in.shape)}")
    F_U = estimate_uncertainty(F_in, p)
    F_C = retrieve_context(F_U, p.bank)
    F_hat = directional_cross_attention(F_in, F_C, p)
    return vanilla_transformer(F_hat, p), F_U


def token_addresses(F_U, memory) -> np.ndarray:
    """Index of the most similar memory token per pixel, ``[B, H', W']``.

    Ties resolve to the lowest index.
    """
    F_U = F_U if isinstance(F_U, Tensor) else Tensor(F_U)
    memory = memory if isinstance(memory, Tensor) else Tensor(memory)
    s = cosine_scores(T.stop_gradient(F_U), memory).data
    B, H, W, _ = F_U.shape
    return np.argmax(s, axis=-1).reshape(B, H, W)


def memory_update(bank: MemoryContextBank, F_U) -> np.ndarray:
    """Momentum-move the addressed memory tokens toward their uncertainty vectors.

    Pixels are applied one after another in batch-major raster order, so a
    token hit ``k`` times ends at
    ``eta**k * m + (1 - eta) * sum_t eta**(k - t) * f_t``.  That closed form
    is evaluated in one pass.  Returns the addresses, flattened.
    """
    F_U = F_U.data if isinstance(F_U, Tensor) else np.asarray(F_U)
    addr = token_addresses(F_U, bank.memory).reshape(-1)
    f = F_U.reshape(-1, F_U.shape[-1]).astype(np.float64)
    eta = float(bank.momentum)
    N = bank.size

    order = np.argsort(addr, kind="stable")
    sorted_addr = addr[order]
    hits = np.bincount(addr, minlength=N)
    starts = np.concatenate([[0], np.cumsum(hits)[:-1]])
    pos = np.arange(addr.size) - starts[sorted_addr]
    remaining = hits[sorted_addr] - 1 - pos  # later hits on the same token

    weights = (1.0 - eta) * np.power(eta, remaining)
    acc = np.zeros((N, f.shape[1]))
    np.add.at(acc, sorted_addr, weights[:, None] * f[order])

    m = bank.memory.data.astype(np.float64)
    touched = hits > 0
    m_new = m.copy()
    m_new[touched] = np.power(eta, hits[touched])[:, None] * m[touched] + acc[touched]
    bank.memory = Tensor(m_new.astype(bank.memory.dtype))
    return addr
