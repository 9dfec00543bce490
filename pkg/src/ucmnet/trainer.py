"""Adam with linear decay, the training step and the training loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import tensor as T
from .loss import LossConfig, total_loss
from .metrics import batch_scores
from .network import UCMNet
from .tensor import Tensor
from .upt import memory_update

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    steps: int = 2000
    batch_size: int = 4
    patch_size: int = 64
    noise_std: float = 1e-3
    seed: int = 0
    dtype: str = "float32"
    checkpoint_every: int = 0
    holdout: int = 8

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.steps < 1 or self.batch_size < 1 or self.patch_size < 1:
            raise ValueError("steps, batch_size and patch_size must be positive")
        if self.noise_std < 0 or self.lr < 0:
            raise ValueError("noise_std and lr must be >= 0")


@dataclass
class OptimizerState:
    """Adam moments plus the linear learning-rate schedule."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: int = 1
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: Mapping[str, Tensor], lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8, total_steps=1):
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            total_steps=total_steps,
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )

    def lr_at(self, t: int) -> float:
        return self.lr * max(0.0, 1.0 - t / self.total_steps)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, Tensor], state: OptimizerState) -> float:
    """Bias-corrected Adam update in place; returns the learning rate used."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g.data)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    t = state.step
    lr = state.lr_at(t)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** (t + 1)
    c2 = 1.0 - b2 ** (t + 1)
    for name, p in params.items():
        g = grads[name].data
        if g.shape != p.shape:
            raise TrainingError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        if lr:
            p.data = (p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    state.step = t + 1
    return lr


class Trainer:
    """Owns the optimizer state and the RNG used for batching and input noise."""

    def __init__(
        self,
        model: UCMNet,
        loss_config: LossConfig | None = None,
        config: TrainConfig | None = None,
        optimizer: OptimizerState | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.model = model
        self.loss_config = loss_config or LossConfig()
        self.config = config or TrainConfig()
        c = self.config
        self.optimizer = optimizer or OptimizerState.create(
            model.parameters(), c.lr, c.beta1, c.beta2, c.eps, c.steps
        )
        self.rng = rng if rng is not None else np.random.default_rng(c.seed)

    @property
    def step(self) -> int:
        return self.optimizer.step

    def sample_batch(self, degraded: np.ndarray, clean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n, H, W, _ = clean.shape
        ps = min(self.config.patch_size, H, W)
        idx = self.rng.integers(0, n, size=self.config.batch_size)
        ys = self.rng.integers(0, H - ps + 1, size=idx.size)
        xs = self.rng.integers(0, W - ps + 1, size=idx.size)
        x = np.stack([degraded[i, y : y + ps, x_ : x_ + ps] for i, y, x_ in zip(idx, ys, xs)])
        y = np.stack([clean[i, y : y + ps, x_ : x_ + ps] for i, y, x_ in zip(idx, ys, xs)])
        return x, y

    def train_step(self, degraded: np.ndarray, clean: np.ndarray, noise_std: float | None = None) -> dict:
        """One optimization step on a batch; the inputs are never modified."""
        sigma = self.config.noise_std if noise_std is None else noise_std
        dtype = self.model.dtype
        x = np.asarray(degraded, dtype=dtype)
        if sigma > 0:
            x = (x + self.rng.normal(0.0, sigma, size=x.shape)).astype(dtype)
        target = np.asarray(clean, dtype=dtype)

        params = self.model.parameters()
        with T.GradientProgram() as prog:
            out, stages = self.model.forward(Tensor(x))
            loss, terms = total_loss(stages, target, out, self.loss_config)
        grads = prog.gradient(loss, params)
        grad_norm = float(np.sqrt(np.sum([np.sum(g.data.astype(np.float64) ** 2) for g in grads.values()])))
        lr = adam_step(params, grads, self.optimizer)
        for st, bank in zip(stages, self.model.banks()):
            memory_update(bank, st.features.data)
        return {"step": self.optimizer.step, "lr": lr, "loss": float(loss.data), **terms, "grad_norm": grad_norm}

    def fit(
        self,
        degraded: np.ndarray,
        clean: np.ndarray,
        steps: int | None = None,
        log_file=None,
        on_checkpoint: Callable[["Trainer"], None] | None = None,
    ) -> list[dict]:
        """Run until ``steps`` total optimizer steps (default: the schedule length).

        Each step's record is appended to ``log_file`` as a JSON line.
        """
        end = self.config.steps if steps is None else steps
        every = self.config.checkpoint_every
        history = []
        while self.optimizer.step < end:
            x, y = self.sample_batch(degraded, clean)
            rec = self.train_step(x, y)
            history.append(rec)
            if log_file is not None:
                log_file.write(json.dumps(rec) + "\n")
            if rec["step"] % 100 == 0:
                logger.info("step %d loss %.4f lr %.2e", rec["step"], rec["loss"], rec["lr"])
            if on_checkpoint is not None and every and rec["step"] % every == 0:
                on_checkpoint(self)
        return history


def restore(model: UCMNet, images: np.ndarray) -> np.ndarray:
    """Run the network on ``[N, H, W, 3]`` images one at a time, clipped to ``[0, 1]``."""
    outs = []
    for img in np.asarray(images):
        y, _ = model.forward(np.asarray(img, dtype=model.dtype)[None])
        outs.append(np.clip(y.data[0], 0.0, 1.0))
    return np.stack(outs)


def evaluate(model: UCMNet, degraded: np.ndarray, clean: np.ndarray) -> dict:
    """PSNR/SSIM of restored and of raw degraded inputs against the clean images."""
    restored = restore(model, degraded)
    p_out, s_out = batch_scores(restored, clean)
    p_in, s_in = batch_scores(degraded, clean)
    return {"psnr": p_out, "ssim": s_out, "psnr_input": p_in, "ssim_input": s_in}
