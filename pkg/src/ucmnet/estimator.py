"""scikit-learn style wrapper: ``fit(degraded, clean)`` / ``predict(degraded)``."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .config import RunConfig, load_config
from .metrics import batch_scores
from .network import UCMNet
from .trainer import TrainConfig, Trainer, restore
from .validation import check_images, check_is_fitted, check_pairs


class UCMNetRestorer(RegressorMixin, BaseEstimator):
    """Restores under-display-camera images.

    ``X`` holds degraded images and ``y`` the clean targets, both
    ``[N, H, W, 3]`` in ``[0, 1]``.  ``preset`` picks the architecture; the
    remaining arguments override individual training settings.
    ``score`` is the mean PSNR in dB, so higher is better.
    """

    def __init__(
        self,
        preset: str = "desk",
        steps: int = 1000,
        lr: float = 2e-4,
        batch_size: int = 4,
        patch_size: int = 64,
        noise_std: float = 1e-3,
        bank_size: int | None = None,
        loss_variant: str = "psnr-total",
        dtype: str = "float32",
        random_state: int = 0,
    ):
        self.preset = preset
        self.steps = steps
        self.lr = lr
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.noise_std = noise_std
        self.bank_size = bank_size
        self.loss_variant = loss_variant
        self.dtype = dtype
        self.random_state = random_state

    def _run_config(self) -> RunConfig:
        base = load_config(self.preset)
        model = base.model if self.bank_size is None else dataclasses.replace(base.model, bank_size=self.bank_size)
        train = TrainConfig(
            lr=self.lr,
            steps=self.steps,
            batch_size=self.batch_size,
            patch_size=self.patch_size,
            noise_std=self.noise_std,
            seed=self.random_state,
            dtype=self.dtype,
        )
        loss = dataclasses.replace(base.loss, variant=self.loss_variant)
        return RunConfig(model, loss, train)

    def fit(self, X, y):
        X, y = check_pairs(X, y)
        cfg = self._run_config()
        self.run_config_ = cfg
        self.model_ = UCMNet(cfg.model, seed=self.random_state, dtype=np.dtype(self.dtype))
        self.trainer_ = Trainer(self.model_, cfg.loss, cfg.train)
        self.history_ = self.trainer_.fit(X, y)
        self.n_features_in_ = 3
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        return restore(self.model_, check_images(X))

    def score(self, X, y, sample_weight=None) -> float:
        X, y = check_pairs(X, y)
        psnr, _ = batch_scores(self.predict(X), y)
        return psnr
