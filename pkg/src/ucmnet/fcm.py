"""Frequency Convolution Module.

Two residual sub-blocks: a Fourier-domain amplitude refiner that leaves the
phase untouched, followed by a NAF-style gated spatial/channel attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass
class FcmParams:
    amp_w1: Tensor
    amp_b1: Tensor
    amp_w2: Tensor
    amp_b2: Tensor
    expand_w: Tensor
    expand_b: Tensor
    dw_w: Tensor
    dw_b: Tensor
    sca_w: Tensor
    sca_b: Tensor
    proj_w: Tensor
    proj_b: Tensor

    @property
    def channels(self) -> int:
        return self.amp_w1.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int, dtype=np.float32, zero_residual: bool = True) -> "FcmParams":
        """Random init; ``zero_residual`` zeroes the last conv of both sub-blocks
        so the module starts as the identity map."""
        C = channels

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return T.parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)

        def zeros_or_uniform(shape, fan_in):
            if zero_residual:
                return T.parameter(np.zeros(shape), dtype=dtype)
            return uniform(shape, fan_in)

        return cls(
            amp_w1=uniform((C, C), C),
            amp_b1=uniform((C,), C),
            amp_w2=zeros_or_uniform((C, C), C),
            amp_b2=zeros_or_uniform((C,), C),
            expand_w=uniform((C, 2 * C), C),
            expand_b=uniform((2 * C,), C),
            dw_w=uniform((3, 3, 2 * C), 9),
            dw_b=uniform((2 * C,), 9),
            sca_w=uniform((C, C), C),
            sca_b=T.parameter(np.ones(C), dtype=dtype),
            proj_w=zeros_or_uniform((C, C), C),
            proj_b=zeros_or_uniform((C,), C),
        )


def refine_amplitude(amplitude: Tensor, p: FcmParams, n_pixels: int) -> Tensor:
    """Log-gain per half-spectrum bin, squashed into ``[-1, 1]``.

    The amplitude is scaled by ``1/sqrt(n_pixels)`` first so the refiner sees
    the same magnitudes whatever the feature-map size.  The bound keeps
    stacked blocks from compounding gains into overflow.
    """
    a = T.mul(amplitude, 1.0 / np.sqrt(n_pixels))
    h = T.gelu(T.linear(a, p.amp_w1, p.amp_b1))
    return T.tanh(T.linear(h, p.amp_w2, p.amp_b2))


def frequency_enhance(F: Tensor, p: FcmParams) -> Tensor:
    """``F`` plus the frequency residual of an amplitude-only refinement.

    The refined spectrum is ``A * exp(g) * exp(i*phase)`` with the bounded
    log-gain ``g`` from :func:`refine_amplitude`; the residual is its inverse
    transform minus ``F``, i.e. ``irfft2(X * (exp(g) - 1))``.  Because the
    gain is real and positive the phase of every bin is kept exactly.
    """
    amp = T.fft_amplitude(F)
    gain = T.sub(T.exp(refine_amplitude(amp, p, F.shape[-3] * F.shape[-2])), 1.0)
    return T.add(F, T.spectral_filter(F, gain))


def refined_spectrum(F: Tensor, p: FcmParams) -> tuple[T.ComplexSpectrum, T.ComplexSpectrum]:
    """Half spectrum of ``F`` before and after amplitude refinement."""
    X = np.fft.rfft2(F.data, axes=(-3, -2))
    before = T.ComplexSpectrum(np.abs(X), np.angle(X))
    g = refine_amplitude(Tensor(before.amplitude.astype(F.dtype)), p, F.shape[-3] * F.shape[-2]).data
    return before, T.ComplexSpectrum(before.amplitude * np.exp(g), before.phase)


def single_gate(F: Tensor) -> Tensor:
    C2 = F.shape[-1]
    if C2 % 2:
        raise ShapeError(f"single_gate needs an even channel count, got {C2}")
    half = C2 // 2
    a = T.slice_axis(F, -1, 0, half)
    b = T.slice_axis(F, -1, half, C2)
    return T.mul(a, b)


def simplified_channel_attention(F: Tensor, p: FcmParams) -> Tensor:
    pooled = T.mean(F, axis=(1, 2), keepdims=True)
    gate = T.linear(pooled, p.sca_w, p.sca_b)
    return T.mul(F, gate)


def attention_refine(F: Tensor, p: FcmParams) -> Tensor:
    y = T.linear(F, p.expand_w, p.expand_b)
    y = T.depthwise_conv2d(y, p.dw_w, p.dw_b, padding=1)
    y = single_gate(y)
    y = simplified_channel_attention(y, p)
    y = T.linear(y, p.proj_w, p.proj_b)
    return T.add(F, y)


def fcm_forward(F: Tensor, p: FcmParams) -> Tensor:
    """Frequency enhancement then gated attention; ``[B,H,W,C]`` in and out."""
    if F.ndim != 4 or F.shape[-1] != p.channels:
        raise ShapeError(f"FCM with {p.channels} channels got input {list(F.shape)}")
    return attention_refine(frequency_enhance(F, p), p)
