"""Synthetic under-display-camera degradations and paired dataset generation.

Stand-ins for POLED/TOLED/SYNTH-style data: PSF blur (optionally wider near
the border), panel transmittance, per-channel colour gain and additive
Gaussian sensor noise.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import j1

from .imageio import read_png, write_png

PSF_KINDS = ("gaussian", "airy-like", "two-lobe")


def make_psf(kind: str, size: int, width: float) -> np.ndarray:
    """Normalized ``size x size`` point spread function."""
    if size < 3 or size % 2 == 0:
        raise ValueError(f"PSF size must be odd and >= 3, got {size}")
    if width <= 0:
        raise ValueError(f"PSF width must be positive, got {width}")
    r = size // 2
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    rho = np.hypot(x, y)
    if kind == "gaussian":
        psf = np.exp(-(rho**2) / (2 * width**2))
    elif kind == "airy-like":
        v = np.pi * rho / width
        with np.errstate(invalid="ignore", divide="ignore"):
            psf = np.where(v == 0, 1.0, (2 * j1(v) / v) ** 2)
    elif kind == "two-lobe":
        core = np.exp(-(rho**2) / (2 * width**2))
        off = min(max(2.0 * width, 1.0), r)
        lobes = np.exp(-((x - off) ** 2 + y**2) / (2 * width**2)) + np.exp(-((x + off) ** 2 + y**2) / (2 * width**2))
        psf = core + 0.25 * lobes
    else:
        raise ValueError(f"unknown PSF kind {kind!r}; expected one of {PSF_KINDS}")
    return psf / psf.sum()


def delta_psf(size: int = 3) -> np.ndarray:
    psf = np.zeros((size, size))
    psf[size // 2, size // 2] = 1.0
    return psf


@dataclass
class DegradationSpec:
    psf: np.ndarray
    transmittance: float = 1.0
    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise_std: float = 0.0
    border_psf: np.ndarray | None = None
    border_fraction: float = 0.25
    seed: int = 0
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.psf = np.asarray(self.psf, dtype=np.float64)
        if np.any(self.psf < 0) or abs(self.psf.sum() - 1.0) > 1e-9:
            raise ValueError("PSF must be non-negative and sum to 1")
        if not 0.0 < self.transmittance <= 1.0:
            raise ValueError(f"transmittance must lie in (0, 1], got {self.transmittance}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.border_psf is not None:
            self.border_psf = np.asarray(self.border_psf, dtype=np.float64)
            if abs(self.border_psf.sum() - 1.0) > 1e-9:
                raise ValueError("border PSF must sum to 1")

    def summary(self) -> dict:
        return {
            "preset": self.name,
            "transmittance": self.transmittance,
            "gain": list(self.gain),
            "noise_std": self.noise_std,
            "psf_size": self.psf.shape[0],
            "spatially_varying": self.border_psf is not None,
            **self.meta,
        }


def preset(name: str, seed: int = 0) -> DegradationSpec:
    """Panel presets: ``poled-like`` (3% transmittance, colour shift, noise),
    ``toled-like`` (20% transmittance, wide blur) and ``synth-like``."""
    if name == "poled-like":
        return DegradationSpec(
            psf=make_psf("gaussian", 5, 0.8),
            transmittance=0.03,
            gain=(1.0, 0.82, 1.12),
            noise_std=0.002,
            seed=seed,
            name=name,
            meta={"psf_kind": "gaussian", "psf_width": 0.8},
        )
    if name == "toled-like":
        return DegradationSpec(
            psf=make_psf("two-lobe", 9, 1.2),
            transmittance=0.20,
            gain=(1.0, 0.97, 0.92),
            noise_std=0.002,
            border_psf=make_psf("two-lobe", 9, 1.8),
            seed=seed,
            name=name,
            meta={"psf_kind": "two-lobe", "psf_width": 1.2, "border_width": 1.8},
        )
    if name == "synth-like":
        return DegradationSpec(
            psf=make_psf("airy-like", 11, 1.5),
            transmittance=0.6,
            noise_std=0.003,
            border_psf=make_psf("airy-like", 11, 2.2),
            seed=seed,
            name=name,
            meta={"psf_kind": "airy-like", "psf_width": 1.5, "border_width": 2.2},
        )
    raise ValueError(f"unknown preset {name!r}; expected poled-like, toled-like or synth-like")


PRESET_NAMES = ("poled-like", "toled-like", "synth-like")


def blur(image: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """True convolution of every channel with ``psf``, reflect-padded."""
    k = psf.shape[0]
    r = k // 2
    padded = np.pad(image, ((r, r), (r, r), (0, 0)), mode="reflect")
    H, W = image.shape[:2]
    out = np.zeros_like(image, dtype=np.float64)
    flipped = psf[::-1, ::-1]
    for i in range(k):
        for j in range(k):
            if flipped[i, j] != 0:
                out += flipped[i, j] * padded[i : i + H, j : j + W]
    return out


def border_mask(height: int, width: int, fraction: float) -> np.ndarray:
    """True where a pixel lies in the outer band of relative thickness ``fraction``."""
    by, bx = int(round(fraction * height)), int(round(fraction * width))
    mask = np.ones((height, width), dtype=bool)
    mask[by : height - by, bx : width - bx] = False
    return mask


def degrade(clean: np.ndarray, spec: DegradationSpec, rng: np.random.Generator | None = None, clip: bool = True) -> np.ndarray:
    """Apply the panel model to an ``[H, W, 3]`` image in ``[0, 1]``."""
    clean = np.asarray(clean, dtype=np.float64)
    blurred = blur(clean, spec.psf)
    if spec.border_psf is not None:
        wide = blur(clean, spec.border_psf)
        mask = border_mask(*clean.shape[:2], spec.border_fraction)
        blurred = np.where(mask[..., None], wide, blurred)
    out = spec.transmittance * np.asarray(spec.gain) * blurred
    if spec.noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        out = out + rng.normal(0.0, spec.noise_std, size=out.shape)
    return np.clip(out, 0.0, 1.0) if clip else out


def procedural_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Gradient background, flat rectangles and thin stroke glyphs."""
    H = W = size
    yy, xx = np.mgrid[0:H, 0:W] / max(size - 1, 1)
    c0, c1, c2 = rng.uniform(0.1, 0.9, size=(3, 3))
    img = c0 + np.outer(xx.ravel(), c1 - c0).reshape(H, W, 3) * 0.6 + np.outer(yy.ravel(), c2 - c0).reshape(H, W, 3) * 0.4
    for _ in range(rng.integers(3, 7)):
        h, w = rng.integers(size // 8, size // 2, size=2)
        y0, x0 = rng.integers(0, H - h), rng.integers(0, W - w)
        img[y0 : y0 + h, x0 : x0 + w] = rng.uniform(0.0, 1.0, size=3)
    for _ in range(rng.integers(6, 14)):
        color = rng.uniform(0.0, 1.0, size=3)
        y0, x0 = rng.integers(2, H - 2), rng.integers(2, W - 2)
        length = rng.integers(4, size // 3)
        if rng.random() < 0.5:
            img[y0 : y0 + 1, x0 : min(W, x0 + length)] = color
        else:
            img[y0 : min(H, y0 + length), x0 : x0 + 1] = color
    return np.clip(img, 0.0, 1.0)


def _load_source_images(directory: Path, size: int) -> list[np.ndarray]:
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no PNG images in {directory}")
    images = []
    for f in files:
        img = read_png(f)
        h, w = img.shape[:2]
        if h < size or w < size:
            raise ValueError(f"{f} is smaller than {size}x{size}")
        y0, x0 = (h - size) // 2, (w - size) // 2
        images.append(img[y0 : y0 + size, x0 : x0 + size])
    return images


def generate_dataset(
    n: int,
    spec: DegradationSpec,
    out_dir: str | os.PathLike,
    source: str | os.PathLike | None = None,
    size: int = 64,
    seed: int | None = None,
) -> Path:
    """Write ``n`` clean/degraded PNG pairs plus ``manifest.tsv``.

    Sample ``i`` draws all of its randomness from ``(seed, i)``, so output is
    independent of generation order.  ``source`` is a directory of PNGs to
    centre-crop; without it images are procedural.
    """
    seed = spec.seed if seed is None else seed
    out = Path(out_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "degraded").mkdir(parents=True, exist_ok=True)
    sources = _load_source_images(Path(source), size) if source is not None else None

    lines = ["# ucmnet synthetic pairs"]
    lines += [f"# {k}={v}" for k, v in spec.summary().items()]
    lines.append(f"# seed={seed}")
    lines.append(f"# size={size}")
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        clean = sources[i % len(sources)] if sources is not None else procedural_image(rng, size)
        clean = np.round(clean * 255.0) / 255.0
        degraded = degrade(clean, spec, rng)
        clean_rel, deg_rel = f"clean/{i:05d}.png", f"degraded/{i:05d}.png"
        write_png(out / clean_rel, clean)
        write_png(out / deg_rel, degraded)
        lines.append(f"{i}\t{clean_rel}\t{deg_rel}")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def read_manifest(path: str | os.PathLike) -> tuple[dict, list[tuple[int, Path, Path]]]:
    """Parse a manifest into ``(header, [(index, clean, degraded), ...])``.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    header, pairs = {}, []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                header[k.strip()] = v.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected index<TAB>clean<TAB>degraded")
        pairs.append((int(parts[0]), base / parts[1], base / parts[2]))
    return header, pairs


def load_pairs(manifest: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Load every pair listed in a manifest as ``(degraded, clean)`` stacks."""
    _, pairs = read_manifest(manifest)
    clean = np.stack([read_png(c) for _, c, _ in pairs])
    degraded = np.stack([read_png(d) for _, _, d in pairs])
    return degraded, clean
