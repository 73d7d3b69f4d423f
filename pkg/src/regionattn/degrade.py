"""Seeded HR -> LR degradation and PSNR.

A simplified single-order chain: separable Gaussian blur (symmetric border
padding, kernel radius ceil(3*sigma)), area-average downsampling by an
integer factor, additive seeded Gaussian noise clipped to [0, 1], optional
8-bit quantization.  Everything is f64 and driven by the shared seeded
generator, so identical (input, config, seed) gives bitwise-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pnm
from .rng import SeededRng, derive

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class DegradeConfig:
    scale: int = 4
    blur_sigma: float = 1.2
    noise_sigma: float = 0.02
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1: {self.scale}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("sigmas must be >= 0")


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major f64 intensities in [0, 1], shape (height, width, channels)."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3: {self.channels}")
        if data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {data.shape} != ({self.height}, {self.width}, {self.channels})"
            )
        if not np.isfinite(data).all() or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("intensities must be finite and in [0, 1]")

    @classmethod
    def from_array(cls, data: np.ndarray) -> "ImageBuffer":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        h, w, c = data.shape
        return cls(width=w, height=h, channels=c, data=data)

    @classmethod
    def from_uint8(cls, pixels: np.ndarray) -> "ImageBuffer":
        return cls.from_array(pixels.astype(np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.rint(np.clip(self.data, 0.0, 1.0) * 255.0).astype(np.uint8)


def load_image(path: str | Path) -> ImageBuffer:
    return ImageBuffer.from_uint8(pnm.read_pnm(path))


def save_image(image: ImageBuffer, path: str | Path) -> None:
    pixels = image.to_uint8()
    if image.channels == 1:
        pnm.write_pgm(path, pixels[:, :, 0])
    else:
        pnm.write_ppm(path, pixels)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian taps at integer offsets, radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _blur_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (kernel.size - 1) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="symmetric")
    out = np.zeros_like(data)
    length = data.shape[axis]
    for tap_index, tap in enumerate(kernel):  # fixed left-to-right accumulation
        window = np.take(padded, np.arange(tap_index, tap_index + length), axis=axis)
        out += tap * window
    return out


def _blur(data: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return data
    kernel = gaussian_kernel(sigma)
    return _blur_axis(_blur_axis(data, kernel, axis=0), kernel, axis=1)


def _downsample_area(data: np.ndarray, scale: int) -> np.ndarray:
    """Mean over scale x scale blocks; trailing rows/cols beyond a full block drop."""
    if scale == 1:
        return data
    h, w, c = data.shape
    out_h, out_w = h // scale, w // scale
    cropped = data[: out_h * scale, : out_w * scale]
    return cropped.reshape(out_h, scale, out_w, scale, c).mean(axis=(1, 3))


def degrade(hr: ImageBuffer, cfg: DegradeConfig = DegradeConfig()) -> ImageBuffer:
    """Run the degradation chain; deterministic per (input, config, seed)."""
    if hr.height < cfg.scale or hr.width < cfg.scale:
        raise ValueError(
            f"image {hr.width}x{hr.height} is smaller than scale {cfg.scale}"
        )
    identity = (
        cfg.scale == 1 and cfg.blur_sigma == 0.0 and cfg.noise_sigma == 0.0 and not cfg.quantize
    )
    if identity:
        return ImageBuffer.from_array(hr.data.copy())
    data = _blur(hr.data, cfg.blur_sigma)
    data = _downsample_area(data, cfg.scale)
    if cfg.noise_sigma > 0.0:
        rng = SeededRng(derive(cfg.seed, "degrade-noise"))
        noise = rng.normals(data.size).reshape(data.shape)
        data = data + cfg.noise_sigma * noise
    data = np.clip(data, 0.0, 1.0)
    if cfg.quantize:
        data = np.rint(data * 255.0) / 255.0
    return ImageBuffer.from_array(data)


def upsample_nearest(image: ImageBuffer, scale: int) -> ImageBuffer:
    """Nearest-neighbor upsampling by an integer factor."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1: {scale}")
    data = np.repeat(np.repeat(image.data, scale, axis=0), scale, axis=1)
    return ImageBuffer.from_array(data)


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10*log10(1/MSE) on the [0, 1] scale, capped at 100 dB (MSE 0 hits the cap)."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height}x{a.channels} vs "
            f"{b.width}x{b.height}x{b.channels}"
        )
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))
