"""Binary PGM (P5) and PPM (P6) IO, 8-bit, bit-exact round-trips."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def pgm_bytes(gray: np.ndarray) -> bytes:
    """Encode a (h, w) uint8 array as a binary PGM."""
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError(f"expected a 2-d uint8 array, got {gray.shape} {gray.dtype}")
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()


def ppm_bytes(rgb: np.ndarray) -> bytes:
    """Encode a (h, w, 3) uint8 array as a binary PPM."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected a (h, w, 3) uint8 array, got {rgb.shape} {rgb.dtype}")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(gray))


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(rgb))


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset one byte past the final separator.
    """
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PNM header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(data) and not data[i : i + 1].isspace():
                i += 1
            tokens.append(data[start:i])
            i += 1  # consume the single separator after the token
    return tokens, i


def parse_pnm(data: bytes) -> np.ndarray:
    """Decode P5/P6 bytes to (h, w) or (h, w, 3) uint8."""
    tokens, offset = _read_tokens(data, 4)
    magic, w_raw, h_raw, maxval_raw = tokens
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    w, h, maxval = int(w_raw), int(h_raw), int(maxval_raw)
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = w * h * channels
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise ValueError(f"raster has {len(raster)} bytes, expected {expected}")
    pixels = np.frombuffer(raster, dtype=np.uint8)
    return pixels.reshape((h, w) if channels == 1 else (h, w, 3))


def read_pnm(path: str | Path) -> np.ndarray:
    return parse_pnm(Path(path).read_bytes())
