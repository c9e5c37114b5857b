"""Binary portable pixmap (P6) reading and writing.

Frames travel as float32 arrays in [0, 1]; on disk they are 8-bit P6, which
keeps sequence generation byte-deterministic with zero image dependencies.
"""

from __future__ import annotations

import numpy as np


def _next_token(fh):
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("unexpected end of PPM header")
        if ch == b"#":  # comment runs to end of line
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_ppm(path):
    with open(path, "rb") as fh:
        if _next_token(fh) != b"P6":
            raise ValueError(f"{path}: not a binary P6 pixmap")
        width = int(_next_token(fh))
        height = int(_next_token(fh))
        maxval = int(_next_token(fh))
        if maxval != 255:
            raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
        raw = fh.read(width * height * 3)
        if len(raw) != width * height * 3:
            raise ValueError(f"{path}: truncated pixel data")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return img.astype(np.float32) / 255.0


def write_ppm(path, img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H,W,3) image, got {img.shape}")
    if img.dtype != np.uint8:
        img = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    height, width, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
