"""8-bit grayscale images as ``uint8`` arrays of shape (height, width), plus
binary PGM (P5) reading and writing."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class PGMError(ValueError):
    pass


def as_gray(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2 or a.dtype != np.uint8:
        raise ValueError(f"expected a 2-D uint8 image, got {a.dtype} {a.shape}")
    return a


def encode_pgm(img: np.ndarray) -> bytes:
    a = as_gray(img)
    h, w = a.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(a).tobytes()


_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def decode_pgm(data: bytes) -> np.ndarray:
    m = _HEADER.match(data)
    if m is None:
        raise PGMError("not a binary PGM (P5) image")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PGMError(f"only 8-bit PGM is supported (maxval {maxval})")
    body = data[m.end() :]
    if len(body) != w * h:
        raise PGMError(f"expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def crop(img: np.ndarray, left: int, top: int, right: int, bottom: int) -> np.ndarray:
    h, w = img.shape
    left, top = max(0, left), max(0, top)
    right, bottom = min(w, right), min(h, bottom)
    return img[top:bottom, left:right]


def warp_similarity(img: np.ndarray, scale: float, angle: float, center=None, fill: int = 0) -> np.ndarray:
    """Resample ``img`` under a rotation/scale about ``center`` (bilinear).

    Output pixel q takes the value of the source at A^-1 (q - c) + c where
    A = scale * R(angle) in (u, v) image coordinates.
    """
    a = as_gray(img).astype(np.float64)
    h, w = a.shape
    cu, cv = ((w - 1) / 2.0, (h - 1) / 2.0) if center is None else center
    vv, uu = np.mgrid[0:h, 0:w].astype(np.float64)
    c, s = np.cos(angle) / scale, np.sin(angle) / scale
    du, dv = uu - cu, vv - cv
    su = c * du + s * dv + cu
    sv = -s * du + c * dv + cv
    eps = 1e-9
    inside = (su >= -eps) & (sv >= -eps) & (su <= w - 1 + eps) & (sv <= h - 1 + eps)
    u0c = np.clip(np.floor(su), 0, max(w - 2, 0)).astype(np.int64)
    v0c = np.clip(np.floor(sv), 0, max(h - 2, 0)).astype(np.int64)
    fu, fv = np.clip(su - u0c, 0, 1), np.clip(sv - v0c, 0, 1)
    top = a[v0c, u0c] * (1 - fu) + a[v0c, u0c + 1] * fu
    bot = a[v0c + 1, u0c] * (1 - fu) + a[v0c + 1, u0c + 1] * fu
    out = np.where(inside, top * (1 - fv) + bot * fv, fill)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
