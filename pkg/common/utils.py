"""Utility helpers shared across apps."""

import hashlib

import numpy as np
from tqdm import tqdm

from poro_hdg import settings


def as_points(points):
    """Return ``points`` as a float array whose last axis has length 2."""

    array = np.asarray(points, dtype=float)
    if array.ndim == 1:
        array = array.reshape(1, 2)
    if array.shape[-1] != 2:
        raise ValueError(f"expected 2D points, got shape {array.shape}")
    return array


def broadcast_field(value, shape):
    """Broadcast a lambdified result (possibly a bare scalar) to ``shape``."""

    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()


def fingerprint(*parts):
    """SHA-256 over arrays and plain values, stable across runs."""

    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            digest.update(str(part.dtype).encode())
            digest.update(str(part.shape).encode())
            digest.update(np.ascontiguousarray(part).tobytes())
        else:
            digest.update(repr(part).encode())
    return digest.hexdigest()


def progress(iterable, **kwargs):
    """tqdm wrapper honouring the global progress switch."""

    kwargs.setdefault("disable", not settings.SHOW_PROGRESS)
    kwargs.setdefault("leave", False)
    return tqdm(iterable, **kwargs)


def power_of_two_scale(magnitudes):
    """Reciprocals of ``magnitudes`` rounded to powers of two, so scaling is exact; zeros map to 1."""

    magnitudes = np.asarray(magnitudes, dtype=float)
    scale = np.ones_like(magnitudes)
    positive = magnitudes > 0.0
    scale[positive] = np.exp2(-np.round(np.log2(magnitudes[positive])))
    return scale


def format_float(value):
    if value is None or not np.isfinite(value):
        return "-"
    return f"{value:.2e}"
