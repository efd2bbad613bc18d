"""Perceptual l1 weights from the JPEG luminance quantization table."""

from __future__ import annotations

import numpy as np

from .linalg import vec

__all__ = [
    "JPEG_LUMINANCE",
    "jpeg_luminance_q",
    "flip_transpose",
    "interpolate_q",
    "perceptual_weights",
    "normalize_weights",
    "extend_temporal",
    "load_quant_table",
]

# ITU-T T.81 Annex K, Table K.1
JPEG_LUMINANCE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=float,
)
JPEG_LUMINANCE.flags.writeable = False


def jpeg_luminance_q():
    return JPEG_LUMINANCE.copy()


def flip_transpose(q):
    """``D q^T D`` with ``D`` the exchange matrix: ``out[i, j] = q[n-1-j, n-1-i]``."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("quantization table must be square")
    D = np.fliplr(np.eye(q.shape[0]))
    return D @ q.T @ D


def interpolate_q(q, size):
    """Bilinear resampling of a square table to ``size x size``.

    Table entries are treated as samples at the cell centers of a uniform
    grid on the unit square; samples beyond the outermost centers are
    clamped to the border values.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if size == n:
        return q.copy()
    src = np.arange(n)
    pos = (np.arange(size) + 0.5) * n / size - 0.5
    # np.interp clamps outside [src[0], src[-1]]
    rows = np.stack([np.interp(pos, src, q[:, j]) for j in range(n)], axis=1)
    return np.stack([np.interp(pos, src, rows[i]) for i in range(size)], axis=0)


def perceptual_weights(q, block_size=8):
    """Diagonal of ``W`` for one ``B x B`` frame, column-major over (row, col).

    ``W^{-1} = Diag(vec(D q^T D))``, after resampling ``q`` to ``B x B``
    when needed.  Entry ``(i, j)`` weights the DCT coefficient with vertical
    frequency ``i`` and horizontal frequency ``j``.
    """
    block_size = int(block_size)
    if block_size < 2:
        raise ValueError(f"block size must be >= 2, got {block_size}")
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("quantization table must be square")
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise ValueError("quantization entries must be positive and finite")
    q = interpolate_q(q, block_size)
    return 1.0 / vec(flip_transpose(q))


def normalize_weights(w):
    """Rescale so the largest weight is 1."""
    w = np.asarray(w, dtype=float)
    return w / w.max()


def extend_temporal(w, gop):
    """Diagonal of ``I_T kron Diag(w)``: ``w`` tiled ``T`` times, time slowest."""
    gop = int(gop)
    if gop < 1:
        raise ValueError(f"GoP length must be >= 1, got {gop}")
    return np.tile(np.asarray(w, dtype=float), gop)


def load_quant_table(path):
    """Read a square table of whitespace-separated positive numbers, row-major."""
    with open(path) as fh:
        values = np.array(fh.read().split(), dtype=float)
    n = int(round(np.sqrt(values.size)))
    if n * n != values.size or n < 2:
        raise ValueError(f"{path}: expected a square number of entries, got {values.size}")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: quantization entries must be positive")
    return values.reshape(n, n)
