"""Synthetic test content so experiments run without licensed sequences."""

import numpy as np

from .linalg import make_rng

KINDS = ("moving-square",)


def _ramp(u, lo, hi, width=0.6):
    """Logistic step up at ``lo`` and down at ``hi``."""
    return 1.0 / (1.0 + np.exp(-(u - lo) / width)) - 1.0 / (1.0 + np.exp(-(u - hi) / width))


def moving_square(frames=8, height=32, width=32, noise=0.0, seed=0, speed=1.0):
    """A bright square drifting over a smooth gradient, ``(T, H, W)`` in [0, 255].

    Per frame the square moves ``speed`` pixels right and ``speed / 2``
    down; its edges are slightly softened.  Gaussian noise of std ``noise`` is added
    when requested (seeded), then values are rounded to 8 bits.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    background = 60.0 + 80.0 * xx / max(width - 1, 1) + 40.0 * yy / max(height - 1, 1)
    side = max(2.0, 0.35 * min(height, width))
    out = np.empty((frames, height, width))
    for t in range(frames):
        r0 = 0.2 * height + 0.5 * speed * t
        c0 = 0.15 * width + speed * t
        mask = _ramp(yy, r0, r0 + side) * _ramp(xx, c0, c0 + side)
        out[t] = background + (225.0 - background) * mask
    if noise > 0:
        out += noise * make_rng(seed).standard_normal(out.shape)
    return np.clip(np.round(out), 0, 255)


def synthesize(kind="moving-square", frames=8, height=32, width=32, noise=0.0, seed=0):
    if kind != "moving-square":
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {', '.join(KINDS)}")
    if frames < 1 or height < 1 or width < 1:
        raise ValueError("synthetic video needs positive dimensions")
    return moving_square(frames, height, width, noise, seed)
