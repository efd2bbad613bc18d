"""Cube partitioning, Kronecker sensing configurations and parallel recovery."""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .linalg import (
    ComposedOperator,
    KroneckerOperator,
    MatrixOperator,
    dct_matrix,
    derive_seed,
    gaussian_sensing,
    make_rng,
)
from .solvers import SolveOptions, SolveReport, irls, rwl1, weighted_bp
from .weighting import (
    JPEG_LUMINANCE,
    extend_temporal,
    normalize_weights,
    perceptual_weights,
)

__all__ = [
    "Variant",
    "Weighting",
    "PadMode",
    "SensingConfig",
    "SensingOperators",
    "Cube",
    "CubeResult",
    "partition_gop",
    "reassemble",
    "build_operators",
    "cube_weights",
    "cube_vec",
    "cube_unvec",
    "sample_cube",
    "sample_gop",
    "reconstruct_cube",
    "reconstruct_gop",
    "sense_and_reconstruct",
]

CENTER = 128.0


class Variant(str, enum.Enum):
    CS_INDEPENDENT = "cs-independent"
    KCS = "kcs"
    GLOBAL_KCS = "global-kcs"
    CUBE3D = "cube3d"

    @property
    def code(self):
        return list(Variant).index(self)


class Weighting(str, enum.Enum):
    NONE = "none"
    PERCEPTUAL = "perceptual"
    RWL1 = "rwl1"
    IRLS = "irls"


class PadMode(str, enum.Enum):
    ERROR = "error"
    EDGE = "edge"


def _round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SensingConfig:
    """A sensing structure plus rate, geometry and seed.

    ``quant`` optionally overrides the JPEG luminance table (as a tuple of
    row tuples, so the config stays hashable).
    """

    variant: Variant = Variant.KCS
    rate: float = 0.5
    block_size: int = 8
    gop: int = 8
    seed: int = 0
    weighting: Weighting = Weighting.NONE
    shared_phi: bool = True
    options: SolveOptions = field(default_factory=SolveOptions)
    quant: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "weighting", Weighting(self.weighting))
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"rate must be in (0, 1], got {self.rate}")
        if self.block_size < 2:
            raise ValueError(f"block size must be >= 2, got {self.block_size}")
        if self.gop < 1:
            raise ValueError(f"GoP length must be >= 1, got {self.gop}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        b2 = self.block_size**2
        if self.variant is Variant.CUBE3D:
            if self.rate * b2 * self.gop < 1:
                raise ValueError("rate too low: fewer than one measurement per cube")
        elif self.rate * b2 < 1:
            raise ValueError("rate too low: fewer than one measurement per frame")

    def measurement_counts(self, gop_len=None):
        """Per-factor measurement counts ``(m_spatial, m_temporal, total)``."""
        T = self.gop if gop_len is None else gop_len
        b2 = self.block_size**2
        if self.variant is Variant.CUBE3D:
            M = max(1, _round_half_up(self.rate * b2 * T))
            return None, None, M
        if self.variant is Variant.GLOBAL_KCS:
            r = math.sqrt(self.rate)
            ms = min(b2, max(1, _round_half_up(r * b2)))
            mt = min(T, max(1, _round_half_up(r * T)))
            return ms, mt, ms * mt
        ms = max(1, _round_half_up(self.rate * b2))
        return ms, T, ms * T


@dataclass(frozen=True)
class SensingOperators:
    phi: object
    psi: object
    theta: object


@lru_cache(maxsize=64)
def build_operators(cfg, gop_len=None, cube_index=0):
    """Sensing ``phi``, sparsifying ``psi`` and ``theta = phi psi`` for one cube.

    With ``cfg.shared_phi`` every cube gets the same matrices; otherwise the
    draw is keyed on ``cube_index``.  Cubes are vectorized frame by frame
    (time slowest), each frame column-major.
    """
    T = cfg.gop if gop_len is None else int(gop_len)
    B = cfg.block_size
    key = (cfg.seed, cfg.variant.code) if cfg.shared_phi else (cfg.seed, cube_index, cfg.variant.code)
    rng = make_rng(derive_seed(*key))
    ms, mt, M = cfg.measurement_counts(T)

    D = dct_matrix(B)
    Dt = dct_matrix(T)
    psi_s = np.kron(D, D)
    It = np.eye(T)
    v = cfg.variant
    if v is Variant.CUBE3D:
        phi3 = gaussian_sensing(M, B * B * T, rng)
        phi = MatrixOperator(phi3)
        psi = KroneckerOperator([Dt, D, D])
        return SensingOperators(phi, psi, ComposedOperator(phi, psi))

    phi_s = gaussian_sensing(ms, B * B, rng)
    theta_s = phi_s @ psi_s
    if v is Variant.CS_INDEPENDENT:
        return SensingOperators(
            KroneckerOperator([It, phi_s]),
            KroneckerOperator([It, D, D]),
            KroneckerOperator([It, theta_s]),
        )
    if v is Variant.KCS:
        return SensingOperators(
            KroneckerOperator([It, phi_s]),
            KroneckerOperator([Dt, D, D]),
            KroneckerOperator([Dt, theta_s]),
        )
    phi_t = gaussian_sensing(mt, T, rng)
    return SensingOperators(
        KroneckerOperator([phi_t, phi_s]),
        KroneckerOperator([Dt, D, D]),
        KroneckerOperator([phi_t @ Dt, theta_s]),
    )


@lru_cache(maxsize=16)
def cube_weights(block_size, gop_len, quant=None):
    """Perceptual weights for a ``B x B x T`` cube, normalized to max 1."""
    q = JPEG_LUMINANCE if quant is None else np.array(quant, dtype=float)
    w = extend_temporal(normalize_weights(perceptual_weights(q, block_size)), gop_len)
    w.flags.writeable = False
    return w


@dataclass
class Cube:
    data: np.ndarray
    origin: tuple
    index: int


@dataclass
class CubeResult:
    reconstructed: np.ndarray
    report: SolveReport
    wall_time: float
    index: int = 0


def cube_vec(data):
    """``(T, B, B)`` cube to vector: frames time-slowest, each column-major."""
    return np.ascontiguousarray(np.asarray(data, dtype=float).transpose(0, 2, 1)).reshape(-1)


def cube_unvec(x, block_size, gop_len):
    return np.asarray(x).reshape(gop_len, block_size, block_size).transpose(0, 2, 1).copy()


def _padded_dims(h, w, B):
    return -(-h // B) * B, -(-w // B) * B


def partition_gop(gop, block_size, pad_mode=PadMode.ERROR):
    """Tile a ``(T, H, W)`` GoP into ``B x B x T`` cubes in raster order."""
    gop = np.asarray(gop, dtype=float)
    if gop.ndim != 3 or gop.shape[0] < 1:
        raise ValueError("a GoP is a (T, H, W) array with T >= 1")
    B = int(block_size)
    if B < 2:
        raise ValueError(f"block size must be >= 2, got {B}")
    T, H, W = gop.shape
    pad_mode = PadMode(pad_mode)
    if H % B or W % B:
        if pad_mode is PadMode.ERROR:
            raise ValueError(f"frame size {H}x{W} is not a multiple of block size {B}")
        Hp, Wp = _padded_dims(H, W, B)
        gop = np.pad(gop, ((0, 0), (0, Hp - H), (0, Wp - W)), mode="edge")
    cubes = []
    for r in range(0, gop.shape[1], B):
        for c in range(0, gop.shape[2], B):
            cubes.append(Cube(gop[:, r : r + B, c : c + B].copy(), (r, c), len(cubes)))
    return cubes


def reassemble(cubes, shape):
    """Place cube data back at their origins and crop to ``shape = (T, H, W)``."""
    T, H, W = shape
    if not cubes:
        return np.zeros(shape)
    B = cubes[0].data.shape[1]
    Hp, Wp = _padded_dims(H, W, B)
    out = np.zeros((T, Hp, Wp))
    for cube in cubes:
        r, c = cube.origin
        out[:, r : r + B, c : c + B] = cube.data
    return out[:, :H, :W]


def sample_cube(cube, phi, center=CENTER):
    """``y = phi (vec(cube) - center)``; pixels are centered like JPEG does."""
    data = cube.data if isinstance(cube, Cube) else cube
    x = cube_vec(data)
    if x.size != phi.shape[1]:
        raise ValueError(f"cube has {x.size} samples, operator expects {phi.shape[1]}")
    return phi.matvec(x - center)


def sample_gop(gop, cfg, pad_mode=PadMode.ERROR, cube_offset=0):
    """Measurement vectors of every cube of ``gop``, in cube-index order."""
    cubes = partition_gop(gop, cfg.block_size, pad_mode)
    T = cubes[0].data.shape[0]
    out = []
    for cube in cubes:
        ops = build_operators(cfg, T, cube_offset + cube.index)
        out.append(sample_cube(cube, ops.phi))
    return out


def _solve(cfg, theta, y, T):
    opts = cfg.options
    n = theta.shape[1]
    if cfg.weighting is Weighting.NONE:
        return weighted_bp(theta, y, np.ones(n), opts)
    if cfg.weighting is Weighting.PERCEPTUAL:
        return weighted_bp(theta, y, cube_weights(cfg.block_size, T, cfg.quant), opts)
    if cfg.weighting is Weighting.RWL1:
        return rwl1(theta, y, opts)
    return irls(theta, y, opts)


def reconstruct_cube(y, cfg, gop_len, cube_index=0):
    """Recover one cube's pixels from its measurements."""
    t0 = time.perf_counter()
    ops = build_operators(cfg, gop_len, cube_index)
    y = np.asarray(y, dtype=float)
    if y.shape != (ops.theta.shape[0],):
        raise ValueError(f"cube {cube_index}: expected {ops.theta.shape[0]} measurements, got {y.size}")
    report = _solve(cfg, ops.theta, y, gop_len)
    x = ops.psi.matvec(report.coefficients) + CENTER
    pixels = np.clip(cube_unvec(x, cfg.block_size, gop_len), 0.0, 255.0)
    return CubeResult(pixels, report, time.perf_counter() - t0, cube_index)


def _cube_task(args):
    return reconstruct_cube(*args)


def map_ordered(fn, tasks, workers):
    """``list(map(fn, tasks))``, optionally on a process pool; order preserved."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def reconstruct_gop(measurements, shape, cfg, workers=1, cube_offset=0):
    """Recover a ``(T, H, W)`` GoP from its per-cube measurement vectors.

    Cubes are solved independently (in parallel when ``workers > 1``) and
    results are collected in cube-index order, so the output does not
    depend on the worker count.  Solver non-convergence is recorded in the
    per-cube results; a frame is always produced.
    """
    T, H, W = shape
    B = cfg.block_size
    Hp, Wp = _padded_dims(H, W, B)
    origins = [(r, c) for r in range(0, Hp, B) for c in range(0, Wp, B)]
    if len(measurements) != len(origins):
        raise ValueError(f"expected {len(origins)} cube measurement vectors, got {len(measurements)}")
    tasks = [(y, cfg, T, cube_offset + i) for i, y in enumerate(measurements)]
    results = map_ordered(_cube_task, tasks, workers)
    for i, res in enumerate(results):
        res.index = i
    cubes = [Cube(res.reconstructed, origins[i], i) for i, res in enumerate(results)]
    return reassemble(cubes, shape), results


def sense_and_reconstruct(gop, cfg, workers=1, pad_mode=PadMode.ERROR, cube_offset=0):
    gop = np.asarray(gop, dtype=float)
    ys = sample_gop(gop, cfg, pad_mode, cube_offset)
    return reconstruct_gop(ys, gop.shape, cfg, workers, cube_offset)
