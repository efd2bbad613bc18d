"""PGM / raw video I/O, the measurements bundle, and run configuration files."""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .pipeline import PadMode, SensingConfig, Variant, Weighting
from .solvers import SolveOptions

__all__ = [
    "DataError",
    "RawSource",
    "read_pgm",
    "write_pgm",
    "to_uint8",
    "load_frames",
    "load_video",
    "save_video",
    "split_gops",
    "BundleHeader",
    "write_bundle",
    "read_bundle",
    "RunConfig",
    "parse_config",
    "load_config",
    "fingerprint",
]

BUNDLE_MAGIC = "KUBECS-MEASUREMENTS"
BUNDLE_VERSION = 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# -- PGM ----------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path):
    """Decode a binary (P5) PGM with maxval <= 255 into a ``uint8`` array."""
    data = Path(path).read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DataError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise DataError(f"{path}: unsupported PGM geometry {width}x{height}, maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise DataError(f"{path}: expected {need} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def to_uint8(frame):
    """Clip to [0, 255] and round half away from zero."""
    f = np.clip(np.asarray(frame, dtype=float), 0.0, 255.0)
    return np.floor(f + 0.5).astype(np.uint8)


def write_pgm(path, frame):
    frame = to_uint8(frame)
    if frame.ndim != 2:
        raise ValueError("a PGM frame must be 2-D")
    h, w = frame.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(frame.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


# -- video sources ------------------------------------------------------------


@dataclass(frozen=True)
class RawSource:
    """Planar 8-bit grayscale frames, concatenated."""

    path: str
    width: int
    height: int
    frames: int


def _load_raw(src):
    expected = src.width * src.height * src.frames
    data = Path(src.path).read_bytes()
    if len(data) != expected:
        raise DataError(
            f"{src.path}: raw length {len(data)} bytes, expected {expected} "
            f"({src.frames} frames of {src.width}x{src.height})"
        )
    return np.frombuffer(data, dtype=np.uint8).reshape(src.frames, src.height, src.width).copy()


def load_frames(source):
    """All frames of ``source`` as a ``(F, H, W)`` uint8 array.

    ``source`` is a :class:`RawSource`, a directory of PGM frames (read in
    lexicographic order) or a single PGM file (one frame).
    """
    if isinstance(source, RawSource):
        return _load_raw(source)
    p = Path(source)
    if p.is_dir():
        files = sorted(f for f in os.listdir(p) if f.lower().endswith((".pgm", ".pnm")))
        if not files:
            raise DataError(f"{p}: no PGM frames found")
        frames = [read_pgm(p / f) for f in files]
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise DataError(f"{p}: frames have differing sizes {sorted(shapes)}")
        return np.stack(frames)
    if not p.exists():
        raise DataError(f"{p}: no such file or directory")
    return read_pgm(p)[None]


def split_gops(frames, gop):
    """Consecutive GoPs of ``gop`` frames; a trailing remainder forms a shorter GoP."""
    if gop < 1:
        raise ValueError("GoP length must be >= 1")
    frames = np.asarray(frames, dtype=float)
    return [frames[i : i + gop] for i in range(0, frames.shape[0], gop)]


def load_video(source, gop):
    return split_gops(load_frames(source), gop)


def save_video(gops, dst):
    """Write frames as ``frame_%05d.pgm`` under ``dst``; returns the paths."""
    paths = []
    if not gops:
        return paths
    dst = Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    k = 0
    for gop in gops:
        for frame in np.asarray(gop):
            path = dst / f"frame_{k:05d}.pgm"
            write_pgm(path, frame)
            paths.append(path)
            k += 1
    return paths


# -- measurements bundle ------------------------------------------------------


@dataclass
class BundleHeader:
    block_size: int
    gop: int
    variant: str
    rate: float
    seed: int
    shared_phi: bool
    pad_mode: str
    fingerprint: str
    height: int
    width: int
    frames: int
    # (gop length, cube count, measurements per cube) for each GoP
    layout: list = field(default_factory=list)


def write_bundle(path, header, vectors):
    """Plain-text header followed by little-endian float64 vectors in cube order."""
    flat = [np.asarray(v, dtype="<f8") for gop in vectors for v in gop]
    expected = [m for (_, n, m) in header.layout for _ in range(n)]
    if [v.size for v in flat] != expected:
        raise ValueError("measurement vectors do not match the bundle layout")
    lines = [
        BUNDLE_MAGIC,
        f"version {BUNDLE_VERSION}",
        f"block_size {header.block_size}",
        f"gop {header.gop}",
        f"variant {header.variant}",
        f"rate {header.rate!r}",
        f"seed {header.seed}",
        f"shared_phi {int(header.shared_phi)}",
        f"pad_mode {header.pad_mode}",
        f"fingerprint {header.fingerprint}",
        f"frame_size {header.height} {header.width}",
        f"frames {header.frames}",
        "layout " + ",".join(f"{t}:{n}:{m}" for t, n, m in header.layout),
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for v in flat:
            fh.write(v.tobytes())


def read_bundle(path):
    """Return ``(header, vectors)`` with ``vectors[g][c]`` the c-th cube of GoP g."""
    data = Path(path).read_bytes()
    end = data.find(b"\nend\n")
    if not data.startswith(BUNDLE_MAGIC.encode()) or end < 0:
        raise DataError(f"{path}: not a measurements bundle")
    fields_ = {}
    for line in data[:end].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(" ")
        fields_[key] = value
    try:
        if int(fields_["version"]) != BUNDLE_VERSION:
            raise DataError(f"{path}: unsupported bundle version {fields_['version']}")
        h, w = (int(x) for x in fields_["frame_size"].split())
        layout = []
        if fields_["layout"]:
            for item in fields_["layout"].split(","):
                t, n, m = (int(x) for x in item.split(":"))
                layout.append((t, n, m))
        header = BundleHeader(
            block_size=int(fields_["block_size"]),
            gop=int(fields_["gop"]),
            variant=fields_["variant"],
            rate=float(fields_["rate"]),
            seed=int(fields_["seed"]),
            shared_phi=bool(int(fields_["shared_phi"])),
            pad_mode=fields_["pad_mode"],
            fingerprint=fields_["fingerprint"],
            height=h,
            width=w,
            frames=int(fields_["frames"]),
            layout=layout,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed bundle header ({exc})") from None
    payload = data[end + len(b"\nend\n") :]
    total = sum(n * m for _, n, m in layout)
    if len(payload) != 8 * total:
        raise DataError(f"{path}: expected {8 * total} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    vectors = []
    pos = 0
    for _, n, m in layout:
        cubes = []
        for _ in range(n):
            cubes.append(values[pos : pos + m].copy())
            pos += m
        vectors.append(cubes)
    return header, vectors


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    """Validated contents of a ``key = value`` run configuration file."""

    input: str = ""
    raw_width: int | None = None
    raw_height: int | None = None
    raw_frames: int | None = None
    synth_size: tuple = (32, 32)
    synth_frames: int = 8
    synth_noise: float = 0.0
    block_size: int = 8
    gop: int = 8
    variant: list = field(default_factory=lambda: [Variant.KCS])
    weighting: list = field(default_factory=lambda: [Weighting.NONE])
    rates: list = field(default_factory=lambda: [0.5])
    seeds: list = field(default_factory=lambda: [0])
    workers: int | None = None
    pad_mode: PadMode = PadMode.ERROR
    shared_phi: bool = True
    max_iterations: int = SolveOptions.max_iterations
    feasibility_tol: float = SolveOptions.feasibility_tol
    rwl1_epsilon: float = SolveOptions.rwl1_epsilon
    rwl1_rounds: int = SolveOptions.rwl1_rounds
    quant_table: str | None = None
    timing: bool = False
    output: str | None = None

    def solve_options(self):
        return SolveOptions(
            max_iterations=self.max_iterations,
            feasibility_tol=self.feasibility_tol,
            rwl1_epsilon=self.rwl1_epsilon,
            rwl1_rounds=self.rwl1_rounds,
        )

    def quant(self):
        if self.quant_table is None:
            return None
        from .weighting import load_quant_table

        q = load_quant_table(self.quant_table)
        return tuple(tuple(row) for row in q)

    def source(self):
        """A :class:`RawSource`, a path, or ``None`` for synthetic input."""
        if self.input.startswith("synthetic:"):
            return None
        if self.raw_width is not None:
            return RawSource(self.input, self.raw_width, self.raw_height, self.raw_frames)
        return self.input

    def load_gops(self):
        from .synth import synthesize

        if self.input.startswith("synthetic:"):
            h, w = self.synth_size
            frames = synthesize(self.input.split(":", 1)[1], self.synth_frames, h, w, self.synth_noise)
            return split_gops(frames, self.gop)
        return load_video(self.source(), self.gop)

    def sensing_config(self, variant=None, weighting=None, rate=None, seed=None):
        return SensingConfig(
            variant=variant if variant is not None else self.variant[0],
            rate=rate if rate is not None else self.rates[0],
            block_size=self.block_size,
            gop=self.gop,
            seed=seed if seed is not None else self.seeds[0],
            weighting=weighting if weighting is not None else self.weighting[0],
            shared_phi=self.shared_phi,
            options=self.solve_options(),
            quant=self.quant(),
        )


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _size(v):
    w, _, h = v.lower().partition("x")
    return int(h), int(w)


def _list(conv):
    return lambda v: [conv(x.strip()) for x in v.split(",") if x.strip()]


_PARSERS = {
    "input": str,
    "raw_width": int,
    "raw_height": int,
    "raw_frames": int,
    "synth_size": _size,
    "synth_frames": int,
    "synth_noise": float,
    "block_size": int,
    "gop": int,
    "variant": _list(Variant),
    "weighting": _list(Weighting),
    "rates": _list(float),
    "seeds": _list(int),
    "workers": int,
    "pad_mode": PadMode,
    "shared_phi": _bool,
    "max_iterations": int,
    "feasibility_tol": float,
    "rwl1_epsilon": float,
    "rwl1_rounds": int,
    "quant_table": str,
    "timing": _bool,
    "output": str,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config(text, origin="<config>"):
    """Parse flat ``key = value`` text; ``#`` starts a comment.

    Unknown keys, duplicate keys and invalid values raise :class:`DataError`.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise DataError(f"{origin}:{lineno}: expected 'key = value'")
        if key not in _PARSERS:
            raise DataError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise DataError(f"{origin}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value.strip())
        except ValueError as exc:
            raise DataError(f"{origin}:{lineno}: bad value for {key}: {exc}") from None
    cfg = RunConfig(**values)
    _validate(cfg, origin)
    return cfg


def _validate(cfg, origin):
    if not cfg.input:
        raise DataError(f"{origin}: 'input' is required")
    raw = (cfg.raw_width, cfg.raw_height, cfg.raw_frames)
    if any(v is not None for v in raw) and any(v is None for v in raw):
        raise DataError(f"{origin}: raw input needs raw_width, raw_height and raw_frames")
    for name in ("variant", "weighting", "rates", "seeds"):
        if not getattr(cfg, name):
            raise DataError(f"{origin}: '{name}' must not be empty")
    if any(b <= a for a, b in zip(cfg.rates, cfg.rates[1:])):
        raise DataError(f"{origin}: rates must be strictly increasing")
    if cfg.workers is not None and cfg.workers < 1:
        raise DataError(f"{origin}: workers must be >= 1")
    try:
        for v in cfg.variant:
            for r in cfg.rates:
                cfg.sensing_config(variant=v, rate=r, seed=cfg.seeds[0])
    except (ValueError, OSError) as exc:
        raise DataError(f"{origin}: {exc}") from None


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def fingerprint(cfg, pad_mode):
    """Short digest of everything that determines the measurements."""
    canon = (
        f"block_size={cfg.block_size};gop={cfg.gop};variant={cfg.variant.value};"
        f"rate={cfg.rate!r};seed={cfg.seed};shared_phi={int(cfg.shared_phi)};"
        f"pad_mode={PadMode(pad_mode).value}"
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
