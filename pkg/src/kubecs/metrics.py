"""PSNR and the measurement-rate sweep harness."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .pipeline import (
    PadMode,
    SensingConfig,
    Variant,
    Weighting,
    map_ordered,
    sense_and_reconstruct,
)
from .solvers import SolveOptions

__all__ = [
    "psnr",
    "SweepSpec",
    "SweepRow",
    "run_sweep",
    "run_cell",
    "emit_csv",
    "parse_csv",
    "emit_gnuplot",
    "median_table",
    "CSV_HEADER",
]

CSV_HEADER = "variant,weighting,rate,seed,psnr_db,iters,wall_ms,converged_frac"


def psnr(reference, test, peak=255.0):
    """Peak signal-to-noise ratio in dB over all pixels of all frames.

    Returns ``math.inf`` when the inputs are identical.
    """
    a = np.asarray(reference, dtype=float)
    b = np.asarray(test, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(peak**2 / mse))


@dataclass
class SweepSpec:
    """Full-factorial experiment over variants, weightings, rates and seeds.

    ``gops`` is the input, already split into GoPs (each a ``(T, H, W)``
    array).  ``timing`` controls whether wall-clock times are recorded;
    when off, ``wall_ms`` is 0 so repeated runs produce identical output.
    """

    gops: list
    rates: list
    variants: list = field(default_factory=lambda: [Variant.KCS])
    weightings: list = field(default_factory=lambda: [Weighting.NONE])
    seeds: list = field(default_factory=lambda: [0])
    block_size: int = 8
    gop: int = 8
    shared_phi: bool = True
    pad_mode: PadMode = PadMode.ERROR
    options: SolveOptions = field(default_factory=SolveOptions)
    quant: tuple | None = None
    timing: bool = False

    def __post_init__(self):
        for name in ("gops", "rates", "variants", "weightings", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"sweep needs at least one entry in {name}")
        if any(b <= a for a, b in zip(self.rates, self.rates[1:])):
            raise ValueError("rates must be strictly increasing")
        self.variants = [Variant(v) for v in self.variants]
        self.weightings = [Weighting(w) for w in self.weightings]

    def cells(self):
        for v in self.variants:
            for w in self.weightings:
                for r in self.rates:
                    for s in self.seeds:
                        yield SensingConfig(
                            variant=v,
                            rate=float(r),
                            block_size=self.block_size,
                            gop=self.gop,
                            seed=int(s),
                            weighting=w,
                            shared_phi=self.shared_phi,
                            options=self.options,
                            quant=self.quant,
                        )


@dataclass
class SweepRow:
    variant: str
    weighting: str
    rate: float
    seed: int
    psnr_db: float
    iters: int
    wall_ms: float
    converged_frac: float


def run_cell(cfg, gops, pad_mode=PadMode.ERROR, timing=False, workers=1):
    """Sense and reconstruct every GoP under ``cfg``; one :class:`SweepRow`."""
    t0 = time.perf_counter()
    recon = []
    reports = []
    offset = 0
    for gop in gops:
        rec, results = sense_and_reconstruct(gop, cfg, workers, pad_mode, offset)
        offset += len(results)
        recon.append(rec)
        reports.extend(r.report for r in results)
    ref = np.concatenate([np.asarray(g, dtype=float) for g in gops])
    wall = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
    return SweepRow(
        variant=cfg.variant.value,
        weighting=cfg.weighting.value,
        rate=cfg.rate,
        seed=cfg.seed,
        psnr_db=psnr(ref, np.concatenate(recon)),
        iters=sum(r.iterations for r in reports),
        wall_ms=wall,
        converged_frac=sum(r.converged for r in reports) / max(len(reports), 1),
    )


def _cell_task(args):
    cfg, gops, pad_mode, timing = args
    return run_cell(cfg, gops, pad_mode, timing)


def run_sweep(spec, workers=1):
    """Rows in (variant, weighting, rate, seed) order, independent of ``workers``."""
    tasks = [(cfg, spec.gops, spec.pad_mode, spec.timing) for cfg in spec.cells()]
    return map_ordered(_cell_task, tasks, workers)


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def emit_csv(rows):
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.variant,
                    r.weighting,
                    _fmt(float(r.rate)),
                    _fmt(int(r.seed)),
                    _fmt(float(r.psnr_db)),
                    _fmt(int(r.iters)),
                    _fmt(float(r.wall_ms)),
                    _fmt(float(r.converged_frac)),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or ",".join(header) != CSV_HEADER:
        raise ValueError("not a sweep CSV: unexpected header")
    rows = []
    for rec in reader:
        if not rec:
            continue
        v, w, rate, seed, p, it, wall, frac = rec
        rows.append(SweepRow(v, w, float(rate), int(seed), float(p), int(it), float(wall), float(frac)))
    return rows


def median_table(rows):
    """``{(variant, weighting): {rate: median psnr}}``."""
    groups = {}
    for r in rows:
        groups.setdefault((r.variant, r.weighting), {}).setdefault(r.rate, []).append(r.psnr_db)
    return {k: {rate: float(np.median(v)) for rate, v in sorted(d.items())} for k, d in groups.items()}


def emit_gnuplot(rows):
    """Two-column ``rate psnr`` blocks (median over seeds), one per series.

    Blocks are separated by two blank lines so gnuplot can address them
    with ``index``.
    """
    blocks = []
    for (variant, weighting), series in median_table(rows).items():
        lines = [f"# {variant} {weighting}"]
        lines += [f"{_fmt(rate)} {_fmt(p)}" for rate, p in series.items()]
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + ("\n" if blocks else "")
