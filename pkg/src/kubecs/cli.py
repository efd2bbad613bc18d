"""Command-line driver: ``kubecs {sample,reconstruct,sweep,psnr,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
non-convergence under ``--strict``.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path


from . import io as kio
from .metrics import SweepSpec, emit_csv, emit_gnuplot, psnr, run_sweep
from .pipeline import reconstruct_gop, sample_gop
from .synth import KINDS, synthesize

log = logging.getLogger("kubecs")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _workers(args, cfg=None):
    if args.workers is not None:
        return args.workers
    if cfg is not None and cfg.workers is not None:
        return cfg.workers
    env = os.environ.get("KUBECS_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"KUBECS_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="kubecs", description="Cube-based weighted Kronecker compressive sensing.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True, help="key = value run configuration")
        sp.add_argument("--workers", type=_positive, help="parallel workers (default: $KUBECS_WORKERS or CPU count)")

    sp = sub.add_parser("sample", help="partition and sense the input, write a measurements bundle")
    common(sp)
    sp.add_argument("--out", required=True, help="measurements bundle to write")

    sp = sub.add_parser("reconstruct", help="recover frames from a measurements bundle")
    common(sp)
    sp.add_argument("--measurements", required=True)
    sp.add_argument("--out", required=True, help="output directory for PGM frames and report.csv")
    sp.add_argument("--strict", action="store_true", help="exit 3 if any cube fails to converge")

    sp = sub.add_parser("sweep", help="PSNR vs measurement rate experiment")
    common(sp)
    sp.add_argument("--out", help="CSV output (default: config 'output' or stdout)")
    sp.add_argument("--gnuplot", help="also write median PSNR series for gnuplot")
    sp.add_argument("--strict", action="store_true", help="exit 3 if any cube fails to converge")

    sp = sub.add_parser("psnr", help="PSNR between two videos or images")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--raw-size", type=_size, help="treat inputs as raw planar 8-bit frames of WxH")
    sp.add_argument("--peak", type=float, default=255.0)

    sp = sub.add_parser("synth", help="write a synthetic test GoP as PGM frames")
    sp.add_argument("--kind", default="moving-square", choices=KINDS)
    sp.add_argument("--frames", type=_positive, default=8)
    sp.add_argument("--size", type=_size, default=(32, 32), help="WIDTHxHEIGHT")
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    return p


def _single(cfg, what):
    for name in ("variant", "weighting", "rates", "seeds"):
        if len(getattr(cfg, name)) != 1:
            raise kio.DataError(f"{what} needs exactly one value for '{name}'")
    return cfg.sensing_config()


def cmd_sample(args):
    cfg = kio.load_config(args.config)
    scfg = _single(cfg, "sample")
    gops = cfg.load_gops()
    vectors, layout = [], []
    offset = 0
    for gop in gops:
        ys = sample_gop(gop, scfg, cfg.pad_mode, offset)
        offset += len(ys)
        vectors.append(ys)
        layout.append((gop.shape[0], len(ys), ys[0].size))
    T, H, W = gops[0].shape
    header = kio.BundleHeader(
        block_size=scfg.block_size,
        gop=scfg.gop,
        variant=scfg.variant.value,
        rate=scfg.rate,
        seed=scfg.seed,
        shared_phi=scfg.shared_phi,
        pad_mode=cfg.pad_mode.value,
        fingerprint=kio.fingerprint(scfg, cfg.pad_mode),
        height=H,
        width=W,
        frames=sum(g.shape[0] for g in gops),
        layout=layout,
    )
    kio.write_bundle(args.out, header, vectors)
    log.info("wrote %d cube measurement vectors to %s", offset, args.out)
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = kio.load_config(args.config)
    scfg = _single(cfg, "reconstruct")
    header, vectors = kio.read_bundle(args.measurements)
    expected = kio.fingerprint(scfg, cfg.pad_mode)
    if header.fingerprint != expected:
        raise kio.DataError(
            f"{args.measurements}: bundle was sampled with a different configuration "
            f"(variant {header.variant}, seed {header.seed}, rate {header.rate}); "
            f"fingerprint {header.fingerprint} != {expected}"
        )
    workers = _workers(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gops, rows = [], []
    failed = 0
    offset = 0
    for g, (ys, (T, n, _)) in enumerate(zip(vectors, header.layout)):
        rec, results = reconstruct_gop(ys, (T, header.height, header.width), scfg, workers, offset)
        offset += n
        gops.append(rec)
        for res in results:
            rep = res.report
            failed += not rep.converged
            wall = res.wall_time * 1000.0 if cfg.timing else 0.0
            rows.append(
                f"{g},{res.index},{rep.iterations},{rep.residual_norm:.6g},"
                f"{rep.objective:.6g},{int(rep.converged)},{wall:.6g}"
            )
    kio.save_video(gops, out)
    report = "gop,cube,iters,residual,objective,converged,wall_ms\n" + "".join(r + "\n" for r in rows)
    (out / "report.csv").write_text(report)
    if failed:
        log.warning("%d cube(s) did not converge", failed)
        if args.strict:
            return EXIT_SOLVER
    return EXIT_OK


def cmd_sweep(args):
    cfg = kio.load_config(args.config)
    spec = SweepSpec(
        gops=cfg.load_gops(),
        rates=cfg.rates,
        variants=cfg.variant,
        weightings=cfg.weighting,
        seeds=cfg.seeds,
        block_size=cfg.block_size,
        gop=cfg.gop,
        shared_phi=cfg.shared_phi,
        pad_mode=cfg.pad_mode,
        options=cfg.solve_options(),
        quant=cfg.quant(),
        timing=cfg.timing,
    )
    rows = run_sweep(spec, _workers(args, cfg))
    text = emit_csv(rows)
    dest = args.out or cfg.output
    if dest:
        Path(dest).write_text(text)
    else:
        sys.stdout.write(text)
    if args.gnuplot:
        Path(args.gnuplot).write_text(emit_gnuplot(rows))
    if any(r.converged_frac < 1.0 for r in rows):
        log.warning("some cells had unconverged cubes")
        if args.strict:
            return EXIT_SOLVER
    return EXIT_OK


def _load_any(src, raw_size):
    if raw_size is None:
        return kio.load_frames(src)
    w, h = raw_size
    size = Path(src).stat().st_size
    if size % (w * h):
        raise kio.DataError(f"{src}: length {size} is not a whole number of {w}x{h} frames")
    return kio.load_frames(kio.RawSource(src, w, h, size // (w * h)))


def cmd_psnr(args):
    ref = _load_any(args.ref, args.raw_size)
    test = _load_any(args.test, args.raw_size)
    if ref.shape != test.shape:
        raise kio.DataError(f"shape mismatch: {ref.shape} vs {test.shape}")
    value = psnr(ref, test, args.peak)
    print("inf" if math.isinf(value) else f"{value:.6g}")
    return EXIT_OK


def cmd_synth(args):
    w, h = args.size
    frames = synthesize(args.kind, args.frames, h, w, args.noise, args.seed)
    kio.save_video([frames], args.out)
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
    "psnr": cmd_psnr,
    "synth": cmd_synth,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="kubecs: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kubecs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (kio.DataError, ValueError, OSError) as exc:
        print(f"kubecs: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
