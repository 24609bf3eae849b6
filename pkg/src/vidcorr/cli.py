"""Command-line entry point.

Subcommands cover the full artifact workflow: synthesize input volumes
(`gen-fixture`), trace correspondence maps (`corr`), run correspondence-guided
attention over latents (`attend`), count operations (`bench`), render
trajectory images (`viz`), and verify file round-trips (`roundtrip-check`).

Exit codes: 0 success, 2 usage or parameter error, 3 data error (malformed or
mismatched files, I/O failures), 4 internal invariant failure. Randomized
subcommands require an explicit --seed; nothing reads ambient entropy, so
identical invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import viz as viz_mod
from .attention import apply_frame_attention
from .correspondence import CorrespondenceMap, TraceStats, trace_trajectories
from .errors import DataError, ParameterError, VidcorrError
from .fixtures import synthesize_moving_patch
from .volume import (
    LatentVolume,
    TokenCoord,
    feature_volume_bytes,
    load_feature_volume,
    load_latent_volume,
    normalize,
    save_feature_volume,
)


def _int_pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated integers, got {text!r}")
    return a, b


def _token_coord(text: str) -> TokenCoord:
    try:
        i, h, w = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected frame,row,col integers, got {text!r}")
    return TokenCoord(i, h, w)


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _add_threads(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threads",
        type=_positive,
        default=None,
        metavar="T",
        help="worker threads (default: all cores; results identical regardless)",
    )


def _add_window_flags(parser: argparse.ArgumentParser, default: int) -> None:
    # Exclusivity of --window/--full is enforced in _window_arg: argparse
    # mutually-exclusive groups miss an explicit value equal to the default.
    parser.add_argument(
        "--window",
        type=int,
        default=None,
        metavar="L",
        help=f"search window length (default: {default})",
    )
    parser.add_argument(
        "--full", action="store_true", help="search the whole frame instead of a window"
    )
    parser.set_defaults(window_default=default)


def _window_arg(args: argparse.Namespace) -> int | None:
    if args.full:
        if args.window is not None:
            raise ParameterError("--window and --full are mutually exclusive")
        return None
    return args.window_default if args.window is None else args.window


def _cmd_gen_fixture(args: argparse.Namespace) -> int:
    shape = (args.frames, args.height, args.width, args.dim)
    if args.kind == "patch":
        fixture = synthesize_moving_patch(
            frames=args.frames,
            height=args.height,
            width=args.width,
            dim=args.dim,
            patch_size=args.patch_size,
            patch_start=tuple(args.start),
            velocity=tuple(args.velocity),
            seed=args.seed,
        )
        volume = fixture.volume
    elif args.kind == "gaussian":
        volume = bench_mod.synthesize_volume(*shape, seed=args.seed)
    else:  # latent: raw Gaussian tokens, norms left varying
        rng = np.random.default_rng(args.seed)
        volume = LatentVolume(rng.standard_normal(shape).astype(np.float32))
    save_feature_volume(args.output, volume)
    n, h, w, d = volume.data.shape
    print(f"wrote {args.output} (kind={args.kind}, N={n}, H={h}, W={w}, d={d})")
    return 0


def _cmd_corr(args: argparse.Namespace) -> int:
    volume = normalize(load_feature_volume(args.input))
    stats = TraceStats()
    cmap = trace_trajectories(
        volume, args.k, window=_window_arg(args), threads=args.threads, stats=stats
    )
    cmap.save(args.output)
    window_txt = "full" if cmap.window is None else str(cmap.window)
    print(
        f"wrote {args.output} (K={cmap.k}, window={window_txt}, "
        f"mul_adds={stats.mul_add_count}, peak_candidates={stats.peak_candidates})"
    )
    return 0


def _cmd_attend(args: argparse.Namespace) -> int:
    latent = load_latent_volume(args.latent)
    cmap = CorrespondenceMap.load(args.map)
    result = apply_frame_attention(
        latent,
        cmap,
        ratio=args.ratio,
        d_k=args.d_k,
        proportional=args.proportional,
        threads=args.threads,
    )
    save_feature_volume(args.output, result)
    print(f"wrote {args.output} (ratio={args.ratio}, proportional={args.proportional})")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    window = _window_arg(args)
    if args.measure:
        if args.seed is None:
            raise ParameterError("--measure synthesizes a volume and requires --seed")
        report = bench_mod.measured_ops(
            args.n, args.h, args.w, args.d, window, k=args.k, seed=args.seed, threads=args.threads
        )
    else:
        report = bench_mod.OpCountReport(
            frames=args.n,
            height=args.h,
            width=args.w,
            dim=args.d,
            window=window,
            analytic_count=bench_mod.traced_ops(args.n, args.h, args.w, args.d, window),
        )
    print(report.to_json() if args.json else report.row())
    return 0


def _cmd_viz(args: argparse.Namespace) -> int:
    cmap = CorrespondenceMap.load(args.map)
    volume = load_feature_volume(args.volume) if args.volume else None
    paths = viz_mod.write_trajectory(
        cmap, args.anchor, args.out, volume=volume, scale=args.scale
    )
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def _cmd_roundtrip_check(args: argparse.Namespace) -> int:
    raw = Path(args.input).read_bytes()
    if raw[:4] == b"COVF":
        again = feature_volume_bytes(load_feature_volume(args.input))
    elif raw[:4] == b"COVC":
        again = CorrespondenceMap.load(args.input).to_bytes()
    else:
        raise DataError(f"{args.input}: unknown magic {raw[:4]!r}")
    if again != raw:
        raise DataError(f"{args.input}: reserialization differs from the file ({len(raw)} bytes)")
    print(f"{args.input}: roundtrip OK ({len(raw)} bytes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidcorr",
        description="Windowed token-correspondence tracing and correspondence-guided attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-fixture", help="synthesize a volume file")
    gen.add_argument("--kind", choices=("patch", "gaussian", "latent"), default="patch")
    gen.add_argument("--frames", type=_positive, default=8)
    gen.add_argument("--height", type=_positive, default=16)
    gen.add_argument("--width", type=_positive, default=16)
    gen.add_argument("--dim", type=_positive, default=32)
    gen.add_argument("--patch-size", type=_positive, default=2)
    gen.add_argument("--start", type=_int_pair, default=(2, 2), metavar="R,C")
    gen.add_argument("--velocity", type=_int_pair, default=(1, 1), metavar="DR,DC")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--output", required=True)
    gen.set_defaults(handler=_cmd_gen_fixture)

    corr = sub.add_parser("corr", help="trace a correspondence map from a feature volume")
    corr.add_argument("--input", required=True)
    corr.add_argument("--k", type=_positive, default=3)
    _add_window_flags(corr, default=9)
    corr.add_argument("--output", required=True)
    _add_threads(corr)
    corr.set_defaults(handler=_cmd_corr)

    attend = sub.add_parser("attend", help="apply correspondence-guided attention to a latent")
    attend.add_argument("--latent", required=True)
    attend.add_argument("--map", required=True)
    attend.add_argument("--ratio", type=float, default=0.5)
    attend.add_argument("--d-k", type=_positive, default=None, dest="d_k")
    attend.add_argument("--proportional", action="store_true")
    attend.add_argument("--output", required=True)
    _add_threads(attend)
    attend.set_defaults(handler=_cmd_attend)

    bench = sub.add_parser("bench", help="operation counts, analytic and measured")
    bench.add_argument("--n", type=_positive, default=20)
    bench.add_argument("--h", type=_positive, default=64)
    bench.add_argument("--w", type=_positive, default=64)
    bench.add_argument("--d", type=_positive, default=bench_mod.REFERENCE_DIM)
    _add_window_flags(bench, default=9)
    bench.add_argument("--measure", action="store_true", help="run the tracer and count for real")
    bench.add_argument("--k", type=_positive, default=1)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--json", action="store_true")
    _add_threads(bench)
    bench.set_defaults(handler=_cmd_bench)

    viz = sub.add_parser("viz", help="render one marked image per frame for an anchor")
    viz.add_argument("--map", required=True)
    viz.add_argument("--anchor", type=_token_coord, required=True, metavar="I,H,W")
    viz.add_argument("--out", required=True)
    viz.add_argument("--volume", default=None, help="optional volume for the grayscale background")
    viz.add_argument("--scale", type=_positive, default=1)
    viz.set_defaults(handler=_cmd_viz)

    rt = sub.add_parser("roundtrip-check", help="verify a file reserializes byte-identically")
    rt.add_argument("--input", required=True)
    rt.set_defaults(handler=_cmd_roundtrip_check)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.handler(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except VidcorrError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    raise SystemExit(main())
