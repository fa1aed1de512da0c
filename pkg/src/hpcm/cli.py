"""Command-line front end.

Exit codes: 0 success, 1 configuration or header mismatch, 2 corrupt input
stream, 3 file system error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bitstream import Bitstream
from .codec import (CodecConfig, config_from_stream, decode_session, encode_session, rate_report,
                    toy_transform_roundtrip)
from .context import ContextConfig, HpcmNetworks
from .errors import ConfigError, CorruptBitstreamError, HpcmError, IncompatibleStreamError, ShapeError, WeightError
from .ggm import zprior_alpha
from .io import GEN_KINDS, generate_latent, read_float, read_latent, write_latent
from .oracle import OracleConfig, entropy_gap_ar1
from .schedule import SUPPORTED_ALLOCATIONS, ScheduleError, build_schedule
from .transforms import HyperPath
from .weights import WeightStore

EXIT_OK, EXIT_CONFIG, EXIT_CORRUPT, EXIT_IO = 0, 1, 2, 3
TESTDATA_ENV = "HPCM_TESTDATA"


def testdata_root() -> Path:
    """Golden-file directory: ``$HPCM_TESTDATA`` or ``testdata/`` next to the sources."""
    env = os.environ.get(TESTDATA_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "testdata"


def _triple(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    return parts


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allocation", type=_triple, default=(2, 3, 6))
    p.add_argument("--backend", default="analytic", help="hyper | analytic | neural")
    p.add_argument("--window", type=int, default=4, help="attention window (neural backend)")
    p.add_argument("--depth", choices=("base", "large"), default="base")
    p.add_argument("--weights", type=Path, help="weight file for the neural backend (default: derive from seed)")


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", choices=("json", "csv"), default="json")
    p.add_argument("--report-out", type=Path, help="write the report here instead of stdout")


def _codec_config(args) -> CodecConfig:
    return CodecConfig(args.seed, args.allocation, args.backend,
                       ContextConfig(window=args.window, depth=args.depth))


def _store(args) -> WeightStore | None:
    return WeightStore.load(args.weights, args.seed) if args.weights else None


def _emit(args, rows: list[dict], extra: dict) -> None:
    if args.report == "json":
        text = json.dumps({**extra, "rows": rows}, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        fields = list(rows[0]) if rows else []
        writer = csv.DictWriter(buf, fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in row.items()})
        text = buf.getvalue()
    if args.report_out:
        args.report_out.write_text(text)
    else:
        sys.stdout.write(text)


def _echo(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


# -- subcommands --------------------------------------------------------------


def cmd_gen(args) -> int:
    y = generate_latent(args.kind, args.dims, args.seed, args.rho, args.low, args.high)
    write_latent(args.out, y)
    return EXIT_OK


def cmd_encode(args) -> int:
    config = _codec_config(args)
    y = read_latent(args.input)
    stream, trace = encode_session(y, config, _store(args))
    args.output.write_bytes(stream.to_bytes())
    report = rate_report(stream, trace).as_dict()
    report.update(seconds_context=trace.seconds_context, seconds_coder=trace.seconds_coder)
    _emit(args, [report], {"config": _echo(args)})
    return EXIT_OK


def cmd_decode(args) -> int:
    config = _codec_config(args)
    stream = Bitstream.from_bytes(args.input.read_bytes())
    y, _ = decode_session(stream, config, _store(args))
    write_latent(args.output, y)
    return EXIT_OK


def _pgm(image: np.ndarray) -> bytes:
    h, w = image.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + image.astype(np.uint8).tobytes()


def cmd_inspect(args) -> int:
    """Per-site bit map (CSV + PGM) and per-step table of a stream."""
    stream = Bitstream.from_bytes(args.stream.read_bytes())
    config = config_from_stream(stream, ContextConfig(window=args.window, depth=args.depth))
    _, trace = decode_session(stream, config, _store(args))
    report = rate_report(stream, trace)
    prefix = str(args.out_prefix)

    with open(prefix + "_sites.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["channel", "row", "col", "step", "bits"])
        for st in trace.steps:
            for (c, r, col), b in zip(st.sites.tolist(), st.bits.tolist()):
                writer.writerow([c, r, col, st.step, f"{b:.6f}"])

    spatial = report.site_bits.sum(axis=0)
    top = spatial.max()
    scaled = np.round(255.0 * spatial / top) if top > 0 else np.zeros_like(spatial)
    Path(prefix + "_map.pgm").write_bytes(_pgm(scaled))

    with open(prefix + "_steps.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "scale", "sites", "bits"])
        for st in trace.steps:
            writer.writerow([st.step, f"S{st.scale}", len(st.sites), f"{st.bits.sum():.6f}"])
    return EXIT_OK


def cmd_schedule(args) -> int:
    schedule = build_schedule(args.dims, args.allocation)
    text = schedule.dump_csv()
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_weights(args) -> int:
    """Materialise the seed-derived weights of a model configuration into a file."""
    store = WeightStore.from_seed(args.seed)
    ctx = ContextConfig(window=args.window, depth=args.depth)
    HyperPath(store, args.channels, ctx.hyper_dim)
    HpcmNetworks(store, args.channels, args.allocation, ctx)
    zprior_alpha(store, ctx.hyper_dim)
    store.save(args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    """Allocation x backend matrix over generated fields."""
    rows = []
    fields = [generate_latent(args.kind, args.dims, args.seed + f, args.rho) for f in range(args.fields)]
    symbols = sum(y.size for y in fields)
    baseline = {}
    for allocation in args.allocations:
        for backend in args.backends:
            config = CodecConfig(args.seed, allocation, backend, ContextConfig(window=args.window, depth=args.depth))
            bits_y = bits_z = 0
            t_ctx = t_ac = 0.0
            for y in fields:
                stream, trace = encode_session(y, config)
                bits_y += 8 * len(stream.y_segment)
                bits_z += 8 * len(stream.z_segment)
                t_ctx += trace.seconds_context
                t_ac += trace.seconds_coder
            row = {
                "allocation": ",".join(map(str, allocation)),
                "backend": config.backend,
                "bits_y": bits_y,
                "bits_z": bits_z,
                "bits_per_symbol": bits_y / symbols,
                "seconds_net": round(t_ctx, 4),
                "seconds_ac": round(t_ac, 4),
            }
            if config.backend == "hyperprior_only":
                baseline[allocation] = row["bits_per_symbol"]
            rows.append(row)
    for row in rows:
        alloc = tuple(int(a) for a in row["allocation"].split(","))
        row["gap_vs_hyper"] = baseline[alloc] - row["bits_per_symbol"] if alloc in baseline else None
    extra = {"config": _echo(args), "symbols": symbols}
    if args.oracle_samples and args.kind == "ar1":
        for allocation in args.allocations:
            step_map = build_schedule(args.dims, allocation).step_map
            est = entropy_gap_ar1(args.rho, step_map, OracleConfig(mc_samples=args.oracle_samples, seed=args.seed))
            for row in rows:
                if row["allocation"] == ",".join(map(str, allocation)):
                    row["oracle_gap"] = est.bits_per_symbol
                    row["oracle_gap_se"] = est.std_error
    _emit(args, rows, extra)
    return EXIT_OK


def cmd_toy(args) -> int:
    config = _codec_config(args)
    image = read_float(args.input)
    y_hat, _, report = toy_transform_roundtrip(image, config)
    if args.latent_out:
        write_latent(args.latent_out, y_hat)
    _emit(args, [report.as_dict()], {"config": _echo(args)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpcm", description="Multi-scale context-adaptive latent codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic latent file")
    p.add_argument("--kind", choices=GEN_KINDS, default="ar1")
    p.add_argument("--dims", type=_triple, required=True)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--low", type=int, default=-8)
    p.add_argument("--high", type=int, default=8)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("encode", help="latent file -> stream")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    _add_model_flags(p)
    _add_report_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="stream -> latent file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    _add_model_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("inspect", help="bit-allocation map and per-step table of a stream")
    p.add_argument("stream", type=Path)
    p.add_argument("out_prefix", type=Path)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--depth", choices=("base", "large"), default="base")
    p.add_argument("--weights", type=Path)
    p.add_argument("--seed", type=int, default=0, help="only used to tag a loaded weight file")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("schedule", help="dump the coding schedule as CSV")
    p.add_argument("--dims", type=_triple, required=True)
    p.add_argument("--allocation", type=_triple, default=(2, 3, 6))
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("weights", help="write the seed-derived weights to a file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--allocation", type=_triple, default=(2, 3, 6))
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--depth", choices=("base", "large"), default="base")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("bench", help="allocation x backend matrix on generated fields")
    p.add_argument("--kind", choices=GEN_KINDS, default="ar1")
    p.add_argument("--dims", type=_triple, default=(32, 64, 64))
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fields", type=int, default=1)
    p.add_argument("--allocations", type=_triple, nargs="+", default=list(SUPPORTED_ALLOCATIONS))
    p.add_argument("--backends", nargs="+", default=["hyper", "analytic"])
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--depth", choices=("base", "large"), default="base")
    p.add_argument("--oracle-samples", type=int, default=0, help="Monte Carlo size for the oracle gap (0 = skip)")
    _add_report_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("toy", help="toy analysis/synthesis round trip of an HPCF float tensor")
    p.add_argument("input", type=Path)
    p.add_argument("--latent-out", type=Path)
    _add_model_flags(p)
    _add_report_flags(p)
    p.set_defaults(func=cmd_toy)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IncompatibleStreamError, ConfigError, ScheduleError, ShapeError, WeightError) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))
    except CorruptBitstreamError as exc:
        return _fail(EXIT_CORRUPT, type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, type(exc).__name__, str(exc))
    except HpcmError as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
