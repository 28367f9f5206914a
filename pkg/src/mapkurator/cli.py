"""Command-line entry point: ``mapkurator run | synth | serve-types``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .exceptions import ConfigurationError, InputError, MapKuratorError
from .pipeline import PipelineConfig, load_config_file, run_batch, run_pipeline, validate_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

log = logging.getLogger("mapkurator")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 3000x2000, got {text!r}") from None


def _int_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":") if ":" in text else (text, text)
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like LO:HI, got {text!r}") from None


def _edits(text: str):
    return None if text.lower() in ("none", "inf") else int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapkurator", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="extract, correct, georeference and link text on a map")
    # defaults stay None so that config-file values are only overridden by flags actually given
    run.add_argument("--config", help="TOML config file (flags override its values)")
    run.add_argument("--input", help="map raster (PNG or uncompressed 8-bit RGB TIFF)")
    run.add_argument("--gcps", help="GCP metadata JSON")
    run.add_argument("--gazetteer", help="gazetteer JSONL")
    run.add_argument("--output", help="output GeoJSON path (a directory with --batch)")
    run.add_argument("--batch", metavar="DIR", help="process every map directory under DIR")
    run.add_argument("--spotter", choices=("oracle", "noise", "external"))
    run.add_argument("--truth", help="truth sidecar JSONL for the oracle/noise spotters")
    run.add_argument("--spotter-command", help="command line of an external spotter process")
    run.add_argument("--spotter-timeout", type=float, help="per-patch timeout in seconds (external spotter)")
    run.add_argument("--noise-p-sub", type=float, help="per-character substitution rate (noise spotter)")
    run.add_argument("--noise-jitter", type=float, help="vertex jitter in px (noise spotter)")
    run.add_argument("--noise-max-edits", type=_edits, help="cap on substitutions per label, or 'none'")
    run.add_argument("--patch-size", type=int)
    run.add_argument("--stride", type=int)
    run.add_argument("--iou-threshold", type=float)
    run.add_argument("--max-edit-distance", type=int)
    run.add_argument("--point-buffer", type=float, help="buffer in degrees around point entities")
    run.add_argument("--grid-cell", type=float, help="gazetteer grid cell size in degrees")
    run.add_argument("--jobs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--on-patch-error", choices=("skip", "abort"))
    run.add_argument("--dump-intermediate", metavar="DIR", help="write intermediate stage outputs to DIR")

    synth = sub.add_parser("synth", help="generate a synthetic map fixture")
    synth.add_argument("--seed", type=int, default=42)
    synth.add_argument("--size", type=_size, default=(3000, 2000), help="WIDTHxHEIGHT in pixels")
    synth.add_argument("--labels", type=int, default=50)
    synth.add_argument("--label-length", type=_int_range, default=(6, 10), metavar="LO:HI")
    synth.add_argument("--rotation", type=_int_range, default=(-30, 30), metavar="LO:HI", help="degrees")
    synth.add_argument("--scale", type=_int_range, default=(2, 4), metavar="LO:HI", help="glyph scale")
    synth.add_argument("--background", choices=("plain", "grid"), default="plain")
    synth.add_argument("--separated-vocab", action="store_true",
                       help="keep pairwise edit distance between labels >= 5")
    synth.add_argument("--out", required=True, help="output directory")

    serve = sub.add_parser("serve-types", help="serve the semantic type recommendation API")
    serve.add_argument("--types", help="type list JSONL (default: bundled Schema.org list)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--dim", type=int, default=256)
    return parser


def config_from_args(args) -> PipelineConfig:
    values = load_config_file(args.config) if args.config else {}
    for name in PipelineConfig.field_names():
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return PipelineConfig(**values)


def _cmd_run(args) -> int:
    try:
        cfg = config_from_args(args)
    except (ConfigurationError, OSError, TypeError) as exc:
        print(f"mapkurator: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.batch:
        errors = [e for e in validate_config(cfg.replace(input="-", gcps="-", gazetteer=cfg.gazetteer or "-",
                                                         truth=cfg.truth or "-"), check_files=False)]
        if errors:
            for e in errors:
                print(f"mapkurator: {e}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        errors = validate_config(cfg)
        if errors:
            for e in errors:
                print(f"mapkurator: {e}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        if args.batch:
            results = run_batch(cfg, args.batch)
            summary = {name: {"output": str(path), **stats.to_dict()} for name, path, stats in results}
        else:
            path, stats = run_pipeline(cfg)
            summary = {"output": str(path), **stats.to_dict()}
    except ConfigurationError as exc:
        print(f"mapkurator: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MapKuratorError as exc:
        print(f"mapkurator: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import SynthSpec, generate

    spec = SynthSpec(
        seed=args.seed, width_px=args.size[0], height_px=args.size[1], n_labels=args.labels,
        label_length=args.label_length, rotation_deg=args.rotation, glyph_scale=args.scale,
        background=args.background, separated_vocab=args.separated_vocab,
    )
    try:
        paths = generate(spec, args.out)
    except InputError as exc:
        print(f"mapkurator: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MapKuratorError as exc:
        print(f"mapkurator: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .recommender import TypeIndex, load_types, make_server

    try:
        index = TypeIndex(load_types(args.types), dim=args.dim)
    except (InputError, OSError) as exc:
        print(f"mapkurator: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    server = make_server(index, args.host, args.port)
    log.info("serving %d types on http://%s:%d", len(index), *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "synth": _cmd_synth, "serve-types": _cmd_serve}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
