"""``srbim`` command line entry point.

Exit status: 0 when at least one IFC object was written, 1 when the run
produced nothing, 2 for usage, configuration or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, PipelineFailure, SrbimError
from .mfs import FILTER_MODES, MfsConfig
from .pipeline import BUILTIN_MAPPING, PipelineConfig, emit_report, run_pipeline

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# config-file key -> (argparse dest, type)
CONFIG_KEYS = {
    "input": ("input", str),
    "labels": ("labels", str),
    "mapping": ("mapping", str),
    "output": ("output", str),
    "alpha": ("alpha", float),
    "depth": ("depth", int),
    "normals_k": ("normals_k", int),
    "smooth_lambda": ("smooth_lambda", float),
    "smooth_iters": ("smooth_iters", int),
    "filter_mode": ("filter_mode", str),
    "min_points": ("min_points", int),
    "jobs": ("jobs", int),
    "dump_intermediate": ("dump_intermediate", bool),
    "dump_dir": ("dump_dir", str),
    "report": ("report", str),
    "project_name": ("project_name", str),
}

DEFAULTS = {
    "mapping": None,
    "alpha": 0.05,
    "depth": 8,
    "normals_k": 16,
    "smooth_lambda": 0.5,
    "smooth_iters": 10,
    "filter_mode": "absolute",
    "min_points": 50,
    "jobs": 1,
    "dump_intermediate": False,
    "project_name": "SRBIM Project",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="srbim",
        description="Convert a semantically labeled point cloud (PLY) into a colorized IFC4 model.",
    )
    ap.add_argument("--config", help="TOML file with any of the options below (flags win)")
    ap.add_argument("--input", help="labeled point cloud, ASCII or binary PLY")
    ap.add_argument("--labels", help="sidecar label file, one integer per point")
    ap.add_argument("--mapping", help=f"mapping table TOML, or '{BUILTIN_MAPPING}'")
    ap.add_argument("--output", help="IFC file to write")
    ap.add_argument("--alpha", type=float, help="density cut for vertex removal (default 0.05)")
    ap.add_argument("--depth", type=int, help="octree depth for reconstruction (default 8)")
    ap.add_argument("--normals-k", dest="normals_k", type=int, help="neighbors for normal estimation (default 16)")
    ap.add_argument("--smooth-lambda", dest="smooth_lambda", type=float, help="smoothing step (default 0.5)")
    ap.add_argument("--smooth-iters", dest="smooth_iters", type=int, help="smoothing passes (default 10)")
    ap.add_argument("--filter-mode", dest="filter_mode", choices=FILTER_MODES)
    ap.add_argument("--min-points", dest="min_points", type=int, help="skip smaller segments (default 50)")
    ap.add_argument("--jobs", type=int, help="worker processes (default 1)")
    ap.add_argument("--dump-intermediate", dest="dump_intermediate", action="store_true", default=None,
                    help="write density CSVs and intermediate meshes")
    ap.add_argument("--dump-dir", dest="dump_dir", help="where --dump-intermediate writes (default <output>_debug)")
    ap.add_argument("--report", help="write a JSON run report here")
    ap.add_argument("--project-name", dest="project_name")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _read_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from None
    out = {}
    for key, value in raw.items():
        norm = key.replace("-", "_")
        if norm not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        dest, typ = CONFIG_KEYS[norm]
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            raise ConfigError(f"config key {key!r} must be {typ.__name__}")
        out[dest] = value
    return out


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(_read_config_file(args.config))
    for dest, _ in CONFIG_KEYS.values():
        value = getattr(args, dest, None)
        if value is not None:
            opts[dest] = value
    return opts


def config_from_options(opts: dict) -> PipelineConfig:
    for required in ("input", "mapping", "output"):
        if not opts.get(required):
            raise ConfigError(f"--{required} is required (flag or config file)")
    try:
        mfs = MfsConfig(
            alpha=opts["alpha"],
            octree_depth=opts["depth"],
            normals_k=opts["normals_k"],
            smooth_lambda=opts["smooth_lambda"],
            smooth_iterations=opts["smooth_iters"],
            filter_mode=opts["filter_mode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return PipelineConfig(
        input_path=opts["input"],
        output_path=opts["output"],
        mapping_path=opts["mapping"],
        labels_path=opts.get("labels"),
        mfs=mfs,
        jobs=opts["jobs"],
        dump_intermediate=bool(opts["dump_intermediate"]),
        dump_dir=opts.get("dump_dir"),
        min_segment_points=opts["min_points"],
        report_path=opts.get("report"),
        project_name=opts["project_name"],
    )


def main(argv=None, *, id_factory=None, clock=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_options(resolve_options(args))
    except ConfigError as exc:
        print(f"srbim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    kwargs = {}
    if id_factory is not None:
        kwargs["id_factory"] = id_factory
    if clock is not None:
        kwargs["clock"] = clock
    densities_dir = config.resolved_dump_dir if config.dump_intermediate else None
    try:
        report = run_pipeline(config, **kwargs)
    except ConfigError as exc:
        print(f"srbim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineFailure as exc:
        print(f"srbim: {exc}", file=sys.stderr)
        if config.report_path and exc.report is not None:
            emit_report(exc.report, config.report_path, densities_dir)
        return EXIT_FAILURE
    except (SrbimError, OSError) as exc:
        print(f"srbim: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    if config.report_path:
        emit_report(report, config.report_path, densities_dir)
    t = report.totals()
    print(f"wrote {Path(config.output_path)}: {t['succeeded']} objects "
          f"({t['skipped']} skipped, {t['failed']} failed) in {t['elapsed_s']:.1f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
