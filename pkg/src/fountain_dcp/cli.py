"""Command-line entry point for running shift-estimation scenarios.

Parses a JSON configuration and/or names a preset scenario, runs the sweep,
and writes a CSV of results plus a JSON sidecar carrying the full effective
configuration, the seed, and digests, so any output can be reproduced from
its sidecar alone. Progress goes to standard error; data only to files.
Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .config import SweepSpec, parse_config
from .constants import TOOL_VERSION
from .errors import (
    ConfigError,
    ConversionError,
    EstimationError,
    FieldNullError,
    OutputError,
    UndefinedPhaseError,
)
from .experiments import (
    PRESET_ALIASES,
    get_preset,
    preset_scenarios,
    run_sweep,
    save_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


@dataclass(frozen=True)
class RunManifest:
    """Everything one invocation is going to do, resolved from the flags."""

    config_path: Optional[str]
    scenario: Optional[str]
    seed: Optional[int]
    n_samples: Optional[int]
    output_dir: str
    workers: Optional[int]
    overwrite: bool
    tool_version: str = TOOL_VERSION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fountain-dcp",
        description=(
            "Monte Carlo estimation of distributed cavity phase frequency "
            "shifts in an atomic fountain"
        ),
    )
    parser.add_argument(
        "--config",
        help="JSON run configuration; combined with --scenario it overrides "
        "the preset's fields",
    )
    parser.add_argument(
        "--scenario",
        help="named preset scenario (see --list-scenarios)",
    )
    parser.add_argument("--seed", type=int, help="Monte Carlo seed")
    parser.add_argument(
        "--samples", type=int, help="number of sampled trajectories per point"
    )
    parser.add_argument(
        "--output", default=".", help="output directory (default: current)"
    )
    parser.add_argument("--workers", type=int, help="worker thread count")
    parser.add_argument(
        "--overwrite",
        action="store_true",
        help="replace existing output files",
    )
    parser.add_argument(
        "--list-scenarios",
        action="store_true",
        help="print the preset scenarios and exit",
    )
    parser.add_argument(
        "--method",
        choices=("full", "effective_phase"),
        default="full",
        help="estimator route (default: full)",
    )
    parser.add_argument(
        "--basename",
        help="output file stem (default: the scenario name)",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="log defaulted config keys"
    )
    return parser


def list_scenarios(stream) -> None:
    scenarios = preset_scenarios()
    width = max(len(name) for name in scenarios)
    for name, sc in scenarios.items():
        print(f"{name:<{width}}  {sc.description}", file=stream)
    for alias, target in sorted(PRESET_ALIASES.items()):
        print(f"{alias:<{width}}  alias of {target}", file=stream)


def resolve_manifest(args: argparse.Namespace) -> RunManifest:
    if args.config is None and args.scenario is None:
        raise ConfigError("nothing to run: give --config, --scenario, or both")
    if args.seed is not None and not (-(2**63) <= args.seed < 2**63):
        raise ConfigError("seed must fit in 64 bits")
    if args.samples is not None and args.samples <= 0:
        raise ConfigError("samples must be positive")
    if args.workers is not None and args.workers <= 0:
        raise ConfigError("workers must be positive")
    return RunManifest(
        config_path=args.config,
        scenario=args.scenario,
        seed=args.seed,
        n_samples=args.samples,
        output_dir=args.output,
        workers=args.workers,
        overwrite=args.overwrite,
    )


def _resolve_run(manifest: RunManifest):
    """The (run, sweep, name) triple a manifest describes."""
    if manifest.scenario is not None:
        scenario = get_preset(manifest.scenario)
        run, sweep, name = scenario.base, scenario.sweep, scenario.name
    else:
        run, sweep, name = None, None, "custom"
    if manifest.config_path is not None:
        parsed = parse_config(Path(manifest.config_path))
        if run is None:
            run = parsed.run
            if parsed.sweep is not None:
                sweep = parsed.sweep
        else:
            # preset plus config: the config document wins field by field
            run = _merge_config_over(run, parsed)
            if parsed.sweep is not None:
                sweep = parsed.sweep
    if sweep is None:
        raise ConfigError(
            "no sweep defined: the config needs a 'sweep' section when no "
            "preset scenario is named"
        )
    updates: dict = {}
    if manifest.seed is not None:
        updates["seed"] = manifest.seed
    if manifest.n_samples is not None:
        updates["n_samples"] = manifest.n_samples
    if manifest.workers is not None:
        updates["workers"] = manifest.workers
    if updates:
        run = dataclasses.replace(run, **updates)
    return run, sweep, name


def _merge_config_over(base, parsed):
    """Sections the config document actually provided replace the preset's."""
    run = parsed.run
    provided = parsed.provided
    merged = base
    section_fields = {
        "geometry": ("geometry", "layout"),
        "field": ("field_map",),
        "feeds": ("feeds",),
        "cloud": ("cloud",),
        "tilt": ("tilt",),
        "apertures": ("apertures",),
        "detection": ("detection", "layout"),
    }
    for section, fields in section_fields.items():
        if section in provided:
            for f in fields:
                merged = dataclasses.replace(merged, **{f: getattr(run, f)})
    for key in provided.get("drive", ()):
        merged = dataclasses.replace(merged, **{key: getattr(run, key)})
    return merged


def run_manifest(
    manifest: RunManifest,
    method: str = "full",
    basename: Optional[str] = None,
    stream=sys.stderr,
) -> int:
    """Execute a manifest: resolve, sweep, write CSV plus sidecar.

    Raises the package's error types; the caller maps them to exit codes.
    """
    run, sweep, name = _resolve_run(manifest)

    def progress(msg: str) -> None:
        print(msg, file=stream, flush=True)

    result = run_sweep(
        run, sweep, scenario_name=name, method=method, progress=progress
    )
    csv_path, json_path = save_sweep(
        result,
        manifest.output_dir,
        basename=basename,
        overwrite=manifest.overwrite,
    )
    print(f"wrote {csv_path} and {json_path}", file=stream)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    if args.list_scenarios:
        list_scenarios(sys.stdout)
        return EXIT_OK
    try:
        manifest = resolve_manifest(args)
        return run_manifest(manifest, method=args.method, basename=args.basename)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        EstimationError,
        ConversionError,
        FieldNullError,
        UndefinedPhaseError,
    ) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OutputError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
