"""JSON run configuration: strict parsing into RunConfig and back.

Every recognized key is listed in the whitelists below; anything else is
rejected with the section it appeared in. Omitted sections and keys fall
back to the dataclass defaults, and each defaulted section is logged once
so a run's effective configuration is never silent guesswork.

The ``field`` section names the one piece that cannot default: either

    "field": {"file": "maps/measured.json"}

loading a saved field map, or

    "field": {"parametric": {"g1_amplitude": 2.0e-4}}

building the smooth built-in model. A parsed configuration renders back to
an equivalent document with ``render_document``, and parsing that document
reproduces the identical RunConfig (numbers survive because the writer
emits shortest round-trip floats).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .cavity import (
    CavityGeometry,
    FeedConfig,
    FieldMap,
    ParametricGParams,
    balanced_feeds,
    parametric_g_model,
    single_feed,
)
from .errors import ConfigError
from .field_io import load_field_map
from .montecarlo import RunConfig
from .trajectories import (
    Aperture,
    CloudModel,
    DetectionProfile,
    FountainLayout,
    TiltVector,
)

log = logging.getLogger(__name__)

SECTIONS = (
    "geometry",
    "field",
    "feeds",
    "cloud",
    "tilt",
    "apertures",
    "detection",
    "drive",
    "sweep",
)

_GEOMETRY_KEYS = {
    "radius",
    "height",
    "endcap_hole_radius",
    "cutoff_tube_length",
    "loaded_q",
    "cutoff_decay_length",
    "operating_frequency",
    "midplane_height",
}
_FIELD_KEYS = {"file", "parametric"}
_PARAMETRIC_KEYS = {
    "g0_amplitude",
    "g1_amplitude",
    "g2_amplitude",
    "g1_sin_amplitude",
    "reference_q",
    "n_rho",
    "n_z",
}
_FEED_KEYS = {
    "mode",
    "azimuth",
    "delta_psi",
    "amplitude_ratio",
    "g_couplings",
    "normalized_detuning",
    "wall_loss_sin_amplitude",
}
_CLOUD_KEYS = {
    "position_mean",
    "position_sigma",
    "temperature",
    "launch_speed",
    "atom_mass",
}
_TILT_KEYS = {"parallel", "perpendicular", "parallel_offset", "perpendicular_offset"}
_APERTURE_KEYS = {"z", "radius"}
_DETECTION_KEYS = {"kind", "waist", "beam_axis_azimuth", "height"}
_DRIVE_KEYS = {
    "amplitude_factor",
    "rabi_averaging",
    "delta_nu",
    "n_samples",
    "seed",
    "chunk_size",
    "workers",
    "step_area",
    "min_steps",
    "phase_flag_threshold",
}
_SWEEP_KEYS = {"parameter", "values"}

SWEEP_PARAMETERS = (
    "amplitude_factor",
    "tilt.parallel",
    "tilt.perpendicular",
    "feeds.delta_psi",
)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ParsedConfig:
    """A run configuration plus the normalized document it came from.

    ``provided`` records which sections (and keys within each section) the
    source document actually supplied, before defaults were filled in, so
    callers can overlay a partial config onto another base configuration.
    """

    run: RunConfig
    sweep: Optional[SweepSpec]
    document: dict
    provided: dict


def _require_dict(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"section {where!r} must be a JSON object")
    return obj


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown key {unknown[0]!r} in section {where!r} "
            f"(recognized: {', '.join(sorted(allowed))})"
        )


def _number(section: dict, key: str, where: str, default):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    return float(v)


def _integer(section: dict, key: str, where: str, default):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer")
    return v


def _triple(section: dict, key: str, where: str, default):
    if key not in section:
        return default
    v = section[key]
    if (
        not isinstance(v, (list, tuple))
        or len(v) != 3
        or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v)
    ):
        raise ConfigError(f"{where}.{key} must be a list of three numbers")
    return tuple(float(c) for c in v)


def _log_defaults(doc: dict) -> None:
    missing = [name for name in SECTIONS if name not in doc and name != "sweep"]
    if missing:
        log.info("config: sections using defaults: %s", ", ".join(missing))


# ---------------------------------------------------------------------------
# section parsers


def _parse_geometry(doc: dict) -> tuple[CavityGeometry, FountainLayout]:
    section = _require_dict(doc.get("geometry", {}), "geometry")
    _check_keys(section, _GEOMETRY_KEYS, "geometry")
    base = CavityGeometry()
    layout = FountainLayout()
    geometry = CavityGeometry(
        radius=_number(section, "radius", "geometry", base.radius),
        height=_number(section, "height", "geometry", base.height),
        endcap_hole_radius=_number(
            section, "endcap_hole_radius", "geometry", base.endcap_hole_radius
        ),
        cutoff_tube_length=_number(
            section, "cutoff_tube_length", "geometry", base.cutoff_tube_length
        ),
        loaded_q=_number(section, "loaded_q", "geometry", base.loaded_q),
        cutoff_decay_length=_number(
            section, "cutoff_decay_length", "geometry", base.cutoff_decay_length
        ),
        operating_frequency=_number(
            section, "operating_frequency", "geometry", base.operating_frequency
        ),
    )
    midplane = _number(
        section, "midplane_height", "geometry", layout.cavity_midplane_height
    )
    return geometry, FountainLayout(
        cavity_midplane_height=midplane,
        detection_height=layout.detection_height,
    )


def _parse_field(doc: dict, geometry: CavityGeometry, base_dir: Path) -> FieldMap:
    if "field" not in doc:
        raise ConfigError(
            "section 'field' is required: give {'file': path} or "
            "{'parametric': {...}}"
        )
    section = _require_dict(doc["field"], "field")
    _check_keys(section, _FIELD_KEYS, "field")
    has_file = "file" in section
    has_param = "parametric" in section
    if has_file == has_param:
        raise ConfigError("section 'field' needs exactly one of 'file', 'parametric'")
    if has_file:
        rel = section["file"]
        if not isinstance(rel, str):
            raise ConfigError("field.file must be a path string")
        path = Path(rel)
        if not path.is_absolute():
            path = base_dir / path
        fmap = load_field_map(path, geometry)
        return dataclasses.replace(
            fmap, meta={**fmap.meta, "source_path": str(rel)}
        )
    sub = _require_dict(section["parametric"], "field.parametric")
    _check_keys(sub, _PARAMETRIC_KEYS, "field.parametric")
    base = ParametricGParams()
    params = ParametricGParams(
        g0_amplitude=_number(sub, "g0_amplitude", "field.parametric", base.g0_amplitude),
        g1_amplitude=_number(sub, "g1_amplitude", "field.parametric", base.g1_amplitude),
        g2_amplitude=_number(sub, "g2_amplitude", "field.parametric", base.g2_amplitude),
        g1_sin_amplitude=_number(
            sub, "g1_sin_amplitude", "field.parametric", base.g1_sin_amplitude
        ),
        reference_q=_number(sub, "reference_q", "field.parametric", base.reference_q),
        n_rho=_integer(sub, "n_rho", "field.parametric", base.n_rho),
        n_z=_integer(sub, "n_z", "field.parametric", base.n_z),
    )
    return parametric_g_model(geometry, params)


def _parse_feeds(doc: dict) -> FeedConfig:
    if "feeds" not in doc:
        return single_feed(0.0)
    section = _require_dict(doc["feeds"], "feeds")
    _check_keys(section, _FEED_KEYS, "feeds")
    mode = section.get("mode", "single")
    detuning = _number(section, "normalized_detuning", "feeds", 0.0)
    wall_sin = _number(section, "wall_loss_sin_amplitude", "feeds", 1.0)
    if mode == "single":
        forbidden = {"delta_psi", "amplitude_ratio", "g_couplings"} & set(section)
        if forbidden:
            raise ConfigError(
                f"feeds.{sorted(forbidden)[0]} applies to balanced mode only"
            )
        fc = single_feed(_number(section, "azimuth", "feeds", 0.0))
        return dataclasses.replace(
            fc,
            normalized_detuning=detuning,
            wall_loss_sin_amplitude=wall_sin,
        )
    if mode == "balanced":
        if "azimuth" in section:
            raise ConfigError("feeds.azimuth applies to single mode only")
        couplings = section.get("g_couplings", [1.0, 1.0])
        if (
            not isinstance(couplings, (list, tuple))
            or len(couplings) != 2
            or any(
                isinstance(c, bool) or not isinstance(c, (int, float))
                for c in couplings
            )
        ):
            raise ConfigError("feeds.g_couplings must be a list of two numbers")
        return balanced_feeds(
            delta_psi=_number(section, "delta_psi", "feeds", 0.0),
            amplitude_ratio=_number(section, "amplitude_ratio", "feeds", 1.0),
            normalized_detuning=detuning,
            g_couplings=(float(couplings[0]), float(couplings[1])),
            wall_loss_sin_amplitude=wall_sin,
        )
    raise ConfigError(f"feeds.mode must be 'single' or 'balanced', not {mode!r}")


def _parse_cloud(doc: dict) -> CloudModel:
    section = _require_dict(doc.get("cloud", {}), "cloud")
    _check_keys(section, _CLOUD_KEYS, "cloud")
    base = CloudModel()
    return CloudModel(
        position_mean=_triple(section, "position_mean", "cloud", base.position_mean),
        position_sigma=_triple(section, "position_sigma", "cloud", base.position_sigma),
        temperature=_number(section, "temperature", "cloud", base.temperature),
        launch_speed=_number(section, "launch_speed", "cloud", base.launch_speed),
        atom_mass=_number(section, "atom_mass", "cloud", base.atom_mass),
    )


def _parse_tilt(doc: dict) -> TiltVector:
    section = _require_dict(doc.get("tilt", {}), "tilt")
    _check_keys(section, _TILT_KEYS, "tilt")
    return TiltVector(
        parallel=_number(section, "parallel", "tilt", 0.0),
        perpendicular=_number(section, "perpendicular", "tilt", 0.0),
        parallel_offset=_number(section, "parallel_offset", "tilt", 0.0),
        perpendicular_offset=_number(section, "perpendicular_offset", "tilt", 0.0),
    )


def _parse_apertures(doc: dict) -> Optional[tuple[Aperture, ...]]:
    if "apertures" not in doc or doc["apertures"] is None:
        return None
    section = doc["apertures"]
    if not isinstance(section, list):
        raise ConfigError("section 'apertures' must be a list of {z, radius} objects")
    stack = []
    for i, entry in enumerate(section):
        where = f"apertures[{i}]"
        entry = _require_dict(entry, where)
        _check_keys(entry, _APERTURE_KEYS, where)
        if "z" not in entry or "radius" not in entry:
            raise ConfigError(f"{where} needs both 'z' and 'radius'")
        stack.append(
            Aperture(
                z=_number(entry, "z", where, None),
                radius=_number(entry, "radius", where, None),
            )
        )
    return tuple(stack)


def _parse_detection(doc: dict, layout: FountainLayout):
    section = _require_dict(doc.get("detection", {}), "detection")
    _check_keys(section, _DETECTION_KEYS, "detection")
    base = DetectionProfile()
    kind = section.get("kind", base.kind)
    if not isinstance(kind, str):
        raise ConfigError("detection.kind must be a string")
    detection = DetectionProfile(
        kind=kind,
        waist=_number(section, "waist", "detection", base.waist),
        beam_axis_azimuth=_number(
            section, "beam_axis_azimuth", "detection", base.beam_axis_azimuth
        ),
    )
    height = _number(section, "height", "detection", layout.detection_height)
    return detection, FountainLayout(
        cavity_midplane_height=layout.cavity_midplane_height,
        detection_height=height,
    )


def _parse_sweep(doc: dict) -> Optional[SweepSpec]:
    if "sweep" not in doc:
        return None
    section = _require_dict(doc["sweep"], "sweep")
    _check_keys(section, _SWEEP_KEYS, "sweep")
    if "parameter" not in section or "values" not in section:
        raise ConfigError("section 'sweep' needs both 'parameter' and 'values'")
    parameter = section["parameter"]
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(
            f"sweep.parameter {parameter!r} is not sweepable "
            f"(choose from {', '.join(SWEEP_PARAMETERS)})"
        )
    values = section["values"]
    if (
        not isinstance(values, list)
        or not values
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values)
    ):
        raise ConfigError("sweep.values must be a non-empty list of numbers")
    return SweepSpec(parameter=parameter, values=tuple(float(v) for v in values))


def parse_config(
    source: Union[str, Path], base_dir: Optional[Path] = None
) -> ParsedConfig:
    """Parse a JSON run configuration from a path or a raw JSON string.

    Relative field-map paths resolve against the config file's directory
    (or ``base_dir`` when parsing from a string).
    """
    if isinstance(source, Path) or (
        isinstance(source, str) and not source.lstrip().startswith("{")
    ):
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if base_dir is None:
            base_dir = path.parent
    else:
        text = source
    if base_dir is None:
        base_dir = Path.cwd()

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_document(doc, base_dir=base_dir)


def parse_document(doc: dict, base_dir: Optional[Path] = None) -> ParsedConfig:
    """Parse an already-decoded configuration document."""
    if base_dir is None:
        base_dir = Path.cwd()
    doc = _require_dict(doc, "<config>")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(
            f"unknown section {unknown[0]!r} "
            f"(recognized: {', '.join(SECTIONS)})"
        )
    _log_defaults(doc)

    geometry, layout = _parse_geometry(doc)
    field_map = _parse_field(doc, geometry, Path(base_dir))
    feeds = _parse_feeds(doc)
    cloud = _parse_cloud(doc)
    tilt = _parse_tilt(doc)
    apertures = _parse_apertures(doc)
    detection, layout = _parse_detection(doc, layout)

    drive = _require_dict(doc.get("drive", {}), "drive")
    _check_keys(drive, _DRIVE_KEYS, "drive")
    averaging = drive.get("rabi_averaging", "aperture")
    if not isinstance(averaging, str):
        raise ConfigError("drive.rabi_averaging must be a string")

    run = RunConfig(
        geometry=geometry,
        field_map=field_map,
        feeds=feeds,
        cloud=cloud,
        tilt=tilt,
        layout=layout,
        apertures=apertures,
        detection=detection,
        amplitude_factor=_number(drive, "amplitude_factor", "drive", 1.0),
        rabi_averaging=averaging,
        delta_nu=_number(drive, "delta_nu", "drive", None),
        n_samples=_integer(drive, "n_samples", "drive", RunConfig.n_samples),
        seed=_integer(drive, "seed", "drive", RunConfig.seed),
        chunk_size=_integer(drive, "chunk_size", "drive", RunConfig.chunk_size),
        workers=_integer(drive, "workers", "drive", RunConfig.workers),
        step_area=_number(drive, "step_area", "drive", RunConfig.step_area),
        min_steps=_integer(drive, "min_steps", "drive", RunConfig.min_steps),
        phase_flag_threshold=_number(
            drive, "phase_flag_threshold", "drive", RunConfig.phase_flag_threshold
        ),
    )
    sweep = _parse_sweep(doc)
    provided = {
        section: tuple(sorted(doc[section]))
        if isinstance(doc[section], dict)
        else ()
        for section in doc
    }
    return ParsedConfig(
        run=run,
        sweep=sweep,
        document=render_document(run, sweep),
        provided=provided,
    )


# ---------------------------------------------------------------------------
# rendering back to a document


def _field_section(fmap: FieldMap) -> dict:
    # file provenance wins: a map loaded from disk renders as that file even
    # when the stored metadata remembers a parametric origin
    meta = fmap.meta or {}
    if "source_path" in meta:
        return {"file": meta["source_path"]}
    if meta.get("model") == "parametric":
        return {
            "parametric": {
                "g0_amplitude": meta["g0_amplitude"],
                "g1_amplitude": meta["g1_amplitude"],
                "g2_amplitude": meta["g2_amplitude"],
                "g1_sin_amplitude": meta["g1_sin_amplitude"],
                "reference_q": meta["reference_q"],
                "n_rho": int(fmap.rho_nodes.size),
                "n_z": int(fmap.z_nodes.size),
            }
        }
    raise ConfigError(
        "this field map has no config representation; it was neither "
        "loaded from a file nor built parametrically"
    )


def render_document(run: RunConfig, sweep: Optional[SweepSpec] = None) -> dict:
    """Render a RunConfig to a configuration document that parses back to it."""
    if run.field_map is None:
        raise ConfigError("cannot render a configuration without a field map")
    g = run.geometry
    doc: dict = {
        "geometry": {
            "radius": g.radius,
            "height": g.height,
            "endcap_hole_radius": g.endcap_hole_radius,
            "cutoff_tube_length": g.cutoff_tube_length,
            "loaded_q": g.loaded_q,
            "operating_frequency": g.operating_frequency,
            "midplane_height": run.layout.cavity_midplane_height,
        },
        "field": _field_section(run.field_map),
    }
    if g.cutoff_decay_length is not None:
        doc["geometry"]["cutoff_decay_length"] = g.cutoff_decay_length

    fc = run.feeds
    feeds: dict = {
        "normalized_detuning": fc.normalized_detuning,
        "wall_loss_sin_amplitude": fc.wall_loss_sin_amplitude,
    }
    if len(fc.feeds) == 1:
        feeds["mode"] = "single"
        feeds["azimuth"] = fc.feeds[0].azimuth
    elif (
        len(fc.feeds) == 2
        and fc.feeds[0].azimuth == 0.0
        and fc.feeds[1].azimuth == math.pi
        and fc.feeds[0].amplitude == 1.0
        and fc.feeds[0].phase == -fc.feeds[1].phase
    ):
        feeds["mode"] = "balanced"
        feeds["delta_psi"] = 2.0 * fc.feeds[0].phase
        feeds["amplitude_ratio"] = fc.feeds[1].amplitude
        feeds["g_couplings"] = [fc.feeds[0].g_coupling, fc.feeds[1].g_coupling]
    else:
        raise ConfigError(
            "this feed arrangement has no config representation; use "
            "single_feed or balanced_feeds"
        )
    doc["feeds"] = feeds

    cl = run.cloud
    doc["cloud"] = {
        "position_mean": list(cl.position_mean),
        "position_sigma": list(cl.position_sigma),
        "temperature": cl.temperature,
        "launch_speed": cl.launch_speed,
        "atom_mass": cl.atom_mass,
    }
    t = run.tilt
    doc["tilt"] = {
        "parallel": t.parallel,
        "perpendicular": t.perpendicular,
        "parallel_offset": t.parallel_offset,
        "perpendicular_offset": t.perpendicular_offset,
    }
    if run.apertures is not None:
        doc["apertures"] = [
            {"z": a.z, "radius": a.radius} for a in run.apertures
        ]
    det = run.detection
    doc["detection"] = {
        "kind": det.kind,
        "waist": det.waist,
        "beam_axis_azimuth": det.beam_axis_azimuth,
        "height": run.layout.detection_height,
    }
    drive = {
        "amplitude_factor": run.amplitude_factor,
        "rabi_averaging": run.rabi_averaging,
        "n_samples": run.n_samples,
        "seed": run.seed,
        "chunk_size": run.chunk_size,
        "workers": run.workers,
        "step_area": run.step_area,
        "min_steps": run.min_steps,
        "phase_flag_threshold": run.phase_flag_threshold,
    }
    if run.delta_nu is not None:
        drive["delta_nu"] = run.delta_nu
    doc["drive"] = drive
    if sweep is not None:
        doc["sweep"] = {"parameter": sweep.parameter, "values": list(sweep.values)}
    return doc


def render_config(run: RunConfig, sweep: Optional[SweepSpec] = None) -> str:
    """JSON text for a RunConfig; parsing it reproduces the config exactly."""
    return json.dumps(render_document(run, sweep), indent=1)
