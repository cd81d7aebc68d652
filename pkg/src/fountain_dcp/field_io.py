"""Field-map file format: JSON with explicit grids and per-component arrays.

Layout::

    {
      "grid": {"rho_nodes": [...], "z_nodes": [...]},   # meters, increasing
      "h0z": [[...], ...],                              # optional, row-major
      "g": [
        {"m": 1, "parity": "cos", "re": [[...], ...], "im": [[...], ...]}
      ],
      "meta": {...}                                     # free-form
    }

Arrays are row-major on the rho x z grid: entry [i][j] belongs to
(rho_nodes[i], z_nodes[j]). Values round-trip at full double precision
because the writer serializes Python floats (shortest round-trip repr).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cavity import CavityGeometry, FieldComponent, FieldMap, validate_field_map
from .errors import ConfigError


def save_field_map(fmap: FieldMap, path: str | Path) -> None:
    """Write a field map; the result reloads bit-identically."""
    doc: dict = {
        "grid": {
            "rho_nodes": np.asarray(fmap.rho_nodes, float).tolist(),
            "z_nodes": np.asarray(fmap.z_nodes, float).tolist(),
        },
        "g": [
            {
                "m": int(comp.m),
                "parity": comp.parity,
                "re": np.asarray(comp.values.real, float).tolist(),
                "im": np.asarray(comp.values.imag, float).tolist(),
            }
            for comp in fmap.components
        ],
        "meta": dict(fmap.meta),
    }
    if fmap.h0z_values is not None:
        doc["h0z"] = np.asarray(fmap.h0z_values, float).tolist()
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def _as_2d(raw, what: str) -> np.ndarray:
    arr = np.asarray(raw, float)
    if arr.ndim != 2:
        raise ConfigError(f"{what} must be a 2-D row-major array")
    return arr


def load_field_map(path: str | Path, geometry: CavityGeometry) -> FieldMap:
    """Read and validate a field map against the given geometry.

    Unknown top-level keys, malformed grids, unsupported azimuthal orders,
    and components that break the on-axis invariants are all rejected with a
    ConfigError naming the offender.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"field map {path}: invalid JSON ({exc})") from exc

    if not isinstance(doc, dict):
        raise ConfigError(f"field map {path}: top level must be an object")
    allowed = {"grid", "g", "h0z", "meta"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"field map {path}: unknown keys {sorted(unknown)}")
    if "grid" not in doc or "g" not in doc:
        raise ConfigError(f"field map {path}: 'grid' and 'g' are required")

    grid = doc["grid"]
    if not isinstance(grid, dict) or set(grid) != {"rho_nodes", "z_nodes"}:
        raise ConfigError(
            f"field map {path}: grid must contain exactly rho_nodes and z_nodes"
        )
    rho_nodes = np.asarray(grid["rho_nodes"], float)
    z_nodes = np.asarray(grid["z_nodes"], float)

    comps = []
    for idx, entry in enumerate(doc["g"]):
        extra = set(entry) - {"m", "parity", "re", "im"}
        if extra:
            raise ConfigError(f"field map {path}: g[{idx}] unknown keys {sorted(extra)}")
        if "m" not in entry or "parity" not in entry or "re" not in entry:
            raise ConfigError(f"field map {path}: g[{idx}] needs m, parity, re")
        re = _as_2d(entry["re"], f"g[{idx}].re")
        im = (
            _as_2d(entry["im"], f"g[{idx}].im")
            if "im" in entry
            else np.zeros_like(re)
        )
        if re.shape != im.shape:
            raise ConfigError(f"field map {path}: g[{idx}] re/im shapes differ")
        comps.append(FieldComponent(int(entry["m"]), str(entry["parity"]), re + 1j * im))

    h0z_values = None
    if "h0z" in doc:
        h0z_values = _as_2d(doc["h0z"], "h0z")

    fmap = FieldMap(
        rho_nodes=rho_nodes,
        z_nodes=z_nodes,
        components=tuple(comps),
        h0z_values=h0z_values,
        meta=dict(doc.get("meta", {})),
    )
    validate_field_map(fmap, geometry)
    return fmap
