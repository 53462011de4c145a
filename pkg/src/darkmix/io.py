"""Panel and model files, and CSV report blocks.

A panel is stored as a JSON manifest plus a data file next to it, either

* ``csv``: header ``e1_j1,e1_j2,...`` (1-based condition and replicate,
  replicate fastest), one pixel per row, values at 17 significant digits;
* ``f64le``: raw little-endian IEEE-754 doubles, row-major, one pixel per row.

Models are JSON documents.  Floats are written with Python's shortest
round-trip representation, so reading a model back gives the identical
doubles.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .errors import DimensionError, ModelFileError, SchemaError, TruncatedDataError
from .model import (
    ComponentParameters,
    LEIMean,
    MixtureModel,
    MixtureWeights,
    NPMMean,
    PixelPanel,
    build_design,
)

PANEL_SCHEMA = "darkmix-panel"
MODEL_SCHEMA = "darkmix-model"
SCHEMA_VERSION = 1
LAYOUTS = ("csv", "f64le")


def column_names(design):
    return [f"e{e + 1}_j{j + 1}" for e in range(design.n_conditions) for j in range(design.replicates)]


def _design_json(design):
    return {
        "replicates": design.replicates,
        "conditions": [{"temp_c": c.temp_c, "duration_s": c.duration_s} for c in design.conditions],
    }


def panel_manifest(panel: PixelPanel, data_file: str, layout: str) -> dict:
    return {
        "schema": PANEL_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "n_pixels": panel.n,
        **_design_json(panel.design),
        "data_file": data_file,
        "layout": layout,
    }


def write_panel(panel: PixelPanel, path, layout: str = "f64le") -> Path:
    """Write ``panel`` as manifest ``path`` plus a sibling data file."""
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; choose from {LAYOUTS}")
    path = Path(path)
    data_path = path.with_suffix(".csv" if layout == "csv" else ".bin")
    if layout == "csv":
        with open(data_path, "w", newline="") as fh:
            fh.write(",".join(column_names(panel.design)) + "\n")
            np.savetxt(fh, panel.data, fmt="%.17g", delimiter=",")
    else:
        panel.data.astype("<f8").tofile(data_path)
    path.write_text(json.dumps(panel_manifest(panel, data_path.name, layout), indent=2) + "\n")
    return path


def _check_schema(doc, schema, where):
    if not isinstance(doc, dict) or doc.get("schema") != schema:
        raise SchemaError(f"{where}: not a {schema} document")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{where}: schema version {version!r} is not supported (expected {SCHEMA_VERSION})")


def _design_from(doc, prefix=""):
    try:
        conds = [(c["temp_c"], c["duration_s"]) for c in doc["conditions"]]
        r = doc["replicates"]
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"{prefix}conditions", f"malformed design ({exc})")
    return build_design(conds, r)


def read_panel(path):
    """Read a panel manifest and its data file; returns ``(panel, manifest)``."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: manifest is not valid JSON ({exc})")
    _check_schema(manifest, PANEL_SCHEMA, str(path))
    design = _design_from(manifest)
    n = int(manifest["n_pixels"])
    layout = manifest.get("layout")
    data_path = path.parent / manifest["data_file"]
    width = design.width
    if layout == "f64le":
        size = os.path.getsize(data_path)
        expected = n * width * 8
        if size != expected:
            if n and size % (8 * n) == 0:
                raise DimensionError(
                    f"{data_path}: {size // (8 * n)} columns per pixel, manifest implies "
                    f"{design.n_conditions} x {design.replicates} = {width}")
            raise TruncatedDataError(f"{data_path}: {size} bytes, expected {expected}")
        data = np.fromfile(data_path, dtype="<f8").reshape(n, width)
    elif layout == "csv":
        with open(data_path, newline="") as fh:
            header = fh.readline().strip().split(",")
            if len(header) != width:
                raise DimensionError(
                    f"{data_path}: {len(header)} columns, manifest implies "
                    f"{design.n_conditions} x {design.replicates} = {width}")
            if header != column_names(design):
                raise DimensionError(f"{data_path}: column names do not follow e<cond>_j<rep> order")
            try:
                data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
            except ValueError as exc:
                raise TruncatedDataError(f"{data_path}: ragged or unreadable row ({exc})")
        if data.size == 0:
            data = data.reshape(0, width)
        if data.shape[0] != n:
            raise TruncatedDataError(f"{data_path}: {data.shape[0]} rows, manifest declares {n}")
        if data.shape[1] != width:
            raise DimensionError(f"{data_path}: rows have {data.shape[1]} values, expected {width}")
    else:
        raise SchemaError(f"{path}: unknown layout {layout!r}")
    return PixelPanel(data, design), manifest


# ---------------------------------------------------------------------------
# models

def model_to_dict(model: MixtureModel, fit_info: dict | None = None) -> dict:
    comps = []
    for c in model.components:
        m = c.mean
        if m.kind == "npm":
            mean = {"values": [float(v) for v in m.values]}
        else:
            mean = {"beta1": float(m.beta1), "beta2": float(m.beta2),
                    "delta": [float(v) for v in m.delta], "beta_temp": float(m.beta_temp),
                    "groups": [[d, g] for d, g in sorted(m.groups.items())]}
        comps.append({"mean": mean, "alpha": [float(v) for v in c.alpha],
                      "gamma": [float(v) for v in c.gamma]})
    doc = {
        "schema": MODEL_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "design": _design_json(model.design),
        "K": model.K,
        "mean_model": model.mean_kind,
        "components": comps,
        "weights": {"theta": [float(v) for v in model.weights.theta]},
    }
    if fit_info:
        doc["fit"] = fit_info
    return doc


def _floats(value, path, length=None):
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ModelFileError(path, "expected a list of numbers")
    if length is not None and len(value) != length:
        raise ModelFileError(path, f"expected {length} numbers, got {len(value)}")
    return np.array(value, dtype=np.float64)


def _number(doc, key, path):
    v = doc.get(key) if isinstance(doc, dict) else None
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ModelFileError(f"{path}.{key}", "expected a number")
    return float(v)


def model_from_dict(doc: dict) -> tuple[MixtureModel, dict]:
    """Parse a model document; errors name the offending field path."""
    _check_schema(doc, MODEL_SCHEMA, "model")
    if not isinstance(doc.get("design"), dict):
        raise ModelFileError("design", "missing design")
    design = _design_from(doc["design"], "design.")
    kind = doc.get("mean_model")
    if kind not in ("npm", "lei"):
        raise ModelFileError("mean_model", f"expected 'npm' or 'lei', got {kind!r}")
    K = doc.get("K")
    comps_doc = doc.get("components")
    if not isinstance(comps_doc, list):
        raise ModelFileError("components", "expected a list")
    if not isinstance(K, int) or K != len(comps_doc):
        raise ModelFileError("K", f"does not match {len(comps_doc)} components")
    comps = []
    for k, c in enumerate(comps_doc):
        p = f"components[{k}]"
        if not isinstance(c, dict) or not isinstance(c.get("mean"), dict):
            raise ModelFileError(f"{p}.mean", "missing mean block")
        m = c["mean"]
        if kind == "npm":
            mean = NPMMean(_floats(m.get("values"), f"{p}.mean.values", design.n_conditions))
        else:
            groups = m.get("groups")
            if not isinstance(groups, list) or not all(isinstance(g, list) and len(g) == 2 for g in groups):
                raise ModelFileError(f"{p}.mean.groups", "expected [duration, group] pairs")
            mean = LEIMean(_number(m, "beta1", f"{p}.mean"), _number(m, "beta2", f"{p}.mean"),
                           _floats(m.get("delta"), f"{p}.mean.delta"),
                           _number(m, "beta_temp", f"{p}.mean"), {float(d): int(g) for d, g in groups})
        comps.append(ComponentParameters(mean, _floats(c.get("alpha"), f"{p}.alpha", 3),
                                         _floats(c.get("gamma"), f"{p}.gamma", 3)))
    w = doc.get("weights")
    if not isinstance(w, dict):
        raise ModelFileError("weights", "missing weights block")
    theta = _floats(w.get("theta"), "weights.theta", K - 1)
    return MixtureModel(design, comps, MixtureWeights(theta)), doc.get("fit", {})


def write_model(model: MixtureModel, path, fit_info: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model, fit_info), indent=2) + "\n")
    return path


def read_model(path) -> tuple[MixtureModel, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError("<root>", f"not valid JSON ({exc})")
    return model_from_dict(doc)


def fit_info(result) -> dict:
    return {"loglik": result.loglik, "iterations": result.iterations,
            "converged": bool(result.converged), "n_pixels": result.n}


def write_csv_block(stream, header, rows, title=None):
    """One report block: optional ``# title`` line, header, rows."""
    if title:
        stream.write(f"# {title}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    stream.write("\n")
