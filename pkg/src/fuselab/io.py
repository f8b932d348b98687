"""CSV ingestion/export for cuboid and tensile campaigns, plus atomic artifact writing."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .domain import CuboidRecord, ProcessParams, TensileRecord, compute_ved
from .errors import DomainError

log = logging.getLogger(__name__)

CUBOID_HEADER = ["id", "power_w", "speed_mm_s", "layer_um", "hatch_um", "scan_rot", "porosity", "hardness_hv"]
TENSILE_HEADER = ["id", "power_w", "speed_mm_s", "layer_um", "hatch_um", "scan_rot", "ys_mpa", "uts_mpa", "ef_pct"]
REPLICATE_COLUMNS = [f"{q}_{i}" for q in ("ys", "uts", "ef") for i in (1, 2, 3)]

# relative tolerance for a supplied VED column before it is flagged
VED_FLAG_RTOL = 0.01


def fmt(x) -> str:
    """Shortest round-trip float formatting; stable across runs."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _data_lines(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        return [line for line in fh if line.strip() and not line.lstrip().startswith("#")]


def _float(row, key, path, required=True):
    raw = (row.get(key) or "").strip()
    if raw == "":
        if required:
            raise DomainError(f"{path}: row id={row.get('id')} missing value for {key}")
        return None
    try:
        return float(raw)
    except ValueError:
        raise DomainError(f"{path}: row id={row.get('id')} has non-numeric {key}={raw!r}") from None


def _params(row, path):
    params = ProcessParams.from_um(
        _float(row, "power_w", path), _float(row, "speed_mm_s", path),
        _float(row, "layer_um", path), _float(row, "hatch_um", path),
        int(_float(row, "scan_rot", path)),
    )
    supplied = _float(row, "ved", path, required=False) if "ved" in row else None
    if supplied is not None:
        ved = compute_ved(params)
        if abs(supplied - ved) > VED_FLAG_RTOL * ved:
            log.warning("%s: row id=%s supplied VED %.4g disagrees with P/(v*h*l) = %.4g; using the formula",
                        path, row.get("id"), supplied, ved)
    return params


def _reader(path, required):
    lines = _data_lines(path)
    if not lines:
        raise DomainError(f"{path}: no header")
    reader = csv.DictReader(lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    return reader, missing


def read_cuboids(path) -> list:
    reader, missing = _reader(path, CUBOID_HEADER)
    if missing:
        raise DomainError(f"{path}: missing columns {missing}")
    out = []
    for row in reader:
        out.append(CuboidRecord(int(_float(row, "id", path)), _params(row, path),
                                _float(row, "porosity", path), _float(row, "hardness_hv", path)))
    if not out:
        raise DomainError(f"{path}: no data rows")
    return out


def read_tensile(path) -> list:
    base = [c for c in TENSILE_HEADER if c not in ("ys_mpa", "uts_mpa", "ef_pct")]
    reader, missing = _reader(path, base)
    if missing:
        raise DomainError(f"{path}: missing columns {missing}")
    fields = set(reader.fieldnames)
    out = []
    for row in reader:
        reps = {}
        for q in ("ys", "uts", "ef"):
            vals = [_float(row, f"{q}_{i}", path, required=False) for i in (1, 2, 3) if f"{q}_{i}" in fields]
            reps[q] = tuple(v for v in vals if v is not None)

        def value(col, q):
            v = _float(row, col, path, required=False) if col in fields else None
            if v is None and reps[q]:
                v = float(np.median(reps[q]))
            return v

        ys, uts, ef = value("ys_mpa", "ys"), value("uts_mpa", "uts"), value("ef_pct", "ef")
        if ys is None or ef is None:
            raise DomainError(f"{path}: row id={row.get('id')} lacks yield strength or ductility")
        replicate = tuple(zip(reps["ys"], reps["uts"], reps["ef"])) if any(reps.values()) else None
        out.append(TensileRecord(int(_float(row, "id", path)), _params(row, path), ys, ef, uts, replicate))
    if not out:
        raise DomainError(f"{path}: no data rows")
    return out


def _param_cells(p: ProcessParams):
    return [fmt(p.power), fmt(p.speed), fmt(p.layer_um), fmt(p.hatch_um), str(int(p.scan_rotation))]


def cuboids_to_csv(records, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CUBOID_HEADER)
    for r in records:
        w.writerow([r.id, *_param_cells(r.params), fmt(r.porosity), fmt(r.hardness)])
    return buf.getvalue()


def tensile_to_csv(records, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TENSILE_HEADER)
    for r in records:
        w.writerow([r.id, *_param_cells(r.params), fmt(r.yield_strength), fmt(r.ultimate_strength), fmt(r.ductility)])
    return buf.getvalue()


def table_to_csv(header, rows, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
