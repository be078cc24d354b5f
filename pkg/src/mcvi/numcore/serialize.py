"""Checkpoint I/O: one little-endian float32 blob plus a JSON sidecar
{name, shape} per array, zipped. Zip metadata is pinned so identical
state produces byte-identical files."""

from __future__ import annotations

import json
import zipfile

import numpy as np

# fixed timestamp keeps archives byte-reproducible
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_arrays(path, arrays: dict[str, np.ndarray], extra_json: dict | None = None):
    """Write arrays (sorted by name) as <name>.f32 + <name>.json entries.

    ``extra_json`` entries are stored verbatim as additional ``<key>.json``
    files (e.g. an architecture summary).
    """
    with zipfile.ZipFile(path, "w") as zf:
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            _write_entry(zf, name + ".f32", arr.tobytes())
            sidecar = {"name": name, "shape": list(arrays[name].shape)}
            _write_entry(zf, name + ".json",
                         json.dumps(sidecar, sort_keys=True).encode())
        if extra_json:
            for key in sorted(extra_json):
                _write_entry(zf, key + ".json",
                             json.dumps(extra_json[key], sort_keys=True, indent=1).encode())


def load_arrays(path) -> dict[str, np.ndarray]:
    """Read back arrays as float64; extra JSON entries are ignored."""
    arrays: dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path, "r") as zf:
        names = set(zf.namelist())
        for entry in sorted(names):
            if not entry.endswith(".json") or entry[:-5] + ".f32" not in names:
                continue
            meta = json.loads(zf.read(entry))
            blob = zf.read(entry[:-5] + ".f32")
            arr = np.frombuffer(blob, dtype="<f4").astype(np.float64)
            arrays[meta["name"]] = arr.reshape(meta["shape"])
    return arrays


def load_json_entry(path, key: str) -> dict:
    with zipfile.ZipFile(path, "r") as zf:
        return json.loads(zf.read(key + ".json"))
