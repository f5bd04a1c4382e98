"""Deterministic parameter archives.

A checkpoint is a zip holding ``header.json`` plus one ``params/<name>.npy``
per array.  Entries are written in sorted order with a fixed zip timestamp,
so saving the same parameters twice yields identical bytes; np.savez is
avoided because it stamps wall-clock times into the archive.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Mapping

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path: str | Path, header: Mapping, params: Mapping[str, np.ndarray]) -> None:
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_entry("header.json"), json.dumps(dict(header), sort_keys=True, indent=1))
        for name in sorted(params):
            buf = io.BytesIO()
            # not ascontiguousarray: that would promote 0-d arrays to (1,)
            np.lib.format.write_array(buf, np.asarray(params[name]))
            zf.writestr(_entry(f"params/{name}.npy"), buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        params = {}
        for name in zf.namelist():
            if name.startswith("params/") and name.endswith(".npy"):
                buf = io.BytesIO(zf.read(name))
                params[name[len("params/") : -len(".npy")]] = np.lib.format.read_array(buf)
    return header, params
