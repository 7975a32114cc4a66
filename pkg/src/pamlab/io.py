"""Artifact writers: CSV tables, JSON documents, flat binary arrays with sidecars."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import shutil
import tempfile
from pathlib import Path

import numpy as np


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def fmt(x) -> str:
    """Shortest round-trip text for numbers; '.' decimal regardless of locale."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_default)
        fh.write("\n")


def write_array(path, arr, meta=None):
    """Little-endian float64, C order, plus <path>.json with shape and metadata."""
    a = np.ascontiguousarray(arr, dtype="<f8")
    a.tofile(path)
    side = {"dtype": "<f8", "order": "C", "shape": list(a.shape), "meta": meta or {}}
    write_json(str(path) + ".json", side)


def read_array(path):
    with open(str(path) + ".json", encoding="utf-8") as fh:
        side = json.load(fh)
    a = np.fromfile(path, dtype=side["dtype"]).reshape(side["shape"])
    return a, side["meta"]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions():
    import scipy

    from . import __version__, kernels

    return {"pamlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": kernels.backend()}


class OutputDir:
    """Stage artifacts in a temporary sibling directory; publish on success only.

    On an exception nothing is left behind.  Existing files of the same
    name in the destination are replaced.
    """

    def __init__(self, dest):
        self.dest = Path(dest)
        self.tmp = None
        self.names = []

    def __enter__(self):
        self.dest.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".pamlab-", dir=self.dest.parent))
        return self

    def path(self, name):
        self.names.append(name)
        return self.tmp / name

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.dest.mkdir(parents=True, exist_ok=True)
                for p in sorted(self.tmp.iterdir()):
                    os.replace(p, self.dest / p.name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def write_field(path, field):
    """PotentialField (or any object with box/values) as flat binary plus sidecar."""
    meta = {"d": field.box.d, "radius": field.box.radius, "kind": field.box.kind,
            "order": "row-major over [-r, r]^d"}
    if getattr(field, "seed", None) is not None:
        meta["seed"] = int(field.seed)
    if getattr(field, "dist", None) is not None:
        meta["distribution"] = field.dist.to_config()
    write_array(path, field.values, meta)


def read_field(path):
    from .potential import BoxSpec, PotentialDistribution, PotentialField

    values, meta = read_array(path)
    box = BoxSpec(meta["d"], meta["radius"], meta.get("kind", "Lattice"))
    dist = PotentialDistribution.from_config(meta["distribution"]) if "distribution" in meta else None
    return PotentialField(box, values, meta.get("seed"), dist)
