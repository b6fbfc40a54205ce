"""Plain-text persistence: node dumps, boundary signals, and CSV reports.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a partial file.  Floats are written with 17 significant
digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import io as _io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .signals import BoundarySignal, SignalLattice

SCHEMA_VERSION = 1
_FLOAT = "%.17g"


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FLOAT % float(value)
    return str(value)


def write_csv(
    path: str | os.PathLike,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    config_hash: str,
) -> Path:
    """CSV with a ``# schema=... config_hash=...`` line before the header row."""
    buf = _io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION} config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path: str | os.PathLike) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Return the metadata line as a dict and the rows as dicts of strings."""
    with open(path, newline="") as fh:
        first = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in first)
        rows = list(csv.DictReader(fh))
    return meta, rows


def csv_config_hash(path: str | os.PathLike) -> str | None:
    try:
        with open(path) as fh:
            first = fh.readline()
    except OSError:
        return None
    for item in first.lstrip("#").split():
        if item.startswith("config_hash="):
            return item.split("=", 1)[1]
    return None


def write_node_dump(
    path: str | os.PathLike,
    points: np.ndarray,
    values: np.ndarray,
    *,
    shape: Sequence[int],
    spacing: Sequence[float],
    label: str = "value",
) -> Path:
    """One node per line: coordinates then value, after a commented header."""
    points = np.atleast_2d(points)
    dim = points.shape[1]
    header = [
        "# wavefocus node dump",
        f"# m={dim}",
        "# nodes=" + ",".join(str(int(n)) for n in shape),
        "# spacing=" + ",".join(_FLOAT % h for h in spacing),
        "# columns=" + ",".join([f"x{k}" for k in range(dim)] + [label]),
    ]
    table = np.column_stack([points, np.asarray(values, dtype=float).reshape(-1)])
    buf = _io.StringIO()
    np.savetxt(buf, table, fmt=_FLOAT)
    return atomic_write_text(path, "\n".join(header) + "\n" + buf.getvalue())


def read_node_dump(path: str | os.PathLike) -> tuple[dict[str, str], np.ndarray]:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if "=" in line:
                key, val = line[1:].strip().split("=", 1)
                meta[key] = val
    return meta, np.loadtxt(path, comments="#", ndmin=2)


def write_signal(path: str | os.PathLike, signal: BoundarySignal) -> Path:
    """Boundary signal as text: lattice header, then one row per boundary node."""
    lat = signal.lattice
    lines = [
        "# wavefocus boundary signal",
        f"# n_boundary={lat.n_boundary}",
        f"# n_times={lat.n_times}",
        f"# dt={_FLOAT % lat.dt}",
        f"# T={_FLOAT % lat.horizon}",
        f"# half_steps={lat.half_steps}",
        f"# dim={lat.dim}",
        "# ds=" + ",".join(_FLOAT % v for v in lat.ds),
        "# points=" + ";".join(",".join(_FLOAT % c for c in p) for p in lat.points),
    ]
    buf = _io.StringIO()
    np.savetxt(buf, signal.values, fmt=_FLOAT)
    return atomic_write_text(path, "\n".join(lines) + "\n" + buf.getvalue())


def read_signal(path: str | os.PathLike, lattice: SignalLattice | None = None) -> BoundarySignal:
    """Inverse of :func:`write_signal`; reuses ``lattice`` when it conforms."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if "=" in line:
                key, val = line[1:].strip().split("=", 1)
                meta[key] = val
    ds = np.array([float(v) for v in meta["ds"].split(",")])
    points = np.array([[float(c) for c in p.split(",")] for p in meta["points"].split(";")])
    read = SignalLattice(points=points, ds=ds, dt=float(meta["dt"]), half_steps=int(meta["half_steps"]))
    if lattice is not None:
        lattice.require(read)
        read = lattice
    values = np.loadtxt(path, comments="#", ndmin=2).reshape(read.shape)
    return BoundarySignal(values, read)
