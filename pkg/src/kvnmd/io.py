"""Snapshots, CSV/JSON artifacts and the flat run-config format.

Binary state layout (all little-endian)::

    magic    4 bytes  b"KVNS"
    version  uint32   1
    ndim     uint32
    ndim x   label char[8] (ASCII, NUL padded), n_qubits uint32,
             periodic uint8, 3 pad bytes, lo float64, hi float64
    body     prod(N_axis) x (re float64, im float64), C order

Config grammar: one ``key = value`` per line; ``#`` starts a comment; blank
lines are ignored; keys are ``[A-Za-z_][A-Za-z0-9_.]*``; later keys win.
Values stay strings until the caller converts them.
"""
from __future__ import annotations

import csv
import hashlib
import json
import re
import struct
from pathlib import Path

import numpy as np

from .phase_space import AxisSpec, KvnState, PhaseGrid

MAGIC = b"KVNS"
VERSION = 1
_HEAD = struct.Struct("<4sII")
_AXIS = struct.Struct("<8sIB3xdd")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")


class ConfigError(ValueError):
    pass


def save_state(path, state: KvnState) -> Path:
    path = Path(path)
    g = state.grid
    if state.amp.shape != g.shape:
        raise ValueError("only single (unbatched) states can be saved")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, g.ndim))
        for ax in g.axes:
            fh.write(_AXIS.pack(ax.label.encode("ascii"), ax.n_qubits, int(ax.periodic), ax.lo, ax.hi))
        fh.write(np.ascontiguousarray(state.amp, dtype="<c16").tobytes())
    return path


def load_state(path) -> KvnState:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEAD.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, ndim = _HEAD.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} state snapshot")
    off = _HEAD.size
    axes = []
    for _ in range(ndim):
        label, nq, per, lo, hi = _AXIS.unpack_from(raw, off)
        off += _AXIS.size
        axes.append(AxisSpec(label.rstrip(b"\0").decode("ascii"), nq, lo, hi, bool(per)))
    grid = PhaseGrid(tuple(axes))
    body = np.frombuffer(raw, dtype="<c16", offset=off)
    if body.size != grid.total_dim:
        raise ValueError(f"{path}: body has {body.size} amplitudes, grid needs {grid.total_dim}")
    return KvnState(grid, body.reshape(grid.shape).astype(np.complex128))


def state_to_csv(path, state: KvnState, max_points: int = 1 << 16) -> Path:
    """One row per grid point: coordinates then ``re, im``."""
    g = state.grid
    if g.total_dim > max_points:
        raise ValueError(f"grid of {g.total_dim} points is too large for CSV (limit {max_points})")
    coords = np.meshgrid(*[ax.values() for ax in g.axes], indexing="ij")
    cols = [c.ravel() for c in coords] + [state.amp.real.ravel(), state.amp.imag.ravel()]
    return write_csv(path, list(g.labels) + ["re", "im"], zip(*cols))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        out[key] = value
    return out


def parse_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dump_config({k: str(v) for k, v in cfg.items()}).encode()).hexdigest()[:16]
