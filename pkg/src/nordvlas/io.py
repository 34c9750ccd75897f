"""Run configuration files, diagnostics CSV and raw field snapshots.

Config files are INI-style (``[section]`` then ``key = value``); keys match
the RunConfig / DataParams / GridSpec field names. Vectors are written as
comma-separated numbers.

Snapshot layout: a 64-byte ASCII header
``NVSNAP1 <nx> <ny> <nz> <dx> <time>`` (floats in shortest round-trip form)
padded with spaces and terminated by a newline, followed by two lattices
(phi, then dphi_dt) as little-endian float64 in C (row-major, [i, j, k]) order.
"""

from __future__ import annotations

import configparser
import csv
import math
from pathlib import Path

import numpy as np

from .initial_data import DataParams
from .state import DIAGNOSTIC_COLUMNS, DiagnosticsRecord, GridSpec, RunConfig, ScalarFieldState

CSV_MAGIC = "# nordvlas-diag v1"
SNAP_MAGIC = "NVSNAP1"
SNAP_HEADER_BYTES = 64

_DATA_SCALARS = ("A_f", "R_x", "R_p", "A_phi", "R_phi", "A_pi", "R_pi")
_DATA_VECTORS = ("x_off", "phi_off", "pi_off")
_KNOWN_KEYS = {
    "grid": ("center", "half_width", "cells_per_axis"),
    "time": ("t_end", "dt", "cfl_safety"),
    "sampling": ("nx_per_axis", "np_per_axis"),
    "data": _DATA_SCALARS + _DATA_VECTORS,
    "history": ("history_stride", "history_t_max"),
    "output": ("out_dir", "output_every", "snapshot_every"),
    "run": ("seed",),
}


class ConfigError(ValueError):
    pass


def _vec(text: str) -> tuple:
    parts = [float(v) for v in text.replace(" ", "").split(",") if v]
    if len(parts) != 3:
        raise ConfigError(f"expected a 3-vector, got {text!r}")
    return tuple(parts)


def auto_half_width(data: DataParams, center, t_end: float, cells: int, nx_per_axis: int) -> float:
    """Smallest causal half width whose cell size is commensurate with the x-sampling.

    Causal means the support reach plus t_end, with a two-cell margin. The
    cell size is then raised to the nearest multiple m * s of the x-sampling
    spacing s, so every cell holds the same number of sample columns. Any
    other ratio makes the cloud-in-cell deposit of a lattice ensemble alias
    into a standing pattern (for dx = s / 2, every other node is empty).
    Without matter there is nothing to deposit and the causal value is used
    as is.
    """
    reach = data.support_reach(center) + t_end
    dx_min = 2.0 * reach / (cells - 4)
    if data.A_f == 0.0:
        return 0.5 * cells * dx_min
    s = 2.0 * data.R_x / nx_per_axis
    dx = s * max(1, math.ceil(dx_min / s - 1e-9))
    return 0.5 * cells * dx


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key)
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default

    unknown = [f"[{sec}] {k}" for sec in cp.sections() for k in cp.options(sec)
               if k not in _KNOWN_KEYS.get(sec, ())]
    if unknown:
        raise ConfigError(f"unknown keys: {unknown}")

    data_kw = {}
    if cp.has_section("data"):
        for k in _DATA_SCALARS:
            if cp.has_option("data", k):
                data_kw[k] = float(cp.get("data", k))
        for k in _DATA_VECTORS:
            if cp.has_option("data", k):
                data_kw[k] = _vec(cp.get("data", k))
    data = DataParams(**data_kw)

    t_end = float(get("time", "t_end"))
    cfl = float(get("time", "cfl_safety", "0.4"))
    center = _vec(get("grid", "center", "0,0,0"))
    cells = int(get("grid", "cells_per_axis"))
    nx_per_axis = int(get("sampling", "nx_per_axis", "16"))
    hw_text = get("grid", "half_width", "auto").strip()
    if hw_text == "auto":
        half_width = auto_half_width(data, center, t_end, cells, nx_per_axis)
    else:
        half_width = float(hw_text)
    grid = GridSpec(center, half_width, cells)

    dt_text = get("time", "dt", "auto").strip()
    if dt_text == "auto":
        dt_max = cfl * grid.dx / math.sqrt(3.0)
        n = max(1, math.ceil(t_end / dt_max - 1e-9)) if t_end > 0 else 1
        dt = t_end / n if t_end > 0 else dt_max
    else:
        dt = float(dt_text)

    t_max = get("history", "history_t_max", "none").strip()
    out_dir = Path(get("output", "out_dir", "out"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    cfg = RunConfig(
        grid=grid,
        data=data,
        t_end=t_end,
        dt=dt,
        cfl_safety=cfl,
        nx_per_axis=nx_per_axis,
        np_per_axis=int(get("sampling", "np_per_axis", "16")),
        history_stride=int(get("history", "history_stride", "1")),
        history_t_max=None if t_max == "none" else float(t_max),
        output_every=int(get("output", "output_every", "1")),
        snapshot_every=int(get("output", "snapshot_every", "0")),
        out_dir=out_dir,
        seed=int(get("run", "seed", "0")),
    )
    if dt_text != "auto" and abs(cfg.n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError(f"t_end={t_end} is not a whole number of steps dt={dt}")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=None)


def format_config(cfg: RunConfig) -> str:
    d = cfg.data
    g = cfg.grid

    def v(t):
        return ",".join(repr(float(a)) for a in t)

    lines = [
        "[grid]", f"center = {v(g.center)}", f"half_width = {g.half_width!r}",
        f"cells_per_axis = {g.cells_per_axis}", "",
        "[time]", f"t_end = {cfg.t_end!r}", f"dt = {cfg.dt!r}", f"cfl_safety = {cfg.cfl_safety!r}", "",
        "[sampling]", f"nx_per_axis = {cfg.nx_per_axis}", f"np_per_axis = {cfg.np_per_axis}", "",
        "[data]",
    ]
    lines += [f"{k} = {getattr(d, k)!r}" for k in _DATA_SCALARS]
    lines += [f"{k} = {v(getattr(d, k))}" for k in _DATA_VECTORS]
    lines += ["", "[history]", f"history_stride = {cfg.history_stride}",
              f"history_t_max = {'none' if cfg.history_t_max is None else repr(cfg.history_t_max)}", "",
              "[output]", f"out_dir = {cfg.out_dir}", f"output_every = {cfg.output_every}",
              f"snapshot_every = {cfg.snapshot_every}", "", "[run]", f"seed = {cfg.seed}", ""]
    return "\n".join(lines)


class DiagnosticsWriter:
    """Appends records to a diagnostics CSV, flushing after every row."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._fh.write(CSV_MAGIC + "\n")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(DIAGNOSTIC_COLUMNS)
        self._fh.flush()

    def write(self, record: DiagnosticsRecord) -> None:
        self._w.writerow([repr(float(v)) for v in record.as_row()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_diagnostics(path, records) -> None:
    with DiagnosticsWriter(path) as w:
        for r in records:
            w.write(r)


def read_diagnostics(path) -> list:
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_MAGIC:
            raise ValueError(f"not a nordvlas diagnostics file (header {first!r})")
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != DIAGNOSTIC_COLUMNS:
        raise ValueError("unexpected diagnostics columns")
    return [DiagnosticsRecord(*(float(x) for x in row)) for row in rows[1:]]


def write_snapshot(path, field: ScalarFieldState) -> None:
    g = field.grid
    n = g.nodes
    head = f"{SNAP_MAGIC} {n} {n} {n} {float(g.dx)!r} {float(field.time)!r}"
    if len(head) > SNAP_HEADER_BYTES - 1:
        raise ValueError("snapshot header too long")
    raw = head.ljust(SNAP_HEADER_BYTES - 1).encode("ascii") + b"\n"
    with open(path, "wb") as fh:
        fh.write(raw)
        for a in (field.phi, field.dphi_dt):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_snapshot(path):
    """Returns (dims, dx, time, [lattices])."""
    with open(path, "rb") as fh:
        head = fh.read(SNAP_HEADER_BYTES).decode("ascii").split()
        if not head or head[0] != SNAP_MAGIC:
            raise ValueError("not a nordvlas snapshot")
        dims = tuple(int(v) for v in head[1:4])
        dx, time = float(head[4]), float(head[5])
        nf = 2
        body = np.frombuffer(fh.read(), dtype="<f8")
    size = int(np.prod(dims))
    if body.size != nf * size:
        raise ValueError("snapshot payload size mismatch")
    return dims, dx, time, [body[i * size:(i + 1) * size].reshape(dims) for i in range(nf)]
