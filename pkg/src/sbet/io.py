"""CSV persistence with JSON sidecars, and ingestion of reduced-system inputs.

One-time series use the columns ``t,re,im`` (classical ensemble estimates
add ``stderr``); two-time fields use ``t2,t1,re,im`` in row-major
``(t2, t1)`` order. Numbers are printed with 17 significant digits, which
makes every write/read cycle bit-exact. The sidecar ``<name>.json`` carries
the exact grid step, index labels and the ``hbar`` convention.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boson import SystemCorrelations
from .errors import ValidationError
from .fermion import FermiSystemCorrelations
from .grid import ComplexSeries, TimeGrid, TwoTimeField

__all__ = [
    "SCHEMA_SERIES",
    "SCHEMA_FIELD",
    "SCHEMA_SERIES_STDERR",
    "Record",
    "IngestionWarning",
    "write_series",
    "write_field",
    "read_record",
    "write_json",
    "ingest_system_correlations",
]

log = logging.getLogger(__name__)

SCHEMA_SERIES = "t,re,im"
SCHEMA_SERIES_STDERR = "t,re,im,stderr"
SCHEMA_FIELD = "t2,t1,re,im"
FMT = "%.17g"
HBAR_CONVENTION = "hbar = 1; R_AB(t2, t1) = i <A(t2) B(t1)> (uncentred); C_AB(t) = <A(t) B(0)>"


class IngestionWarning(UserWarning):
    """Input accepted, but a symmetry check exceeded its tolerance."""


@dataclass
class Record:
    """A series or field read back from disk, with its sidecar."""

    data: ComplexSeries | TwoTimeField
    meta: dict
    stderr: np.ndarray | None = None


def _grid_meta(g: TimeGrid) -> dict:
    return {"t_start": g.t_start, "dt": g.dt, "n": g.n}


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_series(path, series: ComplexSeries, meta: dict | None = None, stderr=None) -> Path:
    path = Path(path).with_suffix(".csv")
    v = series.values
    cols = [series.times, v.real, v.imag]
    schema = SCHEMA_SERIES
    if stderr is not None:
        stderr = np.asarray(stderr, dtype=float)
        if stderr.shape != v.shape:
            raise ValidationError("stderr column must match the series length")
        cols.append(stderr)
        schema = SCHEMA_SERIES_STDERR
    np.savetxt(path, np.column_stack(cols), fmt=FMT, delimiter=",", header=schema, comments="")
    side = {"schema": schema, "grid": _grid_meta(series.grid), "convention": HBAR_CONVENTION, "hbar": 1.0}
    side.update(meta or {})
    write_json(_sidecar(path), side)
    return path


def write_field(path, fld: TwoTimeField, meta: dict | None = None) -> Path:
    path = Path(path).with_suffix(".csv")
    t2 = np.repeat(fld.outer.times, fld.inner.n)
    t1 = np.tile(fld.inner.times, fld.outer.n)
    v = fld.values.reshape(-1)
    np.savetxt(path, np.column_stack([t2, t1, v.real, v.imag]), fmt=FMT, delimiter=",", header=SCHEMA_FIELD, comments="")
    side = {
        "schema": SCHEMA_FIELD,
        "outer": _grid_meta(fld.outer),
        "inner": _grid_meta(fld.inner),
        "convention": HBAR_CONVENTION,
        "hbar": 1.0,
    }
    side.update(meta or {})
    write_json(_sidecar(path), side)
    return path


def _check_axis(t: np.ndarray, g: TimeGrid, what: str, path: Path):
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValidationError(f"{path}: {what} is not strictly increasing (rows out of order?)")
    ref = g.times
    if t.size != ref.size or np.abs(t - ref).max(initial=0.0) > 1e-9 * max(1.0, np.abs(ref).max(initial=0.0)):
        raise ValidationError(f"{path}: {what} is not the uniform grid declared in the sidecar")


def _grid_from(meta: dict, path: Path) -> TimeGrid:
    try:
        return TimeGrid(float(meta["t_start"]), float(meta["dt"]), int(meta["n"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: sidecar grid metadata incomplete ({exc})") from None


def read_record(path) -> Record:
    """Read a CSV written by :func:`write_series` or :func:`write_field`."""
    path = Path(path)
    side = _sidecar(path)
    if not side.is_file():
        raise ValidationError(f"{path}: missing JSON sidecar {side.name}")
    meta = json.loads(side.read_text())
    with open(path) as fh:
        header = fh.readline().strip()
    if header != meta.get("schema"):
        raise ValidationError(f"{path}: header {header!r} does not match sidecar schema {meta.get('schema')!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: non-finite entries")
    if header in (SCHEMA_SERIES, SCHEMA_SERIES_STDERR):
        g = _grid_from(meta["grid"], path)
        _check_axis(data[:, 0], g, "time column", path)
        s = ComplexSeries(g, data[:, 1] + 1j * data[:, 2])
        return Record(s, meta, data[:, 3].copy() if header == SCHEMA_SERIES_STDERR else None)
    if header == SCHEMA_FIELD:
        go, gi = _grid_from(meta["outer"], path), _grid_from(meta["inner"], path)
        if data.shape[0] != go.n * gi.n:
            raise ValidationError(f"{path}: expected {go.n * gi.n} rows, found {data.shape[0]}")
        t2 = data[:, 0].reshape(go.n, gi.n)
        t1 = data[:, 1].reshape(go.n, gi.n)
        if np.ptp(t2, axis=1).max(initial=0.0) > 0 or np.ptp(t1, axis=0).max(initial=0.0) > 0:
            raise ValidationError(f"{path}: rows are not in (t2, t1) row-major order")
        _check_axis(t2[:, 0], go, "t2 column", path)
        _check_axis(t1[0], gi, "t1 column", path)
        vals = (data[:, 2] + 1j * data[:, 3]).reshape(go.n, gi.n)
        return Record(TwoTimeField(go, gi, vals), meta)
    raise ValidationError(f"{path}: unknown CSV header {header!r}")


# ------------------------------------------------------------------ ingestion


def _warn(msg: str):
    log.warning(msg)
    warnings.warn(msg, IngestionWarning, stacklevel=3)


def ingest_system_correlations(files, tol: float = 1e-8) -> SystemCorrelations | FermiSystemCorrelations:
    """Assemble reduced-system inputs from CSV files.

    Sidecar ``quantity`` values: ``C_QQ`` (indices ``[v, v']``), ``R_QQ``
    (two-time, ``[v, v']``), ``Qbar`` (``[v]``) for bosons; ``C_SS``
    (indices ``[sigma, u, v]``) for fermions. The symmetry residual
    ``|C_AB(0) - C_BA(0)^*|`` (and the driven Hermiticity residual) is
    attached as ``diagnostics['symmetry_residual']``; exceeding ``tol``
    only warns.
    """
    recs = [read_record(f) for f in files]
    if not recs:
        raise ValidationError("no input files given")
    kinds = {r.meta.get("quantity") for r in recs}
    if kinds <= {"C_QQ", "R_QQ", "Qbar"}:
        return _ingest_boson(recs, tol)
    if kinds == {"C_SS"}:
        return _ingest_fermion(recs, tol)
    raise ValidationError(f"cannot combine input quantities {sorted(map(str, kinds))}")


def _index(rec: Record, n: int) -> tuple:
    idx = rec.meta.get("indices")
    if not isinstance(idx, list) or len(idx) != n:
        raise ValidationError(f"{rec.meta.get('quantity')}: sidecar needs {n} indices, got {idx!r}")
    return tuple(int(i) for i in idx)


def _assemble(entries: dict, shape_lead: int, what: str):
    if not entries:
        raise ValidationError(f"no {what} inputs")
    nv = 1 + max(max(k) for k in entries)
    missing = [(a, b) for a in range(nv) for b in range(nv) if (a, b) not in entries]
    if missing:
        raise ValidationError(f"{what} inputs missing index pairs {missing}")
    return nv


def _ingest_boson(recs, tol) -> SystemCorrelations:
    stat, drv, means = {}, {}, {}
    for r in recs:
        q = r.meta["quantity"]
        if q == "C_QQ":
            if not isinstance(r.data, ComplexSeries):
                raise ValidationError("C_QQ must be a one-time series")
            stat[_index(r, 2)] = r.data
        elif q == "R_QQ":
            if not isinstance(r.data, TwoTimeField):
                raise ValidationError("R_QQ must be a two-time field")
            drv[_index(r, 2)] = r.data
        else:
            means[_index(r, 1)[0]] = r.data
    nv = _assemble(stat, 2, "C_QQ")
    grids = {s.grid for s in stat.values()}
    if len(grids) != 1:
        raise ValidationError("all C_QQ inputs must share one grid")
    g = grids.pop()
    st = np.empty((nv, nv, g.n), dtype=complex)
    for (a, b), s in stat.items():
        st[a, b] = s.values
    kw = {}
    if drv:
        if _assemble(drv, 2, "R_QQ") != nv:
            raise ValidationError("R_QQ and C_QQ disagree in mode count")
        win = next(iter(drv.values())).outer
        if any(f.outer != win or f.inner != win for f in drv.values()):
            raise ValidationError("R_QQ inputs must share one square window")
        R = np.empty((nv, nv, win.n, win.n), dtype=complex)
        for (a, b), f in drv.items():
            R[a, b] = f.values
        m = np.zeros((nv, win.n))
        for v, s in means.items():
            if s.grid != win:
                raise ValidationError("Qbar must be sampled on the R_QQ window")
            m[v] = s.values.real
        kw = {"window": win, "R_QQ": R, "means": m}
    C = SystemCorrelations(g, st, provenance="file", **kw)
    res = C.symmetry_residual()
    C.diagnostics["symmetry_residual"] = res
    if res > tol:
        _warn(f"C_QQ symmetry residual {res:.3e} exceeds {tol:.1e}; inputs accepted")
    return C


def _ingest_fermion(recs, tol) -> FermiSystemCorrelations:
    blocks = {-1: {}, 1: {}}
    for r in recs:
        s, u, v = _index(r, 3)
        if s not in blocks:
            raise ValidationError(f"sigma must be -1 or +1, got {s}")
        blocks[s][(u, v)] = r.data
    nu = _assemble(blocks[-1], 2, "C_SS(-)")
    if _assemble(blocks[1], 2, "C_SS(+)") != nu:
        raise ValidationError("C_SS(+) and C_SS(-) disagree in orbital count")
    grids = {s.grid for b in blocks.values() for s in b.values()}
    if len(grids) != 1:
        raise ValidationError("all C_SS inputs must share one grid")
    g = grids.pop()
    arr = {}
    for sig, b in blocks.items():
        a = np.empty((nu, nu, g.n), dtype=complex)
        for (u, v), s in b.items():
            a[u, v] = s.values
        arr[sig] = a
    C = FermiSystemCorrelations(g, arr[-1], arr[1], provenance="file", canonical=False)
    res = max(
        float(np.abs(arr[s][:, :, 0] - arr[s][:, :, 0].conj().T).max()) for s in (-1, 1)
    )
    C.diagnostics["symmetry_residual"] = res
    C.diagnostics["anticommutator_residual"] = C.anticommutator_residual()
    if res > tol:
        _warn(f"C_SS symmetry residual {res:.3e} exceeds {tol:.1e}; inputs accepted")
    if C.diagnostics["anticommutator_residual"] > 1e-6:
        _warn(f"C_SS equal-time anticommutator off by {C.diagnostics['anticommutator_residual']:.3e}")
    return C
