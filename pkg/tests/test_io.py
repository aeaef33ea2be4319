import json
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sbet.boson import SystemCorrelations
from sbet.errors import ValidationError
from sbet.fermion import FermiSystemCorrelations
from sbet.grid import ComplexSeries, TimeGrid, TwoTimeField
from sbet.io import IngestionWarning, ingest_system_correlations, read_record, write_field, write_series

vals = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(re=arrays(float, 9, elements=vals), im=arrays(float, 9, elements=vals), t0=st.floats(-5, 5), dt=st.floats(1e-3, 1.0))
def test_series_round_trip_is_bitwise(tmp_path, re, im, t0, dt):
    s = ComplexSeries(TimeGrid(t0, dt, 9), re + 1j * im)
    p = write_series(tmp_path / "s", s, {"quantity": "x"})
    back = read_record(p)
    np.testing.assert_array_equal(back.data.values, s.values)
    assert back.data.grid == s.grid
    assert back.meta["quantity"] == "x"


def test_field_round_trip(tmp_path, rng):
    g1, g2 = TimeGrid(0.0, 0.1, 4), TimeGrid(0.0, 0.2, 3)
    f = TwoTimeField(g1, g2, rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3)))
    back = read_record(write_field(tmp_path / "f", f))
    np.testing.assert_array_equal(back.data.values, f.values)


def test_stderr_column_round_trip(tmp_path):
    g = TimeGrid(0.0, 0.5, 3)
    p = write_series(tmp_path / "e", ComplexSeries(g, [1, 2, 3]), stderr=[0.1, 0.2, 0.3])
    rec = read_record(p)
    np.testing.assert_array_equal(rec.stderr, [0.1, 0.2, 0.3])
    with pytest.raises(ValidationError):
        write_series(tmp_path / "bad", ComplexSeries(g, [1, 2, 3]), stderr=[0.1])


def test_shuffled_rows_rejected(tmp_path):
    g = TimeGrid(0.0, 0.1, 5)
    p = write_series(tmp_path / "s", ComplexSeries(g, np.arange(5.0)))
    lines = p.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="increasing"):
        read_record(p)


def test_missing_sidecar_and_wrong_grid(tmp_path):
    g = TimeGrid(0.0, 0.1, 5)
    p = write_series(tmp_path / "s", ComplexSeries(g, np.arange(5.0)))
    side = p.with_suffix(".json")
    meta = json.loads(side.read_text())
    meta["grid"]["dt"] = 0.2
    side.write_text(json.dumps(meta))
    with pytest.raises(ValidationError, match="uniform grid"):
        read_record(p)
    side.unlink()
    with pytest.raises(ValidationError, match="sidecar"):
        read_record(p)


def _write_qq(tmp_path, values, v=0, vp=0, dt=0.1):
    g = TimeGrid(0.0, dt, len(values))
    return write_series(tmp_path / f"C_QQ_{v}{vp}", ComplexSeries(g, values), {"quantity": "C_QQ", "indices": [v, vp]})


def test_ingest_stationary_boson(tmp_path):
    vals = np.exp(-np.arange(6) * 0.3) + 0j
    C = ingest_system_correlations([_write_qq(tmp_path, vals)])
    assert isinstance(C, SystemCorrelations)
    np.testing.assert_array_equal(C.stationary[0, 0], vals)
    assert C.diagnostics["symmetry_residual"] == 0.0


def test_ingest_warns_on_small_asymmetry(tmp_path):
    vals = np.exp(-np.arange(6) * 0.3) + 0j
    vals[0] += 1e-3j
    with pytest.warns(IngestionWarning):
        C = ingest_system_correlations([_write_qq(tmp_path, vals)])
    assert C.diagnostics["symmetry_residual"] == pytest.approx(2e-3)


def test_ingest_clean_input_does_not_warn(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ingest_system_correlations([_write_qq(tmp_path, np.ones(4) + 0j)])


def test_ingest_missing_pair(tmp_path):
    with pytest.raises(ValidationError, match="missing"):
        ingest_system_correlations([_write_qq(tmp_path, np.ones(4) + 0j, 0, 1)])


def test_ingest_driven(tmp_path):
    st_path = _write_qq(tmp_path, np.exp(-np.arange(40) * 0.3) + 0j)
    win = TimeGrid(0.0, 0.1, 4)
    lag = np.subtract.outer(np.arange(4), np.arange(4))
    R = 1j * np.exp(-0.3 * np.abs(lag))
    fp = write_field(tmp_path / "R", TwoTimeField(win, win, R), {"quantity": "R_QQ", "indices": [0, 0]})
    mp = write_series(tmp_path / "Qbar", ComplexSeries(win, np.zeros(4)), {"quantity": "Qbar", "indices": [0]})
    C = ingest_system_correlations([st_path, fp, mp])
    np.testing.assert_array_equal(C.R_QQ[0, 0], R)
    assert C.window == win


def test_ingest_fermion(tmp_path):
    g = TimeGrid(0.0, 0.1, 5)
    t = g.times
    files = [
        write_series(tmp_path / "m", ComplexSeries(g, 0.6 * np.exp(-1j * t)), {"quantity": "C_SS", "indices": [-1, 0, 0]}),
        write_series(tmp_path / "p", ComplexSeries(g, 0.4 * np.exp(1j * t)), {"quantity": "C_SS", "indices": [1, 0, 0]}),
    ]
    C = ingest_system_correlations(files)
    assert isinstance(C, FermiSystemCorrelations)
    assert C.diagnostics["anticommutator_residual"] < 1e-15


def test_ingest_rejects_mixed_kinds(tmp_path):
    g = TimeGrid(0.0, 0.1, 3)
    a = _write_qq(tmp_path, np.ones(3) + 0j)
    b = write_series(tmp_path / "m", ComplexSeries(g, np.ones(3)), {"quantity": "C_SS", "indices": [-1, 0, 0]})
    with pytest.raises(ValidationError):
        ingest_system_correlations([a, b])
