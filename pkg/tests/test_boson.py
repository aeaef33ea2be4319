import numpy as np
import pytest

from helpers import DT, Q, bath, coupled_model, driven_inputs, rel_l2, stationary_inputs
from sbet.boson import (
    DrivenGrids,
    DriveProfile,
    GaussianPulse,
    SystemCorrelations,
    auto_tail_policy,
    bath_mean,
    entangled_FF,
    entangled_FQ,
    entangled_QF,
    run_driven,
    run_field_free,
    sbet_field_free_FF,
    sbet_field_free_FQ,
    sbet_field_free_QF,
)
from sbet.errors import PipelineOrderError, ValidationError
from sbet.grid import TimeGrid, tail_integral
from sbet.oracles import boson_stationary_correlations

F = ("F", 0, 0)


def uncoupled_pair():
    return [bath(eta=0.0, mu=1.0), bath(eta=0.0, mu=0.5)]


# ------------------------------------------------------------------ field-free


def test_eta_zero_field_free_is_bare():
    C = stationary_inputs()
    res = run_field_free(uncoupled_pair(), C, 5.0)
    t = TimeGrid.span(0, 5, DT).times
    for s in list(res.FQ.values()) + list(res.QF.values()):
        assert not np.any(s.values)
    np.testing.assert_array_equal(res.FF[(0, 0, 0, 0)].values, uncoupled_pair()[0].c_minus(t))
    assert not np.any(res.FF[(0, 0, 1, 0)].values)
    assert not np.any(res.FF[(1, 0, 0, 0)].values)


def test_field_free_FQ_at_zero_is_tail_only():
    C = stationary_inputs()
    b = bath()
    pol = auto_tail_policy(C)
    g0 = TimeGrid(0.0, DT, 1)
    got = sbet_field_free_FQ(b, 0, 0, C, g0, pol).values[0]
    tail = tail_integral(lambda x: b.c_minus(x), C.series(0, 0), pol, np.array([0.0])).values[0]
    assert got == pytest.approx(-2.0 * tail.imag, rel=1e-12)


def test_field_free_conjugation_identity():
    C = stationary_inputs()
    b = bath()
    g = TimeGrid.symmetric(3.0, DT)
    fq = sbet_field_free_FQ(b, 0, 0, C, g).values
    qf = sbet_field_free_QF(b, 0, 0, C, g).values
    np.testing.assert_allclose(np.conj(qf[::-1]), fq, rtol=1e-13, atol=1e-15)


def test_field_free_matches_oracle():
    C = stationary_inputs()
    res = run_field_free([bath()], C, 10.0)
    g = TimeGrid.span(0, 10, DT)
    ref = boson_stationary_correlations(coupled_model(), [Q, F], g)
    assert rel_l2(res.FQ[(0, 0, 0)].values, ref[(F, Q)].values) < 0.02
    assert rel_l2(res.QF[(0, 0, 0)].values, ref[(Q, F)].values) < 0.02
    assert rel_l2(res.FF[(0, 0, 0, 0)].values, ref[(F, F)].values) < 0.02


def test_field_free_FF_needs_stage1():
    C = stationary_inputs()
    with pytest.raises(PipelineOrderError):
        sbet_field_free_FF([bath()], 0, 0, 0, 0, C, None, TimeGrid.span(0, 1, DT))


def test_output_grid_must_share_step():
    C = stationary_inputs()
    with pytest.raises(ValidationError):
        sbet_field_free_FQ(bath(), 0, 0, C, TimeGrid.span(0, 1, 2 * DT))


def test_tail_beyond_inputs_rejected():
    g = TimeGrid.span(0, 2.0, DT)
    C = SystemCorrelations(g, np.exp(-g.times))
    from sbet.grid import TailPolicy

    with pytest.raises(ValidationError):
        run_field_free([bath()], C, 1.0, policy=TailPolicy(5.0))


# ------------------------------------------------------------------ driven


def test_eta_zero_no_drive_driven_is_bare():
    C, drive, grids = driven_inputs(0.0)
    baths = uncoupled_pair()
    r = run_driven(baths, drive, C, grids)
    for f in list(r.FQ.values()) + list(r.QF.values()):
        assert not np.any(f.values)
    o = grids.output.times
    bare = 1j * baths[0].c_minus(o[:, None] - o[None, :])
    np.testing.assert_allclose(r.FF[(0, 0, 0, 0)].values, bare, rtol=0, atol=1e-14)
    assert not np.any(r.FF[(0, 0, 1, 0)].values)
    for m in r.means.values():
        assert not np.any(m.values)


def test_zero_drive_zero_mean_gives_zero_bath_mean():
    C, drive, grids = driven_inputs(0.0)
    C0 = SystemCorrelations(C.grid, C.stationary, window=C.window, R_QQ=C.R_QQ, means=np.zeros(C.window.n))
    for s in bath_mean([bath()], drive, C0).values():
        assert not np.any(s.values)


def test_bath_mean_vanishes_at_switch_on():
    C, drive, grids = driven_inputs(1.0)
    means = bath_mean([bath(mu=1.0)], drive, C)
    assert means[(0, 0)].values[C.window.index_of(drive.t_on)] == 0


def test_bath_mean_is_linear_in_drive():
    C1, d1, _ = driven_inputs(1.0)
    C2, d2, _ = driven_inputs(2.0)
    b = bath()
    m1 = bath_mean([b], d1, C1)[(0, 0)].values
    m2 = bath_mean([b], d2, C2)[(0, 0)].values
    np.testing.assert_allclose(m2, 2.0 * m1, rtol=1e-10, atol=1e-14)


def test_bath_mean_of_narrow_pulse_is_phi():
    C, _, _ = driven_inputs(0.0)
    w, t0 = 0.05, 1.0
    drive = DriveProfile(0.0, bath={(0, 0): GaussianPulse(1.0 / (np.sqrt(2 * np.pi) * w), t0, w)})
    b = bath(eta=0.0, mu=1.0)
    fbar = bath_mean([b], drive, C)[(0, 0)]
    t = C.window.times
    sel = t > t0 + 0.5
    assert rel_l2(fbar.values.real[sel], b.phi(t[sel] - t0).real) < 5e-3


def test_zero_drive_is_stationary_along_diagonals():
    C, drive, grids = driven_inputs(0.0)
    r = run_driven([bath()], drive, C, grids)
    f = r.FQ[(0, 0, 0)]
    scale = np.abs(f.values).max()
    for k in range(-6, 7):
        assert np.ptp(f.diagonal_lag(k).real) < 1e-10 * scale
        assert np.ptp(f.diagonal_lag(k).imag) < 1e-10 * scale


def test_zero_drive_reduces_to_field_free():
    C, drive, grids = driven_inputs(0.0)
    b = bath()
    pol = auto_tail_policy(C)
    r = run_driven([b], drive, C, grids, policy=pol)
    ff = run_field_free([b], C, 4.0, policy=pol)
    diag = np.array([r.FQ[(0, 0, 0)].values[k, 0] for k in range(grids.output.n)])
    # driven fields are i<...>, uncentred; steady means vanish here
    ref = 1j * ff.FQ[(0, 0, 0)].values[:: grids.stride]
    np.testing.assert_allclose(diag, ref, rtol=0, atol=1e-10 * np.abs(ref).max())


def test_mirror_identity_and_accuracy_under_drive():
    C, drive, grids = driven_inputs(1.0)
    r = run_driven([bath()], drive, C, grids)
    assert r.diagnostics["mirror_residual"] <= 1e-10 * r.diagnostics["overline_scale"]


def test_entangled_FF_needs_stage1():
    C, drive, grids = driven_inputs(0.0)
    with pytest.raises(PipelineOrderError):
        entangled_FF([bath()], 0, 0, 0, 0, drive, C, grids)


def test_entangled_fields_are_hermitian_pairs():
    C, drive, grids = driven_inputs(1.0)
    b = [bath()]
    fq = entangled_FQ(b, 0, 0, 0, drive, C, grids).values
    qf = entangled_QF(b, 0, 0, 0, drive, C, grids).values
    # R_AB(t2, t1) = -R_BA(t1, t2)^*
    np.testing.assert_allclose(fq, -np.conj(qf.T), atol=1e-14)


def test_driven_grid_mismatch_rejected():
    C, drive, _ = driven_inputs(0.0)
    other = DrivenGrids(TimeGrid.span(0.0, 3.0, DT), 0.0)
    with pytest.raises(ValidationError):
        run_driven([bath()], drive, C, other)


def test_switch_on_inside_window():
    with pytest.raises(ValidationError):
        DrivenGrids(TimeGrid.span(1.0, 3.0, DT), 0.5)
