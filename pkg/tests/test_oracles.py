import numpy as np
import pytest

from helpers import DT, Q, bath, coupled_model, leads, pulse_drive
from sbet.baths import BosonBathSpec, DiscreteLevels, DiscreteModes, FermiBathSpec, fermi
from sbet.boson import DriveProfile
from sbet.errors import ValidationError
from sbet.grid import TimeGrid
from sbet.oracles import (
    QuadraticBosonModel,
    QuadraticFermionModel,
    boson_classical_correlations,
    boson_driven_two_time,
    boson_stationary_correlations,
    driven_means,
    fermion_correlations,
    recurrence_time,
)

F = ("F", 0, 0)


def test_uncoupled_second_moment_closed_form():
    om, beta = 1.7, 0.8
    m = QuadraticBosonModel([om], [BosonBathSpec(beta, DiscreteModes([0.5, 1.0], [[0.2, 0.3]]), eta=[0.0])])
    C = boson_stationary_correlations(m, [Q], TimeGrid(0.0, 0.1, 1))[(Q, Q)].values[0]
    assert C.real == pytest.approx(0.5 / np.tanh(0.5 * beta * om), abs=1e-10)
    assert abs(C.imag) < 1e-14


def test_two_mode_second_moment():
    """Closed form through the explicit normal modes of a 2x2 problem."""
    om, w, c, beta = 1.0, 1.5, 0.4, 1.2
    m = QuadraticBosonModel([om], [BosonBathSpec(beta, DiscreteModes([w], [[c]]))])
    K = np.array([[om ** 2, -c * np.sqrt(om * w)], [-c * np.sqrt(om * w), w ** 2]])
    tr, det = np.trace(K), np.linalg.det(K)
    lam = np.array([tr / 2 - np.sqrt(tr ** 2 / 4 - det), tr / 2 + np.sqrt(tr ** 2 / 4 - det)])
    u0 = np.array([K[0, 1], K[0, 1]]) / np.sqrt(K[0, 1] ** 2 + (lam - K[0, 0]) ** 2)  # first components
    W = np.sqrt(lam)
    ref = om * np.sum(u0 ** 2 / (2 * W) / np.tanh(0.5 * beta * W))
    C = boson_stationary_correlations(m, [Q], TimeGrid(0.0, 0.1, 1))[(Q, Q)].values[0]
    assert C.real == pytest.approx(ref, abs=1e-10)


def test_conjugation_symmetry():
    g = TimeGrid.symmetric(5.0, DT)
    C = boson_stationary_correlations(coupled_model(), [Q, F], g)
    for A, B in [(Q, F), (F, Q), (F, F)]:
        np.testing.assert_allclose(np.conj(C[(A, B)].values), C[(B, A)].values[::-1], atol=1e-10)


def test_eta_zero_force_is_bare():
    b = bath(eta=0.0)
    m = QuadraticBosonModel([1.0], [b])
    g = TimeGrid.span(0, 5, DT)
    C = boson_stationary_correlations(m, [Q, F], g)
    assert not np.any(C[(F, Q)].values)
    np.testing.assert_allclose(C[(F, F)].values, b.c_minus(g.times), atol=1e-14)


def test_recurrence_guard():
    m = QuadraticBosonModel([1.0], [BosonBathSpec(1.0, DiscreteModes([1.0, 1.1], [[0.1, 0.1]]))])
    assert recurrence_time([1.0, 1.1]) == pytest.approx(2 * np.pi / 0.1)
    with pytest.raises(ValidationError, match="recurrence"):
        boson_stationary_correlations(m, [Q], TimeGrid.span(0, 40, 0.1))


def test_instability_rejected():
    with pytest.raises(ValidationError, match="unstable"):
        QuadraticBosonModel([0.5], [BosonBathSpec(1.0, DiscreteModes([1.0], [[3.0]]))])


def test_zero_drive_reduces_to_stationary():
    win = TimeGrid.span(0, 3, DT)
    D = boson_driven_two_time(coupled_model(), DriveProfile.none(0.0), win, [(Q, Q)])
    C = boson_stationary_correlations(coupled_model(), [Q], TimeGrid.span(0, 3, DT))[(Q, Q)].values
    R = D[(Q, Q)].values
    for k in range(0, win.n, 7):
        np.testing.assert_allclose(np.diagonal(R, offset=-k), 1j * C[k], atol=1e-12)
    assert not np.any(D["_means"][Q].values)


def test_drive_shifts_means_only():
    win = TimeGrid.span(0, 3, DT)
    D0 = boson_driven_two_time(coupled_model(), DriveProfile.none(0.0), win, [(Q, Q)])
    D1 = boson_driven_two_time(coupled_model(), pulse_drive(1.0), win, [(Q, Q)])
    m = D1["_means"][Q].values
    np.testing.assert_allclose(D1[(Q, Q)].values - 1j * np.outer(m, m), D0[(Q, Q)].values, atol=1e-13)


def test_doubling_drive_doubles_means():
    t = np.linspace(0, 6, 31)
    q1 = driven_means(coupled_model(), pulse_drive(1.0), t)
    q2 = driven_means(coupled_model(), pulse_drive(2.0), t)
    np.testing.assert_allclose(q2, 2 * q1, rtol=1e-12, atol=1e-15)


def test_driven_means_single_oscillator():
    """Constant force f on x'' = -x + f from rest: x = f (1 - cos t)."""
    m = QuadraticBosonModel([1.0], [BosonBathSpec(1.0, DiscreteModes([2.0], [[0.1]]), eta=[0.0])])
    drive = DriveProfile(0.0, {0: (1.0, lambda t: 0.3 * np.ones_like(t))})
    t = np.linspace(0.1, 5, 10)
    q = driven_means(m, drive, t) @ m.vec_Q(0)
    np.testing.assert_allclose(q, 0.3 * (1 - np.cos(t)), atol=1e-12)


def test_driven_hermiticity():
    win = TimeGrid.span(0, 3, 0.1)
    D = boson_driven_two_time(coupled_model(), pulse_drive(1.0), win, [(Q, F), (F, Q)])
    np.testing.assert_allclose(D[(Q, F)].values, -np.conj(D[(F, Q)].values.T), atol=1e-10)


def test_classical_equipartition():
    m = QuadraticBosonModel([2.0], [bath(eta=0.0)])
    cc = boson_classical_correlations(m, [Q], TimeGrid(0.0, 0.1, 1), 0.5)
    assert cc[("C", Q, Q)].values[0].real == pytest.approx(1.0 / (0.5 * 2.0), rel=1e-12)


# ------------------------------------------------------------------ fermions


def test_fermion_zero_tunneling():
    L = leads(0.0)
    m = QuadraticFermionModel([[0.2]], L, impurity_occupation=[[0.3]])
    g = TimeGrid.span(0, 5, 0.1)
    out = fermion_correlations(m, g, 0.0)
    for key, s in out.items():
        if key != "_diagnostics" and key[0] in ("aS", "Sa", "aa"):
            assert not np.any(s.values)
    np.testing.assert_allclose(out[("SS", -1, 0, 0)].values, 0.7 * np.exp(-0.2j * g.times), atol=1e-14)
    np.testing.assert_allclose(out[("SS", 1, 0, 0)].values, 0.3 * np.exp(0.2j * g.times), atol=1e-14)


def test_fermion_initial_occupations():
    lv = DiscreteLevels([-1.0, 0.0, 0.7], [0.1, 0.2, 0.3])
    L = [FermiBathSpec(2.0, 0.3, lv), FermiBathSpec(4.0, -0.2, lv)]
    m = QuadraticFermionModel([[0.0]], L)
    P = m.density(0.0)
    for a, lead in enumerate(L):
        sl = m.lead_slice(a)
        np.testing.assert_allclose(np.diag(P[sl, sl]).real, fermi(lead.beta * (lv.energies - lead.chemical_potential)), atol=1e-14)


def test_fermion_oracle_rejects_bad_occupation():
    with pytest.raises(ValidationError):
        QuadraticFermionModel([[0.0]], leads(), impurity_occupation=[[1.5]])
