"""Small shared models for the unit tests (cached; treat results as read-only)."""

from functools import lru_cache

import numpy as np

from sbet.baths import BosonBathSpec, DiscreteLevels, Drude, FermiBathSpec, discretize_hybridization, discretize_spectral_density
from sbet.boson import DrivenGrids, DriveProfile, GaussianPulse, SystemCorrelations
from sbet.grid import TimeGrid
from sbet.oracles import (
    QuadraticBosonModel,
    QuadraticFermionModel,
    boson_classical_correlations,
    boson_driven_two_time,
    boson_stationary_correlations,
    fermion_correlations,
)

DT = 0.05
SPAN = 120.0  # below half the recurrence time of the 400-mode bath
Q = ("Q", 0)


@lru_cache(maxsize=None)
def modes(lam=0.5, n=400):
    return discretize_spectral_density(Drude(lam, 1.0), n, cutoff=10.0, taper=4.0)


def bath(eta=1.0, mu=0.0, beta=1.0, lam=0.5):
    return BosonBathSpec(beta, modes(lam), eta=[eta], mu=[mu])


@lru_cache(maxsize=None)
def coupled_model():
    return QuadraticBosonModel([1.0], [bath()])


@lru_cache(maxsize=None)
def stationary_inputs():
    """Thermal ``C_QQ`` of the coupled single-bath oscillator."""
    g = TimeGrid.span(0.0, SPAN, DT)
    C = boson_stationary_correlations(coupled_model(), [Q], g)
    return SystemCorrelations(g, C[(Q, Q)].values)


def pulse_drive(scale=1.0, t_on=0.0):
    return DriveProfile(t_on, {0: (1.0, GaussianPulse(0.5 * scale, 2.0, 0.6, 1.0))})


@lru_cache(maxsize=None)
def driven_inputs(drive_scale=0.0, t_stop=4.0):
    """Driven ``R_QQ`` on ``[0, t_stop]`` plus the stationary block."""
    win = TimeGrid.span(0.0, t_stop, DT)
    drive = pulse_drive(drive_scale) if drive_scale else DriveProfile.none(0.0)
    D = boson_driven_two_time(coupled_model(), drive, win, [(Q, Q)])
    st = stationary_inputs()
    C = SystemCorrelations(st.grid, st.stationary, window=win, R_QQ=D[(Q, Q)].values, means=D["_means"][Q].values.real)
    return C, drive, DrivenGrids(win, 0.0, 2)


@lru_cache(maxsize=None)
def classical_inputs():
    g = TimeGrid.span(0.0, SPAN, DT)
    cc = boson_classical_correlations(coupled_model(), [Q], g, 1.0)
    return g, cc[("C", Q, Q)], cc[("chi", Q, Q)]


def leads(scale=1.0, n=400):
    lv = discretize_hybridization(0.5, 5.0, n, taper=2.5)
    lv = DiscreteLevels(lv.energies, scale * lv.amplitudes)
    return [FermiBathSpec(2.0, 0.3, lv, "left"), FermiBathSpec(5.0, -0.3, lv, "right")]


@lru_cache(maxsize=None)
def fermion_setup(scale=1.0, t_relax=50.0, t_stop=40.0):
    """Resonant level (``e_d = 0.2``) between two leads, measured after
    ``t_relax``; returns ``(leads, model, oracle correlations)``."""
    L = leads(scale)
    m = QuadraticFermionModel([[0.2]], L)
    g = TimeGrid.span(0.0, t_stop, DT)
    return L, m, fermion_correlations(m, g, t_relax)


def rel_l2(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
