import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbet.baths import (
    BosonBathSpec,
    DiscreteLevels,
    DiscreteModes,
    Drude,
    FermiBathSpec,
    Tabulated,
    c_classical_boson,
    discretize_hybridization,
    discretize_spectral_density,
    fermi,
    kernel_spectrum,
)
from sbet.errors import NumericalError, ValidationError
from sbet.grid import TimeGrid


def single_mode(c=1.0, w=1.0, beta=1.0, eta=1.0):
    return BosonBathSpec(beta, DiscreteModes([w], [[c]]), eta=[eta])


def test_single_mode_phi_quarter_period():
    b = single_mode()
    assert b.phi(np.pi / 2) == pytest.approx(1.0, abs=1e-15)


def test_phi_vanishes_at_zero():
    assert single_mode().phi(0.0) == 0.0
    assert BosonBathSpec(1.0, Drude(0.4, 1.3)).phi(0.0) == 0.0


@given(c=st.floats(0.1, 3.0), w=st.floats(0.1, 5.0), beta=st.floats(0.1, 10.0))
def test_single_mode_c_minus_closed_form(c, w, beta):
    t = np.linspace(0.0, 20.0, 201)
    got = single_mode(c, w, beta).c_minus(t)
    ref = 0.5 * c * c * (np.cos(w * t) / np.tanh(0.5 * beta * w) - 1j * np.sin(w * t))
    assert np.abs(got - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


def test_c_minus_independent_of_eta():
    t = np.linspace(0, 10, 51)
    a = single_mode(eta=1.0).c_minus(t)
    b = single_mode(eta=0.0).c_minus(t)
    np.testing.assert_array_equal(a, b)


def test_drude_phi_closed_form():
    lam, gam = 0.3, 2.0
    t = np.linspace(0.05, 10, 40)
    got = BosonBathSpec(1.0, Drude(lam, gam)).phi(t)
    np.testing.assert_allclose(got, 2 * lam * gam * np.exp(-gam * t), rtol=1e-8, atol=1e-12)


def test_continuous_drude_without_cutoff_refuses_t0():
    with pytest.raises(NumericalError):
        BosonBathSpec(1.0, Drude(0.5, 1.0)).c_minus(0.0)


@pytest.mark.parametrize("kind", ["discrete", "drude"])
def test_split_identity(kind):
    """(c_vv' - c_v'v^*)/(2i) + phi_vv'/2 = 0."""
    if kind == "discrete":
        rng = np.random.default_rng(3)
        b = BosonBathSpec(0.7, DiscreteModes(rng.uniform(0.1, 4, 30), rng.normal(size=(2, 30))), eta=[1.0, 1.0])
        t = np.linspace(0, 20, 401)
        pairs = [(0, 0), (0, 1), (1, 0), (1, 1)]
    else:
        b = BosonBathSpec(1.0, Drude(0.5, 1.0))
        t = np.linspace(0.1, 20, 60)
        pairs = [(0, 0)]
    for v, vp in pairs:
        res = (b.c_minus(t, v, vp) - np.conj(b.c_minus(t, vp, v))) / 2j + b.phi(t, v, vp) / 2
        assert np.abs(res).max() < 1e-8


def test_negative_beta_rejected():
    with pytest.raises(ValidationError, match="beta"):
        BosonBathSpec(-1.0, Drude(0.5, 1.0))
    with pytest.raises(ValidationError, match="beta"):
        FermiBathSpec(0.0, 0.0, DiscreteLevels([0.0], [1.0]))


def test_classical_kernel_of_single_mode():
    g = TimeGrid.span(0, 5, 0.1)
    s = c_classical_boson(single_mode(c=1.2, w=0.8, beta=2.0), 0, 0, g)
    np.testing.assert_allclose(s.values.real, 1.44 * np.cos(0.8 * g.times) / (2.0 * 0.8), rtol=1e-13)


def test_detailed_balance_of_kernel_spectrum():
    b = BosonBathSpec(1.0, Drude(0.5, 1.0))
    om = np.array([0.5, 1.0, 2.0])
    sp = kernel_spectrum(b, np.concatenate([om, -om])).values
    np.testing.assert_allclose(sp[:3] / sp[3:], np.exp(om), rtol=1e-4)


# ------------------------------------------------------------------ discretisation


def test_discretize_passthrough_for_discrete_modes():
    m = DiscreteModes([1.0], [[0.7]])
    assert discretize_spectral_density(m, 1) is m


def test_discretize_zero_density_gives_zero_couplings():
    zero = Tabulated([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
    m = discretize_spectral_density(zero, 50)
    assert not np.any(m.couplings)


@pytest.mark.parametrize("scheme", ["uniform", "gauss-legendre"])
def test_discretized_drude_reproduces_band_limited_phi(scheme):
    from scipy.integrate import quad

    d = Drude(0.5, 1.0)
    wc = 20.0
    modes = discretize_spectral_density(d, 2000, scheme=scheme, cutoff=wc)
    t = np.linspace(0.2, 4, 12)
    got = BosonBathSpec(1.0, modes).phi(t)
    ref = [(2 / np.pi) * quad(lambda w: float(d.J(w)), 0, wc, weight="sin", wvar=x, limit=400)[0] for x in t]
    np.testing.assert_allclose(got, ref, rtol=1e-3, atol=1e-6)


def test_unknown_scheme_rejected():
    with pytest.raises(ValidationError):
        discretize_spectral_density(Drude(0.5, 1.0), 10, scheme="chebyshev", cutoff=5.0)


# ------------------------------------------------------------------ fermions


def lead(beta=1.0, mu=0.0, amps=None):
    eps = np.array([-1.0, 0.2, 1.5])
    amps = np.array([0.3, 0.5 - 0.2j, 0.1]) if amps is None else amps
    return FermiBathSpec(beta, mu, DiscreteLevels(eps, amps))


def test_zero_tunneling_kernels_vanish():
    L = lead(amps=np.zeros(3))
    t = np.linspace(0, 10, 11)
    for s in (-1, 1):
        assert not np.any(L.c_sigma(s, t))
    assert not np.any(L.g(t))


def test_g_independent_of_temperature():
    t = np.linspace(0, 10, 41)
    np.testing.assert_array_equal(lead(beta=1.0).g(t), lead(beta=10.0).g(t))


def test_g_sum_rule():
    L = lead()
    assert L.g(0.0) == pytest.approx(np.sum(np.abs(L.spectral.amplitudes) ** 2), abs=1e-15)


def test_c_plus_plus_c_minus_conj_is_g():
    L = lead(beta=2.0, mu=0.3)
    t = np.linspace(0, 10, 41)
    np.testing.assert_allclose(L.c_sigma(-1, t) + np.conj(L.c_sigma(1, t)), L.g(t), atol=1e-14)


def test_occupations_are_fermi_factors():
    L = lead(beta=3.0, mu=0.2)
    np.testing.assert_allclose(L.occupations(), fermi(3.0 * (L.spectral.energies - 0.2)))


def test_hybridization_discretization_sum_rule():
    lv = discretize_hybridization(0.5, 5.0, 400)
    # sum |t_j|^2 = Gamma * bandwidth / (2 pi)
    assert np.sum(np.abs(lv.amplitudes) ** 2) == pytest.approx(0.5 * 10.0 / (2 * np.pi), rel=1e-12)
