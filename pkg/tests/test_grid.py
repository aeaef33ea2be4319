import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sbet.errors import NumericalError, ValidationError
from sbet.grid import (
    ComplexSeries,
    Spectrum,
    TailPolicy,
    TimeGrid,
    TwoTimeField,
    causal_convolution,
    hermitian_split,
    signed_volterra,
    spectrum,
    tail_integral,
    tail_sum,
    trapezoid_weights,
    volterra,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_grid_span_and_index():
    g = TimeGrid.span(-1.0, 1.0, 0.25)
    assert g.n == 9 and g.index_of(0.0) == 4 and g.t_stop == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        g.index_of(0.1)
    with pytest.raises(ValidationError):
        TimeGrid.span(0.0, 1.0, 0.3)
    with pytest.raises(ValidationError):
        TimeGrid(0.0, -0.1, 4)


def test_symmetric_grid_has_zero():
    g = TimeGrid.symmetric(2.0, 0.5)
    assert g.n == 9 and g.times[4] == 0.0


def test_zero_kernel_gives_zero():
    f = np.linspace(1, 2, 11)
    assert not np.any(volterra(np.zeros(11), f, 0.1))


def test_unit_kernel_gives_ramp():
    g = TimeGrid.span(0.0, 3.0, 0.01)
    out = causal_convolution(ComplexSeries(g, np.ones(g.n)), ComplexSeries(g, np.ones(g.n)), (0.0, 3.0))
    np.testing.assert_allclose(out.values.real, g.times, atol=1e-12)


@given(arrays(float, 17, elements=finite), arrays(float, 17, elements=finite), arrays(float, 17, elements=finite), finite)
def test_volterra_is_linear(K, f1, f2, a):
    lhs = volterra(K, f1 + a * f2, 0.1)
    rhs = volterra(K, f1, 0.1) + a * volterra(K, f2, 0.1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(lhs).max()))


def test_volterra_second_order():
    """int_0^t e^{-(t-s)} cos s ds, error ratio under halving dt is ~4."""
    exact = lambda t: 0.5 * (np.cos(t) + np.sin(t) - np.exp(-t))
    errs = []
    for dt in (0.1, 0.05, 0.025):
        t = dt * np.arange(int(round(5 / dt)) + 1)
        errs.append(np.abs(volterra(np.exp(-t), np.cos(t), dt) - exact(t)).max())
    assert errs[0] / errs[1] > 3.8 and errs[1] / errs[2] > 3.8


def test_signed_volterra_negative_branch():
    dt = 0.01
    out = signed_volterra(np.ones(201), np.ones(201), dt)
    # int_0^t ds = t on both sides of the origin
    np.testing.assert_allclose(out, dt * np.arange(-100, 101), atol=1e-12)


def test_tail_zero_kernel():
    g = TimeGrid.span(0.0, 5.0, 0.1)
    src = ComplexSeries(g, np.exp(-3 * g.times))
    res = tail_integral(lambda x: np.zeros_like(x), src, TailPolicy(5.0), np.array([0.0, 1.0]))
    assert not np.any(res.values)


def test_tail_matches_closed_form():
    g = TimeGrid.span(0.0, 20.0, 0.005)
    src = ComplexSeries(g, np.exp(-2 * g.times))
    t = np.array([0.0, 0.5, 1.0])
    res = tail_integral(lambda x: np.exp(-x), src, TailPolicy(20.0), t)
    np.testing.assert_allclose(res.values.real, np.exp(-t) / 3.0, rtol=5e-5)


def test_tail_source_shorter_than_t_tail():
    g = TimeGrid.span(0.0, 2.0, 0.1)
    with pytest.raises(ValidationError):
        tail_integral(lambda x: x, ComplexSeries(g, np.ones(g.n)), TailPolicy(3.0), np.array([0.0]))


def test_tail_undecayed_source_raises():
    g = TimeGrid.span(0.0, 5.0, 0.1)
    with pytest.raises(NumericalError) as exc:
        tail_integral(lambda x: x, ComplexSeries(g, np.ones(g.n)), TailPolicy(5.0), np.array([0.0]))
    assert exc.value.diagnostic["t_tail"] == 5.0


def test_tail_sum_needs_kernel_coverage():
    with pytest.raises(ValidationError):
        tail_sum(np.ones(5), np.ones(5), 0.1, 3)


def test_zero_series_zero_spectrum():
    g = TimeGrid.span(0, 5, 0.1)
    sp = spectrum(ComplexSeries(g, np.zeros(g.n)), np.linspace(-2, 2, 9), extension="hermitian")
    assert not np.any(sp.values)


def test_spectrum_of_exponential():
    g = TimeGrid.span(0, 40, 0.01)
    om = np.array([-1.0, 0.0, 2.0])
    sp = spectrum(ComplexSeries(g, np.exp(-g.times)), om, extension="hermitian", simpson=True)
    np.testing.assert_allclose(sp.values.real, 2.0 / (1 + om ** 2), rtol=1e-7)


def test_hermitian_split_examples():
    a = np.array([1.5, -0.3])
    p, m = hermitian_split(a, a)
    np.testing.assert_array_equal(m, 0)
    p, m = hermitian_split(np.array([1j]), np.array([-1j]))
    assert p[0] == 1j and m[0] == 0


@given(arrays(complex, 6, elements=st.complex_numbers(max_magnitude=10, allow_nan=False)), arrays(complex, 6, elements=st.complex_numbers(max_magnitude=10, allow_nan=False)))
def test_hermitian_split_recombines(a, b):
    p, m = hermitian_split(a, b)
    np.testing.assert_allclose(p + 1j * m, a, atol=1e-12)


def test_hermitian_split_grid_mismatch():
    with pytest.raises(ValidationError):
        hermitian_split(Spectrum(np.array([0.0, 1.0]), np.ones(2)), Spectrum(np.array([0.0, 2.0]), np.ones(2)))


def test_trapezoid_weights():
    np.testing.assert_array_equal(trapezoid_weights(4), [0.5, 1, 1, 0.5])
    np.testing.assert_array_equal(trapezoid_weights(1), [0.0])


def test_two_time_field_diagonal():
    g = TimeGrid.span(0, 1, 0.25)
    lag = g.times[:, None] - g.times[None, :]
    f = TwoTimeField(g, g, np.exp(1j * lag))
    np.testing.assert_allclose(f.diagonal_lag(2), np.exp(0.5j))
    with pytest.raises(ValidationError):
        TwoTimeField(g, g, np.ones((2, 2)))
