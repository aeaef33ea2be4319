"""Uniform time grids, trapezoidal Volterra convolutions, half-line tail
integrals and Fourier utilities.

Every time integral in the package goes through the composite trapezoid
rule defined here, so identities that compare integrals of integrals close
to a common discretisation error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = [
    "TimeGrid",
    "ComplexSeries",
    "TwoTimeField",
    "TailPolicy",
    "TailResult",
    "Spectrum",
    "trapezoid_weights",
    "volterra",
    "signed_volterra",
    "causal_convolution",
    "tail_sum",
    "tail_integral",
    "spectrum",
    "hermitian_split",
    "default_dt",
]

_GRID_RTOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start + k*dt`` for ``k = 0..n-1``."""

    t_start: float
    dt: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ValidationError(f"grid step must be positive, got dt={self.dt}")
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"grid count must be a positive integer, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def span(cls, t_start: float, t_stop: float, dt: float) -> "TimeGrid":
        """Grid from ``t_start`` to ``t_stop`` inclusive; the span must be a
        multiple of ``dt``."""
        steps = (t_stop - t_start) / dt
        k = int(round(steps))
        if abs(steps - k) > 1e-6 * max(1.0, abs(steps)):
            raise ValidationError(
                f"span [{t_start}, {t_stop}] is not a multiple of dt={dt}"
            )
        return cls(t_start, dt, k + 1)

    @classmethod
    def symmetric(cls, t_max: float, dt: float) -> "TimeGrid":
        """Grid on ``[-t_max, t_max]`` with a sample at ``t = 0``."""
        g = cls.span(0.0, t_max, dt)
        m = g.n - 1
        return cls(-m * dt, dt, 2 * m + 1)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    @property
    def t_stop(self) -> float:
        return self.t_start + self.dt * (self.n - 1)

    def index_of(self, t: float) -> int:
        """Index of the grid point at time ``t`` (must lie on the grid)."""
        x = (t - self.t_start) / self.dt
        k = int(round(x))
        if abs(x - k) > 1e-6 or not 0 <= k < self.n:
            raise ValidationError(f"t={t} is not a point of {self}")
        return k

    def contains(self, t: float) -> bool:
        try:
            self.index_of(t)
        except ValidationError:
            return False
        return True

    def compatible(self, other: "TimeGrid") -> bool:
        """Same step and mutually aligned sample points."""
        if abs(self.dt - other.dt) > _GRID_RTOL * self.dt:
            return False
        off = (other.t_start - self.t_start) / self.dt
        return abs(off - round(off)) < 1e-6

    def strided(self, stride: int, start: int = 0, count: int | None = None) -> "TimeGrid":
        if count is None:
            count = (self.n - 1 - start) // stride + 1
        return TimeGrid(self.t_start + start * self.dt, self.dt * stride, count)


@dataclass
class ComplexSeries:
    """Complex samples of a function on a uniform grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        if self.values.shape[0] != self.grid.n:
            raise ValidationError(
                f"series has {self.values.shape[0]} values for a grid of {self.grid.n} points"
            )

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], grid: TimeGrid) -> "ComplexSeries":
        return cls(grid, fn(grid.times))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.grid.n

    def __call__(self, t: float) -> complex:
        return complex(self.values[self.grid.index_of(t)])

    def conj(self) -> "ComplexSeries":
        return ComplexSeries(self.grid, self.values.conj())

    def window(self, a: float, b: float) -> "ComplexSeries":
        i, j = self.grid.index_of(a), self.grid.index_of(b)
        return ComplexSeries(TimeGrid(a, self.grid.dt, j - i + 1), self.values[i:j + 1])


@dataclass
class TwoTimeField:
    """Dense complex samples ``values[i2, i1]`` at ``(outer[i2], inner[i1])``.

    The outer grid carries ``t2``, the inner one ``t1``. The inner grid may
    be a strided subset of the outer one (an output mesh on top of a
    quadrature mesh).
    """

    outer: TimeGrid
    inner: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.outer.n, self.inner.n):
            raise ValidationError(
                f"field shape {self.values.shape} does not match grids "
                f"({self.outer.n}, {self.inner.n})"
            )
        if np.isnan(self.values).any():
            raise ValidationError("two-time field contains NaN")

    def at(self, t2: float, t1: float) -> complex:
        return complex(self.values[self.outer.index_of(t2), self.inner.index_of(t1)])

    def diagonal_lag(self, lag_steps: int) -> np.ndarray:
        """Values along ``t2 - t1 = lag_steps * outer.dt`` (square grids)."""
        if self.outer != self.inner:
            raise ValidationError("diagonal access needs identical grids")
        return np.diagonal(self.values, offset=-lag_steps).copy()


@dataclass(frozen=True)
class TailPolicy:
    """Truncation of half-line integrals ``int_0^inf``.

    The integral is cut at ``t_tail``. The decaying factor of the integrand
    (the system-side correlation) must have dropped below ``eps`` times its
    maximum over the last ``probe`` fraction of the window.
    """

    t_tail: float
    eps: float = 1e-6
    probe: float = 0.1

    def __post_init__(self):
        if not self.t_tail > 0:
            raise ValidationError(f"t_tail must be positive, got {self.t_tail}")
        if not self.eps > 0:
            raise ValidationError(f"tail tolerance must be positive, got {self.eps}")

    def steps(self, dt: float) -> int:
        k = self.t_tail / dt
        if abs(k - round(k)) > 1e-6 * max(1.0, k):
            raise ValidationError(f"t_tail={self.t_tail} is not a multiple of dt={dt}")
        return int(round(k))


@dataclass
class TailResult:
    values: np.ndarray
    bound: float
    relative_tail: float


@dataclass
class Spectrum:
    """Frequency samples of a time transform plus metadata."""

    omega: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)


def default_dt(max_frequency: float, points_per_period: int = 40) -> float:
    """Step resolving the shortest kernel period with the given sampling."""
    if max_frequency <= 0:
        raise ValidationError("max_frequency must be positive")
    return 2.0 * np.pi / max_frequency / points_per_period


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    if n == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5
    return w


def volterra(kernel: np.ndarray, source: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal ``int_0^{t_i} K(t_i - s) f(s) ds`` for every grid index.

    ``kernel[k] = K(k*dt)`` and ``source[j] = f(j*dt)``; both must have at
    least as many samples as the output. Direct O(n^2) summation.
    """
    kernel = np.asarray(kernel)
    source = np.asarray(source)
    n = source.shape[0]
    if kernel.shape[0] < n:
        raise ValidationError("kernel shorter than source")
    k = kernel[:n]
    full = np.convolve(k, source)[:n]
    out = dt * (full - 0.5 * k * source[0] - 0.5 * k[0] * source)
    out[0] = 0.0
    return out


def signed_volterra(kernel: np.ndarray, source: np.ndarray, dt: float) -> np.ndarray:
    """Signed ``int_0^t K(t - s) f(s) ds`` on a symmetric grid.

    Arrays are sampled on ``[-T, T]`` with ``t = 0`` at the centre index.
    For negative ``t`` the integral runs backwards, so the value is
    ``-int_t^0``.
    """
    kernel = np.asarray(kernel)
    source = np.asarray(source)
    n = source.shape[0]
    if n % 2 != 1 or kernel.shape[0] != n:
        raise ValidationError("symmetric grids with a centre sample required")
    m = n // 2
    out = np.empty(n, dtype=np.result_type(kernel, source, float))
    out[m:] = volterra(kernel[m:], source[m:], dt)
    neg = volterra(kernel[m::-1], source[m::-1], dt)
    out[:m + 1] = -neg[::-1]
    return out


def causal_convolution(kernel: ComplexSeries, source: ComplexSeries, window: tuple[float, float]) -> ComplexSeries:
    """``int_a^t K(t - s) f(s) ds`` for grid times ``t`` in ``[a, b]``.

    The kernel grid must start at zero lag; both grids share the step.
    """
    a, b = window
    if not kernel.grid.compatible(source.grid) or abs(kernel.grid.t_start) > 1e-12:
        raise ValidationError("kernel must start at t=0 and share the source step")
    if b < a:
        raise ValidationError("window must satisfy a <= b")
    src = source.window(a, b)
    if kernel.grid.t_stop < b - a - 1e-12:
        raise ValidationError("kernel does not cover the window length")
    vals = volterra(kernel.values, src.values, source.grid.dt)
    return ComplexSeries(src.grid, vals)


def tail_sum(kernel_ext: np.ndarray, source: np.ndarray, dt: float, n_out: int) -> np.ndarray:
    """``dt * sum_j w_j K[i + j] C[j]`` for ``i < n_out`` (trapezoid in j).

    ``kernel_ext`` must hold at least ``n_out + len(source) - 1`` samples.
    """
    m = source.shape[0]
    if kernel_ext.shape[0] < n_out + m - 1:
        raise ValidationError("kernel samples do not cover t + T_tail")
    ws = trapezoid_weights(m) * source
    # np.correlate conjugates its second argument
    out = np.correlate(kernel_ext[: n_out + m - 1], np.conj(ws), mode="valid")
    return dt * out


def _check_decay(source: np.ndarray, policy: TailPolicy) -> float:
    mag = np.abs(source)
    peak = mag.max() if mag.size else 0.0
    if peak == 0.0:
        return 0.0
    k = max(1, int(np.ceil(policy.probe * mag.size)))
    rel = float(mag[-k:].max() / peak)
    if rel >= policy.eps:
        raise NumericalError(
            f"integrand has not decayed by t_tail={policy.t_tail}: "
            f"relative magnitude {rel:.2e} >= {policy.eps:.1e}; increase t_tail",
            {"t_tail": policy.t_tail, "relative_tail": rel},
        )
    return rel


KernelLike = Union[ComplexSeries, Callable[[np.ndarray], np.ndarray]]


def tail_integral(kernel: KernelLike, source: ComplexSeries, policy: TailPolicy, times: np.ndarray, check: bool = True) -> TailResult:
    """``int_0^{T_tail} K(t + s) C(s) ds`` at each requested ``t``.

    ``kernel`` is either a vectorised callable or a series whose grid covers
    every ``t + s``. The returned bound is a crude estimate of the dropped
    ``int_{T_tail}^inf`` piece: ``max|K| * |C(T_tail)| * T_tail``.
    """
    dt = source.grid.dt
    if abs(source.grid.t_start) > 1e-12:
        raise ValidationError("tail source must start at s=0")
    m = policy.steps(dt)
    if source.grid.n < m + 1:
        raise ValidationError(
            f"source covers [0, {source.grid.t_stop}] but t_tail={policy.t_tail}"
        )
    c = source.values[: m + 1]
    times = np.atleast_1d(np.asarray(times, dtype=float))
    s = dt * np.arange(m + 1)
    w = trapezoid_weights(m + 1) * c
    if callable(kernel) and not isinstance(kernel, ComplexSeries):
        kv = np.asarray(kernel(times[:, None] + s[None, :]), dtype=complex)
    else:
        idx = np.array([kernel.grid.index_of(t) for t in times])
        if idx.max() + m >= kernel.grid.n:
            raise ValidationError("kernel grid does not cover t + t_tail")
        kv = kernel.values[idx[:, None] + np.arange(m + 1)[None, :]]
    # an identically vanishing kernel gives an exact zero, decayed or not
    rel = _check_decay(c, policy) if check and kv.any() else float("nan")
    vals = dt * kv @ w
    kmax = float(np.abs(kv).max()) if kv.size else 0.0
    bound = kmax * float(np.abs(c[-1])) * policy.t_tail
    return TailResult(vals, bound, rel)


def spectrum(series: ComplexSeries, omega: np.ndarray, extension: str = "half", simpson: bool = False, decay_tol: float = 1e-6) -> Spectrum:
    """Fourier transform ``int dt e^{i w t} f(t)`` of a series sampled on
    ``t >= 0``.

    extension
        ``"half"`` integrates over ``t >= 0`` only; ``"hermitian"`` extends
        with ``f(-t) = conj(f(t))`` (stationary correlation functions);
        ``"even"`` extends with ``f(-t) = f(t)``.
    """
    if abs(series.grid.t_start) > 1e-12:
        raise ValidationError("spectrum expects a series starting at t=0")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    t = series.times
    f = series.values
    n = t.size
    if simpson:
        if n % 2 == 0:
            raise ValidationError("Simpson rule needs an odd number of samples")
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= series.grid.dt / 3.0
    else:
        w = trapezoid_weights(n) * series.grid.dt
    phase = np.exp(1j * np.outer(omega, t))
    half = phase @ (w * f)
    if extension == "half":
        vals = half
    elif extension == "hermitian":
        vals = 2.0 * half.real + 0.0j
    elif extension == "even":
        neg = np.exp(-1j * np.outer(omega, t)) @ (w * f)
        vals = half + neg
    else:
        raise ValidationError(f"unknown extension {extension!r}")
    peak = np.abs(f).max() if n else 0.0
    decayed = bool(peak == 0.0 or abs(f[-1]) <= decay_tol * peak)
    meta = {"extension": extension, "decayed": decayed, "rule": "simpson" if simpson else "trapezoid"}
    if not decayed:
        warnings.warn("series has not decayed at its final sample; spectrum leaks", RuntimeWarning, stacklevel=2)
    return Spectrum(omega, vals, meta)


def hermitian_split(chi_ab, chi_ba):
    """Hermitian and anti-Hermitian parts of a pair of spectra.

    Returns ``((chi_ab + conj(chi_ba))/2, (chi_ab - conj(chi_ba))/(2i))`` so
    that ``plus + 1j*minus == chi_ab``.
    """
    a = chi_ab.values if isinstance(chi_ab, Spectrum) else np.asarray(chi_ab, dtype=complex)
    b = chi_ba.values if isinstance(chi_ba, Spectrum) else np.asarray(chi_ba, dtype=complex)
    if isinstance(chi_ab, Spectrum) and isinstance(chi_ba, Spectrum):
        if chi_ab.omega.shape != chi_ba.omega.shape or not np.allclose(chi_ab.omega, chi_ba.omega):
            raise ValidationError("spectra live on different frequency grids")
    if a.shape != b.shape:
        raise ValidationError("spectra have different lengths")
    plus = 0.5 * (a + np.conj(b))
    minus = (a - np.conj(b)) / 2j
    return plus, minus
