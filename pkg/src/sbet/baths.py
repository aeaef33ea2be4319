"""Bath specifications and bare-bath kernels.

Bosonic baths are sets of harmonic modes ``h = sum_j w_j (p_j^2 + x_j^2)/2``
coupled through ``F_v = sum_j c_vj x_j``. Continuous spectral densities use
the convention ``J_vv'(w) = (pi/2) sum_j c_vj c_v'j delta(w - w_j)`` so that

    phi_vv'(t) = (2/pi) int_0^inf J_vv'(w) sin(w t) dw
    c_vv'(t)   = (hbar/pi) int_0^inf J_vv'(w) [coth(beta hbar w/2) cos(w t) - i sin(w t)] dw

Fermionic leads are sets of levels ``eps_j`` with hybridising operators
``F_u = sum_j conj(t_uj) a_j``; continuous leads use
``Gamma_uv(w) = 2 pi sum_j conj(t_uj) t_vj delta(w - eps_j)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate
from scipy.special import expit, roots_legendre

from .errors import NumericalError, ValidationError
from .grid import ComplexSeries, Spectrum, TimeGrid, spectrum, trapezoid_weights

__all__ = [
    "DiscreteModes",
    "Drude",
    "Tabulated",
    "BosonBathSpec",
    "DiscreteLevels",
    "TabulatedHybridization",
    "FermiBathSpec",
    "bose",
    "fermi",
    "phi_boson",
    "c_minus_boson",
    "c_plus_boson",
    "c_classical_boson",
    "c_sigma_fermion",
    "g_fermion",
    "discretize_spectral_density",
    "discretize_hybridization",
    "kernel_spectrum",
]

_QUAD = dict(epsabs=1e-10, epsrel=1e-10, limit=800)
_CHUNK = 4096


def bose(x):
    """``1/(e^x - 1)`` for ``x > 0``."""
    return 1.0 / np.expm1(x)


def fermi(x):
    """``1/(e^x + 1)`` evaluated without overflow."""
    return expit(-np.asarray(x, dtype=float))


# ---------------------------------------------------------------- spectral models


@dataclass
class DiscreteModes:
    """Finite set of bath modes.

    ``couplings[v, j]`` is the coefficient of ``x_j`` in ``F_v``.
    """

    frequencies: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float).reshape(-1)
        c = np.asarray(self.couplings)
        if np.iscomplexobj(c):
            if np.abs(c.imag).max(initial=0.0) > 0:
                raise ValidationError("bosonic coupling coefficients must be real")
            c = c.real
        c = np.asarray(c, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        self.couplings = c
        if np.any(self.frequencies <= 0):
            raise ValidationError("all mode frequencies must be positive")
        if c.shape[1] != self.frequencies.size:
            raise ValidationError("couplings must have one column per mode")

    @property
    def n_modes(self) -> int:
        return self.frequencies.size

    @property
    def n_sys(self) -> int:
        return self.couplings.shape[0]

    def weights(self, v: int, vp: int) -> np.ndarray:
        _check_index(v, self.n_sys)
        _check_index(vp, self.n_sys)
        return self.couplings[v] * self.couplings[vp]

    def spectral_density(self, omega, v=0, vp=0):
        raise ValidationError("discrete modes have no pointwise spectral density")


@dataclass
class Drude:
    """``J(w) = 2 lambda gamma w / (w^2 + gamma^2)``, optionally cut hard at
    ``freq_cutoff``."""

    reorganization: float
    cutoff: float
    freq_cutoff: float | None = None

    def __post_init__(self):
        if not self.reorganization > 0 or not self.cutoff > 0:
            raise ValidationError("Drude reorganization and cutoff must be positive")
        if self.freq_cutoff is not None and not self.freq_cutoff > 0:
            raise ValidationError("frequency cutoff must be positive")

    def J(self, omega):
        w = np.asarray(omega, dtype=float)
        lam, gam = self.reorganization, self.cutoff
        out = 2 * lam * gam * w / (w * w + gam * gam)
        if self.freq_cutoff is not None:
            out = np.where(np.abs(w) <= self.freq_cutoff, out, 0.0)
        return out

    def J_slope0(self) -> float:
        return 2 * self.reorganization / self.cutoff

    @property
    def support(self) -> float:
        return np.inf if self.freq_cutoff is None else self.freq_cutoff

    @property
    def scale(self) -> float:
        return self.cutoff


@dataclass
class Tabulated:
    """Spectral density sampled at increasing ``omega`` with ``J(0) = 0``;
    linear interpolation in between, zero beyond the last sample."""

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.omega.shape != self.values.shape or self.omega.size < 2:
            raise ValidationError("tabulated J needs matching omega/value arrays")
        if np.any(np.diff(self.omega) <= 0):
            raise ValidationError("tabulated omega must be strictly increasing")
        if self.omega[0] < 0:
            raise ValidationError("tabulated omega must start at or above zero")
        if np.any(self.values < 0):
            raise ValidationError("tabulated spectral density must be non-negative")
        if self.omega[0] == 0 and self.values[0] != 0:
            raise ValidationError("tabulated spectral density must vanish at w=0")
        if self.omega[0] > 0:
            self.omega = np.concatenate([[0.0], self.omega])
            self.values = np.concatenate([[0.0], self.values])

    def J(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.interp(np.abs(w), self.omega, self.values, right=0.0)
        return np.sign(w) * out

    def J_slope0(self) -> float:
        return self.values[1] / self.omega[1]

    @property
    def support(self) -> float:
        return float(self.omega[-1])

    @property
    def scale(self) -> float:
        return float(self.omega[np.argmax(self.values)])


ContinuousModel = Union[Drude, Tabulated]
SpectralModel = Union[DiscreteModes, Drude, Tabulated]


def _check_index(v, n):
    if not (isinstance(v, (int, np.integer)) and 0 <= v < n):
        raise IndexError(f"system-mode index {v} out of range for {n} modes")


# ---------------------------------------------------------------- bath specs


@dataclass
class BosonBathSpec:
    """One bosonic reservoir.

    ``spectral`` is a :class:`DiscreteModes` (all mode pairs implied) or a
    square nested sequence of continuous models indexed ``[v][v']``; a single
    continuous model is shorthand for one system mode.
    """

    beta: float
    spectral: Union[DiscreteModes, ContinuousModel, Sequence[Sequence[ContinuousModel]]]
    eta: np.ndarray = field(default_factory=lambda: np.ones(1))
    mu: np.ndarray | None = None
    name: str = "bath"

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValidationError(f"inverse temperature must be positive, got beta={self.beta}")
        if isinstance(self.spectral, (Drude, Tabulated)):
            self.spectral = [[self.spectral]]
        if not isinstance(self.spectral, DiscreteModes):
            mat = [list(row) for row in self.spectral]
            n = len(mat)
            if any(len(r) != n for r in mat):
                raise ValidationError("spectral model matrix must be square")
            for v in range(n):
                for vp in range(v):
                    if mat[v][vp] != mat[vp][v]:
                        raise ValidationError("spectral model matrix must be symmetric")
            self.spectral = mat
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        self.mu = np.zeros(self.n_sys) if self.mu is None else np.atleast_1d(np.asarray(self.mu, dtype=float))
        if self.eta.size != self.n_sys or self.mu.size != self.n_sys:
            raise ValidationError(
                f"eta/mu need one entry per system mode ({self.n_sys})"
            )

    @property
    def n_sys(self) -> int:
        if isinstance(self.spectral, DiscreteModes):
            return self.spectral.n_sys
        return len(self.spectral)

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.spectral, DiscreteModes)

    def model(self, v: int, vp: int) -> ContinuousModel:
        _check_index(v, self.n_sys)
        _check_index(vp, self.n_sys)
        return self.spectral[v][vp]

    def max_frequency(self) -> float:
        if self.is_discrete:
            return float(self.spectral.frequencies.max())
        out = 0.0
        for row in self.spectral:
            for m in row:
                out = max(out, m.support if np.isfinite(m.support) else 50 * m.scale)
        return out

    def with_eta(self, eta) -> "BosonBathSpec":
        return BosonBathSpec(self.beta, self.spectral, eta, self.mu, self.name)

    # array-level kernels -------------------------------------------------

    def phi(self, t, v=0, vp=0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.is_discrete:
            w = self.spectral.weights(v, vp)
            return _mode_sum(t, self.spectral.frequencies, w, np.sin)
        return _phi_continuous(self.model(v, vp), t)

    def c_minus(self, t, v=0, vp=0, hbar=1.0) -> np.ndarray:
        if not hbar > 0:
            raise ValidationError("hbar must be positive")
        t = np.asarray(t, dtype=float)
        if self.is_discrete:
            w = self.spectral.weights(v, vp)
            om = self.spectral.frequencies
            coth = 1.0 + 2.0 * bose(self.beta * hbar * om)
            re = _mode_sum(t, om, 0.5 * hbar * w * coth, np.cos)
            im = _mode_sum(t, om, 0.5 * hbar * w, np.sin)
            return re - 1j * im
        m = self.model(v, vp)
        re = _ccos_continuous(m, t, self.beta, hbar)
        return re - 0.5j * hbar * _phi_continuous(m, t)

    def c_classical(self, t, v=0, vp=0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.is_discrete:
            om = self.spectral.frequencies
            w = self.spectral.weights(v, vp)
            return _mode_sum(t, om, w / (self.beta * om), np.cos)
        m = self.model(v, vp)
        return _transform(m, t, lambda w: 2.0 * _safe_div(m.J(w), w, m.J_slope0()) / (np.pi * self.beta), "cos")

    def phi_tail(self, x, v=0, vp=0) -> np.ndarray:
        """``int_x^inf phi(s) ds`` (Abel-regularised for discrete modes)."""
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            om = self.spectral.frequencies
            return _mode_sum(x, om, self.spectral.weights(v, vp) / om, np.cos)
        m = self.model(v, vp)
        return _transform(m, x, lambda w: 2.0 * _safe_div(m.J(w), w, m.J_slope0()) / np.pi, "cos")


def _safe_div(a, w, limit):
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(w == 0, limit, a / np.where(w == 0, 1.0, w))
    return out


def _mode_sum(t, om, weights, fn):
    """``sum_j weights_j fn(om_j t)`` for every entry of ``t``."""
    flat = t.reshape(-1)
    out = np.empty(flat.shape, dtype=float)
    for s in range(0, flat.size, _CHUNK):
        blk = flat[s:s + _CHUNK]
        out[s:s + _CHUNK] = fn(np.outer(blk, om)) @ weights
    return out.reshape(t.shape)


def _quad_checked(f, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, **{**_QUAD, **kw})
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"quadrature did not converge on [{a}, {b}]: {exc}", {"a": a, "b": b}) from None
    return val


def _transform(model: ContinuousModel, t: np.ndarray, g, kind: str, support: float | None = None) -> np.ndarray:
    """``int_0^support g(w) trig(w t) dw`` for every ``t`` (``kind`` is
    ``"sin"`` or ``"cos"``). Tabulated models use the trapezoid rule on a
    refined table; analytic models use adaptive quadrature (QAWO/QAWF)."""
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    out = np.empty(flat.shape)
    sup = model.support if support is None else min(support, model.support)
    trig = np.sin if kind == "sin" else np.cos
    if isinstance(model, Tabulated):
        w = _refined_table(model)
        w = w[w <= sup]
        gw = g(w)
        for s in range(0, flat.size, 256):
            blk = flat[s:s + 256]
            out[s:s + 256] = integrate.trapezoid(gw[None, :] * trig(np.outer(blk, w)), w, axis=1)
        return out.reshape(t.shape)
    cache: dict[float, float] = {}
    for i, ti in enumerate(flat):
        a = abs(ti)
        if a not in cache:
            if a == 0.0:
                cache[a] = 0.0 if kind == "sin" else _quad_checked(g, 0.0, sup)
            else:
                cache[a] = _quad_checked(g, 0.0, sup, weight=kind, wvar=a)
        val = cache[a]
        out[i] = -val if (kind == "sin" and ti < 0) else val
    return out.reshape(t.shape)


def _refined_table(model: Tabulated, factor: int = 8) -> np.ndarray:
    w = model.omega
    sub = np.linspace(0.0, 1.0, factor + 1)[:-1]
    fine = (w[:-1, None] + np.diff(w)[:, None] * sub[None, :]).reshape(-1)
    return np.concatenate([fine, w[-1:]])


def _phi_continuous(model: ContinuousModel, t):
    if isinstance(model, Drude) and model.freq_cutoff is None:
        t = np.asarray(t, dtype=float)
        lam, gam = model.reorganization, model.cutoff
        return np.sign(t) * 2.0 * lam * gam * np.exp(-gam * np.abs(t))
    return _transform(model, t, lambda w: (2.0 / np.pi) * model.J(w), "sin")


def _thermal_density(model: ContinuousModel, x0: float):
    """``2 J(w) n(w)`` with ``n`` the Bose factor at ``beta*hbar = x0``."""

    def fn(w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = 2.0 * model.J(w) * bose(x0 * w)
        return np.where(w == 0, 2.0 * model.J_slope0() / x0, val)

    return fn


def _ccos_continuous(model: ContinuousModel, t, beta, hbar):
    """``(hbar/pi) int J coth(beta hbar w/2) cos(w t) dw`` split as the
    ``coth -> 1`` part plus the thermal part ``2 J n(w)``; the latter decays
    exponentially and is cut where ``n < e^-60``."""
    t = np.asarray(t, dtype=float)
    x0 = beta * hbar
    if isinstance(model, Drude) and model.freq_cutoff is None and np.any(t == 0):
        raise NumericalError(
            "Drude kernel diverges at t=0 without a frequency cutoff; "
            "set freq_cutoff or avoid sampling t=0",
            {"t": 0.0},
        )
    zero_t = _transform(model, t, model.J, "cos")
    th = _transform(model, t, _thermal_density(model, x0), "cos", support=60.0 / x0)
    return (hbar / np.pi) * (zero_t + th)


# ---------------------------------------------------------------- public bosonic ops


def phi_boson(bath: BosonBathSpec, v: int, vp: int, grid: TimeGrid) -> ComplexSeries:
    """Response kernel ``phi_vv'(t)`` on ``grid`` (imaginary parts zero)."""
    return ComplexSeries(grid, bath.phi(grid.times, v, vp).astype(complex))


def c_minus_boson(bath: BosonBathSpec, v: int, vp: int, grid: TimeGrid, hbar: float = 1.0) -> ComplexSeries:
    """Bare correlation ``c^-_vv'(t) = <F_v(t) F_v'(0)>_B`` on ``grid``."""
    return ComplexSeries(grid, bath.c_minus(grid.times, v, vp, hbar))


def c_plus_boson(bath: BosonBathSpec, v: int, vp: int, grid: TimeGrid, hbar: float = 1.0) -> ComplexSeries:
    return c_minus_boson(bath, v, vp, grid, hbar).conj()


def c_classical_boson(bath: BosonBathSpec, v: int, vp: int, grid: TimeGrid) -> ComplexSeries:
    """Classical limit ``(2/(pi beta)) int J(w)/w cos(w t) dw``."""
    return ComplexSeries(grid, bath.c_classical(grid.times, v, vp).astype(complex))


def kernel_spectrum(bath: BosonBathSpec, omega, v: int = 0, vp: int = 0, t_max: float | None = None, dt: float | None = None, hbar: float = 1.0) -> Spectrum:
    """Full-line transform ``int dt e^{i w t} c^-_vv'(t)`` of a continuous
    bath kernel, computed in the time domain.

    For an unbounded Drude density the real kernel is log-singular at
    ``t = 0``. The piece ``(hbar 2 lambda gamma / pi) K0(sqrt(2) gamma t)``
    carries that singularity (and the first two orders of the
    high-frequency tail); its transform ``hbar 2 lambda gamma / sqrt(w^2 + 2
    gamma^2)`` is added in closed form. The smooth remainder (even in t)
    and ``-i hbar phi/2`` (odd in t) go through :func:`sbet.grid.spectrum`
    with Simpson weights on ``[0, t_max]``.
    """
    if bath.is_discrete:
        raise ValidationError("kernel_spectrum needs a continuous spectral model")
    m = bath.model(v, vp)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    scale = min(m.scale, 2.0 * np.pi / (bath.beta * hbar))
    if t_max is None:
        t_max = 40.0 / scale
    if dt is None:
        dt = min(0.02 / scale, 0.1 / max(np.abs(omega).max(), 1e-12))
    steps = int(round(t_max / dt))
    steps += steps % 2
    g = TimeGrid(0.0, dt, steps + 1)
    t = g.times
    x0 = bath.beta * hbar
    singular = isinstance(m, Drude) and m.freq_cutoff is None
    a = np.sqrt(2.0) * m.cutoff if singular else 0.0
    amp = 2.0 * m.reorganization * m.cutoff if singular else 0.0

    def even_density(w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = m.J(w) / np.tanh(0.5 * x0 * w)
        val = np.where(w == 0, 2.0 * m.J_slope0() / x0, val)
        if singular:
            val = val - amp / np.sqrt(w * w + a * a)
        return val

    if singular:
        # smooth, even, O(w^-5) integrand: the trapezoid rule in w converges
        # spectrally and is far cheaper than one adaptive quadrature per t
        w_max = max(400.0 * m.cutoff, 60.0 / x0)
        dw = min(0.01 * m.cutoff, np.pi / (4.0 * t_max))
        wg = np.linspace(0.0, w_max, int(np.ceil(w_max / dw)) + 1)
        fw = even_density(wg) * trapezoid_weights(wg.size) * (wg[1] - wg[0])
        even = np.empty(t.size)
        for s0 in range(0, t.size, 128):
            even[s0:s0 + 128] = np.cos(np.outer(t[s0:s0 + 128], wg)) @ fw
        even *= hbar / np.pi
    else:
        even = (hbar / np.pi) * _transform(m, t, even_density, "cos")
    ph = bath.phi(t, v, vp)
    s_even = spectrum(ComplexSeries(g, even), omega, extension="even", simpson=True)
    # odd part f(t) = -i hbar phi(t)/2: full line = 2i int_0^inf sin(w t) f(t) dt
    s_sin = spectrum(ComplexSeries(g, ph), omega, extension="half", simpson=True)
    vals = s_even.values + hbar * s_sin.values.imag
    if singular:
        vals = vals + hbar * amp / np.sqrt(omega ** 2 + a * a)
    meta = {"t_max": float(g.t_stop), "dt": dt, "decayed": s_even.meta["decayed"] and s_sin.meta["decayed"]}
    return Spectrum(omega, vals, meta)


# ---------------------------------------------------------------- fermionic leads


@dataclass
class DiscreteLevels:
    """Lead levels ``eps_j`` and tunnelling amplitudes ``t[u, j]``."""

    energies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float).reshape(-1)
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim == 1:
            a = a[None, :]
        if a.shape[1] != self.energies.size:
            raise ValidationError("amplitudes must have one column per level")
        self.amplitudes = a

    @property
    def n_orb(self) -> int:
        return self.amplitudes.shape[0]


@dataclass
class TabulatedHybridization:
    """Hermitian ``Gamma[k, u, v]`` sampled at increasing ``omega[k]``,
    zero outside the band ``[omega[0], omega[-1]]``."""

    omega: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        g = np.asarray(self.gamma, dtype=complex)
        if g.ndim == 1:
            g = g[:, None, None]
        if g.shape[0] != self.omega.size or g.shape[1] != g.shape[2]:
            raise ValidationError("gamma must have shape (n_omega, n_orb, n_orb)")
        if np.any(np.diff(self.omega) <= 0):
            raise ValidationError("hybridisation omega must be strictly increasing")
        if not np.allclose(g, np.conj(np.swapaxes(g, 1, 2)), atol=1e-12):
            raise ValidationError("Gamma(w) must be Hermitian")
        ev = np.linalg.eigvalsh(g)
        if ev.min() < -1e-12 * max(1.0, np.abs(ev).max()):
            raise ValidationError("Gamma(w) must be positive semidefinite")
        self.gamma = g

    @property
    def n_orb(self) -> int:
        return self.gamma.shape[1]


@dataclass
class FermiBathSpec:
    """One fermionic lead at ``(beta, chemical_potential)``."""

    beta: float
    chemical_potential: float
    spectral: Union[DiscreteLevels, TabulatedHybridization]
    name: str = "lead"

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValidationError(f"inverse temperature must be positive, got beta={self.beta}")

    @property
    def n_orb(self) -> int:
        return self.spectral.n_orb

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.spectral, DiscreteLevels)

    def occupations(self) -> np.ndarray:
        if not self.is_discrete:
            raise ValidationError("occupations are defined for discrete levels")
        return fermi(self.beta * (self.spectral.energies - self.chemical_potential))

    def c_sigma(self, sigma: int, t, u=0, v=0) -> np.ndarray:
        if sigma not in (1, -1):
            raise ValidationError("sigma must be +1 or -1")
        _check_index(u, self.n_orb)
        _check_index(v, self.n_orb)
        t = np.asarray(t, dtype=float)
        if self.is_discrete:
            eps = self.spectral.energies
            amp = self.spectral.amplitudes
            nbar = self.occupations()
            if sigma < 0:
                w = np.conj(amp[u]) * amp[v] * (1.0 - nbar)
                return _level_sum(t, eps, w, -1)
            w = amp[u] * np.conj(amp[v]) * nbar
            return _level_sum(t, eps, w, +1)
        om, gam = self.spectral.omega, self.spectral.gamma
        f = fermi(self.beta * (om - self.chemical_potential))
        if sigma < 0:
            dens = gam[:, u, v] * (1.0 - f)
            return _band_transform(t, om, dens, -1)
        dens = gam[:, v, u] * f
        return _band_transform(t, om, dens, +1)

    def g(self, t, u=0, v=0) -> np.ndarray:
        _check_index(u, self.n_orb)
        _check_index(v, self.n_orb)
        t = np.asarray(t, dtype=float)
        if self.is_discrete:
            amp = self.spectral.amplitudes
            return _level_sum(t, self.spectral.energies, np.conj(amp[u]) * amp[v], -1)
        return _band_transform(t, self.spectral.omega, self.spectral.gamma[:, u, v], -1)


def _level_sum(t, eps, w, sign):
    flat = t.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    for s in range(0, flat.size, _CHUNK):
        blk = flat[s:s + _CHUNK]
        out[s:s + _CHUNK] = np.exp(sign * 1j * np.outer(blk, eps)) @ w
    return out.reshape(t.shape)


def _band_transform(t, om, dens, sign, factor=8):
    sub = np.linspace(0.0, 1.0, factor + 1)[:-1]
    fine = np.concatenate([(om[:-1, None] + np.diff(om)[:, None] * sub[None, :]).reshape(-1), om[-1:]])
    d = np.interp(fine, om, dens.real) + 1j * np.interp(fine, om, dens.imag)
    flat = t.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    for s in range(0, flat.size, 256):
        blk = flat[s:s + 256]
        out[s:s + 256] = integrate.trapezoid(d[None, :] * np.exp(sign * 1j * np.outer(blk, fine)), fine, axis=1)
    return out.reshape(t.shape) / (2 * np.pi)


def c_sigma_fermion(bath: FermiBathSpec, sigma: int, u: int, v: int, grid: TimeGrid) -> ComplexSeries:
    """Lead kernel ``c^(sigma)_uv(t)`` relative to the bare lead Hamiltonian
    (no chemical-potential phase)."""
    return ComplexSeries(grid, bath.c_sigma(sigma, grid.times, u, v))


def g_fermion(bath: FermiBathSpec, u: int, v: int, grid: TimeGrid) -> ComplexSeries:
    """Anticommutator kernel ``g_uv(t)``; independent of temperature."""
    return ComplexSeries(grid, bath.g(grid.times, u, v))


# ---------------------------------------------------------------- discretisation


def discretize_spectral_density(model: SpectralModel, n: int, scheme: str = "uniform", cutoff: float | None = None, taper: float | None = None) -> DiscreteModes:
    """Finite-mode bath with ``c_j^2 = (2/pi) J(w_j) w_j`` (quadrature weight
    ``w_j``) reproducing ``phi(t)`` of the continuous model.

    ``scheme`` is ``"uniform"`` (midpoint frequencies) or ``"gauss-legendre"``
    on ``[0, cutoff]``. A hard cutoff leaves an algebraic ``1/t`` tail in every
    bath correlation; ``taper`` multiplies ``J`` by ``exp(-(w/taper)^4)`` so
    the discrete bath decays cleanly (the result then models the tapered
    density, not ``J`` itself).
    """
    if isinstance(model, DiscreteModes):
        return model
    if n < 1:
        raise ValidationError("need at least one mode")
    if cutoff is None:
        cutoff = model.support
        if not np.isfinite(cutoff):
            raise ValidationError("a frequency cutoff is required for an unbounded spectral density")
    if not cutoff > 0:
        raise ValidationError("cutoff must be positive")
    if scheme == "uniform":
        dw = cutoff / n
        om = (np.arange(n) + 0.5) * dw
        wts = np.full(n, dw)
    elif scheme in ("gauss-legendre", "gl"):
        x, wq = roots_legendre(n)
        om = 0.5 * cutoff * (x + 1.0)
        wts = 0.5 * cutoff * wq
    else:
        raise ValidationError(f"unknown discretisation scheme {scheme!r}")
    dens = np.maximum(model.J(om), 0.0)
    if taper is not None:
        if not taper > 0:
            raise ValidationError("taper frequency must be positive")
        dens = dens * np.exp(-((om / taper) ** 4))
    c = np.sqrt((2.0 / np.pi) * dens * wts)
    return DiscreteModes(om, c)


def discretize_hybridization(gamma: float, half_width: float, n: int, taper: float | None = None, center: float = 0.0) -> DiscreteLevels:
    """Single-orbital lead with ``n`` midpoint levels on
    ``[center - half_width, center + half_width]`` and
    ``|t_j|^2 = Gamma(e_j) de / (2 pi)``.

    ``Gamma`` is flat (``gamma``) or, with ``taper``, multiplied by
    ``exp(-((e - center)/taper)^4)`` to remove the algebraic band-edge tails.
    """
    if n < 1 or not half_width > 0 or gamma < 0:
        raise ValidationError("need n >= 1, half_width > 0 and gamma >= 0")
    de = 2.0 * half_width / n
    eps = center - half_width + (np.arange(n) + 0.5) * de
    dens = np.full(n, float(gamma))
    if taper is not None:
        if not taper > 0:
            raise ValidationError("taper width must be positive")
        dens = dens * np.exp(-(((eps - center) / taper) ** 4))
    return DiscreteLevels(eps, np.sqrt(dens * de / (2.0 * np.pi))[None, :])
