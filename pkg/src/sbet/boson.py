"""Bosonic system-bath entanglement relations.

Two regimes are covered.

Field-free, stationary
    ``C_FQ(t)`` and ``C_FF(t)`` from the stationary system correlation
    ``C_QQ``. ``C`` here carries no factor ``i``.

Field-dressed
    two-time ``R_FQ``, ``R_QF`` and ``R_FF`` (each carrying the factor ``i``
    of ``R_{O2 O1}(t2, t1) = i <O2(t2) O1(t1)>``) from a driven ``R_QQ`` on a
    square window ``[t_s, t_max]`` together with the means ``Q(t)``.

The ``t0 -> -inf`` memory integrals are split at the window start ``t_s``
(which must not exceed the field switch-on time). Before ``t_s`` the system
two-time function is replaced by its stationary extension

    R_QQ(tau, t) ~ i [C^c_ss(tau - t) + Q_ss Q(t)],   tau < t_s,

where ``C^c_ss`` is the centred stationary correlation. For quadratic
systems the centred two-time correlation does not depend on the drive and
this is exact. Otherwise the error is bounded by the kernel magnitude
``|c(t - t_s)|``, which the caller controls through the pre-field lead
``t_on - t_s``. The mean part of every overline term collapses to a
``phi``-convolution of the means, with the stationary piece given by the
tail integral ``int_x^inf phi``.

All time integrals use the composite trapezoid rule on one uniform step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .baths import BosonBathSpec
from .errors import NumericalError, PipelineOrderError, ValidationError
from .grid import (
    ComplexSeries,
    TailPolicy,
    TimeGrid,
    TwoTimeField,
    _check_decay,
    tail_sum,
    trapezoid_weights,
    volterra,
)

__all__ = [
    "GaussianPulse",
    "CosineBurst",
    "TabulatedEnvelope",
    "DriveProfile",
    "SystemCorrelations",
    "DrivenGrids",
    "SbetBosonResult",
    "auto_tail_policy",
    "bath_mean",
    "entangled_FQ",
    "entangled_QF",
    "entangled_FF",
    "run_driven",
    "sbet_field_free_FQ",
    "sbet_field_free_QF",
    "sbet_field_free_FF",
    "run_field_free",
]


# ------------------------------------------------------------------ drives


@dataclass(frozen=True)
class GaussianPulse:
    """``A exp(-(t-c)^2 / (2 w^2)) cos(W (t-c) + phase)``."""

    amplitude: float
    center: float
    width: float
    carrier: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValidationError("pulse width must be positive")

    def __call__(self, t):
        x = np.asarray(t, dtype=float) - self.center
        return self.amplitude * np.exp(-0.5 * (x / self.width) ** 2) * np.cos(self.carrier * x + self.phase)


@dataclass(frozen=True)
class CosineBurst:
    """``A sin^2(pi s / D) cos(W s + phase)`` for ``0 <= s = t - start <= D``.

    The ``sin^2`` window keeps the burst continuous with a continuous first
    derivative, so trapezoid convergence stays second order.
    """

    amplitude: float
    frequency: float
    start: float
    duration: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidationError("burst duration must be positive")

    def __call__(self, t):
        s = np.asarray(t, dtype=float) - self.start
        inside = (s >= 0) & (s <= self.duration)
        env = np.sin(np.pi * s / self.duration) ** 2 * np.cos(self.frequency * s + self.phase)
        return np.where(inside, self.amplitude * env, 0.0)


@dataclass(frozen=True)
class TabulatedEnvelope:
    """Real samples on a uniform grid, linearly interpolated, zero outside."""

    grid: TimeGrid
    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValidationError("envelope samples do not match their grid")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("envelope samples must be finite")
        object.__setattr__(self, "values", tuple(vals.tolist()))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.grid.times, np.asarray(self.values), left=0.0, right=0.0)


Envelope = Callable[[np.ndarray], np.ndarray]


@dataclass
class DriveProfile:
    """External fields, identically zero before ``t_on``.

    ``system`` maps a system mode ``v`` to ``(mu_v, envelope)``; ``bath``
    maps ``(alpha, v)`` to the envelope multiplying ``mu_{alpha v}`` (the
    bath dipole lives on :class:`BosonBathSpec`).
    """

    t_on: float = 0.0
    system: Mapping[int, tuple] = field(default_factory=dict)
    bath: Mapping[tuple, Envelope] = field(default_factory=dict)

    @classmethod
    def none(cls, t_on: float = 0.0) -> "DriveProfile":
        return cls(t_on)

    def _gate(self, t, values):
        t = np.asarray(t, dtype=float)
        return np.where(t >= self.t_on, values, 0.0)

    def system_field(self, v: int, t) -> tuple[float, np.ndarray]:
        """``(mu_v, eps_v(t))``; zero when the mode is undriven."""
        t = np.asarray(t, dtype=float)
        if v not in self.system:
            return 0.0, np.zeros_like(t)
        mu, env = self.system[v]
        return float(mu), self._gate(t, env(t))

    def bath_field(self, alpha: int, v: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        env = self.bath.get((alpha, v))
        if env is None:
            return np.zeros_like(t)
        return self._gate(t, env(t))

    def scaled(self, factor: float) -> "DriveProfile":
        """Every envelope multiplied by ``factor``."""
        sysf = {v: (mu, _Scaled(env, factor)) for v, (mu, env) in self.system.items()}
        bathf = {k: _Scaled(env, factor) for k, env in self.bath.items()}
        return DriveProfile(self.t_on, sysf, bathf)

    @property
    def is_zero(self) -> bool:
        return not self.system and not self.bath


@dataclass(frozen=True)
class _Scaled:
    env: Envelope
    factor: float

    def __call__(self, t):
        return self.factor * np.asarray(self.env(t))


# ------------------------------------------------------------------ inputs


@dataclass
class SystemCorrelations:
    """Reduced-system inputs.

    stationary
        ``C_QQ[v, v', k] = <Q_v(k dt) Q_v'(0)>`` on ``grid`` (lags from 0),
        uncentred, for the pre-field steady state.
    window, R_QQ, means
        optional driven data: ``R_QQ[v, v', i2, i1] = i <Q_v(t2) Q_v'(t1)>``
        on the square ``window x window`` and ``means[v, i] = Q_v(t_i)``.
    steady_means
        ``Q_v`` in the pre-field steady state (defaults to zero).
    """

    grid: TimeGrid
    stationary: np.ndarray
    window: TimeGrid | None = None
    R_QQ: np.ndarray | None = None
    means: np.ndarray | None = None
    steady_means: np.ndarray | None = None
    provenance: str = "oracle"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(self.grid.t_start) > 1e-12:
            raise ValidationError("stationary correlations must start at lag 0")
        st = np.asarray(self.stationary, dtype=complex)
        if st.ndim == 1:
            st = st[None, None, :]
        if st.ndim != 3 or st.shape[0] != st.shape[1] or st.shape[2] != self.grid.n:
            raise ValidationError(f"stationary block has shape {st.shape}, expected (nv, nv, {self.grid.n})")
        if not np.all(np.isfinite(st)):
            raise ValidationError("stationary correlations contain non-finite values")
        self.stationary = st
        nv = st.shape[0]
        self.steady_means = (
            np.zeros(nv) if self.steady_means is None else np.atleast_1d(np.asarray(self.steady_means, dtype=float))
        )
        if self.steady_means.shape != (nv,):
            raise ValidationError("steady_means needs one value per system mode")
        if self.R_QQ is not None:
            if self.window is None:
                raise ValidationError("driven R_QQ given without its window grid")
            r = np.asarray(self.R_QQ, dtype=complex)
            if r.ndim == 2:
                r = r[None, None]
            if r.shape != (nv, nv, self.window.n, self.window.n):
                raise ValidationError(f"R_QQ has shape {r.shape}, expected {(nv, nv, self.window.n, self.window.n)}")
            if np.isnan(r).any():
                raise ValidationError("R_QQ contains NaN")
            self.R_QQ = r
            m = np.zeros((nv, self.window.n)) if self.means is None else np.asarray(self.means)
            if m.ndim == 1:
                m = m[None]
            if m.shape != (nv, self.window.n):
                raise ValidationError("means must be sampled on the driven window")
            if np.abs(np.imag(m)).max(initial=0.0) > 1e-9 * max(1.0, np.abs(m).max(initial=0.0)):
                raise ValidationError("means of Hermitian system modes must be real")
            self.means = np.real(m).astype(float)
            if not self.grid.compatible(self.window):
                raise ValidationError("driven window and stationary grid must share the step")

    @property
    def n_sys(self) -> int:
        return self.stationary.shape[0]

    @property
    def dt(self) -> float:
        return self.grid.dt

    def series(self, v: int, vp: int) -> ComplexSeries:
        return ComplexSeries(self.grid, self.stationary[v, vp])

    def driven_field(self, v: int, vp: int) -> TwoTimeField:
        if self.R_QQ is None:
            raise ValidationError("no driven data present")
        return TwoTimeField(self.window, self.window, self.R_QQ[v, vp])

    def centered(self) -> np.ndarray:
        m = self.steady_means
        return self.stationary - (m[:, None] * m[None, :])[:, :, None]

    def lagged(self, v: int, vp: int, k: np.ndarray, centered: bool = False) -> np.ndarray:
        """``C_{v v'}(k dt)`` at signed integer lags via ``C_AB(-t) = C_BA(t)^*``."""
        k = np.asarray(k)
        if np.abs(k).max(initial=0) >= self.grid.n:
            raise ValidationError(
                f"stationary correlations cover lags up to {self.grid.t_stop}, "
                f"needed {np.abs(k).max() * self.dt}"
            )
        st = self.centered() if centered else self.stationary
        pos = st[v, vp][np.abs(k)]
        neg = np.conj(st[vp, v][np.abs(k)])
        return np.where(k >= 0, pos, neg)

    def symmetry_residual(self) -> float:
        """``max |C_AB(0) - C_BA(0)^*|`` plus driven Hermiticity
        ``R_AB(t2,t1) = -R_BA(t1,t2)^*`` where driven data exist."""
        st = self.stationary[:, :, 0]
        res = float(np.abs(st - st.T.conj()).max())
        if self.R_QQ is not None:
            r = self.R_QQ
            res = max(res, float(np.abs(r + np.conj(np.transpose(r, (1, 0, 3, 2)))).max()))
        return res


@dataclass(frozen=True)
class DrivenGrids:
    """Fine quadrature window plus a strided output mesh starting at ``t_on``."""

    window: TimeGrid
    t_on: float
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
        if self.t_on < self.window.t_start - 1e-12:
            raise ValidationError("t_on must lie inside the driven window")
        self.window.index_of(self.t_on)

    @property
    def output(self) -> TimeGrid:
        start = self.window.index_of(self.t_on)
        return self.window.strided(self.stride, start=start)

    @property
    def output_index(self) -> np.ndarray:
        start = self.window.index_of(self.t_on)
        return start + self.stride * np.arange(self.output.n)


@dataclass
class SbetBosonResult:
    """Entangled correlations keyed by index tuples.

    Stationary mode: ``FQ[(a, v, v')]``, ``QF[(a, v', v)]`` and
    ``FF[(a, v, a', v')]`` are :class:`ComplexSeries`.
    Driven mode: the same keys map to :class:`TwoTimeField` on the output
    mesh, and ``means[(a, v)]`` holds the bath means on the fine window.
    """

    mode: str
    FQ: dict = field(default_factory=dict)
    QF: dict = field(default_factory=dict)
    FF: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def auto_tail_policy(C_sys: SystemCorrelations, eps: float = 1e-6, probe: float = 0.1, margin: float = 1.25) -> TailPolicy:
    """Shortest ``T_tail`` whose trailing window has decayed below ``eps``.

    The centred stationary correlation is scanned; ``T_tail`` is placed so
    that its last ``probe`` fraction sits past ``margin`` times the decay
    point. The margin covers the second stage, whose source (``C_FQ``)
    decays at the same rate from a smaller peak.
    """
    c = np.abs(C_sys.centered()).max(axis=(0, 1))
    peak = c.max()
    if peak == 0.0:
        return TailPolicy(C_sys.dt, eps, probe)
    above = np.nonzero(c >= eps * peak)[0]
    last = margin * (int(above[-1]) + 1)
    m = int(np.ceil(last / (1.0 - probe))) + 1
    if m >= C_sys.grid.n:
        raise NumericalError(
            "stationary correlations never decay below the tail tolerance within their span",
            {"span": C_sys.grid.t_stop, "last_above": last * C_sys.dt},
        )
    return TailPolicy(m * C_sys.dt, eps, probe)


def _default_policy(C_sys: SystemCorrelations, baths: Sequence[BosonBathSpec]) -> TailPolicy:
    """Auto policy, or a single step when every coupling vanishes (the tail
    terms then drop out identically)."""
    if all(not np.any(b.eta) for b in baths):
        return TailPolicy(C_sys.dt)
    return auto_tail_policy(C_sys)


# ------------------------------------------------------------------ field-free


def _lag_grid_values(fn, k: np.ndarray, dt: float) -> np.ndarray:
    return np.asarray(fn(k * dt), dtype=complex)


def _b1_signed(bath: BosonBathSpec, v: int, vp: int, C_sys: SystemCorrelations, k_lo: int, k_hi: int, policy: TailPolicy, centered: bool = False, check: bool = True) -> tuple[np.ndarray, dict]:
    """``C_{F_v Q_v'}(k dt)`` for integer lags ``k_lo..k_hi`` (signed)."""
    dt = C_sys.dt
    m = policy.steps(dt)
    nv = bath.n_sys
    if nv != C_sys.n_sys:
        raise ValidationError("bath and system correlations disagree on the number of system modes")
    ks = np.arange(k_lo, k_hi + 1)
    out = np.zeros(ks.size, dtype=complex)
    st = C_sys.centered() if centered else C_sys.stationary
    if st.shape[2] < m + 1:
        raise ValidationError(f"stationary correlations cover [0, {C_sys.grid.t_stop}] but t_tail={policy.t_tail}")
    rel = 0.0
    npos = max(k_hi, 0) + 1
    nneg = max(-k_lo, 0) + 1
    need = max(npos, nneg)
    if need > st.shape[2]:
        raise ValidationError(f"stationary correlations do not reach lag {need * dt}")
    kern_k = np.arange(k_lo, k_hi + m + 1)
    for vpp in range(nv):
        eta = bath.eta[vpp]
        if eta == 0.0:
            continue
        src_tail = st[vp, vpp, : m + 1]
        if check:
            rel = max(rel, _check_decay(src_tail, policy))
        c_ext = _lag_grid_values(lambda t: bath.c_minus(t, v, vpp), kern_k, dt)
        tail = tail_sum(c_ext, src_tail, dt, ks.size)
        vals = (-2.0 * tail.imag).astype(complex)
        phi = bath.phi(dt * np.arange(need), v, vpp)
        if k_hi >= 0:
            pos = volterra(phi[:npos], st[vpp, vp, :npos], dt)
            sel = ks >= 0
            vals[sel] += pos[ks[sel]]
        if k_lo < 0:
            neg = volterra(phi[:nneg], np.conj(st[vp, vpp, :nneg]), dt)
            sel = ks < 0
            vals[sel] += neg[-ks[sel]]
        out += eta * vals
    return out, {"relative_tail": rel, "t_tail": policy.t_tail}


def _series_on(grid: TimeGrid, dt: float) -> tuple[int, int]:
    if abs(grid.dt - dt) > 1e-9 * dt:
        raise ValidationError("output grid step must equal the correlation step")
    k0 = grid.t_start / dt
    if abs(k0 - round(k0)) > 1e-6:
        raise ValidationError("output grid is not aligned with the correlation grid")
    k0 = int(round(k0))
    return k0, k0 + grid.n - 1


def sbet_field_free_FQ(bath: BosonBathSpec, v: int, vp: int, C_sys: SystemCorrelations, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """Stationary ``C_{F_v Q_v'}(t)`` on ``grid`` (negative times allowed)."""
    policy = policy or _default_policy(C_sys, [bath])
    k_lo, k_hi = _series_on(grid, C_sys.dt)
    vals, _ = _b1_signed(bath, v, vp, C_sys, k_lo, k_hi, policy)
    return ComplexSeries(grid, vals)


def sbet_field_free_QF(bath: BosonBathSpec, vp: int, v: int, C_sys: SystemCorrelations, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """Stationary ``C_{Q_v' F_v}(t) = C_{F_v Q_v'}(-t)^*``."""
    policy = policy or _default_policy(C_sys, [bath])
    k_lo, k_hi = _series_on(grid, C_sys.dt)
    vals, _ = _b1_signed(bath, v, vp, C_sys, -k_hi, -k_lo, policy)
    return ComplexSeries(grid, np.conj(vals[::-1]))


def _fq_key_series(stage1: Mapping, alpha: int, v: int, vp: int) -> ComplexSeries:
    key = (alpha, v, vp)
    if key not in stage1:
        raise PipelineOrderError(f"stage-1 C_FQ{key} missing; run the FQ stage first")
    return stage1[key]


def sbet_field_free_FF(baths: Sequence[BosonBathSpec], alpha: int, v: int, alpha_p: int, vp: int, C_sys: SystemCorrelations, stage1: Mapping | None, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """Stationary ``C_{F_{alpha v} F_{alpha' v'}}(t)`` for ``t >= 0``.

    ``stage1[(alpha', v', v'')]`` must hold ``C_{F_{alpha' v'} Q_v''}`` on a
    grid covering ``[-t_max, T_tail]``.
    """
    if stage1 is None:
        raise PipelineOrderError("bath-bath correlations need the stage-1 FQ results")
    policy = policy or _default_policy(C_sys, baths)
    dt = C_sys.dt
    m = policy.steps(dt)
    k_lo, k_hi = _series_on(grid, dt)
    if k_lo < 0:
        raise ValidationError("field-free FF is evaluated for t >= 0")
    bath = baths[alpha]
    ks = np.arange(k_lo, k_hi + 1)
    out = np.zeros(ks.size, dtype=complex)
    if alpha == alpha_p:
        out += bath.c_minus(ks * dt, v, vp)
    for vpp in range(bath.n_sys):
        eta = bath.eta[vpp]
        if eta == 0.0:
            continue
        s1 = _fq_key_series(stage1, alpha_p, vp, vpp)
        g = s1.grid
        i0 = g.index_of(0.0)
        if g.t_start > -k_hi * dt + 1e-9 or g.t_stop < policy.t_tail - 1e-9:
            raise ValidationError("stage-1 FQ does not cover [-t_max, T_tail]")
        tail_src = s1.values[i0: i0 + m + 1]
        _check_decay(tail_src, policy)
        c_ext = bath.c_minus(np.arange(k_lo, k_hi + m + 1) * dt, v, vpp)
        tail = tail_sum(np.asarray(c_ext, dtype=complex), tail_src, dt, ks.size)
        # C_{Q'' F'}(tau) = C_{F' Q''}(-tau)^*
        qf = np.conj(s1.values[i0 - np.arange(k_hi + 1)])
        phi = bath.phi(dt * np.arange(k_hi + 1), v, vpp)
        vol = volterra(phi, qf, dt)
        out += eta * (vol[ks] - 2.0 * tail.imag)
    return ComplexSeries(grid, out)


def run_field_free(baths: Sequence[BosonBathSpec], C_sys: SystemCorrelations, t_max: float, policy: TailPolicy | None = None, pairs_FF: Sequence[tuple] | None = None) -> SbetBosonResult:
    """Stage 1 (``C_FQ``/``C_QF`` for every bath and mode pair) then stage 2
    (``C_FF``). Stage-1 series span ``[-t_max, max(t_max, T_tail)]``; reported ``C_QF``
    and ``C_FF`` span ``[0, t_max]``."""
    policy = policy or _default_policy(C_sys, baths)
    dt = C_sys.dt
    out_grid = TimeGrid.span(0.0, t_max, dt)
    k_max = out_grid.n - 1
    m = policy.steps(dt)
    k_hi = max(k_max, m)
    s1_grid = TimeGrid(-k_max * dt, dt, k_max + k_hi + 1)
    res = SbetBosonResult("stationary")
    stage1 = {}
    rel = 0.0
    for a, bath in enumerate(baths):
        for v in range(bath.n_sys):
            for vp in range(bath.n_sys):
                vals, d = _b1_signed(bath, v, vp, C_sys, -k_max, k_hi, policy)
                rel = max(rel, d["relative_tail"])
                stage1[(a, v, vp)] = ComplexSeries(s1_grid, vals)
                i0 = k_max
                res.FQ[(a, v, vp)] = ComplexSeries(out_grid, vals[i0: i0 + k_max + 1])
                res.QF[(a, vp, v)] = ComplexSeries(out_grid, np.conj(vals[i0::-1][: k_max + 1]))
    if pairs_FF is None:
        pairs_FF = [
            (a, v, ap, vp)
            for a, b in enumerate(baths)
            for v in range(b.n_sys)
            for ap, bp in enumerate(baths)
            for vp in range(bp.n_sys)
        ]
    for a, v, ap, vp in pairs_FF:
        res.FF[(a, v, ap, vp)] = sbet_field_free_FF(baths, a, v, ap, vp, C_sys, stage1, out_grid, policy)
    res.diagnostics = {"t_tail": policy.t_tail, "tail_eps": policy.eps, "relative_tail": rel, "dt": dt}
    res.diagnostics["stage1"] = stage1
    return res


# ------------------------------------------------------------------ driven


class _DrivenEngine:
    """Shared precomputation for one driven evaluation."""

    def __init__(self, baths, drive: DriveProfile, C_sys: SystemCorrelations, grids: DrivenGrids, policy: TailPolicy | None):
        if C_sys.R_QQ is None:
            raise ValidationError("driven evaluation needs R_QQ on a window")
        if not C_sys.window.compatible(grids.window) or C_sys.window.n != grids.window.n \
                or abs(C_sys.window.t_start - grids.window.t_start) > 1e-9:
            raise ValidationError("driven grids must coincide with the R_QQ window")
        if drive.t_on < grids.window.t_start - 1e-12:
            raise ValidationError("the window must start at or before the field switch-on")
        for b in baths:
            if b.n_sys != C_sys.n_sys:
                raise ValidationError("bath and system correlations disagree on the number of system modes")
        self.baths = list(baths)
        self.drive = drive
        self.C = C_sys
        self.grids = grids
        self.policy = policy or _default_policy(C_sys, baths)
        self.dt = grids.window.dt
        self.n = grids.window.n
        self.t = grids.window.times
        self.t_s = grids.window.t_start
        self.m = self.policy.steps(self.dt)
        self.out_idx = grids.output_index
        need = self.n + self.m
        if C_sys.grid.n < need:
            raise ValidationError(
                f"stationary correlations must reach lag {need * self.dt:.6g} "
                f"(window length plus T_tail); they stop at {C_sys.grid.t_stop:.6g}"
            )
        self.Cc = C_sys.centered()
        self.rel_tail = 0.0
        coupled = any(np.any(b.eta) for b in baths)
        for v in range(C_sys.n_sys if coupled else 0):
            for vp in range(C_sys.n_sys):
                self.rel_tail = max(self.rel_tail, _check_decay(self.Cc[v, vp, : self.m + 1], self.policy))
        self._kern = {}
        self._means = {}
        self._stat_fq = {}
        self.stage1 = {}

    # kernels on integer lags -------------------------------------------

    def cminus(self, a, v, vpp):
        key = ("c", a, v, vpp)
        if key not in self._kern:
            k = np.arange(-(self.n - 1), self.n + self.m)
            self._kern[key] = (k[0], np.asarray(self.baths[a].c_minus(k * self.dt, v, vpp), dtype=complex))
        return self._kern[key]

    def cm_at(self, a, v, vpp, lag):
        k0, arr = self.cminus(a, v, vpp)
        return arr[np.asarray(lag) - k0]

    def phi(self, a, v, vpp):
        key = ("phi", a, v, vpp)
        if key not in self._kern:
            self._kern[key] = self.baths[a].phi(self.dt * np.arange(self.n), v, vpp)
        return self._kern[key]

    def phi_inf(self, a, v, vpp):
        key = ("Phi", a, v, vpp)
        if key not in self._kern:
            self._kern[key] = self.baths[a].phi_tail(self.dt * np.arange(self.n), v, vpp)
        return self._kern[key]

    def eps(self, a, v):
        return self.drive.bath_field(a, v, self.t)

    # means -----------------------------------------------------------------

    def bath_mean(self, a, v) -> np.ndarray:
        key = (a, v)
        if key not in self._means:
            bath = self.baths[a]
            out = np.zeros(self.n)
            for vpp in range(bath.n_sys):
                eta, mu = bath.eta[vpp], bath.mu[vpp]
                src = eta * self.C.means[vpp] + mu * self.eps(a, vpp)
                out += volterra(self.phi(a, v, vpp), src, self.dt)
                qss = self.C.steady_means[vpp]
                if eta != 0.0 and qss != 0.0:
                    out += eta * qss * self.phi_inf(a, v, vpp)
            self._means[key] = out
        return self._means[key]

    # stationary centred FQ for the pre-window tails ------------------------

    def stat_fq(self, a, v, vpp):
        """Centred stationary ``C_{F_{a v} Q_v''}(k dt)`` for ``k = 0..n+m``."""
        key = (a, v, vpp)
        if key not in self._stat_fq:
            vals, _ = _b1_signed(self.baths[a], v, vpp, self.C, 0, self.n + self.m - 1, self.policy, centered=True, check=False)
            self._stat_fq[key] = vals
        return self._stat_fq[key]

    def _pre_matrix(self, a, v, vpp, F_idx, src_rows):
        """``dt sum_s w_s c^-(F_idx + s) S[s, j]`` where ``src_rows`` is
        ``S`` with shape ``(m+1, n_cols)``."""
        s = np.arange(self.m + 1)
        K = self.cm_at(a, v, vpp, np.asarray(F_idx)[:, None] + s[None, :])
        w = trapezoid_weights(self.m + 1) * self.dt
        return (K * w[None, :]) @ src_rows

    # overline terms --------------------------------------------------------

    def ov_FQ(self, a, v, vp, F_idx, Q_idx):
        """Overline ``F^B(t_F - t_Q) Q_v'(t_Q)`` for all pairs (requires
        ``t_F >= t_s``); integral over ``tau <= t_Q``."""
        F_idx = np.asarray(F_idx)
        Q_idx = np.asarray(Q_idx)
        bath = self.baths[a]
        dt = self.dt
        out = np.zeros((F_idx.size, Q_idx.size))
        qbar = self.C.means[vp]
        s = np.arange(self.m + 1)
        for vpp in range(bath.n_sys):
            eta, mu = bath.eta[vpp], bath.mu[vpp]
            eps = self.eps(a, vpp)
            R = self.C.R_QQ[vpp, vp]
            acc = np.zeros((F_idx.size, Q_idx.size), dtype=complex)
            if eta != 0.0 or mu != 0.0:
                for j, b in enumerate(Q_idx):
                    if b == 0:
                        continue
                    k = np.arange(b + 1)
                    X = eta * R[k, b] + 1j * mu * eps[k] * qbar[b]
                    w = np.ones(b + 1)
                    w[0] = w[-1] = 0.5
                    Kc = np.conj(self.cm_at(a, v, vpp, F_idx[:, None] - k[None, :]))
                    acc[:, j] = dt * (Kc @ (w * X))
            out += -2.0 * acc.real
            if eta != 0.0:
                # centred pre-window piece: C^c_{Q'' Q'}(tau - t_Q), tau < t_s
                src = np.conj(self.Cc[vp, vpp][Q_idx[None, :] + s[:, None]])
                pre = np.conj(self._pre_matrix(a, v, vpp, F_idx, np.conj(src)))
                out += 2.0 * eta * pre.imag
                qss = self.C.steady_means[vpp]
                if qss != 0.0:
                    out += eta * qss * np.outer(self.phi_inf(a, v, vpp)[F_idx], qbar[Q_idx])
        return out

    def ov_QF(self, a, vp, v, Q_idx, F_idx):
        """Overline ``Q_v'(t_Q) F^B(t_Q - t_F)``; integral over ``tau <= t_Q``."""
        Q_idx = np.asarray(Q_idx)
        F_idx = np.asarray(F_idx)
        bath = self.baths[a]
        dt = self.dt
        out = np.zeros((Q_idx.size, F_idx.size))
        qbar = self.C.means[vp]
        s = np.arange(self.m + 1)
        for vpp in range(bath.n_sys):
            eta, mu = bath.eta[vpp], bath.mu[vpp]
            eps = self.eps(a, vpp)
            R = self.C.R_QQ[vp, vpp]
            acc = np.zeros((Q_idx.size, F_idx.size), dtype=complex)
            if eta != 0.0 or mu != 0.0:
                for i, q in enumerate(Q_idx):
                    if q == 0:
                        continue
                    k = np.arange(q + 1)
                    Y = eta * R[q, k] + 1j * mu * eps[k] * qbar[q]
                    w = np.ones(q + 1)
                    w[0] = w[-1] = 0.5
                    Kc = self.cm_at(a, v, vpp, F_idx[:, None] - k[None, :])
                    acc[i, :] = dt * (Kc @ (w * Y))
            out += 2.0 * acc.real
            if eta != 0.0:
                src = self.Cc[vp, vpp][Q_idx[None, :] + s[:, None]]
                pre = self._pre_matrix(a, v, vpp, F_idx, src)  # [F, Q]
                out += -2.0 * eta * pre.T.imag
                qss = self.C.steady_means[vpp]
                if qss != 0.0:
                    out += eta * qss * np.outer(qbar[Q_idx], self.phi_inf(a, v, vpp)[F_idx])
        return out

    # full two-time functions (ordered) ------------------------------------

    def R_FQ(self, a, v, vp, F_idx, Q_idx):
        """``R_{F_{a v} Q_v'}(t_F, t_Q)`` for pairs with ``t_F >= t_Q``;
        entries with ``t_F < t_Q`` are left as NaN."""
        F_idx = np.asarray(F_idx)
        Q_idx = np.asarray(Q_idx)
        ov = self.ov_FQ(a, v, vp, F_idx, Q_idx)
        bath = self.baths[a]
        dt = self.dt
        vol = np.zeros(ov.shape, dtype=complex)
        qbar = self.C.means[vp]
        for vpp in range(bath.n_sys):
            eta, mu = bath.eta[vpp], bath.mu[vpp]
            if eta == 0.0 and mu == 0.0:
                continue
            ph = self.phi(a, v, vpp)
            eps = self.eps(a, vpp)
            R = self.C.R_QQ[vpp, vp]
            for j, b in enumerate(Q_idx):
                X = eta * R[b:, b] + 1j * mu * eps[b:] * qbar[b]  # tau index b..n-1
                for i, f in enumerate(F_idx):
                    if f <= b:
                        continue
                    kk = f - np.arange(b, f + 1)
                    seg = X[: f - b + 1]
                    vol[i, j] += dt * (ph[kk] @ seg - 0.5 * ph[f - b] * seg[0])
        out = 1j * ov + vol
        out[F_idx[:, None] < Q_idx[None, :]] = np.nan
        return out

    def R_QF(self, a, vp, v, Q_idx, F_idx):
        """``R_{Q_v' F_{a v}}(t_Q, t_F)`` for ``t_Q >= t_F`` (NaN otherwise)."""
        Q_idx = np.asarray(Q_idx)
        F_idx = np.asarray(F_idx)
        ov = self.ov_QF(a, vp, v, Q_idx, F_idx)
        bath = self.baths[a]
        dt = self.dt
        vol = np.zeros(ov.shape, dtype=complex)
        qbar = self.C.means[vp]
        for vpp in range(bath.n_sys):
            eta, mu = bath.eta[vpp], bath.mu[vpp]
            if eta == 0.0 and mu == 0.0:
                continue
            ph = self.phi(a, v, vpp)
            eps = self.eps(a, vpp)
            R = self.C.R_QQ[vp, vpp]
            for i, q in enumerate(Q_idx):
                Y = eta * R[q, : q + 1] + 1j * mu * eps[: q + 1] * qbar[q]
                for j, f in enumerate(F_idx):
                    if f >= q:
                        continue
                    kk = np.arange(f, q + 1) - f
                    seg = Y[f: q + 1]
                    vol[i, j] += dt * (ph[kk] @ seg - 0.5 * ph[q - f] * seg[-1])
        out = 1j * ov + vol
        out[Q_idx[:, None] < F_idx[None, :]] = np.nan
        return out

    # stage 1 for bath-bath -------------------------------------------------

    def Z_QF(self, a_p, vpp, vp):
        """``R_{Q_v'' F_{a' v'}}(tau, t_1)`` for every fine ``tau`` and output
        ``t_1``, assembled from the ordered QF and FQ evaluations."""
        key = (a_p, vpp, vp)
        if key not in self.stage1:
            fine = np.arange(self.n)
            outs = self.out_idx
            qf = self.R_QF(a_p, vpp, vp, fine, outs)
            fq = self.R_FQ(a_p, vp, vpp, outs, fine)  # [t1, tau]
            Z = np.where(fine[:, None] >= outs[None, :], qf, -np.conj(fq.T))
            if np.isnan(Z).any():
                raise NumericalError("stage-1 assembly left gaps", {"key": key})
            self.stage1[key] = Z
        return self.stage1[key]

    def R_FF(self, a, v, a_p, vp, F2_idx):
        """``R_{F_{a v} F_{a' v'}}(t_2, t_1)`` with ``t_1`` on the output mesh
        and ``t_2`` in ``F2_idx`` (NaN where ``t_2 < t_1``)."""
        F2_idx = np.asarray(F2_idx)
        outs = self.out_idx
        bath = self.baths[a]
        dt = self.dt
        s = np.arange(self.m + 1)
        Fbar_p = self.bath_mean(a_p, vp)
        ov = np.zeros((F2_idx.size, outs.size))
        if a == a_p:
            lag = F2_idx[:, None] - outs[None, :]
            ov = ov + self.cm_at(a, v, vp, lag)
        ov = ov.astype(complex)
        vol = np.zeros((F2_idx.size, outs.size), dtype=complex)
        for vpp in range(bath.n_sys):
            eta, mu = bath.eta[vpp], bath.mu[vpp]
            if eta == 0.0 and mu == 0.0:
                continue
            eps = self.eps(a, vpp)
            Z = self.Z_QF(a_p, vpp, vp) if eta != 0.0 else np.zeros((self.n, outs.size), dtype=complex)
            acc = np.zeros((F2_idx.size, outs.size), dtype=complex)
            ph = self.phi(a, v, vpp)
            for j, b in enumerate(outs):
                X = eta * Z[:, j] + 1j * mu * eps * Fbar_p[b]
                if b > 0:
                    k = np.arange(b + 1)
                    w = np.ones(b + 1)
                    w[0] = w[-1] = 0.5
                    Kc = np.conj(self.cm_at(a, v, vpp, F2_idx[:, None] - k[None, :]))
                    acc[:, j] = dt * (Kc @ (w * X[: b + 1]))
                for i, f in enumerate(F2_idx):
                    if f <= b:
                        continue
                    kk = f - np.arange(b, f + 1)
                    seg = X[b: f + 1]
                    vol[i, j] += dt * (ph[kk] @ seg - 0.5 * ph[f - b] * seg[0])
            ov += -2.0 * acc.real
            if eta != 0.0:
                fq_ss = self.stat_fq(a_p, vp, vpp)  # C^c_{F' Q''}(x)
                src = np.conj(fq_ss[outs[None, :] + s[:, None]])
                pre = np.conj(self._pre_matrix(a, v, vpp, F2_idx, np.conj(src)))
                ov += 2.0 * eta * pre.imag
                qss = self.C.steady_means[vpp]
                if qss != 0.0:
                    ov += eta * qss * np.outer(self.phi_inf(a, v, vpp)[F2_idx], Fbar_p[outs])
        out = 1j * ov + vol
        out[F2_idx[:, None] < outs[None, :]] = np.nan
        return out


def _square(lower: np.ndarray, upper_from: np.ndarray) -> np.ndarray:
    """Lower triangle (incl. diagonal) from ``lower``; strict upper from
    ``-conj(upper_from.T)``."""
    n = lower.shape[0]
    mask = np.tril(np.ones((n, n), dtype=bool))
    return np.where(mask, lower, -np.conj(upper_from.T))


def bath_mean(baths: Sequence[BosonBathSpec], drive: DriveProfile, C_sys: SystemCorrelations, grids: DrivenGrids | None = None) -> dict:
    """Bath polarisation ``F_{a v}(t)`` on the driven window for every
    ``(alpha, v)``."""
    if C_sys.means is None or C_sys.window is None:
        raise ValidationError("bath means need Q(t) on a window")
    grids = grids or DrivenGrids(C_sys.window, max(drive.t_on, C_sys.window.t_start))
    eng = _DrivenEngine(baths, drive, C_sys, grids, None) if C_sys.R_QQ is not None else None
    out = {}
    if eng is not None:
        for a, b in enumerate(baths):
            for v in range(b.n_sys):
                out[(a, v)] = ComplexSeries(C_sys.window, eng.bath_mean(a, v))
        return out
    # means-only path (no two-time data needed)
    t = C_sys.window.times
    dt = C_sys.window.dt
    for a, bath in enumerate(baths):
        for v in range(bath.n_sys):
            acc = np.zeros(t.size)
            for vpp in range(bath.n_sys):
                src = bath.eta[vpp] * C_sys.means[vpp] + bath.mu[vpp] * drive.bath_field(a, vpp, t)
                acc += volterra(bath.phi(dt * np.arange(t.size), v, vpp), src, dt)
                if C_sys.steady_means[vpp] != 0.0:
                    acc += bath.eta[vpp] * C_sys.steady_means[vpp] * bath.phi_tail(t - t[0], v, vpp)
            out[(a, v)] = ComplexSeries(C_sys.window, acc)
    return out


def entangled_FQ(baths, alpha: int, v: int, vp: int, drive: DriveProfile, C_sys: SystemCorrelations, grids: DrivenGrids, policy: TailPolicy | None = None, _engine=None) -> TwoTimeField:
    """``R_{F_{alpha v} Q_v'}(t2, t1)`` on the square output mesh.

    ``t2 >= t1`` comes from the system-bath relation for ``FQ``; the rest is
    filled through ``R_AB(t2, t1) = -R_BA(t1, t2)^*`` with the ordered
    ``QF`` relation.
    """
    eng = _engine or _DrivenEngine(baths, drive, C_sys, grids, policy)
    o = eng.out_idx
    lower = eng.R_FQ(alpha, v, vp, o, o)
    upper = eng.R_QF(alpha, vp, v, o, o)
    return TwoTimeField(grids.output, grids.output, _square(np.nan_to_num(lower), np.nan_to_num(upper)))


def entangled_QF(baths, alpha: int, vp: int, v: int, drive: DriveProfile, C_sys: SystemCorrelations, grids: DrivenGrids, policy: TailPolicy | None = None, _engine=None) -> TwoTimeField:
    """``R_{Q_v' F_{alpha v}}(t2, t1)`` on the square output mesh."""
    eng = _engine or _DrivenEngine(baths, drive, C_sys, grids, policy)
    o = eng.out_idx
    lower = eng.R_QF(alpha, vp, v, o, o)
    upper = eng.R_FQ(alpha, v, vp, o, o)
    return TwoTimeField(grids.output, grids.output, _square(np.nan_to_num(lower), np.nan_to_num(upper)))


def entangled_FF(baths, alpha: int, v: int, alpha_p: int, vp: int, drive: DriveProfile, C_sys: SystemCorrelations, grids: DrivenGrids, policy: TailPolicy | None = None, stage1: SbetBosonResult | None = None, _engine=None) -> TwoTimeField:
    """``R_{F_{alpha v} F_{alpha' v'}}(t2, t1)`` on the square output mesh.

    Needs a prior stage-1 result (``run_driven`` produces one, or pass the
    result of an earlier FQ/QF evaluation).
    """
    if stage1 is None or stage1.mode != "driven" or "_engine" not in stage1.diagnostics:
        raise PipelineOrderError("bath-bath correlations need the stage-1 FQ/QF evaluation first")
    eng = stage1.diagnostics["_engine"]
    o = eng.out_idx
    lower = eng.R_FF(alpha, v, alpha_p, vp, o)
    upper = eng.R_FF(alpha_p, vp, alpha, v, o)
    return TwoTimeField(grids.output, grids.output, _square(np.nan_to_num(lower), np.nan_to_num(upper)))


def run_driven(baths: Sequence[BosonBathSpec], drive: DriveProfile, C_sys: SystemCorrelations, grids: DrivenGrids, policy: TailPolicy | None = None, with_FF: bool = True) -> SbetBosonResult:
    """All field-dressed outputs, stage by stage.

    Diagnostics include the mirror residual between the two independently
    computed overline terms on the output mesh.
    """
    eng = _DrivenEngine(baths, drive, C_sys, grids, policy)
    res = SbetBosonResult("driven")
    o = eng.out_idx
    mirror = 0.0
    scale = 0.0
    for a, b in enumerate(baths):
        for v in range(b.n_sys):
            res.means[(a, v)] = ComplexSeries(grids.window, eng.bath_mean(a, v))
            for vp in range(b.n_sys):
                res.FQ[(a, v, vp)] = entangled_FQ(baths, a, v, vp, drive, C_sys, grids, _engine=eng)
                res.QF[(a, vp, v)] = entangled_QF(baths, a, vp, v, drive, C_sys, grids, _engine=eng)
                ov32 = eng.ov_FQ(a, v, vp, o, o)
                ov36 = eng.ov_QF(a, vp, v, o, o).T  # Q at t1, F at t2
                low = np.tril(np.ones_like(ov32, dtype=bool))
                mirror = max(mirror, float(np.abs(ov32 - ov36)[low].max()))
                scale = max(scale, float(np.abs(ov32).max()))
    res.diagnostics = {
        "_engine": eng,
        "t_tail": eng.policy.t_tail,
        "relative_tail": eng.rel_tail,
        "dt": eng.dt,
        "window": [eng.t_s, float(grids.window.t_stop)],
        "t_on": drive.t_on,
        "stride": grids.stride,
        "mirror_residual": mirror,
        "overline_scale": scale,
    }
    if with_FF:
        for a, b in enumerate(baths):
            for ap, bp in enumerate(baths):
                for v in range(b.n_sys):
                    for vp in range(bp.n_sys):
                        res.FF[(a, v, ap, vp)] = entangled_FF(baths, a, v, ap, vp, drive, C_sys, grids, stage1=res)
    return res
