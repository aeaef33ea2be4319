"""Fermionic system-bath entanglement relations.

Given the steady impurity correlations

    C^{SS(-)}_{uv}(t) = <psi_u(t) psi_v^dag(0)>,
    C^{SS(+)}_{uv}(t) = <psi_u^dag(t) psi_v(0)>,

the lead-impurity correlations ``C^{aS(sigma)}`` follow from a Volterra term
driven by the anticommutator kernel ``g`` plus a tail term over ``[0, inf)``.
The same relation holds for negative ``t`` (the Volterra integral then runs
backwards), which yields the mirrored correlation

    C^{Sa(sigma)}_{uv}(t) = [C^{aS(sigma)}_{vu}(-t)]^*

for ``t >= 0``. Both feed the lead-lead relation. Kernels are those of the
bare leads; chemical-potential phases ``exp(-sigma i mu x)`` are applied
explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baths import FermiBathSpec
from .errors import NumericalError, PipelineOrderError, ValidationError
from .grid import ComplexSeries, TailPolicy, TimeGrid, _check_decay, tail_sum, volterra

__all__ = [
    "FermiSystemCorrelations",
    "SbetFermionResult",
    "fermi_tail_policy",
    "volterra_kernel",
    "fermi_system_bath",
    "fermi_system_bath_reversed",
    "fermi_bath_bath",
    "run_fermion",
]

SIGMAS = (-1, +1)


def _sig(sigma) -> int:
    if sigma in ("-", -1):
        return -1
    if sigma in ("+", 1):
        return 1
    raise ValidationError(f"sigma must be '+' or '-', got {sigma!r}")


@dataclass
class FermiSystemCorrelations:
    """``minus[u, v, k]`` and ``plus[u, v, k]`` sampled at lags ``k dt >= 0``.

    With ``canonical`` set, ``C^-_{uv}(0) + C^+_{vu}(0) = delta_uv`` is
    enforced to ``tol``.
    """

    grid: TimeGrid
    minus: np.ndarray
    plus: np.ndarray
    provenance: str = "oracle"
    canonical: bool = True
    tol: float = 1e-6
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(self.grid.t_start) > 1e-12:
            raise ValidationError("impurity correlations must start at lag 0")
        arrs = []
        for name in ("minus", "plus"):
            a = np.asarray(getattr(self, name), dtype=complex)
            if a.ndim == 1:
                a = a[None, None, :]
            if a.ndim != 3 or a.shape[0] != a.shape[1] or a.shape[2] != self.grid.n:
                raise ValidationError(f"{name} has shape {a.shape}, expected (nu, nu, {self.grid.n})")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{name} contains non-finite values")
            arrs.append(a)
        if arrs[0].shape != arrs[1].shape:
            raise ValidationError("minus and plus blocks disagree in orbital count")
        self.minus, self.plus = arrs
        if self.canonical:
            res = self.anticommutator_residual()
            if res > self.tol:
                raise ValidationError(
                    f"C^-(0) + C^+(0)^T deviates from the identity by {res:.2e} (tolerance {self.tol:.1e})"
                )

    @property
    def n_orb(self) -> int:
        return self.minus.shape[0]

    @property
    def dt(self) -> float:
        return self.grid.dt

    def anticommutator_residual(self) -> float:
        m0 = self.minus[:, :, 0]
        p0 = self.plus[:, :, 0]
        return float(np.abs(m0 + p0.T - np.eye(self.n_orb)).max())

    def block(self, sigma) -> np.ndarray:
        return self.minus if _sig(sigma) < 0 else self.plus

    def lagged(self, sigma, u: int, v: int, k) -> np.ndarray:
        """``C^{SS(sigma)}_{uv}(k dt)`` for signed lags, using
        ``C_uv(-t) = C_vu(t)^*``."""
        k = np.asarray(k)
        if np.abs(k).max(initial=0) >= self.grid.n:
            raise ValidationError(f"impurity correlations stop at lag {self.grid.t_stop}")
        b = self.block(sigma)
        return np.where(k >= 0, b[u, v][np.abs(k)], np.conj(b[v, u][np.abs(k)]))

    def series(self, sigma, u: int, v: int) -> ComplexSeries:
        return ComplexSeries(self.grid, self.block(sigma)[u, v])


@dataclass
class SbetFermionResult:
    """Keys: ``AS[(sigma, a, u, v)]``, ``SA[(sigma, a, u, v)]`` and
    ``AA[(sigma, a, a', u, v)]``; every value is a :class:`ComplexSeries`
    on ``[0, t_max]``."""

    AS: dict = field(default_factory=dict)
    SA: dict = field(default_factory=dict)
    AA: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def fermi_tail_policy(C_sys: FermiSystemCorrelations, eps: float = 1e-6, probe: float = 0.1, margin: float = 1.25) -> TailPolicy:
    """Tail truncation from the decay of the impurity correlations (same rule
    as the bosonic case)."""
    c = np.maximum(np.abs(C_sys.minus), np.abs(C_sys.plus)).max(axis=(0, 1))
    peak = c.max()
    if peak == 0.0:
        return TailPolicy(C_sys.dt, eps, probe)
    last = margin * (int(np.nonzero(c >= eps * peak)[0][-1]) + 1)
    m = int(np.ceil(last / (1.0 - probe))) + 1
    if m >= C_sys.grid.n:
        raise NumericalError(
            "impurity correlations never decay below the tail tolerance within their span",
            {"span": C_sys.grid.t_stop, "needed": m * C_sys.dt},
        )
    return TailPolicy(m * C_sys.dt, eps, probe)


def _default_policy(C_sys: FermiSystemCorrelations, baths: Sequence[FermiBathSpec]) -> TailPolicy:
    """Auto policy, or a single step when no lead is coupled (every tail
    term then vanishes identically)."""
    if all(_decoupled(b) for b in baths):
        return TailPolicy(C_sys.dt)
    return fermi_tail_policy(C_sys)


def _decoupled(bath: FermiBathSpec) -> bool:
    if bath.is_discrete:
        return not np.any(bath.spectral.amplitudes)
    return not np.any(bath.spectral.gamma)


def volterra_kernel(sigma, bath: FermiBathSpec, u: int, up: int, t) -> np.ndarray:
    """``g^{(sigma)}_{u u'}(t) exp(-sigma i mu t)`` with ``g^{(-)} = g`` and
    ``g^{(+)} = g^*``. Independent of the lead temperature."""
    s = _sig(sigma)
    t = np.asarray(t, dtype=float)
    g = bath.g(t, u, up)
    if s > 0:
        g = np.conj(g)
    return g * np.exp(-s * 1j * bath.chemical_potential * t)


def _tail_kernels(s: int, bath: FermiBathSpec, u: int, up: int, t: np.ndarray):
    ph = np.exp(-s * 1j * bath.chemical_potential * t)
    k1 = ph * bath.c_sigma(s, t, u, up)
    k2 = ph * np.conj(bath.c_sigma(-s, t, u, up))
    return k1, k2


def _grid_lags(grid: TimeGrid, dt: float) -> tuple[int, int]:
    if abs(grid.dt - dt) > 1e-9 * dt:
        raise ValidationError("output grid step must equal the correlation step")
    k0 = grid.t_start / dt
    if abs(k0 - round(k0)) > 1e-6:
        raise ValidationError("output grid is not aligned with the correlation grid")
    k0 = int(round(k0))
    return k0, k0 + grid.n - 1


def _check_orb(C_sys, bath, *idx):
    if bath.n_orb != C_sys.n_orb:
        raise ValidationError("lead amplitudes and impurity correlations disagree on the orbital count")
    for i in idx:
        if not 0 <= i < C_sys.n_orb:
            raise ValidationError(f"orbital index {i} out of range [0, {C_sys.n_orb})")


def _volterra_signed(G_pos, G_neg, S_pos, S_neg, ks, dt):
    """Signed ``int_0^t G(t - tau) S(tau) dtau`` at integer lags ``ks``."""
    out = np.zeros(ks.size, dtype=complex)
    if ks.max() >= 0:
        pos = volterra(G_pos, S_pos, dt)
        sel = ks >= 0
        out[sel] = pos[ks[sel]]
    if ks.min() < 0:
        neg = volterra(G_neg, S_neg, dt)
        sel = ks < 0
        out[sel] = -neg[-ks[sel]]
    return out


def _eq_as(s: int, bath: FermiBathSpec, u: int, v: int, C_sys: FermiSystemCorrelations, k_lo: int, k_hi: int, policy: TailPolicy, check: bool = True) -> tuple[np.ndarray, float]:
    """``C^{aS(s)}_{uv}(k dt)`` for signed ``k`` in ``[k_lo, k_hi]``."""
    dt = C_sys.dt
    m = policy.steps(dt)
    if m + 1 > C_sys.grid.n:
        raise ValidationError(f"impurity correlations stop at {C_sys.grid.t_stop}, T_tail={policy.t_tail}")
    ks = np.arange(k_lo, k_hi + 1)
    npos = max(k_hi, 0) + 1
    nneg = max(-k_lo, 0) + 1
    out = np.zeros(ks.size, dtype=complex)
    rel = 0.0
    kern_t = dt * np.arange(k_lo, k_hi + m + 1)
    for up in range(C_sys.n_orb):
        G_pos = volterra_kernel(s, bath, u, up, dt * np.arange(npos))
        G_neg = volterra_kernel(s, bath, u, up, -dt * np.arange(nneg))
        S_pos = C_sys.lagged(s, up, v, np.arange(npos))
        S_neg = C_sys.lagged(s, up, v, -np.arange(nneg))
        vol = _volterra_signed(G_pos, G_neg, S_pos, S_neg, ks, dt)
        src1 = C_sys.block(-s)[v, up, : m + 1]
        src2 = np.conj(C_sys.block(s)[v, up, : m + 1])
        k1, k2 = _tail_kernels(s, bath, u, up, kern_t)
        # a vanishing kernel makes the tail exactly zero whatever the source does
        if check and (k1.any() or k2.any()):
            rel = max(rel, _check_decay(src1, policy), _check_decay(src2, policy))
        tail = tail_sum(k1, src1, dt, ks.size) - tail_sum(k2, src2, dt, ks.size)
        out += s * 1j * vol - s * 1j * tail
    return out, rel


def fermi_system_bath(sigma, alpha: int, u: int, v: int, baths: Sequence[FermiBathSpec], C_sys: FermiSystemCorrelations, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """``C^{alpha S(sigma)}_{uv}(t)`` on ``grid`` (negative times allowed)."""
    s = _sig(sigma)
    bath = baths[alpha]
    _check_orb(C_sys, bath, u, v)
    policy = policy or _default_policy(C_sys, baths)
    k_lo, k_hi = _grid_lags(grid, C_sys.dt)
    vals, _ = _eq_as(s, bath, u, v, C_sys, k_lo, k_hi, policy)
    return ComplexSeries(grid, vals)


def fermi_system_bath_reversed(sigma, alpha: int, u: int, v: int, baths: Sequence[FermiBathSpec], C_sys: FermiSystemCorrelations, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """``C^{S alpha(sigma)}_{uv}(t) = [C^{alpha S(sigma)}_{vu}(-t)]^*``."""
    s = _sig(sigma)
    bath = baths[alpha]
    _check_orb(C_sys, bath, u, v)
    policy = policy or _default_policy(C_sys, baths)
    k_lo, k_hi = _grid_lags(grid, C_sys.dt)
    vals, _ = _eq_as(s, bath, v, u, C_sys, -k_hi, -k_lo, policy)
    return ComplexSeries(grid, np.conj(vals[::-1]))


def _stage(stage1: Mapping, key) -> ComplexSeries:
    if key not in stage1:
        raise PipelineOrderError(f"stage-1 series {key} missing; run the lead-impurity stage first")
    return stage1[key]


def fermi_bath_bath(sigma, alpha: int, alpha_p: int, u: int, v: int, baths: Sequence[FermiBathSpec], C_sys: FermiSystemCorrelations, stage1: Mapping | None, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """``C^{alpha alpha'(sigma)}_{uv}(t)`` for ``t >= 0``.

    ``stage1`` maps ``("SA", s, alpha', u', v)`` to ``C^{S alpha'(s)}_{u'v}``
    on ``[0, t_max]`` and ``("AS", s, alpha', v, u')`` to
    ``C^{alpha' S(s)}_{v u'}`` on ``[0, T_tail]``, for both signs ``s``.
    """
    if stage1 is None:
        raise PipelineOrderError("lead-lead correlations need the stage-1 lead-impurity results")
    s = _sig(sigma)
    bath = baths[alpha]
    _check_orb(C_sys, bath, u, v)
    _check_orb(C_sys, baths[alpha_p], u, v)
    policy = policy or _default_policy(C_sys, baths)
    dt = C_sys.dt
    m = policy.steps(dt)
    k_lo, k_hi = _grid_lags(grid, dt)
    if k_lo < 0:
        raise ValidationError("lead-lead correlations are evaluated for t >= 0")
    ks = np.arange(k_lo, k_hi + 1)
    t = dt * ks
    out = np.zeros(ks.size, dtype=complex)
    if alpha == alpha_p:
        out += np.exp(-s * 1j * bath.chemical_potential * t) * bath.c_sigma(s, t, u, v)
    kern_t = dt * np.arange(k_lo, k_hi + m + 1)
    for up in range(C_sys.n_orb):
        sa = _stage(stage1, ("SA", s, alpha_p, up, v))
        if sa.grid.n < k_hi + 1 or abs(sa.grid.t_start) > 1e-12:
            raise ValidationError("stage-1 C^{S alpha'} does not cover [0, t_max]")
        G = volterra_kernel(s, bath, u, up, dt * np.arange(k_hi + 1))
        vol = volterra(G, sa.values[: k_hi + 1], dt)[ks]
        as_bar = _stage(stage1, ("AS", -s, alpha_p, v, up))
        as_same = _stage(stage1, ("AS", s, alpha_p, v, up))
        if as_bar.grid.n < m + 1 or as_same.grid.n < m + 1:
            raise ValidationError("stage-1 C^{alpha' S} does not cover [0, T_tail]")
        src1 = as_bar.values[: m + 1]
        src2 = np.conj(as_same.values[: m + 1])
        k1, k2 = _tail_kernels(s, bath, u, up, kern_t)
        if k1.any() or k2.any():
            _check_decay(src1, policy)
            _check_decay(src2, policy)
        tail = tail_sum(k1, src1, dt, ks.size) - tail_sum(k2, src2, dt, ks.size)
        out += s * 1j * vol - s * 1j * tail
    return ComplexSeries(grid, out)


def run_fermion(baths: Sequence[FermiBathSpec], C_sys: FermiSystemCorrelations, t_max: float, policy: TailPolicy | None = None) -> SbetFermionResult:
    """Both stages for every sign, lead pair and orbital pair."""
    if not baths:
        raise ValidationError("at least one lead is required")
    policy = policy or _default_policy(C_sys, baths)
    dt = C_sys.dt
    out_grid = TimeGrid.span(0.0, t_max, dt)
    K = out_grid.n - 1
    m = policy.steps(dt)
    long_grid = TimeGrid(0.0, dt, max(K, m) + 1)
    nu = C_sys.n_orb
    res = SbetFermionResult()
    stage1 = {}
    rel = 0.0
    conj_res = 0.0
    for a, bath in enumerate(baths):
        _check_orb(C_sys, bath)
        for s in SIGMAS:
            for u in range(nu):
                for v in range(nu):
                    # one signed evaluation covers both orderings
                    vals, r = _eq_as(s, bath, u, v, C_sys, -K, max(K, m), policy)
                    rel = max(rel, r)
                    fwd = vals[K:]
                    stage1[("AS", s, a, u, v)] = ComplexSeries(long_grid, fwd)
                    res.AS[(s, a, u, v)] = ComplexSeries(out_grid, fwd[: K + 1])
                    # C^{Sa}_{vu}(t) = C^{aS}_{uv}(-t)^*
                    sa = np.conj(vals[K::-1])
                    stage1[("SA", s, a, v, u)] = ComplexSeries(out_grid, sa)
                    res.SA[(s, a, v, u)] = ComplexSeries(out_grid, sa)
    for key, ser in res.AS.items():
        s, a, u, v = key
        conj_res = max(conj_res, abs(ser.values[0] - np.conj(res.SA[(s, a, v, u)].values[0])))
    for s in SIGMAS:
        for a in range(len(baths)):
            for ap in range(len(baths)):
                for u in range(nu):
                    for v in range(nu):
                        res.AA[(s, a, ap, u, v)] = fermi_bath_bath(s, a, ap, u, v, baths, C_sys, stage1, out_grid, policy)
    res.diagnostics = {
        "t_tail": policy.t_tail,
        "tail_eps": policy.eps,
        "relative_tail": rel,
        "dt": dt,
        "conjugation_residual": conj_res,
        "stage1": stage1,
    }
    return res
