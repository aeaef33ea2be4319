"""Linear-response utilities with explicit hbar, the classical-limit
entanglement relations, and a molecular-dynamics ensemble oracle.

Classical kernels of a harmonic bath are

    c^cl(t) = sum_j c_j^2 cos(w_j t) / (beta w_j),   phi^cl(t) = phi(t),

so that ``c(t) = c^cl(t) - (i hbar / 2) phi(t) + O(hbar^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baths import BosonBathSpec, Drude, discretize_spectral_density
from .errors import NumericalError, PipelineOrderError, ValidationError
from .grid import ComplexSeries, Spectrum, TailPolicy, TimeGrid, _check_decay, tail_sum, volterra

__all__ = [
    "ClassicalBathKernels",
    "classical_kernels",
    "response_from_correlation",
    "correlation_spectrum_plus",
    "response_spectrum_minus",
    "quantum_fdt_check",
    "classical_tail_policy",
    "classical_sbet_FQ",
    "classical_sbet_QF",
    "classical_sbet_FF",
    "run_classical",
    "classical_response_check",
    "LangevinEnsembleSpec",
    "LangevinEstimate",
    "langevin_model",
    "langevin_oracle",
    "hbar_convergence",
]


# ------------------------------------------------------------------ kernels


@dataclass
class ClassicalBathKernels:
    """Real classical kernels of one bath element on ``grid``."""

    grid: TimeGrid
    c_cl: np.ndarray
    phi_cl: np.ndarray
    beta: float
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("c_cl", "phi_cl"):
            a = np.asarray(getattr(self, name))
            if np.iscomplexobj(a):
                if np.abs(a.imag).max(initial=0.0) > 1e-12 * max(1.0, np.abs(a).max(initial=0.0)):
                    raise ValidationError(f"{name} must be real")
                a = a.real
            setattr(self, name, np.asarray(a, dtype=float))
        i0 = np.nonzero(np.isclose(self.grid.times, 0.0, atol=1e-12))[0]
        if i0.size and abs(self.phi_cl[i0[0]]) > 1e-12:
            raise ValidationError("phi^cl(0) must vanish")


def classical_kernels(bath: BosonBathSpec, v: int, vp: int, grid: TimeGrid, hbar: float = 1.0) -> ClassicalBathKernels:
    t = grid.times
    return ClassicalBathKernels(grid, bath.c_classical(t, v, vp), np.real(bath.phi(t, v, vp)), bath.beta, hbar)


# ------------------------------------------------------------------ response and FDT


def response_from_correlation(C_AB: ComplexSeries, hbar: float = 1.0) -> ComplexSeries:
    """``chi_AB(t) = -(2/hbar) Im C_AB(t)`` for ``t >= 0``."""
    if not hbar > 0:
        raise ValidationError("hbar must be positive")
    if C_AB.grid.t_start < -1e-12:
        raise ValidationError("response functions are defined for t >= 0")
    return ComplexSeries(C_AB.grid, (-2.0 / hbar) * np.imag(C_AB.values) + 0.0j)


def _half_ft(series: ComplexSeries, omega: np.ndarray, sign: float) -> np.ndarray:
    if abs(series.grid.t_start) > 1e-12:
        raise ValidationError("spectra need series starting at t=0")
    t = series.times
    w = np.full(t.size, series.grid.dt)
    w[0] = w[-1] = 0.5 * series.grid.dt
    return np.exp(sign * 1j * np.outer(omega, t)) @ (w * series.values)


def correlation_spectrum_plus(C_AB: ComplexSeries, C_BA: ComplexSeries, omega) -> Spectrum:
    """``(1/2) int_R e^{i w t} C_AB(t) dt`` using ``C_AB(-t) = C_BA(t)^*``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not C_AB.grid.compatible(C_BA.grid) or C_AB.grid.n != C_BA.grid.n:
        raise ValidationError("C_AB and C_BA must share a grid")
    vals = 0.5 * (_half_ft(C_AB, omega, +1) + np.conj(_half_ft(C_BA, omega, +1)))
    return Spectrum(omega, vals, {"kind": "C+"})


def response_spectrum_minus(chi_AB: ComplexSeries, chi_BA: ComplexSeries, omega) -> Spectrum:
    """``(1/2i) int_R e^{i w t} chi_AB(t) dt`` using ``chi_AB(-t) = -chi_BA(t)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not chi_AB.grid.compatible(chi_BA.grid) or chi_AB.grid.n != chi_BA.grid.n:
        raise ValidationError("chi_AB and chi_BA must share a grid")
    vals = (_half_ft(chi_AB, omega, +1) - _half_ft(chi_BA, omega, -1)) / 2j
    return Spectrum(omega, vals, {"kind": "chi-"})


def quantum_fdt_check(C_plus, chi_minus, beta: float, hbar: float = 1.0, omega=None) -> dict:
    """Residual of ``C+(w) = hbar chi-(w) / (1 - exp(-beta hbar w))``.

    Accepts :class:`Spectrum` objects or arrays (then ``omega`` is required).
    ``w = 0`` is not allowed.
    """
    if isinstance(C_plus, Spectrum) and isinstance(chi_minus, Spectrum):
        if C_plus.omega.shape != chi_minus.omega.shape or not np.allclose(C_plus.omega, chi_minus.omega):
            raise ValidationError("spectra live on different frequency grids")
        omega = C_plus.omega
    elif omega is None:
        raise ValidationError("omega is required for raw arrays")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    cp = np.asarray(getattr(C_plus, "values", C_plus), dtype=complex)
    xm = np.asarray(getattr(chi_minus, "values", chi_minus), dtype=complex)
    if cp.shape != omega.shape or xm.shape != omega.shape:
        raise ValidationError("spectra and omega grid have different lengths")
    if np.any(omega == 0.0):
        raise ValidationError("the FDT check excludes w = 0")
    if not (beta > 0 and hbar > 0):
        raise ValidationError("beta and hbar must be positive")
    rhs = hbar * xm / (-np.expm1(-beta * hbar * omega))
    res = cp - rhs
    scale = max(float(np.abs(cp).max(initial=0.0)), float(np.abs(rhs).max(initial=0.0)))
    return {
        "omega": omega,
        "residual": res,
        "max_abs": float(np.abs(res).max(initial=0.0)),
        "l2": float(np.linalg.norm(res)),
        "max_rel": float(np.abs(res).max(initial=0.0) / scale) if scale > 0 else 0.0,
    }


# ------------------------------------------------------------------ classical SBET


def _default_policy(Css: np.ndarray, dt: float, baths) -> TailPolicy:
    if all(not np.any(b.eta) for b in baths):
        return TailPolicy(dt)
    return classical_tail_policy(Css, dt)


def classical_tail_policy(C_ss: np.ndarray, dt: float, eps: float = 1e-6, probe: float = 0.1, margin: float = 1.25) -> TailPolicy:
    c = np.abs(np.asarray(C_ss)).reshape(-1, np.shape(C_ss)[-1]).max(axis=0)
    peak = c.max()
    if peak == 0.0:
        return TailPolicy(dt, eps, probe)
    last = margin * (int(np.nonzero(c >= eps * peak)[0][-1]) + 1)
    m = int(np.ceil(last / (1.0 - probe))) + 1
    if m >= c.size:
        raise NumericalError("classical system correlations never decay below the tail tolerance", {"span": c.size * dt})
    return TailPolicy(m * dt, eps, probe)


def _as_block(x, grid_n):
    a = np.asarray(getattr(x, "values", x))
    if np.iscomplexobj(a):
        if np.abs(a.imag).max(initial=0.0) > 1e-12 * max(1.0, np.abs(a).max(initial=0.0)):
            raise ValidationError("classical inputs must be real")
        a = a.real
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, None, :]
    if a.shape[-1] != grid_n or a.shape[0] != a.shape[1]:
        raise ValidationError(f"classical block has shape {a.shape}")
    return a


def _lags(grid: TimeGrid, dt: float):
    if abs(grid.dt - dt) > 1e-9 * dt:
        raise ValidationError("output grid step must equal the input step")
    k0 = grid.t_start / dt
    if abs(k0 - round(k0)) > 1e-6:
        raise ValidationError("output grid is not aligned with the input grid")
    k0 = int(round(k0))
    return k0, k0 + grid.n - 1


def _fq_signed(bath: BosonBathSpec, v: int, vp: int, Css: np.ndarray, Xss: np.ndarray, dt: float, k_lo: int, k_hi: int, policy: TailPolicy) -> np.ndarray:
    """Classical ``C^{aS;cl}_{v v'}(k dt)`` for signed lags."""
    m = policy.steps(dt)
    if Css.shape[2] < max(m + 1, k_hi + 1, -k_lo + 1):
        raise ValidationError("classical system inputs do not cover the required lags")
    ks = np.arange(k_lo, k_hi + 1)
    npos = max(k_hi, 0) + 1
    nneg = max(-k_lo, 0) + 1
    need = max(npos, nneg)
    tk = dt * np.arange(k_lo, k_hi + m + 1)
    out = np.zeros(ks.size)
    for vpp in range(bath.n_sys):
        eta = bath.eta[vpp]
        if eta == 0.0:
            continue
        phi = np.real(bath.phi(dt * np.arange(need), v, vpp))
        vals = np.zeros(ks.size)
        if k_hi >= 0:
            pos = volterra(phi[:npos], Css[vpp, vp, :npos], dt)
            sel = ks >= 0
            vals[sel] += pos[ks[sel]]
        if k_lo < 0:
            # int_0^{-x} phi(-x - tau) C_{v''v'}(tau) dtau = int_0^x phi(x - u) C_{v'v''}(u) du
            neg = volterra(phi[:nneg], Css[vp, vpp, :nneg], dt)
            sel = ks < 0
            vals[sel] += neg[-ks[sel]]
        src_c = Css[vp, vpp, : m + 1]
        src_x = Xss[vp, vpp, : m + 1]
        _check_decay(src_c, policy)
        c_ext = bath.c_classical(tk, v, vpp)
        p_ext = np.real(bath.phi(tk, v, vpp))
        vals += tail_sum(c_ext, src_x, dt, ks.size) + tail_sum(p_ext, src_c, dt, ks.size)
        out += eta * vals
    return out


def classical_sbet_FQ(bath: BosonBathSpec, v: int, vp: int, C_ss, chi_ss, grid: TimeGrid, input_grid: TimeGrid | None = None, policy: TailPolicy | None = None) -> ComplexSeries:
    """Classical ``C^{aS;cl}_{v v'}(t)`` from ``C^{SS;cl}`` and
    ``chi^{SS;cl}`` (blocks ``[v, v', k]`` on lags ``k dt >= 0``). Negative
    output times are allowed."""
    g_in = input_grid or getattr(C_ss, "grid", None)
    if g_in is None:
        raise ValidationError("input grid required for raw arrays")
    Css = _as_block(C_ss, g_in.n)
    Xss = _as_block(chi_ss, g_in.n)
    if Css.shape[0] != bath.n_sys:
        raise ValidationError("bath and system inputs disagree on the number of system modes")
    policy = policy or _default_policy(Css, g_in.dt, [bath])
    k_lo, k_hi = _lags(grid, g_in.dt)
    return ComplexSeries(grid, _fq_signed(bath, v, vp, Css, Xss, g_in.dt, k_lo, k_hi, policy) + 0.0j)


def classical_sbet_QF(bath: BosonBathSpec, vp: int, v: int, C_ss, chi_ss, grid: TimeGrid, input_grid: TimeGrid | None = None, policy: TailPolicy | None = None) -> ComplexSeries:
    """``C^{Sa;cl}_{v' v}(t) = C^{aS;cl}_{v v'}(-t)``."""
    g_in = input_grid or getattr(C_ss, "grid", None)
    if g_in is None:
        raise ValidationError("input grid required for raw arrays")
    Css = _as_block(C_ss, g_in.n)
    Xss = _as_block(chi_ss, g_in.n)
    policy = policy or _default_policy(Css, g_in.dt, [bath])
    k_lo, k_hi = _lags(grid, g_in.dt)
    vals = _fq_signed(bath, v, vp, Css, Xss, g_in.dt, -k_hi, -k_lo, policy)
    return ComplexSeries(grid, vals[::-1] + 0.0j)


def _chi_fq(bath: BosonBathSpec, v: int, vp: int, Xss: np.ndarray, dt: float, n: int) -> np.ndarray:
    """Response relation ``chi^{aS}_{v v'}(t) = sum_v'' eta int_0^t phi chi^{SS}_{v'' v'}``."""
    out = np.zeros(n)
    for vpp in range(bath.n_sys):
        eta = bath.eta[vpp]
        if eta == 0.0:
            continue
        phi = np.real(bath.phi(dt * np.arange(n), v, vpp))
        out += eta * volterra(phi, Xss[vpp, vp, :n], dt)
    return out


def classical_sbet_FF(baths: Sequence[BosonBathSpec], alpha: int, v: int, alpha_p: int, vp: int, stage1: Mapping | None, grid: TimeGrid, policy: TailPolicy | None = None) -> ComplexSeries:
    """Classical ``C^{a a';cl}_{v v'}(t)`` for ``t >= 0``.

    ``stage1`` maps ``("SA", a', v'', v')`` to ``C^{Sa';cl}_{v'' v'}`` on
    ``[0, t_max]``, and ``("AS", a', v', v'')`` / ``("chiAS", a', v', v'')``
    to ``C^{a'S;cl}_{v' v''}`` / ``chi^{a'S;cl}_{v' v''}`` on ``[0, T_tail]``.
    """
    if stage1 is None:
        raise PipelineOrderError("classical bath-bath correlations need the stage-1 results")
    bath = baths[alpha]
    dt = grid.dt
    k_lo, k_hi = _lags(grid, dt)
    if k_lo < 0:
        raise ValidationError("bath-bath correlations are evaluated for t >= 0")
    ks = np.arange(k_lo, k_hi + 1)
    out = np.zeros(ks.size)
    if alpha == alpha_p:
        out += bath.c_classical(dt * ks, v, vp)
    for vpp in range(bath.n_sys):
        eta = bath.eta[vpp]
        if eta == 0.0:
            continue
        try:
            sa = stage1[("SA", alpha_p, vpp, vp)]
            as_ = stage1[("AS", alpha_p, vp, vpp)]
            xas = stage1[("chiAS", alpha_p, vp, vpp)]
        except KeyError as exc:
            raise PipelineOrderError(f"stage-1 classical series {exc.args[0]} missing") from None
        pol = policy or classical_tail_policy(np.real(as_.values), dt)
        m = pol.steps(dt)
        if as_.grid.n < m + 1 or xas.grid.n < m + 1 or sa.grid.n < k_hi + 1:
            raise ValidationError("stage-1 classical series do not cover the required windows")
        phi = np.real(bath.phi(dt * np.arange(k_hi + 1), v, vpp))
        vol = volterra(phi, np.real(sa.values[: k_hi + 1]), dt)[ks]
        src_c = np.real(as_.values[: m + 1])
        src_x = np.real(xas.values[: m + 1])
        _check_decay(src_c, pol)
        tk = dt * np.arange(k_lo, k_hi + m + 1)
        tail = tail_sum(np.real(bath.phi(tk, v, vpp)), src_c, dt, ks.size) + tail_sum(bath.c_classical(tk, v, vpp), src_x, dt, ks.size)
        out += eta * (vol + tail)
    return ComplexSeries(grid, out + 0.0j)


def run_classical(baths: Sequence[BosonBathSpec], C_ss: ComplexSeries | np.ndarray, chi_ss, input_grid: TimeGrid, t_max: float, policy: TailPolicy | None = None) -> dict:
    """Both classical stages for every bath and mode pair.

    Returns ``{"FQ": {(a, v, v'): series}, "QF": {(a, v', v): series},
    "chiFQ": {...}, "FF": {(a, v, a', v'): series}, "diagnostics": {...}}``
    with all series on ``[0, t_max]``.
    """
    dt = input_grid.dt
    Css = _as_block(C_ss, input_grid.n)
    Xss = _as_block(chi_ss, input_grid.n)
    policy = policy or _default_policy(Css, dt, baths)
    m = policy.steps(dt)
    out_grid = TimeGrid.span(0.0, t_max, dt)
    K = out_grid.n - 1
    long_grid = TimeGrid(0.0, dt, max(K, m) + 1)
    if Css.shape[2] < max(K, m) + 1:
        raise ValidationError("classical inputs must cover max(t_max, T_tail)")
    res = {"FQ": {}, "QF": {}, "chiFQ": {}, "FF": {}}
    stage1 = {}
    for a, bath in enumerate(baths):
        for v in range(bath.n_sys):
            for vp in range(bath.n_sys):
                vals = _fq_signed(bath, v, vp, Css, Xss, dt, -K, max(K, m), policy)
                fwd = vals[K:]
                chi = _chi_fq(bath, v, vp, Xss, dt, fwd.size)
                stage1[("AS", a, v, vp)] = ComplexSeries(long_grid, fwd + 0.0j)
                stage1[("chiAS", a, v, vp)] = ComplexSeries(long_grid, chi + 0.0j)
                stage1[("SA", a, vp, v)] = ComplexSeries(out_grid, vals[K::-1] + 0.0j)
                res["FQ"][(a, v, vp)] = ComplexSeries(out_grid, fwd[: K + 1] + 0.0j)
                res["chiFQ"][(a, v, vp)] = ComplexSeries(out_grid, chi[: K + 1] + 0.0j)
                res["QF"][(a, vp, v)] = stage1[("SA", a, vp, v)]
    for a, b in enumerate(baths):
        for ap, bp in enumerate(baths):
            for v in range(b.n_sys):
                for vp in range(bp.n_sys):
                    res["FF"][(a, v, ap, vp)] = classical_sbet_FF(baths, a, v, ap, vp, stage1, out_grid, policy)
    res["diagnostics"] = {"t_tail": policy.t_tail, "dt": dt, "stage1": stage1}
    return res


def classical_response_check(C_cl: ComplexSeries, beta: float, chi_cl: ComplexSeries | None = None, dCdt: ComplexSeries | None = None) -> dict:
    """Compare ``chi^cl`` with ``-beta dC^cl/dt``.

    The derivative is taken by central differences unless an independent
    estimate ``dCdt`` (e.g. ``<A'(t) B>``) is supplied. Without ``chi_cl``
    only the derived response is returned.
    """
    if not beta > 0:
        raise ValidationError("beta must be positive")
    c = np.real(C_cl.values)
    if dCdt is None:
        d = np.gradient(c, C_cl.grid.dt, edge_order=2)
    else:
        d = np.real(dCdt.values)
    derived = -beta * d
    out = {"times": C_cl.times, "derived_chi": derived}
    if chi_cl is not None:
        r = np.real(chi_cl.values) - derived
        out["residual"] = r
        out["max_abs"] = float(np.abs(r).max(initial=0.0))
    return out


# ------------------------------------------------------------------ ensemble oracle


@dataclass(frozen=True)
class LangevinEnsembleSpec:
    """Classical Brownian oscillator with an explicit discretised Drude bath.

    The system ``Omega (P^2 + Q^2)/2`` couples through ``-eta Q F`` to
    ``n_modes`` bath oscillators on ``[0, freq_max]`` (optionally tapered).
    Initial conditions are drawn from the coupled Gibbs distribution and
    propagated by velocity Verlet with step ``h``.
    """

    system_frequency: float = 1.0
    eta: float = 1.0
    reorganization: float = 0.2
    cutoff: float = 1.0
    beta: float = 1.0
    n_traj: int = 10_000
    h: float = 0.01
    seed: int = 1234
    burn_in: float = 0.0
    n_modes: int = 400
    freq_max: float = 10.0
    taper: float | None = 4.0
    t_max: float = 10.0
    sample_every: int = 2

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValidationError("n_traj must be >= 1")
        if not self.h > 0:
            raise ValidationError("step h must be positive")
        if not (self.beta > 0 and self.system_frequency > 0):
            raise ValidationError("beta and system frequency must be positive")
        if self.sample_every < 1:
            raise ValidationError("sample_every must be >= 1")

    def bath(self) -> BosonBathSpec:
        modes = discretize_spectral_density(Drude(self.reorganization, self.cutoff), self.n_modes, cutoff=self.freq_max, taper=self.taper)
        return BosonBathSpec(beta=self.beta, spectral=modes, eta=np.array([self.eta]), name="cl")


@dataclass
class LangevinEstimate:
    """Ensemble means with standard errors on a symmetric lag grid.

    ``corr[(A, B)]`` and ``stderr[(A, B)]`` estimate ``<A(t) B(0)>``;
    ``dcorr`` holds ``<A'(t) B(0)>``; ``chi`` the (deterministic) response
    from a tangent trajectory. Labels are ``"Q"`` and ``"F"``.
    """

    grid: TimeGrid
    corr: dict
    stderr: dict
    dcorr: dict
    dstderr: dict
    chi: dict
    second_moment_Q: tuple
    exact_second_moment_Q: float
    spec: LangevinEnsembleSpec
    diagnostics: dict = field(default_factory=dict)


def langevin_model(spec: LangevinEnsembleSpec):
    from .oracles import QuadraticBosonModel

    return QuadraticBosonModel([spec.system_frequency], [spec.bath()])


def _verlet_transfer(w2: np.ndarray, h: float, nsteps: int, sample_every: int):
    """Velocity-Verlet transfer coefficients for independent oscillators
    ``u'' = -w2 u``.

    Verlet is linear, so after ``s`` steps ``u = A u0 + B pi0`` and
    ``pi = C u0 + D pi0``. Returns the four coefficient arrays sampled every
    ``sample_every`` steps (first row: ``s = 0``), shape ``(n_samples, n)``.
    """
    A = np.ones_like(w2)
    B = np.zeros_like(w2)
    C = np.zeros_like(w2)
    D = np.ones_like(w2)
    rows = [(A, B, C, D)]
    for s in range(1, nsteps + 1):
        # one step applied to both columns of the 2x2 map
        C = C - 0.5 * h * w2 * A
        D = D - 0.5 * h * w2 * B
        A = A + h * C
        B = B + h * D
        C = C - 0.5 * h * w2 * A
        D = D - 0.5 * h * w2 * B
        if s % sample_every == 0:
            rows.append((A, B, C, D))
    return tuple(np.array([r[i] for r in rows]) for i in range(4))


def _apply(u0, p0, coef, steps):
    A, B, C, D = (c[-1] for c in coef) if steps else (1.0, 0.0, 0.0, 1.0)
    return A * u0 + B * p0, C * u0 + D * p0


def langevin_oracle(spec: LangevinEnsembleSpec) -> LangevinEstimate:
    """Ensemble estimates of ``C_QQ``, ``C_FQ``, ``C_QF`` and ``C_FF`` on
    ``[-t_max, t_max]`` from Gibbs-sampled Hamiltonian trajectories.

    Every trajectory is integrated with velocity Verlet in the normal-mode
    basis of the coupled quadratic Hamiltonian. Because the integrator is
    linear, the per-mode step maps are propagated once and applied to all
    sampled initial conditions; the result is identical to stepping each
    trajectory separately.
    """
    model = langevin_model(spec)
    W = model.W
    wmax = float(W.max())
    if spec.h * wmax >= 1.0:
        raise ValidationError(
            f"step h={spec.h} too large for the fastest normal mode (h*w_max={spec.h * wmax:.2f}; need < 1)"
        )
    n = model.n
    beta = spec.beta
    M = spec.n_traj
    # Gibbs sampling in normal modes: u_k ~ N(0, 1/(beta W_k^2)), pi_k ~ N(0, 1/beta)
    z = np.empty((M, 2 * n))
    for i in range(M):
        z[i] = np.random.default_rng(np.random.SeedSequence([spec.seed, i])).standard_normal(2 * n)
    u0 = z[:, :n] / (W * np.sqrt(beta))
    p0 = z[:, n:] / np.sqrt(beta)
    h = spec.h
    w2 = W ** 2
    if spec.burn_in > 0:
        nb = int(round(spec.burn_in / h))
        u0, p0 = _apply(u0, p0, _verlet_transfer(w2, h, nb, max(nb, 1)), nb)
    nsteps = int(round(spec.t_max / h))
    nsteps -= nsteps % spec.sample_every
    fwd = _verlet_transfer(w2, h, nsteps, spec.sample_every)
    bwd = _verlet_transfer(w2, -h, nsteps, spec.sample_every)
    # rows ordered t = -T .. T
    coef = [np.concatenate([b[:0:-1], f]) for f, b in zip(fwd, bwd)]
    nt = coef[0].shape[0]
    dt_s = h * spec.sample_every
    grid = TimeGrid(-(nt // 2) * dt_s, dt_s, nt)
    vec = {"Q": model.U.T @ model.vec_Q(0), "F": model.U.T @ model.vec_F(0, 0)}
    A, B, C, D = coef
    hist, dhist, obs0 = {}, {}, {}
    for lab, a in vec.items():
        hist[lab] = (u0 * a) @ A.T + (p0 * a) @ B.T
        dhist[lab] = (u0 * a) @ C.T + (p0 * a) @ D.T
        obs0[lab] = u0 @ a
    corr, err, dcorr, derr, chi = {}, {}, {}, {}, {}
    root = np.sqrt(M)
    for X in ("Q", "F"):
        for Y in ("Q", "F"):
            prod = hist[X] * obs0[Y][:, None]
            dprod = dhist[X] * obs0[Y][:, None]
            corr[(X, Y)] = prod.mean(axis=0)
            dcorr[(X, Y)] = dprod.mean(axis=0)
            err[(X, Y)] = prod.std(axis=0, ddof=1) / root if M > 1 else np.full(nt, np.inf)
            derr[(X, Y)] = dprod.std(axis=0, ddof=1) / root if M > 1 else np.full(nt, np.inf)
            # tangent trajectory: kick pi by the gradient of Y, read X
            chi[(X, Y)] = (B[nt // 2:] @ (vec[X] * vec[Y]))
    q2 = obs0["Q"] ** 2
    exact_q2 = float(np.sum(vec["Q"] ** 2 / w2)) / beta
    return LangevinEstimate(
        grid=grid,
        corr=corr,
        stderr=err,
        dcorr=dcorr,
        dstderr=derr,
        chi=chi,
        second_moment_Q=(float(q2.mean()), float(q2.std(ddof=1) / root) if M > 1 else np.inf),
        exact_second_moment_Q=exact_q2,
        spec=spec,
        diagnostics={"h_wmax": spec.h * wmax, "n_dof": n, "sample_dt": dt_s},
    )


# ------------------------------------------------------------------ hbar -> 0


def hbar_convergence(bath: BosonBathSpec, grid: TimeGrid, hbars: Sequence[float], v: int = 0, vp: int = 0) -> dict:
    """Distances ``||Re c_hbar - c^cl||`` and ``||Im c_hbar + (hbar/2) phi||``
    per ``hbar`` with log-log fitted orders (none for a single ``hbar``)."""
    hb = np.asarray(list(hbars), dtype=float)
    if hb.size == 0 or np.any(hb <= 0):
        raise ValidationError("hbar values must be positive")
    if hb.size > 1 and np.any(np.diff(hb) >= 0):
        raise ValidationError("hbar sequence must decrease")
    t = grid.times
    ccl = bath.c_classical(t, v, vp)
    phi = np.real(bath.phi(t, v, vp))
    re_res, im_res = [], []
    for h in hb:
        c = np.asarray(bath.c_minus(t, v, vp, hbar=h))
        re_res.append(float(np.sqrt(grid.dt) * np.linalg.norm(c.real - ccl)))
        im_res.append(float(np.sqrt(grid.dt) * np.linalg.norm(c.imag + 0.5 * h * phi)))
    rep = {"hbar": hb.tolist(), "real_residual": re_res, "imag_residual": im_res, "real_order": None, "imag_order": None}
    if hb.size > 1:
        if min(re_res) > 0:
            rep["real_order"] = float(np.polyfit(np.log(hb), np.log(re_res), 1)[0])
        if min(im_res) > 0:
            rep["imag_order"] = float(np.polyfit(np.log(hb), np.log(im_res), 1)[0])
    return rep
