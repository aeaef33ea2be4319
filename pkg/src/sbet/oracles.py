"""Brute-force reference dynamics.

Bosons
    A harmonic system (one oscillator per system mode ``v``, ``Q_v`` its
    coordinate) bilinearly coupled to discretised baths. In mass-weighted
    coordinates ``q`` the Hamiltonian is ``p^2/2 + q^T K q / 2 - f(t)^T q``.
    ``K = U diag(W^2) U^T`` gives the normal modes. Gaussian states are
    propagated exactly through their symmetrised covariance; means follow the
    driven equations of motion with a first-order-hold integrator in the
    normal-mode basis.

Fermions
    Quadratic impurity plus discrete lead levels. The single-particle matrix
    is built in the gauge where lead levels sit at ``eps - mu`` (the leads'
    own grand-canonical Hamiltonians), so every correlator follows from the
    propagator ``exp(-i h t)`` and the one-body density matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baths import BosonBathSpec, DiscreteLevels, DiscreteModes, FermiBathSpec, bose, fermi
from .boson import DriveProfile
from .errors import ValidationError
from .grid import ComplexSeries, TimeGrid, TwoTimeField

__all__ = [
    "QuadraticBosonModel",
    "GaussianState",
    "boson_stationary_correlations",
    "boson_driven_two_time",
    "driven_means",
    "QuadraticFermionModel",
    "fermion_correlations",
    "recurrence_time",
    "boson_classical_correlations",
]


def recurrence_time(frequencies: np.ndarray) -> float:
    """``2 pi / dw`` for the smallest positive level spacing."""
    w = np.unique(np.asarray(frequencies, dtype=float))
    if w.size < 2:
        return np.inf
    d = np.diff(w)
    d = d[d > 1e-14]
    return 2.0 * np.pi / d.min() if d.size else np.inf


# ---------------------------------------------------------------- bosons


@dataclass
class QuadraticBosonModel:
    """Harmonic system modes ``Omega_v`` coupled to discrete baths.

    ``H = sum_v Omega_v (P_v^2 + Q_v^2)/2 + sum_a h_a - sum_{a v} eta_{a v}
    Q_v F_{a v}`` with ``h_a`` and ``F_{a v}`` as in :class:`BosonBathSpec`
    (dimensionless bath coordinates ``x_j``).
    """

    system_frequencies: np.ndarray
    baths: Sequence[BosonBathSpec]

    def __post_init__(self):
        self.system_frequencies = np.atleast_1d(np.asarray(self.system_frequencies, dtype=float))
        if np.any(self.system_frequencies <= 0):
            raise ValidationError("system frequencies must be positive")
        nv = self.system_frequencies.size
        for b in self.baths:
            if not isinstance(b.spectral, DiscreteModes):
                raise ValidationError("oracle baths must be DiscreteModes")
            if b.n_sys != nv:
                raise ValidationError("bath coupling rows must match the number of system modes")
        self._offsets = np.cumsum([nv] + [b.spectral.n_modes for b in self.baths])
        self.n = int(self._offsets[-1])
        self.freqs = np.concatenate([self.system_frequencies] + [b.spectral.frequencies for b in self.baths])
        K = np.diag(self.freqs ** 2)
        for a, b in enumerate(self.baths):
            sl = self.bath_slice(a)
            om = b.spectral.frequencies
            for v in range(nv):
                row = -b.eta[v] * b.spectral.couplings[v] * np.sqrt(self.system_frequencies[v] * om)
                K[v, sl] += row
                K[sl, v] += row
        if not np.allclose(K, K.T):
            raise ValidationError("quadratic form is not symmetric")
        w2, U = np.linalg.eigh(K)
        if w2.min() <= 0:
            raise ValidationError(
                f"unstable model: smallest squared normal-mode frequency {w2.min():.3e} <= 0"
            )
        self.K = K
        self.W = np.sqrt(w2)
        self.U = U

    @property
    def n_sys(self) -> int:
        return self.system_frequencies.size

    def bath_slice(self, a: int) -> slice:
        return slice(int(self._offsets[a]), int(self._offsets[a + 1]))

    def recurrence_time(self) -> float:
        return min(recurrence_time(b.spectral.frequencies) for b in self.baths) if self.baths else np.inf

    def guard(self, t_needed: float):
        """Reject windows reaching half the bath recurrence time."""
        tr = self.recurrence_time()
        if t_needed > 0.5 * tr:
            raise ValidationError(
                f"requested time span {t_needed:.4g} exceeds half the recurrence time "
                f"{tr:.4g}; use more bath modes"
            )

    # observables ----------------------------------------------------------

    def vec_Q(self, v: int) -> np.ndarray:
        a = np.zeros(self.n)
        a[v] = np.sqrt(self.system_frequencies[v])
        return a

    def vec_F(self, alpha: int, v: int) -> np.ndarray:
        b = self.baths[alpha]
        a = np.zeros(self.n)
        a[self.bath_slice(alpha)] = b.spectral.couplings[v] * np.sqrt(b.spectral.frequencies)
        return a

    def observable(self, label) -> np.ndarray:
        """``("Q", v)`` or ``("F", alpha, v)``."""
        if label[0] == "Q":
            return self.vec_Q(label[1])
        if label[0] == "F":
            return self.vec_F(label[1], label[2])
        raise ValidationError(f"unknown observable {label!r}")

    def force(self, drive: DriveProfile, t: np.ndarray) -> np.ndarray:
        """Generalised force ``f(t)`` on the mass-weighted coordinates,
        shape ``(len(t), n)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        f = np.zeros((t.size, self.n))
        for v in range(self.n_sys):
            mu, eps = drive.system_field(v, t)
            if mu != 0.0:
                f += (mu * eps)[:, None] * self.vec_Q(v)[None, :]
        for a, b in enumerate(self.baths):
            for v in range(self.n_sys):
                if b.mu[v] == 0.0:
                    continue
                eps = drive.bath_field(a, v, t)
                f += (b.mu[v] * eps)[:, None] * self.vec_F(a, v)[None, :]
        return f


@dataclass
class GaussianState:
    """Zero-mean Gaussian state in normal-mode coordinates ``(u, pi)``:
    symmetrised covariance blocks."""

    uu: np.ndarray
    up: np.ndarray
    pp: np.ndarray

    def evolve(self, W: np.ndarray, t: float) -> "GaussianState":
        c = np.cos(W * t)
        s = np.sin(W * t)
        # u(t) = c u + (s/W) pi ; pi(t) = -W s u + c pi
        A, B = c, s / W
        C, D = -W * s, c
        uu = A[:, None] * self.uu * A[None, :] + A[:, None] * self.up * B[None, :] \
            + B[:, None] * self.up.T * A[None, :] + B[:, None] * self.pp * B[None, :]
        up = A[:, None] * self.uu * C[None, :] + A[:, None] * self.up * D[None, :] \
            + B[:, None] * self.up.T * C[None, :] + B[:, None] * self.pp * D[None, :]
        pp = C[:, None] * self.uu * C[None, :] + C[:, None] * self.up * D[None, :] \
            + D[:, None] * self.up.T * C[None, :] + D[:, None] * self.pp * D[None, :]
        return GaussianState(uu, up, pp)


def _thermal_state(model: QuadraticBosonModel, beta: float, hbar: float = 1.0) -> GaussianState:
    W = model.W
    coth = 1.0 + 2.0 * bose(beta * hbar * W)
    return GaussianState(np.diag(hbar * coth / (2 * W)), np.zeros((model.n, model.n)), np.diag(hbar * coth * W / 2))


def _factorized_state(model: QuadraticBosonModel, beta_system: float, hbar: float = 1.0) -> GaussianState:
    """Uncoupled thermal states: system at ``beta_system``, bath ``a`` at its
    own ``beta``; expressed in the coupled normal-mode basis."""
    betas = np.empty(model.n)
    betas[: model.n_sys] = beta_system
    for a, b in enumerate(model.baths):
        betas[model.bath_slice(a)] = b.beta
    w = model.freqs
    coth = 1.0 + 2.0 * bose(betas * hbar * w)
    U = model.U
    qq = hbar * coth / (2 * w)
    pp = hbar * coth * w / 2
    return GaussianState(U.T @ (qq[:, None] * U), np.zeros((model.n, model.n)), U.T @ (pp[:, None] * U))


def _correlation(model: QuadraticBosonModel, state: GaussianState, a: np.ndarray, b: np.ndarray, tau: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """``<A(t1 + tau) B(t1)>`` for ``A = a.q``, ``B = b.q`` given the state at
    ``t1``."""
    W = model.W
    au = model.U.T @ a
    bu = model.U.T @ b
    x = state.uu @ bu  # <u u> b
    y = state.up.T @ bu - 0.5j * hbar * bu  # <pi u> b, including the commutator
    tau = np.asarray(tau, dtype=float)
    flat = tau.reshape(-1)
    out = np.empty(flat.size, dtype=complex)
    for s in range(0, flat.size, 512):
        ph = np.outer(flat[s:s + 512], W)
        out[s:s + 512] = np.cos(ph) @ (au * x) + np.sin(ph) @ (au * y / W)
    return out.reshape(tau.shape)


def boson_stationary_correlations(model: QuadraticBosonModel, observables: Sequence[tuple], grid: TimeGrid, initial: str = "thermal", beta: float | None = None, t_relax: float = 0.0, beta_system: float | None = None, hbar: float = 1.0) -> dict:
    """Correlations ``C_AB(t) = <A(t) B(0)>`` for every ordered pair.

    initial
        ``"thermal"``: global Gibbs state at ``beta`` (default: the common
        bath temperature). ``"factorized"``: uncoupled thermal start at
        ``t = 0``, correlations measured at ``t1 = t_relax``.

    Returns ``{(A, B): ComplexSeries}`` plus ``"_means"`` (zero for the
    undriven model) and ``"_diagnostics"``.
    """
    t_needed = t_relax + max(abs(grid.t_start), abs(grid.t_stop))
    model.guard(t_needed)
    if initial == "thermal":
        if beta is None:
            betas = {b.beta for b in model.baths}
            if len(betas) != 1:
                raise ValidationError("thermal start needs a common temperature; pass beta or use 'factorized'")
            beta = betas.pop()
        state = _thermal_state(model, beta, hbar)
    elif initial == "factorized":
        bs = beta_system if beta_system is not None else model.baths[0].beta
        state = _factorized_state(model, bs, hbar).evolve(model.W, t_relax)
    else:
        raise ValidationError(f"unknown initial state {initial!r}")
    out = {}
    vecs = {lab: model.observable(lab) for lab in observables}
    for la in observables:
        for lb in observables:
            out[(la, lb)] = ComplexSeries(grid, _correlation(model, state, vecs[la], vecs[lb], grid.times, hbar))
    out["_diagnostics"] = {
        "initial": initial,
        "t_relax": t_relax,
        "recurrence_time": model.recurrence_time(),
        "window": [t_relax + grid.t_start, t_relax + grid.t_stop],
    }
    return out


def driven_means(model: QuadraticBosonModel, drive: DriveProfile, times: np.ndarray, substeps: int = 20) -> np.ndarray:
    """Mean coordinates ``q(t)`` at ``times`` (ascending), starting from rest
    at ``drive.t_on``. Exact for forces linear between sub-steps."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValidationError("times must increase")
    out = np.zeros((times.size, model.n))
    W = model.W
    U = model.U
    u = np.zeros(model.n)
    ud = np.zeros(model.n)
    t_cur = drive.t_on
    g_cur = U.T @ model.force(drive, np.array([t_cur]))[0]
    W2 = W * W
    for i, t_target in enumerate(times):
        if t_target <= drive.t_on:
            continue
        span = t_target - t_cur
        k = max(1, int(np.ceil(substeps * span / max(np.diff(times).min(initial=span), 1e-300))))
        h = span / k
        c, s = np.cos(W * h), np.sin(W * h)
        for _ in range(k):
            t_next = t_cur + h
            g_next = U.T @ model.force(drive, np.array([t_next]))[0]
            g0 = g_cur
            g1 = (g_next - g_cur) / h
            A = u - g0 / W2
            B = (ud - g1 / W2) / W
            u = g0 / W2 + g1 * h / W2 + A * c + B * s
            ud = g1 / W2 - A * W * s + B * W * c
            t_cur, g_cur = t_next, g_next
        out[i] = U @ u
    return out


def boson_driven_two_time(model: QuadraticBosonModel, drive: DriveProfile, window: TimeGrid, pairs: Sequence[tuple], beta: float | None = None, substeps: int = 20, hbar: float = 1.0) -> dict:
    """Uncentred ``R_AB(t2, t1) = i <A(t2) B(t1)>`` on ``window x window``
    for a globally thermal quadratic model, plus the means of every
    observable that appears in ``pairs``.

    Centred correlations come from the undriven propagator (exact for
    quadratic models); the drive enters only through the means.
    """
    model.guard(window.t_stop - window.t_start)
    if beta is None:
        betas = {b.beta for b in model.baths}
        if len(betas) != 1:
            raise ValidationError("driven oracle needs a common temperature")
        beta = betas.pop()
    state = _thermal_state(model, beta, hbar)
    t = window.times
    n = t.size
    q = driven_means(model, drive, t, substeps)
    labels = sorted({lab for p in pairs for lab in p}, key=repr)
    means = {lab: q @ model.observable(lab) for lab in labels}
    lags = (np.arange(n)[:, None] - np.arange(n)[None, :]) * window.dt
    out = {"_means": {lab: ComplexSeries(window, m) for lab, m in means.items()}}
    for la, lb in pairs:
        a, b = model.observable(la), model.observable(lb)
        k = np.arange(-(n - 1), n)
        cen = _correlation(model, state, a, b, k * window.dt, hbar)
        C = cen[(np.arange(n)[:, None] - np.arange(n)[None, :]) + (n - 1)]
        R = 1j * (C + np.outer(means[la], means[lb]))
        out[(la, lb)] = TwoTimeField(window, window, R)
    out["_diagnostics"] = {"recurrence_time": model.recurrence_time(), "lag_extent": float(np.abs(lags).max())}
    return out


# ---------------------------------------------------------------- fermions


@dataclass
class QuadraticFermionModel:
    """Quadratic impurity ``h_S`` coupled to discrete leads.

    ``impurity_occupation`` is the initial one-body density matrix
    ``<psi_u^dag psi_v>`` of the impurity (defaults to empty).
    """

    h_system: np.ndarray
    leads: Sequence[FermiBathSpec]
    impurity_occupation: np.ndarray | None = None

    def __post_init__(self):
        hs = np.atleast_2d(np.asarray(self.h_system, dtype=complex))
        if hs.shape[0] != hs.shape[1] or not np.allclose(hs, hs.conj().T):
            raise ValidationError("impurity Hamiltonian must be a Hermitian matrix")
        self.h_system = hs
        nu = hs.shape[0]
        for L in self.leads:
            if not isinstance(L.spectral, DiscreteLevels):
                raise ValidationError("oracle leads must be DiscreteLevels")
            if L.n_orb != nu:
                raise ValidationError("lead amplitudes must address every impurity orbital")
        sizes = [nu] + [L.spectral.energies.size for L in self.leads]
        self._offsets = np.cumsum(sizes)
        n = int(self._offsets[-1])
        h = np.zeros((n, n), dtype=complex)
        h[:nu, :nu] = hs
        P0 = np.zeros((n, n), dtype=complex)
        occ = np.zeros((nu, nu)) if self.impurity_occupation is None else np.asarray(self.impurity_occupation, dtype=complex)
        if occ.shape != (nu, nu):
            raise ValidationError("impurity occupation must be nu x nu")
        ev = np.linalg.eigvalsh(0.5 * (occ + occ.conj().T))
        if ev.min() < -1e-12 or ev.max() > 1 + 1e-12:
            raise ValidationError("impurity occupations must lie in [0, 1]")
        P0[:nu, :nu] = occ
        for a, L in enumerate(self.leads):
            sl = self.lead_slice(a)
            eps = L.spectral.energies
            h[sl, sl] = np.diag(eps - L.chemical_potential)
            # psi_u^dag F_{a u} with F_{a u} = sum_j t*_{a u j} a_j
            amp = L.spectral.amplitudes
            h[:nu, sl] = np.conj(amp)
            h[sl, :nu] = amp.T
            P0[sl, sl] = np.diag(fermi(L.beta * (eps - L.chemical_potential)))
        self.h = h
        self.P0 = P0
        self.E, self.V = np.linalg.eigh(h)
        self.n = n

    @property
    def n_orb(self) -> int:
        return self.h_system.shape[0]

    def lead_slice(self, a: int) -> slice:
        return slice(int(self._offsets[a]), int(self._offsets[a + 1]))

    def recurrence_time(self) -> float:
        return min(recurrence_time(L.spectral.energies) for L in self.leads) if self.leads else np.inf

    def guard(self, t_needed: float):
        tr = self.recurrence_time()
        if t_needed > 0.5 * tr:
            raise ValidationError(
                f"requested time span {t_needed:.4g} exceeds half the recurrence time {tr:.4g}; use more lead levels"
            )

    def vec_psi(self, u: int) -> np.ndarray:
        e = np.zeros(self.n, dtype=complex)
        e[u] = 1.0
        return e

    def vec_F(self, a: int, u: int) -> np.ndarray:
        """Coefficients of ``F_{a u} = sum_j t*_{a u j} a_j``."""
        e = np.zeros(self.n, dtype=complex)
        e[self.lead_slice(a)] = np.conj(self.leads[a].spectral.amplitudes[u])
        return e

    def density(self, t: float) -> np.ndarray:
        """``P_ij(t) = <c_i^dag c_j>`` at time ``t`` after the start."""
        Ut = (self.V * np.exp(-1j * self.E * t)) @ self.V.conj().T
        return np.conj(Ut) @ self.P0 @ Ut.T

    def _prop_sandwich(self, left: np.ndarray, right: np.ndarray, t: np.ndarray, conj: bool) -> np.ndarray:
        """``left^T U(t) right`` (or with ``conj(U)``) for every ``t``."""
        if conj:
            lv = left @ np.conj(self.V)
            rv = self.V.T @ right
            ph = np.exp(1j * np.outer(t, self.E))
        else:
            lv = left @ self.V
            rv = self.V.conj().T @ right
            ph = np.exp(-1j * np.outer(t, self.E))
        return ph @ (lv * rv)

    def corr_minus(self, a: np.ndarray, b: np.ndarray, t: np.ndarray, P: np.ndarray) -> np.ndarray:
        """``<A(t) B^dag(0)>`` for ``A = a.c``, ``B = b.c``."""
        right = (np.eye(self.n) - P.T) @ np.conj(b)
        return self._prop_sandwich(a, right, t, conj=False)

    def corr_plus(self, a: np.ndarray, b: np.ndarray, t: np.ndarray, P: np.ndarray) -> np.ndarray:
        """``<A^dag(t) B(0)>``."""
        return self._prop_sandwich(np.conj(a), P @ b, t, conj=True)


def fermion_correlations(model: QuadraticFermionModel, grid: TimeGrid, t_relax: float) -> dict:
    """Every correlator entering the fermionic relations, measured from the
    quasi-steady state at ``t_relax``.

    Keys: ``("SS", s, u, v)``, ``("aS", s, a, u, v)``, ``("Sa", s, a, u, v)``
    and ``("aa", s, a, a', u, v)`` with ``s`` in ``{-1, +1}``.
    """
    model.guard(t_relax + max(abs(grid.t_start), abs(grid.t_stop)))
    P = model.density(t_relax)
    t = grid.times
    nu = model.n_orb
    na = len(model.leads)
    out = {}
    # anticommutator check: <{c_i(t), c_j^dag}> = U_ij(t)
    probe = np.linspace(grid.t_start, grid.t_stop, 7)
    worst = 0.0
    for u in range(nu):
        e = model.vec_psi(u)
        lhs = model.corr_minus(e, e, probe, P) + np.conj(model.corr_plus(e, e, probe, P))
        rhs = model._prop_sandwich(e, e, probe, conj=False)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    if worst > 1e-10:
        raise ValidationError(f"free-fermion anticommutator identity violated by {worst:.2e}")
    psi = [model.vec_psi(u) for u in range(nu)]
    F = [[model.vec_F(a, u) for u in range(nu)] for a in range(na)]
    keys, cols_m, cols_p = [], [], []
    Q = np.eye(model.n) - P.T
    for s in (-1, +1):
        for u in range(nu):
            for v in range(nu):
                pairs = [(("SS", s, u, v), psi[u], psi[v])]
                for a in range(na):
                    pairs.append((("aS", s, a, u, v), F[a][u], psi[v]))
                    pairs.append((("Sa", s, a, u, v), psi[u], F[a][v]))
                    for ap in range(na):
                        pairs.append((("aa", s, a, ap, u, v), F[a][u], F[ap][v]))
                for key, x, y in pairs:
                    keys.append(key)
                    if s < 0:
                        # <A(t) B^dag> = sum_k (a.V)_k e^{-i E_k t} (V^dag (1 - P^T) b^*)_k
                        cols_m.append((x @ model.V) * (model.V.conj().T @ (Q @ np.conj(y))))
                    else:
                        # <A^dag(t) B> = sum_k (a^*.V^*)_k e^{+i E_k t} (V^T P b)_k
                        cols_p.append((np.conj(x) @ np.conj(model.V)) * (model.V.T @ (P @ y)))
    Wm = np.array(cols_m).T
    Wp = np.array(cols_p).T
    vals_m = np.empty((t.size, Wm.shape[1]), dtype=complex)
    vals_p = np.empty((t.size, Wp.shape[1]), dtype=complex)
    for s0 in range(0, t.size, 256):
        ph = np.exp(-1j * np.outer(t[s0:s0 + 256], model.E))
        vals_m[s0:s0 + 256] = ph @ Wm
        vals_p[s0:s0 + 256] = np.conj(ph) @ Wp
    im = ip = 0
    for key in keys:
        if key[1] < 0:
            out[key] = ComplexSeries(grid, vals_m[:, im].copy())
            im += 1
        else:
            out[key] = ComplexSeries(grid, vals_p[:, ip].copy())
            ip += 1
    out["_diagnostics"] = {
        "t_relax": t_relax,
        "recurrence_time": model.recurrence_time(),
        "anticommutator_residual": worst,
        "occupation": float(np.real(P[0, 0])),
    }
    return out


def boson_classical_correlations(model: QuadraticBosonModel, observables: Sequence[tuple], grid: TimeGrid, beta: float) -> dict:
    """Exact classical Gibbs correlations of the discretised model.

    ``C^cl_AB(t) = (1/beta) a^T U diag(cos(W t)/W^2) U^T b`` and
    ``chi^cl_AB(t) = a^T U diag(sin(W t)/W) U^T b``. Returns
    ``{("C", A, B): series, ("chi", A, B): series}``.
    """
    if not beta > 0:
        raise ValidationError("beta must be positive")
    model.guard(max(abs(grid.t_start), abs(grid.t_stop)))
    W = model.W
    t = grid.times
    vecs = {lab: model.U.T @ model.observable(lab) for lab in observables}
    out = {}
    cos = np.cos(np.outer(t, W))
    sin = np.sin(np.outer(t, W))
    for la in observables:
        for lb in observables:
            w = vecs[la] * vecs[lb]
            out[("C", la, lb)] = ComplexSeries(grid, (cos @ (w / W ** 2)) / beta + 0.0j)
            out[("chi", la, lb)] = ComplexSeries(grid, sin @ (w / W) + 0.0j)
    return out
