"""Model assembly from a :class:`RunConfig` and the per-task workflows.

Every workflow produces named :class:`Artifact` objects. The oracle and the
SBET side use identical names for comparable quantities, which is what lets
``verify`` diff them one by one.

Names (indices appended as ``_a<alpha>``, ``_v<mode>``, ``_u<orbital>``):
``C_QQ``, ``C_FQ``, ``C_QF``, ``C_FF`` (stationary bosons), ``R_QQ``,
``R_FQ``, ``R_QF``, ``R_FF``, ``Qbar``, ``Fbar`` (driven bosons), ``C_SS``,
``C_AS``, ``C_SA``, ``C_AA`` with a ``minus``/``plus`` sign tag (fermions),
and ``Ccl_*``/``chicl_*``/``ens_*`` for the classical workflow.
"""

from __future__ import annotations

import copy
import re
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .baths import (
    BosonBathSpec,
    DiscreteLevels,
    DiscreteModes,
    Drude,
    FermiBathSpec,
    c_classical_boson,
    c_minus_boson,
    c_plus_boson,
    c_sigma_fermion,
    discretize_hybridization,
    discretize_spectral_density,
    g_fermion,
    phi_boson,
)
from .boson import (
    CosineBurst,
    DrivenGrids,
    DriveProfile,
    GaussianPulse,
    SystemCorrelations,
    auto_tail_policy,
    run_driven,
    run_field_free,
)
from .classical import (
    LangevinEnsembleSpec,
    classical_tail_policy,
    langevin_model,
    langevin_oracle,
    run_classical,
)
from .config import ConfigError, RunConfig
from .errors import SbetError, ValidationError
from .fermion import FermiSystemCorrelations, fermi_tail_policy, run_fermion
from .grid import ComplexSeries, TailPolicy, TimeGrid, TwoTimeField
from .io import ingest_system_correlations
from .oracles import (
    QuadraticBosonModel,
    QuadraticFermionModel,
    boson_classical_correlations,
    boson_driven_two_time,
    boson_stationary_correlations,
    fermion_correlations,
)

__all__ = [
    "Artifact",
    "Timer",
    "stage",
    "build_boson_baths",
    "build_drive",
    "build_leads",
    "langevin_spec",
    "BosonWorkflow",
    "FermionWorkflow",
    "ClassicalWorkflow",
    "workflow_for",
    "bath_correlations",
]

SIGN = {-1: "minus", 1: "plus"}
RECURRENCE_FRACTION = 0.49


@dataclass
class Artifact:
    name: str
    data: ComplexSeries | TwoTimeField
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None


class Timer:
    """Wall-clock per stage; kept out of reproducible reports."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            with stage(name):
                yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t0


@contextmanager
def stage(name: str):
    """Prefix package errors raised inside with the stage name."""
    try:
        yield
    except ConfigError:
        raise
    except SbetError as exc:
        if getattr(exc, "stage", None):
            raise
        new = copy.copy(exc)
        new.args = (f"[{name}] {exc}",)
        new.stage = name
        raise new from exc


_INDEX_TAIL = re.compile(r"(_(minus|plus))?(_[avu]\d+)*$")


def _art(name, data, **meta) -> Artifact:
    return Artifact(name, data, {"quantity": _INDEX_TAIL.sub("", name), **meta})


# ------------------------------------------------------------------ builders


def build_boson_baths(cfg: RunConfig, scale: float = 1.0) -> list[BosonBathSpec]:
    """``scale`` multiplies every coupling ``eta`` (used by the corrupted-
    kernel test hook)."""
    nv = len(cfg.model.system_frequencies)
    out = []
    for i, b in enumerate(cfg.model.baths):
        sp = b.spectral
        if sp.type == "modes":
            c = np.asarray(sp.couplings, dtype=float)
            if c.shape[0] != nv:
                raise ConfigError(f"model.baths[{i}].spectral.couplings needs {nv} rows")
            spectral = DiscreteModes(sp.frequencies, c)
        else:
            dr = Drude(sp.reorganization, sp.cutoff, sp.frequency_cutoff)
            if b.discretize is None:
                spectral = [[dr] * nv for _ in range(nv)]
            else:
                d = b.discretize
                dm = discretize_spectral_density(dr, d.n, d.scheme, cutoff=d.max_frequency, taper=d.taper)
                spectral = DiscreteModes(dm.frequencies, np.repeat(dm.couplings, nv, axis=0))
        out.append(BosonBathSpec(b.beta, spectral, eta=scale * np.asarray(b.eta), mu=b.dipole, name=b.name))
    return out


def build_drive(cfg: RunConfig) -> DriveProfile:
    sysf, bathf = {}, {}
    for p in cfg.drive.pulses:
        if p.shape == "gaussian":
            env = GaussianPulse(p.amplitude, p.center, p.width, p.carrier, p.phase)
        else:
            env = CosineBurst(p.amplitude, p.carrier, p.start, p.duration, p.phase)
        if p.target == "system":
            sysf[p.mode] = (p.dipole, env)
        else:
            bathf[(p.bath, p.mode)] = env
    return DriveProfile(cfg.drive.t_on, sysf, bathf)


def build_leads(cfg: RunConfig, scale: float = 1.0) -> list[FermiBathSpec]:
    out = []
    for L in cfg.model.leads:
        lev = discretize_hybridization(L.gamma, L.half_width, L.n, taper=L.taper, center=L.center)
        amps = scale * np.outer(np.asarray(L.couples_to, dtype=float), lev.amplitudes[0])
        out.append(FermiBathSpec(L.beta, L.chemical_potential, DiscreteLevels(lev.energies, amps), name=L.name))
    return out


def langevin_spec(cfg: RunConfig) -> LangevinEnsembleSpec:
    b = cfg.model.baths[0]
    d = b.discretize
    c = cfg.classical
    if d.scheme != "uniform":
        raise ConfigError("model.baths[0].discretize.scheme must be uniform for the classical task")
    return LangevinEnsembleSpec(
        system_frequency=cfg.model.system_frequencies[0],
        eta=b.eta[0],
        reorganization=b.spectral.reorganization,
        cutoff=b.spectral.cutoff,
        beta=b.beta,
        n_traj=c.n_traj,
        h=c.h,
        seed=cfg.seed,
        burn_in=c.burn_in,
        n_modes=d.n,
        freq_max=d.max_frequency,
        taper=d.taper,
        t_max=cfg.grid.t_max,
        sample_every=c.sample_every,
    )


def _out_grid(cfg: RunConfig) -> TimeGrid:
    try:
        return TimeGrid.span(0.0, cfg.grid.t_max, cfg.grid.dt)
    except ValidationError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _span_grid(cfg: RunConfig, recurrence: float, t_relax: float) -> TimeGrid:
    dt = cfg.grid.dt
    span = cfg.grid.span if cfg.grid.span is not None else RECURRENCE_FRACTION * recurrence - t_relax
    if span < cfg.grid.t_max:
        raise ValidationError(
            f"input span {span:.3g} is shorter than t_max={cfg.grid.t_max}; use more bath modes "
            f"(recurrence time {recurrence:.3g})"
        )
    return TimeGrid(0.0, dt, int(np.floor(span / dt + 1e-9)) + 1)


def _policy(cfg: RunConfig, auto, coupled: bool = True):
    t = cfg.tail
    if t.t_tail is not None:
        return TailPolicy(t.t_tail, t.eps, t.probe)
    if not coupled:
        # every tail term carries a vanishing coupling
        return TailPolicy(cfg.grid.dt, t.eps, t.probe)
    return auto(eps=t.eps, probe=t.probe, margin=t.margin)


def _head(series: ComplexSeries, grid: TimeGrid) -> ComplexSeries:
    return ComplexSeries(grid, series.values[: grid.n])


# ------------------------------------------------------------------ bosons


class BosonWorkflow:
    kind = "boson"

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.baths = build_boson_baths(cfg)
        self.sbet_baths = build_boson_baths(cfg, cfg.verify.corrupt_kernel) if cfg.task == "verify" else self.baths
        self.driven = bool(cfg.drive.pulses)
        self.drive = build_drive(cfg) if self.driven else None
        self.out_grid = _out_grid(cfg)

    def _labels(self):
        nv = len(self.cfg.model.system_frequencies)
        Q = [("Q", v) for v in range(nv)]
        F = [("F", a, v) for a, b in enumerate(self.baths) for v in range(b.n_sys)]
        return nv, Q, F

    def _window(self):
        w = self.cfg.grid.window
        dt = self.cfg.grid.dt
        try:
            window = TimeGrid.span(w.t_start, w.t_stop, dt)
        except ValidationError as exc:
            raise ConfigError(f"grid.window: {exc}") from None
        stride = w.output_step / dt
        if abs(stride - round(stride)) > 1e-6:
            raise ConfigError(f"grid.window.output_step={w.output_step} is not a multiple of dt={dt}")
        return window, int(round(stride))

    def oracle(self):
        """Exact correlations: ``(C_sys, inputs, reference, diagnostics)``."""
        cfg = self.cfg
        model = QuadraticBosonModel(cfg.model.system_frequencies, self.baths)
        ini = cfg.model.initial
        t_relax = ini.t_relax if ini.kind == "factorized" else 0.0
        g = _span_grid(cfg, model.recurrence_time(), t_relax)
        nv, Q, F = self._labels()
        obs = Q + ([] if self.driven else F)
        o = boson_stationary_correlations(
            model, obs, g, initial=ini.kind, t_relax=t_relax, beta_system=ini.beta_system
        )
        st = np.array([[o[(Q[v], Q[vp])].values for vp in range(nv)] for v in range(nv)])
        inputs = {}
        for v in range(nv):
            for vp in range(nv):
                a = _art(f"C_QQ_v{v}_v{vp}", o[(Q[v], Q[vp])], indices=[v, vp])
                inputs[a.name] = a
        ref = {}
        diag = {k: v for k, v in o["_diagnostics"].items()}
        if not self.driven:
            C = SystemCorrelations(g, st)
            for lab in F:
                _, a, v = lab
                for vp in range(nv):
                    ref[f"C_FQ_a{a}_v{v}_v{vp}"] = _art(
                        f"C_FQ_a{a}_v{v}_v{vp}", _head(o[(lab, Q[vp])], self.out_grid), indices=[a, v, vp]
                    )
                    ref[f"C_QF_a{a}_v{vp}_v{v}"] = _art(
                        f"C_QF_a{a}_v{vp}_v{v}", _head(o[(Q[vp], lab)], self.out_grid), indices=[a, vp, v]
                    )
                for lab2 in F:
                    _, ap, vp = lab2
                    name = f"C_FF_a{a}_v{v}_a{ap}_v{vp}"
                    ref[name] = _art(name, _head(o[(lab, lab2)], self.out_grid), indices=[a, v, ap, vp])
            return C, inputs, ref, diag
        window, stride = self._window()
        grids = DrivenGrids(window, self.drive.t_on, stride)
        pairs = [(x, y) for x in Q for y in Q]
        pairs += [(f, q) for f in F for q in Q] + [(q, f) for f in F for q in Q] + [(f, f2) for f in F for f2 in F]
        d = boson_driven_two_time(model, self.drive, window, pairs)
        R = np.array([[d[(Q[v], Q[vp])].values for vp in range(nv)] for v in range(nv)])
        means = np.array([d["_means"][Q[v]].values.real for v in range(nv)])
        C = SystemCorrelations(g, st, window=window, R_QQ=R, means=means)
        for v in range(nv):
            inputs[f"Qbar_v{v}"] = _art(f"Qbar_v{v}", d["_means"][Q[v]], indices=[v])
            for vp in range(nv):
                inputs[f"R_QQ_v{v}_v{vp}"] = _art(f"R_QQ_v{v}_v{vp}", d[(Q[v], Q[vp])], indices=[v, vp])
        idx = grids.output_index
        out = grids.output

        def mesh(f):
            return TwoTimeField(out, out, f.values[np.ix_(idx, idx)])

        for lab in F:
            _, a, v = lab
            ref[f"Fbar_a{a}_v{v}"] = _art(f"Fbar_a{a}_v{v}", d["_means"][lab], indices=[a, v])
            for vp in range(nv):
                ref[f"R_FQ_a{a}_v{v}_v{vp}"] = _art(f"R_FQ_a{a}_v{v}_v{vp}", mesh(d[(lab, Q[vp])]), indices=[a, v, vp])
                ref[f"R_QF_a{a}_v{vp}_v{v}"] = _art(f"R_QF_a{a}_v{vp}_v{v}", mesh(d[(Q[vp], lab)]), indices=[a, vp, v])
            for lab2 in F:
                _, ap, vp = lab2
                name = f"R_FF_a{a}_v{v}_a{ap}_v{vp}"
                ref[name] = _art(name, mesh(d[(lab, lab2)]), indices=[a, v, ap, vp])
        diag.update({k: v for k, v in d["_diagnostics"].items()})
        return C, inputs, ref, diag

    def ingest(self) -> SystemCorrelations:
        C = ingest_system_correlations(self.cfg.inputs.files)
        if not isinstance(C, SystemCorrelations):
            raise ConfigError("inputs.files hold fermionic data but the model is bosonic")
        if C.dt != self.cfg.grid.dt:
            raise ConfigError(f"input grid step {C.dt} differs from grid.dt={self.cfg.grid.dt}")
        return C

    def sbet(self, C: SystemCorrelations):
        """SBET outputs named like the oracle reference."""
        cfg = self.cfg
        policy = _policy(cfg, lambda **kw: auto_tail_policy(C, **kw), any(np.any(b.eta) for b in self.sbet_baths))
        arts = {}
        if not self.driven:
            r = run_field_free(self.sbet_baths, C, cfg.grid.t_max, policy)
            for (a, v, vp), s in r.FQ.items():
                arts[f"C_FQ_a{a}_v{v}_v{vp}"] = _art(f"C_FQ_a{a}_v{v}_v{vp}", s, indices=[a, v, vp])
            for (a, vp, v), s in r.QF.items():
                arts[f"C_QF_a{a}_v{vp}_v{v}"] = _art(f"C_QF_a{a}_v{vp}_v{v}", s, indices=[a, vp, v])
            for (a, v, ap, vp), s in r.FF.items():
                name = f"C_FF_a{a}_v{v}_a{ap}_v{vp}"
                arts[name] = _art(name, s, indices=[a, v, ap, vp])
        else:
            if C.R_QQ is None:
                raise ValidationError("a driven run needs R_QQ and Qbar inputs")
            _, stride = self._window()
            grids = DrivenGrids(C.window, self.drive.t_on, stride)
            r = run_driven(self.sbet_baths, self.drive, C, grids, policy)
            for (a, v), s in r.means.items():
                arts[f"Fbar_a{a}_v{v}"] = _art(f"Fbar_a{a}_v{v}", s, indices=[a, v])
            for (a, v, vp), f in r.FQ.items():
                arts[f"R_FQ_a{a}_v{v}_v{vp}"] = _art(f"R_FQ_a{a}_v{v}_v{vp}", f, indices=[a, v, vp])
            for (a, vp, v), f in r.QF.items():
                arts[f"R_QF_a{a}_v{vp}_v{v}"] = _art(f"R_QF_a{a}_v{vp}_v{v}", f, indices=[a, vp, v])
            for (a, v, ap, vp), f in r.FF.items():
                name = f"R_FF_a{a}_v{v}_a{ap}_v{vp}"
                arts[name] = _art(name, f, indices=[a, v, ap, vp])
        diag = {k: v for k, v in r.diagnostics.items() if not k.startswith("_") and k != "stage1"}
        return arts, diag


# ------------------------------------------------------------------ fermions


class FermionWorkflow:
    kind = "fermion"

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.leads = build_leads(cfg)
        self.sbet_leads = build_leads(cfg, cfg.verify.corrupt_kernel) if cfg.task == "verify" else self.leads
        self.out_grid = _out_grid(cfg)

    def oracle(self):
        cfg = self.cfg
        h = np.asarray(cfg.model.impurity, dtype=float)
        nu = h.shape[0]
        occ = None if cfg.model.impurity_occupation is None else np.diag(cfg.model.impurity_occupation)
        model = QuadraticFermionModel(h, self.leads, impurity_occupation=occ)
        t_relax = cfg.model.initial.t_relax
        g = _span_grid(cfg, model.recurrence_time(), t_relax)
        o = fermion_correlations(model, g, t_relax=t_relax)
        blocks = {
            s: np.array([[o[("SS", s, u, v)].values for v in range(nu)] for u in range(nu)]) for s in (-1, 1)
        }
        C = FermiSystemCorrelations(g, blocks[-1], blocks[1])
        inputs, ref = {}, {}
        for s in (-1, 1):
            tag = SIGN[s]
            for u in range(nu):
                for v in range(nu):
                    n = f"C_SS_{tag}_u{u}_v{v}"
                    inputs[n] = _art(n, o[("SS", s, u, v)], indices=[s, u, v])
                    for a in range(len(self.leads)):
                        n = f"C_AS_{tag}_a{a}_u{u}_v{v}"
                        ref[n] = _art(n, _head(o[("aS", s, a, u, v)], self.out_grid), indices=[s, a, u, v])
                        n = f"C_SA_{tag}_a{a}_u{u}_v{v}"
                        ref[n] = _art(n, _head(o[("Sa", s, a, u, v)], self.out_grid), indices=[s, a, u, v])
                        for ap in range(len(self.leads)):
                            n = f"C_AA_{tag}_a{a}_a{ap}_u{u}_v{v}"
                            ref[n] = _art(n, _head(o[("aa", s, a, ap, u, v)], self.out_grid), indices=[s, a, ap, u, v])
        diag = {"recurrence_time": model.recurrence_time(), "t_relax": t_relax, "span": g.t_stop}
        return C, inputs, ref, diag

    def ingest(self) -> FermiSystemCorrelations:
        C = ingest_system_correlations(self.cfg.inputs.files)
        if not isinstance(C, FermiSystemCorrelations):
            raise ConfigError("inputs.files hold bosonic data but the model is fermionic")
        if C.dt != self.cfg.grid.dt:
            raise ConfigError(f"input grid step {C.dt} differs from grid.dt={self.cfg.grid.dt}")
        return C

    def sbet(self, C: FermiSystemCorrelations):
        policy = _policy(self.cfg, lambda **kw: fermi_tail_policy(C, **kw), any(np.any(L.spectral.amplitudes) for L in self.sbet_leads))
        r = run_fermion(self.sbet_leads, C, self.cfg.grid.t_max, policy)
        arts = {}
        for (s, a, u, v), x in r.AS.items():
            n = f"C_AS_{SIGN[s]}_a{a}_u{u}_v{v}"
            arts[n] = _art(n, x, indices=[s, a, u, v])
        for (s, a, u, v), x in r.SA.items():
            n = f"C_SA_{SIGN[s]}_a{a}_u{u}_v{v}"
            arts[n] = _art(n, x, indices=[s, a, u, v])
        for (s, a, ap, u, v), x in r.AA.items():
            n = f"C_AA_{SIGN[s]}_a{a}_a{ap}_u{u}_v{v}"
            arts[n] = _art(n, x, indices=[s, a, ap, u, v])
        diag = {k: v for k, v in r.diagnostics.items() if k != "stage1"}
        return arts, diag


# ------------------------------------------------------------------ classical


class ClassicalWorkflow:
    kind = "classical"

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.spec = langevin_spec(cfg)
        self.bath = self.spec.bath()
        scale = cfg.verify.corrupt_kernel if cfg.task == "verify" else 1.0
        self.sbet_bath = self.bath.with_eta(scale * self.bath.eta)
        self.out_grid = _out_grid(cfg)
        if cfg.classical.ensemble:
            dts = cfg.classical.h * cfg.classical.sample_every
            if abs(dts - cfg.grid.dt) > 1e-12 * cfg.grid.dt:
                raise ConfigError(
                    f"classical.h * classical.sample_every = {dts} must equal grid.dt = {cfg.grid.dt}"
                )

    def oracle(self):
        model = langevin_model(self.spec)
        g = _span_grid(self.cfg, model.recurrence_time(), 0.0)
        Q, F = ("Q", 0), ("F", 0, 0)
        ex = boson_classical_correlations(model, [Q, F], g, self.spec.beta)
        inputs = {
            "Ccl_QQ_v0_v0": _art("Ccl_QQ_v0_v0", ex[("C", Q, Q)], indices=[0, 0]),
            "chicl_QQ_v0_v0": _art("chicl_QQ_v0_v0", ex[("chi", Q, Q)], indices=[0, 0]),
        }
        og = self.out_grid
        ref = {
            "Ccl_FQ_a0_v0_v0": _art("Ccl_FQ_a0_v0_v0", _head(ex[("C", F, Q)], og), indices=[0, 0, 0]),
            "Ccl_QF_a0_v0_v0": _art("Ccl_QF_a0_v0_v0", _head(ex[("C", Q, F)], og), indices=[0, 0, 0]),
            "Ccl_FF_a0_v0_a0_v0": _art("Ccl_FF_a0_v0_a0_v0", _head(ex[("C", F, F)], og), indices=[0, 0, 0, 0]),
            "chicl_FQ_a0_v0_v0": _art("chicl_FQ_a0_v0_v0", _head(ex[("chi", F, Q)], og), indices=[0, 0, 0]),
        }
        return (ex[("C", Q, Q)], ex[("chi", Q, Q)]), inputs, ref, {"recurrence_time": model.recurrence_time()}

    def ensemble(self):
        """Langevin ensemble estimates on ``[-t_max, t_max]`` with stderr."""
        est = langevin_oracle(self.spec)
        arts = {}
        for (X, Y), val in est.corr.items():
            n = f"ens_C_{X}{Y}"
            arts[n] = Artifact(n, ComplexSeries(est.grid, val), {"quantity": n}, est.stderr[(X, Y)])
            n = f"ens_dC_{X}{Y}"
            arts[n] = Artifact(n, ComplexSeries(est.grid, est.dcorr[(X, Y)]), {"quantity": n}, est.dstderr[(X, Y)])
        i0 = est.grid.index_of(0.0)
        chi_grid = TimeGrid(0.0, est.grid.dt, est.grid.n - i0)
        for (X, Y), val in est.chi.items():
            n = f"ens_chi_{X}{Y}"
            arts[n] = Artifact(n, ComplexSeries(chi_grid, val), {"quantity": n}, np.zeros(chi_grid.n))
        diag = dict(est.diagnostics)
        diag["second_moment_Q"] = list(est.second_moment_Q)
        diag["exact_second_moment_Q"] = est.exact_second_moment_Q
        return est, arts, diag

    def sbet(self, inputs):
        Css, Xss = inputs
        cfg = self.cfg
        dt = cfg.grid.dt
        policy = _policy(cfg, lambda **kw: classical_tail_policy(Css.values, dt, **kw), bool(np.any(self.sbet_bath.eta)))
        r = run_classical([self.sbet_bath], Css, Xss, Css.grid, cfg.grid.t_max, policy)
        arts = {
            "Ccl_FQ_a0_v0_v0": _art("Ccl_FQ_a0_v0_v0", r["FQ"][(0, 0, 0)], indices=[0, 0, 0]),
            "Ccl_QF_a0_v0_v0": _art("Ccl_QF_a0_v0_v0", r["QF"][(0, 0, 0)], indices=[0, 0, 0]),
            "Ccl_FF_a0_v0_a0_v0": _art("Ccl_FF_a0_v0_a0_v0", r["FF"][(0, 0, 0, 0)], indices=[0, 0, 0, 0]),
            "chicl_FQ_a0_v0_v0": _art("chicl_FQ_a0_v0_v0", r["chiFQ"][(0, 0, 0)], indices=[0, 0, 0]),
        }
        return arts, {k: v for k, v in r["diagnostics"].items() if k != "stage1"}

    def ingest(self):
        raise ConfigError("the classical task computes its own inputs; remove inputs.files")


def workflow_for(cfg: RunConfig):
    return {"boson": BosonWorkflow, "fermion": FermionWorkflow, "classical": ClassicalWorkflow}[cfg.model.kind](cfg)


# ------------------------------------------------------------------ bath-corr


def bath_correlations(cfg: RunConfig):
    """Bath kernels on ``[0, t_max]``: ``phi``, ``c-``, ``c+`` and ``c^cl``
    per bosonic bath and mode pair, or ``c^(-)``, ``c^(+)`` and ``g`` per
    lead. Also returns the split-identity residual
    ``max |(c-_vv' - c-_v'v^*)/(2i) + phi_vv'/2|``."""
    g = _out_grid(cfg)
    arts = {}
    split = 0.0
    if cfg.model.kind == "fermion":
        leads = build_leads(cfg)
        for a, L in enumerate(leads):
            for u in range(L.n_orb):
                for v in range(L.n_orb):
                    for s in (-1, 1):
                        n = f"c_{SIGN[s]}_a{a}_u{u}_v{v}"
                        arts[n] = _art(n, c_sigma_fermion(L, s, u, v, g), indices=[s, a, u, v])
                    n = f"g_a{a}_u{u}_v{v}"
                    arts[n] = _art(n, g_fermion(L, u, v, g), indices=[a, u, v])
        return arts, {}
    hbar = cfg.model.hbar
    for a, b in enumerate(build_boson_baths(cfg)):
        for v in range(b.n_sys):
            for vp in range(b.n_sys):
                ix = [a, v, vp]
                phi = phi_boson(b, v, vp, g)
                cm = c_minus_boson(b, v, vp, g, hbar)
                cm_t = c_minus_boson(b, vp, v, g, hbar)
                split = max(split, float(np.abs((cm.values - np.conj(cm_t.values)) / (2j * hbar) + 0.5 * phi.values).max()))
                arts[f"phi_a{a}_v{v}_v{vp}"] = _art(f"phi_a{a}_v{v}_v{vp}", phi, indices=ix)
                arts[f"cminus_a{a}_v{v}_v{vp}"] = _art(f"cminus_a{a}_v{v}_v{vp}", cm, indices=ix, hbar=hbar)
                arts[f"cplus_a{a}_v{v}_v{vp}"] = _art(f"cplus_a{a}_v{v}_v{vp}", c_plus_boson(b, v, vp, g, hbar), indices=ix, hbar=hbar)
                arts[f"ccl_a{a}_v{v}_v{vp}"] = _art(f"ccl_a{a}_v{v}_v{vp}", c_classical_boson(b, v, vp, g), indices=ix)
    return arts, {"split_identity_residual": split}
