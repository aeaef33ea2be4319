"""Acceptance criteria, one test each. Every test prints a single
``PASS``/``FAIL criterion N`` line (also collected into the terminal summary)."""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from helpers import DT, bath, classical_inputs, driven_inputs, fermion_setup, stationary_inputs
from sbet.baths import BosonBathSpec, DiscreteModes, Drude, kernel_spectrum
from sbet.boson import SystemCorrelations, bath_mean, run_driven, run_field_free
from sbet.classical import hbar_convergence, quantum_fdt_check, run_classical
from sbet.config import load_config_text
from sbet.fermion import FermiSystemCorrelations, run_fermion
from sbet.grid import TimeGrid
from sbet.oracles import QuadraticBosonModel, QuadraticFermionModel, boson_stationary_correlations, fermion_correlations
from sbet.verify import run_verify

pytestmark = pytest.mark.acceptance
RESULTS: list[str] = []


class Criterion:
    def __init__(self, n, what):
        self.n, self.what = n, what

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"{verdict} criterion {self.n}: {self.what} ({dt:.1f} s)"
        if exc is not None:
            line += f" -- {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        print(line)
        RESULTS.append(line)
        return False


def _verify(text):
    out = run_verify(load_config_text(text))
    for c in out.report.checks:
        print(f"  {c.name}: {c.metric}={c.value:.3e} tol={c.tolerance:.1e} {'ok' if c.passed else 'FAIL'}")
    return out


def _worst(report):
    return max(c.value for c in report.checks if c.metric == "rel_l2")


# 1 ----------------------------------------------------------------------------


@dataclass(frozen=True)
class _Opaque:
    """Exposes only the spectral-density interface, hiding the Drude type so
    no closed form can be picked up."""

    inner: Drude

    def J(self, w):
        return self.inner.J(w)

    @property
    def J_slope0(self):
        return self.inner.J_slope0

    @property
    def support(self):
        return self.inner.support

    @property
    def scale(self):
        return self.inner.scale


def test_criterion_1_kernels_against_closed_forms():
    with Criterion(1, "phi of an opaque Drude density and single-mode c-minus"):
        t = np.linspace(0.0, 20.0, 101)
        phi = BosonBathSpec(1.0, [[_Opaque(Drude(0.5, 1.0))]]).phi(t)
        err_phi = np.abs(phi - np.where(t > 0, np.exp(-t), 0.0)).max()
        om, c, beta = 1.3, 0.7, 0.6
        b = BosonBathSpec(beta, DiscreteModes([om], [[c]]))
        ref = 0.5 * c ** 2 * (np.cos(om * t) / np.tanh(0.5 * beta * om) - 1j * np.sin(om * t))
        err_c = np.abs(b.c_minus(t) - ref).max()
        print(f"  phi max err {err_phi:.2e}; c-minus max err {err_c:.2e}")
        assert err_phi <= 1e-6 and err_c <= 1e-10


# 2 ----------------------------------------------------------------------------


def test_criterion_2_kernel_spectrum_detailed_balance():
    with Criterion(2, "kernel spectrum against J and detailed balance"):
        d, beta = Drude(0.5, 1.0), 1.0
        om = np.array([0.25, 0.5, 1.0, 1.5, 2.0, 3.0])
        sp = kernel_spectrum(BosonBathSpec(beta, d), np.concatenate([om, -om])).values
        cp, cm = sp[: om.size], sp[om.size :]
        rep = quantum_fdt_check(cp / 2, d.J(om), beta, omega=om)
        ratio = np.abs(cp / cm / np.exp(beta * om) - 1).max()
        print(f"  FDT max_abs {rep['max_abs']:.2e}; ratio error {ratio:.2e}")
        assert rep["max_abs"] < 1e-6 and ratio < 1e-4


# 3 ----------------------------------------------------------------------------


def test_criterion_3_split_identity():
    with Criterion(3, "response-kernel split identity"):
        worst = 0.0
        t = np.linspace(0.0, 15.0, 301)
        specs = [(bath(), t), (BosonBathSpec(0.7, Drude(0.4, 2.0)), t[1:])]
        for b, tt in specs:
            cm = b.c_minus(tt)
            r = (cm - np.conj(cm)) / 2j + 0.5 * b.phi(tt)
            worst = max(worst, np.abs(r).max())
        print(f"  worst residual {worst:.2e}")
        assert worst < 1e-8


# 4-8 --------------------------------------------------------------------------


def test_criterion_4_field_free_fixture():
    with Criterion(4, "BO-3 field-free fixture"):
        t0 = time.perf_counter()
        out = _verify("task: verify\nfixture: BO-3\n")
        assert out.report.passed and time.perf_counter() - t0 < 120


def test_criterion_5_driven_system_only_fixture():
    with Criterion(5, "BO-2 driven fixture"):
        assert _verify("task: verify\nfixture: BO-2\n").report.passed


def test_criterion_6_driven_both_fixture():
    with Criterion(6, "BO-1 driven fixture on the 50x50 window with mirror check"):
        t0 = time.perf_counter()
        out = _verify("task: verify\nfixture: BO-1\n")
        names = {c.name for c in out.report.checks}
        assert "mirror_identity" in names
        shapes = {v.data.values.shape for v in out.sbet.values() if v.data.values.ndim == 2}
        assert (50, 50) in shapes
        assert out.report.passed and time.perf_counter() - t0 < 600


def test_criterion_7_fermion_fixture():
    with Criterion(7, "RL-1 fermion fixture with equal-time check"):
        out = _verify("task: verify\nfixture: RL-1\n")
        assert any("(t=0)" in c.name for c in out.report.checks)
        assert out.report.passed


def test_criterion_8_classical_fixture():
    with Criterion(8, "CL-1 classical fixture"):
        t0 = time.perf_counter()
        assert _verify("task: verify\nfixture: CL-1\n").report.passed
        assert time.perf_counter() - t0 < 300


# 9 ----------------------------------------------------------------------------


def test_criterion_9_hbar_convergence():
    with Criterion(9, "quantum kernels approach the classical limit at order two"):
        rep = hbar_convergence(BosonBathSpec(1.0, Drude(0.5, 1.0)), TimeGrid(0.5, 0.05, 191), [1.0, 0.5, 0.25, 0.125])
        print(f"  real order {rep['real_order']:.3f}")
        assert rep["real_order"] >= 1.9


# 10 ---------------------------------------------------------------------------


def test_criterion_10_uncoupled_limits():
    with Criterion(10, "uncoupled and undriven limits are exactly zero or bare"):
        t5 = TimeGrid.span(0, 5, DT).times
        u = [bath(eta=0.0, mu=1.0), bath(eta=0.0, mu=0.5)]
        zeros, bare = [], []

        ff = run_field_free(u, stationary_inputs(), 5.0)
        zeros += [s.values for s in (*ff.FQ.values(), *ff.QF.values())]
        bare.append((ff.FF[(0, 0, 0, 0)].values, u[0].c_minus(t5)))
        zeros.append(ff.FF[(0, 0, 1, 0)].values)

        C, drive, grids = driven_inputs(0.0)
        dr = run_driven(u, drive, C, grids)
        zeros += [f.values for f in (*dr.FQ.values(), *dr.QF.values(), *dr.means.values())]
        o = grids.output.times
        bare.append((dr.FF[(0, 0, 0, 0)].values, 1j * u[0].c_minus(o[:, None] - o[None, :])))

        C0 = SystemCorrelations(C.grid, C.stationary, window=C.window, R_QQ=C.R_QQ, means=np.zeros(C.window.n))
        zeros += [s.values for s in bath_mean([bath()], drive, C0).values()]

        L, _, orc = fermion_setup(scale=0.0, t_relax=0.0, t_stop=10.0)
        g = orc[("SS", -1, 0, 0)].grid
        FC = FermiSystemCorrelations(g, orc[("SS", -1, 0, 0)].values[None, None], orc[("SS", 1, 0, 0)].values[None, None])
        fr = run_fermion(L, FC, 5.0)
        zeros += [s.values for s in (*fr.AS.values(), *fr.SA.values())]
        for (s, a, ap, _, _), ser in fr.AA.items():
            ref = np.exp(-s * 1j * L[a].chemical_potential * t5) * L[a].c_sigma(s, t5) if a == ap else np.zeros_like(t5)
            bare.append((ser.values, ref))

        cg, cC, cX = classical_inputs()
        cr = run_classical(u, cC, cX, cg, 5.0)
        zeros += [s.values for k in ("FQ", "QF", "chiFQ") for s in cr[k].values()]
        bare.append((cr["FF"][(0, 0, 0, 0)].values.real, u[0].c_classical(t5)))

        F = ("F", 0, 0)
        Q = ("Q", 0)
        oc = boson_stationary_correlations(QuadraticBosonModel([1.0], [u[0]]), [Q, F], TimeGrid.span(0, 5, DT))
        zeros.append(oc[(F, Q)].values)
        bare.append((oc[(F, F)].values, u[0].c_minus(t5)))
        fo = fermion_correlations(QuadraticFermionModel([[0.2]], L), TimeGrid.span(0, 5, DT), 0.0)
        zeros += [s.values for k, s in fo.items() if k != "_diagnostics" and k[0] in ("aS", "Sa")]

        zmax = max(np.abs(z).max() for z in zeros)
        bmax = max(np.abs(np.asarray(a) - np.asarray(b)).max() for a, b in bare)
        print(f"  {len(zeros)} zero blocks, max {zmax:.1e}; {len(bare)} bare blocks, max dev {bmax:.1e}")
        assert zmax <= 1e-14 and bmax <= 1e-14


# 11 ---------------------------------------------------------------------------


@pytest.mark.parametrize("fixture", ["BO-3", "RL-1"])
def test_criterion_11_time_step_convergence(fixture):
    with Criterion(11, f"{fixture} residual shrinks when dt halves"):
        coarse = _worst(_verify(f"task: verify\nfixture: {fixture}\ngrid: {{dt: 0.04}}\n").report)
        fine = _worst(_verify(f"task: verify\nfixture: {fixture}\ngrid: {{dt: 0.02}}\n").report)
        print(f"  worst rel_l2 dt=0.04 {coarse:.3e}; dt=0.02 {fine:.3e}; ratio {coarse / fine:.2f}")
        assert coarse / fine >= 1.8
