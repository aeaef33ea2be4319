"""Oracle-versus-SBET verification and its report.

``run_verify`` computes the exact oracle correlations for a fixture, feeds
the oracle's reduced-system inputs through the SBET pipeline, and compares
every output quantity by name. The report is a pure function of the config,
so reruns with the same config and seed produce byte-identical JSON;
wall-clock timing is returned separately.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import RunConfig, config_hash
from .grid import ComplexSeries, TwoTimeField
from .pipeline import Artifact, ClassicalWorkflow, Timer, workflow_for

__all__ = ["QuantityCheck", "VerifyReport", "VerifyOutcome", "relative_l2", "run_verify"]


@dataclass
class QuantityCheck:
    """``value`` is the statistic named by ``metric``, judged against
    ``tolerance``."""

    name: str
    metric: str
    value: float
    tolerance: float
    rel_l2: float | None = None
    max_abs: float | None = None
    passed: bool = False


@dataclass
class VerifyReport:
    task: str
    fixture: str | None
    config_hash: str
    kind: str
    checks: list = field(default_factory=list)
    tail: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class VerifyOutcome:
    report: VerifyReport
    oracle: dict
    sbet: dict
    diffs: dict
    extra: dict
    timing: dict


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def relative_l2(a, ref) -> float:
    """``||a - ref|| / ||ref||``; the absolute norm when ``ref`` vanishes."""
    a, ref = np.asarray(a), np.asarray(ref)
    d = float(np.linalg.norm(a - ref))
    n = float(np.linalg.norm(ref))
    return d / n if n > 0 else d


def _values(art: Artifact) -> np.ndarray:
    return art.data.values


def _diff(s: Artifact, r: Artifact) -> Artifact:
    if isinstance(s.data, TwoTimeField):
        data = TwoTimeField(s.data.outer, s.data.inner, s.data.values - r.data.values)
    else:
        data = ComplexSeries(s.data.grid, s.data.values - r.data.values)
    return Artifact(s.name, data, {**s.meta, "difference": "sbet - oracle"})


def _compare(name, s, r, tol) -> QuantityCheck:
    rl = relative_l2(s, r)
    ma = float(np.abs(np.asarray(s) - np.asarray(r)).max(initial=0.0))
    return QuantityCheck(name, "rel_l2", rl, tol, rl, ma, bool(rl <= tol))


def run_verify(cfg: RunConfig) -> VerifyOutcome:
    timer = Timer()
    with timer("setup"):
        wf = workflow_for(cfg)
    with timer("oracle"):
        inputs, _, reference, odiag = wf.oracle()
    with timer("sbet"):
        sbet, sdiag = wf.sbet(inputs)
    report = VerifyReport(cfg.task, cfg.fixture, config_hash(cfg), wf.kind)
    diffs = {}
    with timer("compare"):
        for name in sorted(sbet):
            if name not in reference:
                continue
            s, r = sbet[name], reference[name]
            report.checks.append(_compare(name, _values(s), _values(r), cfg.verify.tolerance))
            diffs[name] = _diff(s, r)
        missing = sorted(set(reference) - set(sbet))
        if missing:
            report.diagnostics["unmatched_reference"] = missing
        extra = {}
        if wf.kind == "boson" and wf.driven:
            res = float(sdiag["mirror_residual"])
            report.checks.append(
                QuantityCheck("mirror_identity", "abs", res, cfg.verify.mirror_tolerance, None, res, res <= cfg.verify.mirror_tolerance)
            )
        if wf.kind == "fermion":
            _equal_time(report, sbet, reference, cfg.verify.equal_time_tolerance)
        if isinstance(wf, ClassicalWorkflow) and cfg.classical.ensemble:
            with timer("ensemble"):
                est, extra, ediag = wf.ensemble()
            _ensemble_checks(report, est, sbet, cfg)
            report.diagnostics["ensemble"] = ediag
    report.tail = {k: sdiag[k] for k in ("t_tail", "relative_tail", "tail_eps") if k in sdiag}
    report.diagnostics["oracle"] = odiag
    report.diagnostics["sbet"] = {k: v for k, v in sdiag.items() if k not in report.tail}
    report.diagnostics["corrupt_kernel"] = cfg.verify.corrupt_kernel
    return VerifyOutcome(report, reference, sbet, diffs, extra, dict(timer.seconds))


def _equal_time(report: VerifyReport, sbet: dict, reference: dict, tol: float):
    """Lead-impurity correlators at ``t = 0`` (static expectation values)."""
    for name in sorted(sbet):
        if not name.startswith("C_AS_"):
            continue
        s0 = complex(sbet[name].data.values[0])
        r0 = complex(reference[name].data.values[0])
        err = abs(s0 - r0)
        rel = err / abs(r0) if abs(r0) > 0 else err
        report.checks.append(QuantityCheck(f"{name}(t=0)", "rel_abs", rel, tol, None, err, rel <= tol))


def _ensemble_checks(report: VerifyReport, est, sbet: dict, cfg: RunConfig):
    """Largest ``|SBET - ensemble| / stderr`` over ``[0, t_max]``."""
    zmax = cfg.classical.z_max
    i0 = est.grid.index_of(0.0)
    pairs = {"Ccl_FQ_a0_v0_v0": ("F", "Q"), "Ccl_QF_a0_v0_v0": ("Q", "F"), "Ccl_FF_a0_v0_a0_v0": ("F", "F")}
    for name, lab in pairs.items():
        s = sbet[name].data.values.real
        n = min(s.size, est.grid.n - i0)
        e = est.corr[lab][i0:i0 + n]
        se = est.stderr[lab][i0:i0 + n]
        z = float(np.max(np.abs(s[:n] - e) / se))
        report.checks.append(QuantityCheck(f"{name}:ensemble", "max_z", z, zmax, relative_l2(s[:n], e), float(np.abs(s[:n] - e).max()), z <= zmax))
    # classical fluctuation-dissipation: chi_QQ(t) = -beta dC_QQ/dt
    beta = est.spec.beta
    chi = est.chi[("Q", "Q")]
    d = est.dcorr[("Q", "Q")][i0:i0 + chi.size]
    ds = est.dstderr[("Q", "Q")][i0:i0 + chi.size]
    z = float(np.max(np.abs(chi + beta * d) / (beta * ds)))
    report.checks.append(QuantityCheck("classical_fdt", "max_z", z, zmax, None, float(np.abs(chi + beta * d).max()), z <= zmax))
    m, se = est.second_moment_Q
    z = abs(m - est.exact_second_moment_Q) / se
    report.checks.append(QuantityCheck("equipartition_Q2", "max_z", float(z), zmax, None, abs(m - est.exact_second_moment_Q), z <= zmax))
