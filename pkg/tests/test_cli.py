import json

import numpy as np
import pytest
from scipy.integrate import quad

from sbet.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VERIFY_FAIL, main
from sbet.io import read_record

BATH_CORR = """\
task: bath-corr
model:
  kind: boson
  baths:
    - beta: 1.0
      spectral: {type: drude, reorganization: 0.5, cutoff: 1.0, frequency_cutoff: 20.0}
grid: {dt: 0.1, t_max: 2.0}
"""

ETA0 = """\
task: verify
fixture: BO-3
model:
  baths:
    - name: drude
      beta: 1.0
      eta: [0.0]
      spectral: {type: drude, reorganization: 0.3, cutoff: 1.0}
      discretize: {n: 400, max_frequency: 10.0, taper: 4.0}
"""


def cfg(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def runs(out):
    return sorted(p for p in out.iterdir() if p.is_dir())


def test_bath_corr_writes_run_dir(tmp_path, capsys):
    out = tmp_path / "out"
    c = cfg(tmp_path, BATH_CORR)
    assert main(["bath-corr", "--config", c, "--out", str(out)]) == EXIT_OK
    assert main(["bath-corr", "--config", c, "--out", str(out)]) == EXIT_OK
    first, second = runs(out)
    assert first.name.endswith("-001") and second.name.endswith("-002")
    assert first.name.startswith("bath-corr-custom-")
    for d in (first, second):
        assert (d / "config.yaml").is_file() and (d / "report.json").is_file() and (d / "timing.json").is_file()
    phi = read_record(first / "bath" / "phi_a0_v0_v0.csv")
    t = phi.data.times
    # band-limited Drude reference, J = 2 lam gam w / (w^2 + gam^2) up to the hard cutoff
    J = lambda w: w / (w ** 2 + 1.0)
    ref = [2 / np.pi * quad(J, 0, 20.0, weight="sin", wvar=x)[0] for x in t]
    np.testing.assert_allclose(phi.data.values.real, ref, atol=1e-6)


def test_config_error_exit_code_and_no_run_dir(tmp_path, capsys):
    out = tmp_path / "out"
    c = cfg(tmp_path, BATH_CORR.replace("beta: 1.0", "beta: -1.0"))
    assert main(["bath-corr", "--config", c, "--out", str(out)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "model.baths[0].beta" in err and "run.yaml:5:" in err
    assert not out.exists()


def test_unknown_key_exit_code(tmp_path, capsys):
    c = cfg(tmp_path, BATH_CORR + "grdi: {}\n")
    assert main(["bath-corr", "--config", c, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "grdi" in capsys.readouterr().err


def test_numerical_error_exit_code(tmp_path, capsys):
    out = tmp_path / "out"
    c = cfg(tmp_path, "task: verify\nfixture: BO-3\ntail: {t_tail: 1.0}\n")
    assert main(["sbet-boson", "--config", c, "--out", str(out)]) == EXIT_NUMERICAL
    (run,) = runs(out)
    err = json.loads((run / "error.json").read_text())
    assert err["error"] == "NumericalError" and err["exit_code"] == EXIT_NUMERICAL
    assert "t_tail" in err["diagnostic"]


@pytest.mark.slow
def test_verify_pass_and_deterministic_report(tmp_path, capsys):
    out = tmp_path / "out"
    c = cfg(tmp_path, "task: verify\nfixture: BO-3\n")
    assert main(["verify", "--config", c, "--out", str(out)]) == EXIT_OK
    assert main(["verify", "--config", c, "--out", str(out)]) == EXIT_OK
    a, b = runs(out)
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["verdict"] == "pass" and "seconds" not in json.dumps(rep)
    assert "verdict: pass" in capsys.readouterr().out


@pytest.mark.slow
def test_corrupted_kernel_fails_verify(tmp_path, capsys):
    c = cfg(tmp_path, "task: verify\nfixture: BO-3\nverify: {corrupt_kernel: 0.9}\n")
    assert main(["verify", "--config", c, "--out", str(tmp_path / "o")]) == EXIT_VERIFY_FAIL
    assert "verdict: fail" in capsys.readouterr().out


@pytest.mark.slow
def test_uncoupled_fixture_gives_exact_zero_diffs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg(tmp_path, ETA0), "--out", str(out)]) == EXIT_OK
    (run,) = runs(out)
    for name in ("C_FQ_a0_v0_v0", "C_QF_a0_v0_v0"):
        assert not np.any(read_record(run / "diff" / f"{name}.csv").data.values)
        assert not np.any(read_record(run / "sbet" / f"{name}.csv").data.values)


@pytest.mark.slow
def test_oracle_inputs_feed_sbet_bitwise(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["oracle", "--config", cfg(tmp_path, "task: verify\nfixture: BO-3\n"), "--out", str(out)]) == EXIT_OK
    (orun,) = runs(out)
    inp = sorted((orun / "inputs").glob("C_QQ*.csv"))
    assert inp
    files = ", ".join(str(p) for p in inp)
    c = cfg(tmp_path, f"task: verify\nfixture: BO-3\ninputs: {{files: [{files}]}}\n", "sb.yaml")
    assert main(["sbet-boson", "--config", c, "--out", str(tmp_path / "o2")]) == EXIT_OK
    (srun,) = runs(tmp_path / "o2")
    rep = json.loads((srun / "report.json").read_text())
    assert rep["ingestion"]["symmetry_residual"] < 1e-12
    ref = read_record(orun / "oracle" / "C_FQ_a0_v0_v0.csv").data.values
    got = read_record(srun / "sbet" / "C_FQ_a0_v0_v0.csv").data.values
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 0.02


def test_cli_seed_override_changes_hash(tmp_path, capsys):
    out = tmp_path / "out"
    c = cfg(tmp_path, BATH_CORR)
    main(["bath-corr", "--config", c, "--out", str(out)])
    main(["bath-corr", "--config", c, "--out", str(out), "--seed", "4"])
    a, b = runs(out)
    assert a.name.split("-")[-2] != b.name.split("-")[-2]
