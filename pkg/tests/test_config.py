import pytest

from sbet.config import (
    ConfigError,
    config_hash,
    config_to_dict,
    dump_config,
    fixture_names,
    fixture_text,
    load_config_text,
    parse_config,
    with_overrides,
)

MINIMAL = """\
task: bath-corr
model:
  kind: boson
  baths:
    - beta: 1.0
      spectral: {type: drude, reorganization: 0.5, cutoff: 1.0}
"""


def test_minimal_config_defaults():
    c = load_config_text(MINIMAL)
    assert c.seed == 0 and c.grid.dt == 0.02 and c.tail.eps == 1e-6
    assert c.model.baths[0].eta == (1.0,)
    assert c.fixture is None


def test_negative_beta_names_field_and_location():
    with pytest.raises(ConfigError) as exc:
        load_config_text(MINIMAL.replace("beta: 1.0", "beta: -1.0"), "x.yaml")
    assert "model.baths[0].beta" in str(exc.value)
    assert exc.value.location == ("x.yaml", 5, 13)


def test_unknown_key_is_located():
    with pytest.raises(ConfigError) as exc:
        load_config_text(MINIMAL + "grid: {dt: 0.02, tmaxx: 3}\n", "y.yaml")
    assert "tmaxx" in str(exc.value) and exc.value.location[1] == 7


def test_wrong_type_rejected():
    with pytest.raises(ConfigError, match="dt"):
        load_config_text(MINIMAL + "grid: {dt: fast}\n")


def test_unknown_task_rejected():
    with pytest.raises(ConfigError):
        load_config_text(MINIMAL.replace("bath-corr", "teleport"))


@pytest.mark.parametrize("name", ["BO-1", "BO-2", "BO-3", "RL-1", "CL-1"])
def test_fixtures_resolve(name):
    assert name in fixture_names()
    c = load_config_text(f"task: verify\nfixture: {name}\n")
    assert c.fixture == name
    assert fixture_text(name)


def test_unknown_fixture():
    with pytest.raises(ConfigError, match="fixture"):
        load_config_text("task: verify\nfixture: XX-9\n")


def test_fixture_override_merges():
    c = load_config_text("task: verify\nfixture: BO-3\ngrid: {dt: 0.04}\n")
    assert c.grid.dt == 0.04 and c.grid.t_max == 10.0
    assert c.model.baths[0].discretize.n == 400


def test_hash_is_stable_and_ignores_out():
    a = load_config_text(MINIMAL)
    b = load_config_text("# comment\n" + MINIMAL + "out: elsewhere\n")
    assert config_hash(a) == config_hash(b)
    c = load_config_text(MINIMAL + "seed: 5\n")
    assert config_hash(a) != config_hash(c)


def test_dump_round_trip(tmp_path):
    c = load_config_text("task: verify\nfixture: BO-1\n")
    p = tmp_path / "echo.yaml"
    p.write_text(dump_config(c))
    assert config_to_dict(parse_config(p)) == config_to_dict(c)


def test_overrides():
    c = load_config_text(MINIMAL)
    d = with_overrides(c, task="verify", seed=9, dt=0.01, t_max=4.0, out="o")
    assert (d.task, d.seed, d.grid.dt, d.grid.t_max, d.out) == ("verify", 9, 0.01, 4.0, "o")
    with pytest.raises(ConfigError):
        with_overrides(c, dt=-1.0)


def test_fermion_model_needs_leads():
    with pytest.raises(ConfigError):
        load_config_text("task: sbet-fermion\nmodel: {kind: fermion, impurity: [[0.2]], initial: {kind: factorized}}\n")


def test_missing_input_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.csv"):
        load_config_text("task: sbet-boson\nfixture: BO-3\ninputs: {files: [nope.csv]}\n", base_dir=tmp_path)
