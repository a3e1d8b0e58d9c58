import json

import pytest
from hypothesis import given, strategies as st

from rpde.cli import PRESETS, RunConfig, build_functional, build_model, emit_config, execute, main, parse_config
from rpde.errors import ConfigError
from rpde.fem import H1SeminormSquared
from rpde.fields import GrfLognormal, ScalarLognormal

SMALL = "M: 120\nM0: 60\nn_max: 4\nlevel_offset: 1\nthreads: 1\n"


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.ratio, cfg.n_min, cfg.seed, cfg.tol) == (0.125, 1, 0, 1e-10)


@pytest.mark.parametrize(
    "text, key",
    [
        ("ratio: 1.5", "ratio"),
        ("ratio: 0", "ratio"),
        ("M: abc", "M"),
        ("M: 2.5", "M"),
        ("seed: true", "seed"),
        ("tol: -1e-3", "tol"),
        ("model: other", "model"),
        ("colour: red", "colour"),
        ("levels: [1, x]", "levels"),
        ("n_min: 3\nn_max: 2", "n_max"),
        ("preset: example99", "preset"),
    ],
)
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=f"^{key}:"):
        parse_config(text)


def test_malformed_documents():
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config("a: [")


def test_int_promotes_to_float_and_list():
    cfg = parse_config("correlation: 1\nallocation: 500\n")
    assert cfg.correlation == 1.0 and isinstance(cfg.correlation, float)
    assert cfg.allocation == [500]


def test_presets():
    cfg = parse_config("", preset="example41")
    assert isinstance(build_model(cfg), ScalarLognormal)
    assert isinstance(build_functional(cfg), H1SeminormSquared)
    assert (cfg.M, cfg.M0, cfg.baseline) == (10000, 10000, "baseline")
    cfg = parse_config("preset: example42\nM: 500\n")
    model = build_model(cfg)
    assert isinstance(model, GrfLognormal) and model.correlation == 0.03 and model.forcing == 1.0
    assert cfg.M == 500 and cfg.M0 == 10000
    assert set(PRESETS) == {"example41", "example42"}


def test_round_trip_defaults_and_presets():
    for cfg in (RunConfig(), parse_config("", "example41"), parse_config(SMALL)):
        assert parse_config(emit_config(cfg)) == cfg


@given(
    st.floats(1e-3, 0.999),
    st.integers(0, 2**31),
    st.floats(1e-14, 0.5),
    st.lists(st.integers(1, 8), min_size=1, max_size=5),
    st.sampled_from(["scalar", "grf"]),
)
def test_round_trip_property(ratio, seed, tol, levels, model):
    cfg = RunConfig(ratio=ratio, seed=seed, tol=tol, levels=levels, model=model)
    assert parse_config(emit_config(cfg)) == cfg


def _run(tmp_path, text, name, *extra):
    cfg_path = tmp_path / f"{name}.yaml"
    cfg_path.write_text(text)
    out = tmp_path / name
    return main(["run", str(cfg_path), "--out", str(out), *extra]), out


def test_estimate_artifacts_are_reproducible(tmp_path, capsys):
    code, out1 = _run(tmp_path, SMALL, "a")
    assert code == 0
    assert "+/-" in capsys.readouterr().out
    code, out2 = _run(tmp_path, SMALL, "b")
    assert code == 0
    for name in ("levels.csv", "histogram.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    report = json.loads((out1 / "report.json").read_text())
    assert report["schema"] == 1 and report["M"] == 120
    assert report["config"]["level_offset"] == 1
    assert len((out1 / "histogram.csv").read_text().splitlines()) == 51
    assert (out1 / "levels.csv").read_text().startswith("level,count,p_n,mean_diff_sq,variance_term\n")


def test_seed_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("RPDE_SEED", "17")
    code, out = _run(tmp_path, SMALL, "env")
    assert code == 0 and json.loads((out / "report.json").read_text())["config"]["seed"] == 17
    code, out = _run(tmp_path, SMALL, "flag", "--seed", "5")
    assert code == 0 and json.loads((out / "report.json").read_text())["config"]["seed"] == 5
    monkeypatch.setenv("RPDE_SEED", "x")
    code, out = _run(tmp_path, SMALL, "badenv")
    assert code != 0 and not out.exists()


def test_invalid_config_leaves_no_artifacts(tmp_path, capsys):
    code, out = _run(tmp_path, "ratio: 1.5\n", "bad")
    assert code != 0
    assert not out.exists()
    assert "ratio" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == [tmp_path / "bad.yaml"]
    assert main(["run", str(tmp_path / "missing.yaml"), "--out", str(out)]) != 0


def test_computation_failure_leaves_no_artifacts(tmp_path):
    # GRF models have no closed form, so the MSE study fails after validation
    code, out = _run(tmp_path, "experiment: mse_study\nmodel: grf\nreplicates: 2\nlevels: [1, 2, 3]\n", "fail")
    assert code == 3 and not out.exists()


def test_other_experiments(tmp_path):
    cfg = parse_config("experiment: mse_study\nlevels: [1, 2, 3]\nreplicates: 20\n")
    rep = execute(cfg, tmp_path / "mse", threads=1)
    assert rep["slope"] < 0
    assert (tmp_path / "mse" / "rates.csv").read_text().startswith("level,mse,cost\n1,")

    cfg = parse_config("experiment: cost_study\nlevels: [1, 2, 3]\nreplicates: 2\nrepeats: 1\n")
    execute(cfg, tmp_path / "cost", threads=1)
    assert len((tmp_path / "cost" / "rates.csv").read_text().splitlines()) == 4

    cfg = parse_config("experiment: baseline\nM0: 20\nlevel_offset: 1\n")
    rep = execute(cfg, tmp_path / "base", threads=1)
    assert rep["mean"] > 0 and rep["stderr"] > 0

    cfg = parse_config("experiment: mlmc_ref\ntruncation: 3\nallocation: [20, 10, 5]\nbaseline: plain\n")
    rep = execute(cfg, tmp_path / "mlmc", threads=1)
    assert rep["levels"]["3"]["count"] == 5
    assert (tmp_path / "mlmc" / "levels.csv").read_text().startswith("level,count,delta,variance\n")
