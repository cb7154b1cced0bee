import json
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loggas import runner
from loggas.cli import main
from loggas.config import KINDS, SCHEMA, ExperimentConfig, describe_schema
from loggas.errors import ConfigError, PartialResultsError, ReproducibilityError
from loggas.rng import check_seed, stream


def _value(spec):
    if spec.choices:
        base = st.sampled_from(spec.choices)
    elif spec.type == "int":
        base = st.integers(0 if spec.minimum is None else int(spec.minimum), 10 ** 6)
    elif spec.type == "float":
        base = st.floats(-1e6 if spec.minimum is None else spec.minimum, 1e6, allow_nan=False)
    elif spec.type == "bool":
        base = st.booleans()
    else:
        base = st.text(max_size=8)
    return st.none() | base if spec.nullable else base


@st.composite
def configs(draw):
    kind = draw(st.sampled_from(KINDS))
    names = draw(st.sets(st.sampled_from(sorted(SCHEMA[kind]))))
    params = {n: draw(_value(SCHEMA[kind][n])) for n in names}
    seed = draw(st.integers(0, 2 ** 64 - 1))
    workers = draw(st.integers(1, 16))
    return ExperimentConfig(kind, params, seed, workers, draw(st.none() | st.just("out/dir")))


@settings(max_examples=100)
@given(cfg=configs())
def test_config_round_trip(cfg):
    text = cfg.to_text()
    again = ExperimentConfig.from_text(text)
    assert again == cfg
    assert again.to_text() == text
    assert again.hash() == cfg.hash()


def test_hash_ignores_workers_and_output():
    a = ExperimentConfig("dbm", {"K": 8}, 5)
    assert a.hash() == a.replace(workers=4, output="x").hash()
    assert a.hash() != a.replace(seed=6).hash()
    assert a.hash() != a.replace(params={"K": 9}).hash()


@pytest.mark.parametrize("text, path", [
    ('kind = "dbm"\ndbm.K = 0\n', "dbm.K"),
    ('kind = "dbm"\ndbm.K = 1.5\n', "dbm.K"),
    ('kind = "dbm"\ndbm.bogus = 1\n', "dbm.bogus"),
    ('kind = "dbm"\nsample.N = 10\n', "sample.N"),
    ('kind = "sample"\nsample.ensemble = "gue"\n', "sample.ensemble"),
    ('kind = "stats"\nseed = -1\n', "seed"),
    ('kind = "stats"\nseed = 18446744073709551616\n', "seed"),
    ('kind = "wat"\n', "kind"),
    ('seed = 1\n', "kind"),
    ('kind = "dbm"\ndbm.K = 4\ndbm.K = 5\n', "dbm.K"),
    ('kind = "dbm"\ndbm.T = [1\n', "dbm.T"),
    ('kind = "dbm"\nworkers = 0\n', "workers"),
])
def test_config_errors_carry_path(text, path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text(text)
    assert info.value.path == path


def test_schema_lists_every_key():
    text = describe_schema()
    for kind, schema in SCHEMA.items():
        for name in schema:
            assert f"{kind}.{name}" in text


def test_streams():
    a = stream(7, 0).standard_normal(5)
    np.testing.assert_array_equal(a, stream(7, 0).standard_normal(5))
    np.testing.assert_array_equal(
        a, np.random.Generator(np.random.Philox(7)).standard_normal(5))
    assert not np.array_equal(a, stream(7, 1).standard_normal(5))
    assert not np.array_equal(a, stream(8, 0).standard_normal(5))
    # nearby units are uncorrelated
    x, y = stream(7, 1).standard_normal(20000), stream(7, 2).standard_normal(20000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.03
    with pytest.raises(ConfigError):
        check_seed(2 ** 64)
    with pytest.raises(ConfigError):
        check_seed(True)


def _sample_cfg(tmp_path, name, **kw):
    params = {"N": 200, "draws": 100, "beta": 2.0}
    return ExperimentConfig("sample", params, kw.pop("seed", 3), output=str(tmp_path / name), **kw)


def test_sample_run_emits_files(tmp_path):
    rec = runner.run_experiment(_sample_cfg(tmp_path, "a"))
    csvs = [f for f in rec.files if f.endswith(".csv")]
    assert len(csvs) == 100
    assert "summary.json" in rec.files
    m = json.loads((rec.directory / "manifest.json").read_text())
    assert {f["name"] for f in m["files"]} == set(rec.files)
    for f in m["files"]:
        assert runner._sha((rec.directory / f["name"]).read_bytes()) == f["sha256"]
    assert "runtime" not in (rec.directory / "summary.json").read_text()
    first = (rec.directory / csvs[0]).read_text().splitlines()
    assert len(first) == 201
    assert rec.satisfied


def test_worker_count_does_not_change_outputs(tmp_path):
    a = runner.run_experiment(_sample_cfg(tmp_path, "w1", workers=1))
    b = runner.run_experiment(_sample_cfg(tmp_path, "w2", workers=2))
    c = runner.run_experiment(_sample_cfg(tmp_path, "w1b", workers=1))
    assert a.checksums == b.checksums == c.checksums


def test_replay(tmp_path):
    rec = runner.run_experiment(_sample_cfg(tmp_path, "r"))
    again = runner.replay(rec.directory / "manifest.json", tmp_path / "r2")
    assert again.checksums == rec.checksums
    m = json.loads((rec.directory / "manifest.json").read_text())
    m["seed"] += 1
    edited = tmp_path / "edited.json"
    edited.write_text(json.dumps(m))
    with pytest.raises(ReproducibilityError) as info:
        runner.replay(edited, tmp_path / "r3")
    assert info.value.divergent


def test_partial_results(tmp_path, monkeypatch):
    real = runner._execute

    def flaky(kind, params, seed, index, payload):
        if index == 1:
            raise RuntimeError("worker died")
        return real(kind, params, seed, index, payload)

    monkeypatch.setattr(runner, "_execute", flaky)
    cfg = ExperimentConfig("dbm", {"K": 4, "N": 64, "paths": 4, "batch": 2, "T": 0.1, "burn_in": 200},
                           1, output=str(tmp_path / "p"))
    with pytest.raises(PartialResultsError) as info:
        runner.run_experiment(cfg)
    assert info.value.salvaged == [0]
    rec = info.value.record
    assert rec.manifest["partial"] and "1" in rec.manifest["failed_units"]
    assert "summary.json" not in rec.files
    assert all((rec.directory / f).exists() for f in rec.files)


def test_verify_decay_and_replay_in_time(tmp_path):
    cfg = ExperimentConfig("verify", {"suite": "decay", "K": 32}, 11, output=str(tmp_path / "d"))
    rec = runner.run_experiment(cfg)
    assert rec.satisfied
    t0 = time.perf_counter()
    runner.replay(rec.directory, tmp_path / "d2")
    assert time.perf_counter() - t0 < 60


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "s.cfg"
    good.write_text('# tiny run\nkind = "sample"\nsample.N = 20\nsample.draws = 3\n')
    out = tmp_path / "cli"
    assert main(["sample", "--config", str(good), "--seed", "9", "--output", str(out), "--assert"]) == 0
    assert main(["replay", str(out / "manifest.json"), "--output", str(tmp_path / "cli2")]) == 0
    bad = tmp_path / "b.cfg"
    bad.write_text('kind = "sample"\nsample.N = "many"\n')
    assert main(["sample", "--config", str(bad)]) == 2
    assert "sample.N" in capsys.readouterr().err
    assert main(["dbm", "--config", str(good)]) == 2
    strict = tmp_path / "strict.cfg"
    strict.write_text('kind = "sample"\nsample.N = 20\nsample.draws = 3\nsample.ks_max = 0.0\n')
    assert main(["sample", "--config", str(strict), "--output", str(tmp_path / "c3"), "--assert"]) == 1
    m = json.loads((out / "manifest.json").read_text())
    m["seed"] = 10
    (tmp_path / "m.json").write_text(json.dumps(m))
    assert main(["replay", str(tmp_path / "m.json"), "--output", str(tmp_path / "c4")]) == 4
    assert main(["schema"]) == 0
