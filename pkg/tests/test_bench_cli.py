import json

import numpy as np
import pytest

from ivlingam import zoo
from ivlingam.bench import METHODS, ExperimentConfig, run_benchmark, run_trial
from ivlingam.cli import main
from ivlingam.data import Dataset
from ivlingam.errors import InputError
from ivlingam.io import load_dataset, load_graph, write_dataset, write_json, write_report
from ivlingam.sem import TemplateConfig

SMALL = TemplateConfig(n_w=4, n_zf=1, n_zc=1, n_zb=1)


def _small_cfg(**kw) -> ExperimentConfig:
    base = dict(template=SMALL, sample_sizes=(200,), confounder_levels=(0.25, 0.5), trials=2)
    return ExperimentConfig(**{**base, **kw})


# -- benchmark -----------------------------------------------------------------------


def test_report_byte_identical(tmp_path):
    cfg = _small_cfg(trials=1, master_seed=4)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_report(run_benchmark(cfg), a)
    write_report(run_benchmark(cfg), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".txt").read_bytes() == b.with_suffix(".txt").read_bytes()


def test_method_order_invariant():
    fwd = run_benchmark(_small_cfg(methods=("NAIVE1", "ORACLE", "SISVIVE")))
    rev = run_benchmark(_small_cfg(methods=("SISVIVE", "ORACLE", "NAIVE1")))
    assert fwd.to_json() == rev.to_json()


def test_trial_depends_only_on_indices():
    full = _small_cfg(trials=3)
    sub = _small_cfg(trials=1, methods=("NAIVE1", "ORACLE"))
    r = run_trial(full, 1, 2)
    assert run_trial(sub, 1, 2) == {k: r[k] for k in ("NAIVE1", "ORACLE")}
    assert run_trial(full, 1, 2) != run_trial(full, 1, 1)


def test_report_shape():
    cfg = _small_cfg()
    rep = run_benchmark(cfg).to_dict()
    assert set(rep["provenance"]) == {"master_seed", "config_hash"}
    assert list(rep["cells"]) == list(METHODS)
    for row in rep["cells"].values():
        assert set(row) == {"200/0.25", "200/0.50"}
        for cell in row.values():
            assert cell["trials"] + cell["failures"] == cfg.trials
            assert all(e >= 0 for e in cell["errors"])


def test_config_validation():
    with pytest.raises(InputError):
        ExperimentConfig(trials=0)
    with pytest.raises(InputError):
        ExperimentConfig(methods=("ORACLE", "MAGIC"))
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"trails": 3})
    cfg = _small_cfg()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).digest() == cfg.digest()


@pytest.mark.slow
def test_full_benchmark_smoke():
    rep = run_benchmark(ExperimentConfig(trials=5))
    assert len(rep.cells) == 9
    for row in rep.cells.values():
        assert len(row) == 6
        assert all(c.trials + c.failures == 5 for c in row.values())


# -- io --------------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(["W", "X", "Y"], rng.normal(size=(3, 3)))
    p = tmp_path / "d.csv"
    write_dataset(d, p)
    back = load_dataset(p)
    assert back.n == 3 and back.columns == ("W", "X", "Y")
    np.testing.assert_allclose(back.values, d.values, rtol=0, atol=1e-15)
    np.testing.assert_allclose(back.values.mean(axis=0), 0, atol=1e-15)


@pytest.mark.parametrize("text, msg", [
    ("W,X,W\n1,2,3\n", ":1: duplicate"),
    ("W,,Y\n1,2,3\n", ":1: missing"),
    ("W,X,Y\n1,2,3\n1,b,3\n", ":3: non-numeric cell 'b'"),
    ("W,X,Y\n1,2,3\n1,2\n", ":3: expected 3 fields"),
    ("W,X,Y\n1,,3\n", ":2: non-numeric"),
    ("W,X,Y\n", "no data rows"),
])
def test_csv_errors(tmp_path, text, msg):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=msg):
        load_dataset(p)


def test_graph_json_g1(tmp_path):
    p = tmp_path / "g1.json"
    write_json(zoo.single_instrument().to_dict(), p)
    g = load_graph(p)
    assert len(g.observed) + len(g.latent) == 4 and list(g.latent) == ["U"]
    assert len(g.edges) == 4


def test_graph_cycle_error(tmp_path):
    p = tmp_path / "cyc.json"
    write_json({"vertices": [{"name": v} for v in "ABC"], "edges": [["A", "B"], ["B", "C"], ["C", "A"]]}, p)
    with pytest.raises(InputError, match="cyclic") as exc:
        load_graph(p)
    assert all(v in str(exc.value) for v in "ABC")


def test_graph_bad_json(tmp_path):
    p = tmp_path / "g.json"
    p.write_text('{"vertices": [\n  {"name": "A"},\n}')
    with pytest.raises(InputError, match=":3:"):
        load_graph(p)


# -- cli -------------------------------------------------------------------------------


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def small_data(tmp_path):
    cfg = tmp_path / "t.json"
    write_json({"n_w": 3, "n_zf": 1, "n_zc": 1, "n_zb": 1, "n": 600}, cfg)
    out = tmp_path / "d.csv"
    assert _run("simulate", "--config", cfg, "--out", out, "--graph-out", tmp_path / "g.json", "--seed", 3) == 0
    return out


def test_cli_simulate_deterministic(tmp_path, small_data, capsys):
    again = tmp_path / "again.csv"
    cfg = tmp_path / "t.json"
    _run("simulate", "--config", cfg, "--out", again, "--seed", 3)
    assert again.read_bytes() == small_data.read_bytes()
    assert load_graph(tmp_path / "g.json").observed


@pytest.mark.parametrize("method", ["alg1", "bsisvive", "bsisnaive", "sisvive", "tsls", "naive1", "naive2", "naive3"])
def test_cli_discover_deterministic(tmp_path, small_data, method):
    outs = [tmp_path / f"{method}{i}.json" for i in range(2)]
    for o in outs:
        assert _run("discover", "--data", small_data, "--method", method, "--n-perm", 100, "--n-boot", 100,
                    "--max-z", 1, "--out", o) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert "dce" in json.loads(outs[0].read_text())


def test_cli_oracle(tmp_path, capsys):
    p = tmp_path / "g1.json"
    write_json(zoo.single_instrument().to_dict(), p)
    assert _run("oracle", "--graph", p, "--check", "iv-criteria", "--args", "w=W", "x=X", "y=Y") == 0
    assert json.loads(capsys.readouterr().out)["result"] is True
    assert _run("oracle", "--graph", p, "--check", "dsep", "--args", "A=W", "B=U", "S=X") == 0
    assert json.loads(capsys.readouterr().out)["result"] is False


def test_cli_bench_deterministic(tmp_path):
    cfg = tmp_path / "b.json"
    write_json({"template": {"n_w": 3, "n_zf": 1, "n_zc": 1, "n_zb": 1}, "sample_sizes": [150],
                "confounder_levels": [0.5], "methods": ["NAIVE1", "ORACLE", "B-SISNAIVE"]}, cfg)
    outs = [tmp_path / f"r{i}.json" for i in range(2)]
    for o in outs:
        assert _run("bench", "--config", cfg, "--trials", 2, "--seed", 1, "--out", o) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert outs[0].with_suffix(".txt").read_bytes() == outs[1].with_suffix(".txt").read_bytes()


def test_cli_exit_codes(tmp_path, small_data, capsys):
    assert _run("discover", "--data", tmp_path / "missing.csv") == 2
    assert _run("discover", "--data", small_data, "--treatment", "Q") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("W,X,Y\n1,2,x\n")
    assert _run("discover", "--data", bad) == 2
    assert "bad.csv:2" in capsys.readouterr().err
    # an instrument orthogonal to X after centering makes TSLS fail numerically
    weak = tmp_path / "weak.csv"
    weak_data = Dataset(["W", "X", "Y"], np.array([[1.0, 1, 0], [-1, 1, 1], [1, -1, 2], [-1, -1, 0]]))
    write_dataset(weak_data, weak)
    assert _run("discover", "--data", weak, "--method", "tsls") == 3
    assert "numerical failure" in capsys.readouterr().err
