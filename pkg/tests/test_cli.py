import json

import pytest

from n2nskip.cli import main, parse_overrides
from n2nskip.errors import ConfigError

SMALL = {
    "name": "cli",
    "layer_dims": [8, 12, 10, 6, 3],
    "seeds": [0],
    "dataset": {"kind": "blobs", "classes": 3, "dim": 8, "per_class": 30, "spread": 0.3, "seed": 1},
    "hyperparams": {"epochs": 3, "batch_size": 32},
    "analysis": {"t_grid": [0.0, 0.1, 1.0, 10.0, 100.0]},
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return p


@pytest.fixture
def trained(tmp_path, config):
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "o"),
                 "--method", "n2nskip-rp", "--density", "0.5"]) == 0
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "o"),
                 "--name", "ref"]) == 0
    return tmp_path / "o"


def test_parse_overrides():
    got = parse_overrides(["--analysis.t", "2.5", "--seeds=[1,2]", "--name", "run-a", "--K-percent", "0.3"])
    assert got == {"analysis.t": 2.5, "seeds": [1, 2], "name": "run-a", "K_percent": 0.3}
    with pytest.raises(ConfigError):
        parse_overrides(["--dangling"])
    with pytest.raises(ConfigError):
        parse_overrides(["loose"])


def test_gen_data(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["gen-data", "--classes", "3", "--dim", "4", "--per-class", "10", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "f0,f1,f2,f3,label" and len(lines) == 31
    assert "24 train + 6 test" in capsys.readouterr().out


def test_train_writes_artifacts(trained, capsys):
    run = trained / "cli" / "n2nskip-rp-d0.5-s0"
    metrics = json.loads((run / "metrics.json").read_text())
    assert metrics["method"] == "n2nskip-rp" and metrics["skip_nnz"] > 0
    assert (trained / "cli" / "manifest.json").is_file()


def test_env_output_root(tmp_path, config, monkeypatch):
    monkeypatch.setenv("N2NSKIP_OUT", str(tmp_path / "env"))
    assert main(["train", "--config", str(config), "--method", "rp", "--density", "0.5"]) == 0
    assert (tmp_path / "env" / "cli" / "rp-d0.5-s0" / "metrics.json").is_file()


def test_sweep(tmp_path, config):
    assert main(["sweep", "--config", str(config), "--out", str(tmp_path),
                 "--methods", '["rp","csp"]', "--densities", "[0.5]"]) == 0
    manifest = json.loads((tmp_path / "cli" / "manifest.json").read_text())
    assert sorted(r["dir"] for r in manifest["runs"]) == ["csp-d0.5-s0", "rp-d0.5-s0"]


def test_sweep_needs_methods(tmp_path, config):
    assert main(["sweep", "--config", str(config), "--out", str(tmp_path)]) == 2


def test_analyze_and_scree(trained, tmp_path):
    ckpt = trained / "cli" / "n2nskip-rp-d0.5-s0" / "checkpoint.json"
    ref = trained / "ref" / "baseline-d1-s0" / "checkpoint.json"
    out = tmp_path / "a.json"
    assert main(["analyze", str(ckpt), "--reference", str(ref), "--out", str(out), "--t", "1.5"]) == 0
    doc = json.loads(out.read_text())
    assert doc["n"] == 39 and doc["F"] > 0 and len(doc["signature"]) == 39
    assert sum(doc["signature"]) == pytest.approx(8.0, abs=1e-8)
    metrics = json.loads((ckpt.parent / "metrics.json").read_text())
    assert doc["F"] == pytest.approx(metrics["F"], abs=1e-12)
    scree = tmp_path / "s.csv"
    assert main(["scree", str(ckpt), "--out", str(scree), "--steps", "11", "--K", "5"]) == 0
    lines = scree.read_text().splitlines()
    assert lines[0] == "t,alpha" and len(lines) == 12 and lines[1] == f"0,{5 / 38:.9g}"


def test_export_adjacency(trained, tmp_path):
    ckpt = trained / "cli" / "n2nskip-rp-d0.5-s0" / "checkpoint.json"
    out = tmp_path / "e.txt"
    assert main(["export-adjacency", str(ckpt), "--binary", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    metrics = json.loads((ckpt.parent / "metrics.json").read_text())
    assert lines[0] == "n 39"
    assert len(lines) - 1 == metrics["seq_nnz"] + metrics["skip_nnz"]


def test_compare(trained, tmp_path, config):
    assert main(["train", "--config", str(config), "--out", str(trained),
                 "--name", "seq", "--method", "rp", "--density", "0.5"]) == 0
    out = tmp_path / "c.json"
    assert main(["compare", str(trained / "cli"), str(trained / "seq"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["seeds"] == [0] and len(doc["F_delta"]) == 1
    assert main(["compare", str(trained / "cli"), str(trained / "cli")]) == 0


def test_exit_config_error(tmp_path, config, capsys):
    assert main(["train", "--config", str(config), "--out", str(tmp_path), "--method", "magic"]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2


def test_exit_infeasible(tmp_path, config, capsys):
    code = main(["train", "--config", str(config), "--out", str(tmp_path), "--method", "rp", "--density", "0.01"])
    assert code == 3
    assert "minimum feasible density" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_numeric(tmp_path, config, capsys):
    code = main(["train", "--config", str(config), "--out", str(tmp_path), "--hyperparams.lr0", "1e12"])
    assert code == 4
    assert "non-finite" in capsys.readouterr().err


def test_unknown_flag_for_analysis_commands(trained):
    with pytest.raises(SystemExit) as info:
        main(["export-adjacency", "x.json", "--nope", "1"])
    assert info.value.code == 2
