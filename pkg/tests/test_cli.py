import csv
import json

import numpy as np
import pytest

from adaptive_consensus.cli import main
from adaptive_consensus.scenario import PRESETS


def _scenario(tmp_path, **extra):
    doc = {
        "name": "tiny",
        "network": {"n": 2, "edges": [[1, 2, 1.0]]},
        "agents": [{"terms": [0], "lambda": 2.0}, {"terms": [1], "lambda": 2.0}],
        "horizon": 1.0,
        "ic_range": 1.0,
    }
    doc.update(extra)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.mark.parametrize("preset", PRESETS)
def test_check_presets(preset, capsys):
    assert main(["check", preset]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "spanning tree" in out


def test_check_edgeless(tmp_path, capsys):
    path = _scenario(tmp_path, network={"n": 2, "edges": []})
    assert main(["check", path]) == 1
    assert "spanning tree" in capsys.readouterr().out


def test_check_bad_lambda(tmp_path):
    path = _scenario(tmp_path, agents=[{"terms": [0], "lambda": 0}, {"terms": [1], "lambda": 2.0}])
    assert main(["check", path]) == 2


def test_check_unparseable(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check", str(bad)]) == 2


def test_check_unstable_gains(tmp_path):
    path = _scenario(tmp_path, alpha1=1.0, gains={"gamma1": 0.1, "gamma2": 0.0})
    assert main(["check", path]) == 1


def test_run_fig2_csv(tmp_path):
    code = main(["run", "paper_fig2", "--horizon", "0.5", "--ic-range", "0.5", "--out", str(tmp_path)])
    assert code == 0
    d = tmp_path / "paper_fig2_distributed_seed0"
    with open(d / "trajectory.csv") as fh:
        header = next(csv.reader(fh))
    assert sum(h.startswith("p_") for h in header) == 6
    assert sum(h.startswith("v_") for h in header) == 6
    assert sum(h.startswith("what_") for h in header) == 8
    meta = json.loads((d / "meta.json").read_text())
    assert meta["gains"]["gamma1"] == 15.0 and meta["scenario_hash"]
    assert (d / "plot.gp").exists()


def test_run_ideal_u_equals_v(tmp_path):
    assert main(["run", _scenario(tmp_path), "--scheme", "ideal", "--out", str(tmp_path)]) == 0
    data = np.genfromtxt(tmp_path / "tiny_ideal_seed0" / "trajectory.csv", delimiter=",", names=True)
    np.testing.assert_array_equal(data["U"], data["V"])


def test_seed_changes_truth_not_gains(tmp_path):
    metas = []
    for seed in (1, 2):
        assert main(["run", _scenario(tmp_path), "--seed", str(seed), "--out", str(tmp_path)]) == 0
        metas.append(json.loads((tmp_path / f"tiny_distributed_seed{seed}" / "meta.json").read_text()))
    assert metas[0]["w_true"] != metas[1]["w_true"]
    assert metas[0]["gains"]["gamma1"] == metas[1]["gains"]["gamma1"]
    assert metas[0]["gains"]["gamma2"] == metas[1]["gains"]["gamma2"]


def test_run_divergence_exit(tmp_path, capsys):
    assert main(["run", "paper_fig2", "--step", "0.05", "--out", str(tmp_path)]) == 3
    assert "DIVERGED" in capsys.readouterr().out


def test_compare_leader(tmp_path, capsys):
    code = main(["compare", "example2_leader", "--schemes", "zhang,distributed", "--out", str(tmp_path)])
    assert code == 0
    out = json.loads((tmp_path / "compare.json").read_text())
    assert out["ratios"]["zhang/distributed"] >= 10
    assert "ratio" in capsys.readouterr().out


def test_compare_single(tmp_path, capsys):
    assert main(["compare", _scenario(tmp_path), "--schemes", "ideal", "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "compare.json").read_text())
    assert len(out["results"]) == 1 and out["ratios"] == {}


def test_compare_zhang_needs_leader(tmp_path, capsys):
    assert main(["compare", "paper_fig2", "--schemes", "zhang", "--out", str(tmp_path)]) == 1
    assert "L = [[0, 0], [-b, L_o + B]]" in capsys.readouterr().out


def test_compare_unknown_scheme(tmp_path):
    assert main(["compare", "paper_fig2", "--schemes", "bogus", "--out", str(tmp_path)]) == 2


def test_out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ADAPTIVE_CONSENSUS_OUT", str(tmp_path / "env"))
    assert main(["run", _scenario(tmp_path)]) == 0
    assert (tmp_path / "env" / "tiny_distributed_seed0" / "trajectory.csv").exists()
