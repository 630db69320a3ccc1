import csv
import json

import pytest

from quadsparse.cli import main


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def test_solve_pinned_seed(tmp_path):
    code, out = run(["solve", "--n", "100", "--m", "200", "--s", "5", "--seed", "7",
                     "--method", "sgn"], tmp_path)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["rel_error"] <= 1e-6 and summary["status"] == "converged"
    for name in ("solution.csv", "trace.jsonl", "manifest.json", "truth.csv", "observations.csv"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 7 and manifest["resolved"]["mu"] == "auto"


def test_solve_iht_trace_respects_sparsity(tmp_path):
    code, out = run(["solve", "--n", "60", "--m", "120", "--s", "4", "--method", "iht",
                     "--max-iters", "100"], tmp_path)
    assert code in (0, 2)
    for line in (out / "trace.jsonl").read_text().splitlines():
        assert len(json.loads(line)["support"]) <= 4


def test_solve_exit_codes(tmp_path, capsys):
    assert run(["solve", "--s", "0"], tmp_path)[0] == 64
    assert "--s" in capsys.readouterr().err
    assert run(["solve", "--mu", "fast"], tmp_path)[0] == 64
    assert run(["solve", "--method", "wf", "--mu", "auto"], tmp_path)[0] == 64
    assert run(["solve", "--frobnicate"], tmp_path)[0] == 64
    assert main([]) == 64
    code, _ = run(["solve", "--n", "40", "--m", "30", "--s", "8", "--max-iters", "2"], tmp_path)
    assert code == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 50, "m": 120, "s": 3, "max-iters": 50, "seed": 2}))
    code, out = run(["solve", "--config", str(cfg), "--seed", "3"], tmp_path)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n"] == 50 and manifest["config"]["seed"] == 3
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run(["solve", "--config", str(cfg)], tmp_path)[0] == 64
    assert run(["solve", "--config", str(tmp_path / "missing.json")], tmp_path)[0] == 64


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QUADSPARSE_OUT", str(tmp_path / "env"))
    assert main(["probe", "--mode", "s1-check", "--n", "5", "--m", "2"]) == 0
    assert (tmp_path / "env" / "probe.json").exists()


def test_probe_modes(tmp_path):
    code, out = run(["probe", "--mode", "s1-check", "--n", "10", "--m", "2", "--seed", "3"], tmp_path)
    assert code == 0 and json.loads((out / "probe.json").read_text())["injective"]
    code, out = run(["probe", "--mode", "s1-check", "--n", "10", "--m", "1"], tmp_path)
    assert code == 1 and json.loads((out / "probe.json").read_text())["pair"]
    code, out = run(["probe", "--mode", "collision", "--n", "6", "--s", "2", "--m", "2",
                     "--budget", "50"], tmp_path)
    report = json.loads((out / "probe.json").read_text())
    assert code == 1 and report["found"] and report["residual"] <= 1e-8
    assert run(["probe", "--n", "5"], tmp_path)[0] == 64


def test_sweep_phase_grid_shape(tmp_path):
    code, out = run(["sweep", "--preset", "experiment2", "--n", "10", "--trials", "1",
                     "--seed", "1", "--max-iters", "20"], tmp_path)
    assert code == 0
    rows = list(csv.DictReader((out / "experiment2.csv").open()))
    for method in ("sgn", "wf", "iht"):
        cells = {(r["m_ratio"], r["s_ratio"]) for r in rows if r["method"] == method}
        assert len(cells) == 100


def test_sweep_noise_table_and_determinism(tmp_path):
    args = ["sweep", "--preset", "experiment4", "--trials", "2", "--seed", "1"]
    code, a = run(args, tmp_path, "a")
    code2, b = run(args + ["--jobs", "2"], tmp_path, "b")
    assert code == code2 == 0
    text = (a / "experiment4.csv").read_text()
    assert text == (b / "experiment4.csv").read_text()
    assert len(text.strip().splitlines()) == 11


def test_sweep_usage_errors(tmp_path):
    assert run(["sweep", "--preset", "experiment9"], tmp_path)[0] == 64
    assert run(["sweep", "--experiment", "phase_map"], tmp_path)[0] == 64
    assert run(["sweep", "--experiment", "phase_map", "--n", "10", "--methods", "twf",
                "--s-values", "1", "--m-values", "4"], tmp_path)[0] == 64
