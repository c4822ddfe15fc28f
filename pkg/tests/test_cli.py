import json
import os
import subprocess
import sys

from mmmlab.cli import main


def run(args):
    return main(list(args))


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_unknown_command_exits_2(capsys):
    assert run(["frobnicate"]) == 2


def test_counterexample_then_beta(tmp_path, capsys):
    out = str(tmp_path)
    assert run(["counterexample", "--kind", "square", "--resolution", "3", "--out", out]) == 0
    doc = capsys.readouterr().out.strip()
    assert run(["beta", "--x", doc, "--out", out]) == 0
    assert capsys.readouterr().out.strip() == "0.25"
    body = read(os.path.join(out, "beta.csv")).decode()
    lines = body.strip().splitlines()
    assert lines[0].startswith("dispersion")
    assert lines[-1].startswith("# config_hash=")


def test_prohorov_identical_files(tmp_path, capsys):
    doc = "\n".join(
        ["[points]", "a", "b", "[dist]", "0.0 1.0", "1.0 0.0", "[mass]", "0.5", "0.5"]
    )
    p = tmp_path / "m.measure"
    p.write_text(doc)
    out = str(tmp_path / "out")
    assert run(["prohorov", "--m1", str(p), "--m2", str(p), "--out", out]) == 0
    value = float(capsys.readouterr().out.strip())
    assert value <= 1e-8


def test_membership_capability_exit_3(tmp_path, capsys):
    out = str(tmp_path)
    run(["counterexample", "--kind", "square", "--resolution", "5", "--out", out])
    doc = capsys.readouterr().out.strip()  # 55 atoms: beyond the exact limit
    code = run(["membership", "--x", doc, "--delta", "0.05", "--eps", "0.6", "--out", out])
    assert code == 3
    code = run(
        ["membership", "--x", doc, "--delta", "0.05", "--eps", "0.6", "--approx", "--out", out]
    )
    assert code == 0


def test_seed_required_for_stochastic_commands(tmp_path, capsys):
    out = str(tmp_path)
    assert run(["moran", "--n", "5", "--out", out]) == 2
    assert "seed" in capsys.readouterr().err


def test_moran_outputs(tmp_path, capsys):
    out = str(tmp_path)
    code = run(
        [
            "moran", "--n", "8", "--gamma", "1", "--theta", "0.5", "--horizon", "0.5",
            "--sample-times", "0.25,0.5", "--seed", "7", "--out", out,
        ]
    )
    assert code == 0
    assert os.path.exists(os.path.join(out, "moran_events.csv"))
    assert os.path.exists(os.path.join(out, "moran_snapshot_001.mmm"))
    header = read(os.path.join(out, "moran_events.csv")).decode().splitlines()[0]
    assert header == "time,kind,source,target,type"


def test_verify_mutbound_deterministic(tmp_path, capsys):
    args = [
        "verify-mutbound", "--n", "60", "--gamma", "1", "--theta", "0.5",
        "--delta", "0.1", "--a", "0.5", "--replicas", "150", "--seed", "3",
    ]
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run(args + ["--out", out1]) == 0
    first = capsys.readouterr().out
    assert run(args + ["--out", out2]) == 0
    second = capsys.readouterr().out
    assert first == second and first.startswith("PASS")
    assert read(os.path.join(out1, "verify_mutbound.csv")) == read(
        os.path.join(out2, "verify_mutbound.csv")
    )


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 5, "gamma": 1.0, "theta": 0.0, "horizon": 0.25}))
    out = str(tmp_path / "out")
    code = run(["moran", "--config", str(cfg), "--seed", "1", "--out", out])
    assert code == 0
    # flag overrides the config value: a one-individual run has no resampling
    code = run(["moran", "--config", str(cfg), "--n", "1", "--seed", "1", "--out", out])
    assert code == 0
    body = read(os.path.join(out, "moran_events.csv")).decode()
    assert body.splitlines()[1].startswith("#") or "resample" not in body


def test_env_seed_override(tmp_path, monkeypatch, capsys):
    out = str(tmp_path)
    monkeypatch.setenv("MMMLAB_SEED", "9")
    assert run(["coalescent", "--n", "4", "--out", out]) == 0
    line = capsys.readouterr().out
    assert "dust_free_integral=inf" in line


def test_pipeline_cli(tmp_path, capsys):
    out = str(tmp_path)
    code = run(
        [
            "pipeline", "--model", "moran", "--n", "30", "--gamma", "1",
            "--theta", "0.5", "--deltas", "0.2", "--horizon", "0.5",
            "--replicas", "20", "--seed", "5", "--out", out,
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.startswith("PASS")
    assert os.path.exists(os.path.join(out, "pipeline.csv"))


def test_criteria_cli(tmp_path, capsys):
    out = str(tmp_path)
    run(["counterexample", "--kind", "square", "--resolution", "2", "--out", out])
    doc = capsys.readouterr().out.strip()
    code = run(
        [
            "criteria", "--kind", "theorem", "--deltas", "0.5,0.25",
            "--modulus", "0:0,1:1", doc, doc, doc,
        ]
        + ["--out", out]
    )
    assert code == 0
    assert "supported=" in capsys.readouterr().out
    lines = read(os.path.join(out, "criteria.csv")).decode().splitlines()
    assert lines[0] == "n,delta,verdict,retained_mass,witness_size"


def test_mgp_cli(tmp_path, capsys):
    out = str(tmp_path)
    run(["counterexample", "--kind", "square", "--resolution", "2", "--out", out])
    doc = capsys.readouterr().out.strip()
    code = run(["mgp", "--x", doc, "--y", doc, "--seed", "2", "--budget", "4", "--out", out])
    assert code == 0
    assert float(capsys.readouterr().out.strip()) <= 1e-8


def test_acceptance_unknown_suite_exits_2(tmp_path):
    assert run(["acceptance", "nosuite", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_console_script_entrypoint():
    proc = subprocess.run(
        [sys.executable, "-m", "mmmlab.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "acceptance" in proc.stdout


def test_experiment_config_hash_ignores_out():
    from mmmlab.cli import ExperimentConfig

    a = ExperimentConfig("beta", {"x": "f.mmm"}, seed=1, out="dir_a")
    b = ExperimentConfig("beta", {"x": "f.mmm"}, seed=1, out="dir_b")
    assert a.hash_hex() == b.hash_hex()
    c = ExperimentConfig("beta", {"x": "f.mmm"}, seed=2, out="dir_a")
    assert a.hash_hex() != c.hash_hex()
