import json
import subprocess
import sys

import pytest

from hyperex.cli import main
from hyperex.io import model_to_dict
from hyperex.relations import chameleon_model, double_transposition_model


def write(path, obj):
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


@pytest.fixture
def files(tmp_path, k4_pairs):
    return {
        "delta": write(tmp_path / "delta.json", model_to_dict(double_transposition_model(0.1))),
        "pairs": write(tmp_path / "pairs.json", model_to_dict(k4_pairs)),
        "reducible": write(tmp_path / "red.json", model_to_dict(double_transposition_model(0.0))),
        "cham": write(tmp_path / "cham.json", model_to_dict(chameleon_model())),
        "identity": write(tmp_path / "id.json", {"vertices": [1, 2, 3, 4], "edges": [[1, 2, 3, 4]],
                                                 "weights": {"id": 0.5, "2": 0.5}}),
        "broken": write(tmp_path / "bad.json", '{"vertices": [1, 2,\n "edges": }'),
        "five": write(tmp_path / "five.json", model_to_dict(chameleon_model())),
    }


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--deterministic")
    return code, json.loads(out) if out.strip() else None, err


def test_validate_exit_codes(capsys, files):
    code, doc, _ = run_json(capsys, "validate", "--model", files["delta"])
    assert code == 0 and doc["ok"] and doc["seed"] == 0
    assert doc["config"]["model"] == files["delta"]
    code, doc, err = run_json(capsys, "validate", "--model", files["identity"])
    assert code == 1 and "fixed-point probability" in err
    code, _, err = run(capsys, "validate", "--model", files["broken"])
    assert code == 2 and "line 2" in err
    code, _, err = run(capsys, "validate", "--model", "/nonexistent.json")
    assert code == 2


def test_mix_rows(capsys, files):
    code, doc, _ = run_json(capsys, "mix", "--model", files["pairs"], "--kinds", "RW")
    assert code == 0
    (row,) = doc["rows"]
    assert abs(row["T"] - 0.8240) < 1e-4 and row["method"] == "exact"
    assert set(row) >= {"kind", "k", "eps", "T", "bracket", "tolerance"}
    code, doc, _ = run_json(capsys, "mix", "--model", files["pairs"], "--kinds", "RW",
                            "--eps", "0.8")
    assert doc["rows"][0]["T"] == 0.0


def test_mix_exclusion_symmetry_and_ratio(capsys, files):
    code, doc, _ = run_json(capsys, "mix", "--model", files["five"], "--kinds", "EX")
    rows = {r["k"]: r for r in doc["rows"]}
    assert abs(rows[2]["T"] - rows[3]["T"]) <= max(rows[2]["tolerance"], rows[3]["tolerance"])
    assert abs(rows[1]["T"] - rows[4]["T"]) <= max(rows[1]["tolerance"], rows[4]["tolerance"])
    assert rows[2]["scaling_ratio_note"] == "reported, not asserted"


def test_mix_reducible_model(capsys, files):
    code, _, err = run(capsys, "mix", "--model", files["reducible"])
    assert code == 1 and "irreducibility" in err


def test_chameleon_zero_replicas(capsys, files):
    code, doc, _ = run_json(capsys, "chameleon", "--model", files["cham"], "--n-replicas", "0")
    assert code == 0 and doc["N"] == 0 and doc["runs"] == []


def test_chameleon_default_run(capsys, files):
    code, doc, _ = run_json(capsys, "chameleon", "--model", files["cham"], "--n-replicas", "2000",
                            "--phase-length", "0.5", "--probes", "0.5,1", "--seed", "3")
    assert code == 0
    assert doc["fill_ci_contains_target"] and doc["fill_target"] == 0.25
    assert all(v["within_4_se"] for v in doc["ink_martingale_check"])
    assert doc["unabsorbed"] == 0 and doc["cap_check"].startswith("enforced")
    assert doc["streams"] == {"movement": "stream_id = 2r", "coins": "stream_id = 2r + 1"}
    assert "first_depink_histogram" in doc


def test_chameleon_modified(capsys, files):
    code, doc, _ = run_json(capsys, "chameleon", "--model", files["cham"], "--n-replicas", "300",
                            "--phase-length", "0.5", "--modified")
    assert code == 0 and doc["modified"] and doc["cap_check"] == "skipped (modified)"


def test_chameleon_unabsorbed_limit(capsys, files):
    code, doc, _ = run_json(capsys, "chameleon", "--model", files["cham"], "--n-replicas", "50",
                            "--phase-length", "0.5", "--horizon", "0.1", "--probes", "0.1")
    assert code == 1 and "unabsorbed" in doc["error"]


def test_experiments(capsys, files):
    code, doc, _ = run_json(capsys, "experiments", "neg-corr")
    assert code == 0 and doc["ok"] and len(doc["rows"]) == 5
    code, doc, _ = run_json(capsys, "experiments", "delta-ratio", "--deltas", "0.5")
    assert code == 0 and len(doc["rows"]) == 1 and doc["ok"]
    code, doc, _ = run_json(capsys, "experiments", "delta-ratio", "--deltas", "0.5,0")
    assert code == 1 and "irreducibility" in doc["error"]
    code, doc, _ = run_json(capsys, "experiments", "easy-classify", "--n-replicas", "400")
    assert code == 0 and doc["easy"] and doc["preset"] == "desk"


def test_unknown_experiment(capsys):
    code, _, err = run(capsys, "experiments", "nope")
    assert code == 2 and "neg-corr" in err and "easy-classify" in err


def test_deterministic_output_is_byte_identical(tmp_path, files):
    outs = []
    path = tmp_path / "out.json"
    for threads in (1, 1, 2):
        args = ["chameleon", "--model", files["cham"], "--n-replicas", "200",
                "--phase-length", "0.5", "--seed", "9", "--deterministic",
                "--threads", str(threads), "--output", str(path)]
        assert main(args) == 0
        doc = json.loads(path.read_text())
        doc["config"].pop("threads")
        outs.append((path.read_bytes(), json.dumps(doc, sort_keys=True)))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1] == outs[2][1]


def test_timestamp_only_without_flag(capsys, files):
    code, out, _ = run(capsys, "validate", "--model", files["delta"])
    assert "timestamp" in json.loads(out)


def test_simulate_and_csv(capsys, files):
    code, doc, _ = run_json(capsys, "simulate", "--model", files["cham"], "--process", "EX",
                            "--init", "1,2", "--horizon", "3", "--seed", "5")
    assert code == 0 and doc["stream"]["seed"] == 5
    assert doc["trajectory"][0] == {"time": 0.0, "state": [1, 2]}
    code, out, _ = run(capsys, "mix", "--model", files["pairs"], "--kinds", "RW",
                       "--format", "csv")
    assert out.splitlines()[0].startswith("kind,k,eps,T")


def test_config_file_with_flag_override(capsys, tmp_path, files):
    cfg = write(tmp_path / "cfg.json", {"model": files["pairs"], "eps": 0.1, "kinds": "RW"})
    _, doc, _ = run_json(capsys, "mix", "--config", cfg)
    assert doc["rows"][0]["eps"] == 0.1
    _, doc, _ = run_json(capsys, "mix", "--config", cfg, "--eps", "0.25")
    assert abs(doc["rows"][0]["T"] - 0.8240) < 1e-4
    bad = write(tmp_path / "bad.json", {"nonsense": 1})
    code, _, err = run(capsys, "mix", "--config", bad)
    assert code == 2 and "nonsense" in err


def test_console_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "hyperex", "validate", "--model", files["delta"],
                           "--deterministic"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["ok"]
