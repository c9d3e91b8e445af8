"""End-to-end CLI behavior: exit codes, artifacts, reproducibility."""

import json
import pathlib

import numpy as np
import pytest

from gapflow.cli import arrow_check_main, main
from gapflow.output import load_manifest

from conftest import scenario_path

TWO_LEVEL = str(scenario_path("two_level"))
THREE_MODE = str(scenario_path("three_mode"))


def read_bytes(path):
    return pathlib.Path(path).read_bytes()


def tree_bytes(out_dir):
    root = pathlib.Path(out_dir)
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def test_validate_ok(capsys):
    assert main(["validate", "--scenario", TWO_LEVEL]) == 0
    assert "OK" in capsys.readouterr().out


def test_validate_rejects_bad_model(tmp_path, capsys):
    doc = json.loads(pathlib.Path(TWO_LEVEL).read_text())
    doc["components"][1]["indices"] = [0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", "--scenario", str(bad)]) == 1
    assert "components overlap" in capsys.readouterr().out


def test_validate_missing_file_exits_2(capsys):
    assert main(["validate", "--scenario", "/nonexistent/nope.json"]) == 2


def test_validate_parse_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{]")
    assert main(["validate", "--scenario", str(bad)]) == 1


def test_unknown_gap_mode_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", TWO_LEVEL, "--gap-mode", "open",
              "--out-dir", "/tmp/never"])
    assert exc.value.code == 2


def test_suspend_requires_hermitian(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", TWO_LEVEL, "--suspend", "n3_1",
              "--out-dir", str(tmp_path)])
    assert exc.value.code == 2


def test_suspend_variant_mismatch_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", TWO_LEVEL, "--rules", "nrules3",
              "--gap-mode", "hermitian", "--suspend", "n4_4",
              "--out-dir", str(tmp_path)])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", TWO_LEVEL, "--seed", "5",
                 "--out-dir", str(out)]) == 0
    for name in ("manifest.json", "trajectory.csv", "events.jsonl", "run_report.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "run_report.json").read_text())
    assert report["terminal"] in ("t_max", "quiescent")
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["t", "s"]
    assert "p_0" in header and "J_1" in header


def test_run_is_byte_reproducible(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    args = ["run", "--scenario", TWO_LEVEL, "--seed", "9"]
    assert main(args + ["--out-dir", str(out_a)]) == 0
    assert main(args + ["--out-dir", str(out_b)]) == 0
    assert tree_bytes(out_a) == tree_bytes(out_b)


def test_run_events_jsonl_schema(tmp_path):
    out = tmp_path / "out"
    main(["run", "--scenario", TWO_LEVEL, "--seed", "5", "--out-dir", str(out)])
    lines = (out / "events.jsonl").read_text().splitlines()
    assert lines
    event = json.loads(lines[0])
    assert set(event) >= {"trajectory_id", "epoch", "t_sc", "chosen", "pre_hit_s",
                          "J", "norm_policy"}


def test_run_manifest_round_trips(tmp_path):
    out = tmp_path / "out"
    main(["run", "--scenario", TWO_LEVEL, "--seed", "5", "--out-dir", str(out)])
    manifest = load_manifest(out / "manifest.json")
    assert manifest["command"] == "run"
    assert manifest["rules"] == "nrules3"
    assert manifest["seed"] == 5


# ---------------------------------------------------------------------------
# currents
# ---------------------------------------------------------------------------


def test_currents_hermitian_matches_sine(tmp_path):
    """Suspended hermitian two-level: the J_1 column is sin(2t)."""
    out = tmp_path / "out"
    assert main(["currents", "--scenario", TWO_LEVEL, "--gap-mode", "hermitian",
                 "--suspend", "n3_1", "--dt", "0.001", "--t-max", "3.0",
                 "--out-dir", str(out)]) == 0
    rows = (out / "currents.csv").read_text().splitlines()
    header = rows[0].split(",")
    t_col = header.index("t")
    j_col = header.index("J_1")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    assert np.allclose(data[:, j_col], np.sin(2.0 * data[:, t_col]), atol=1e-6)


def test_currents_oneway_is_linear(tmp_path):
    out = tmp_path / "out"
    assert main(["currents", "--scenario", TWO_LEVEL, "--dt", "0.01",
                 "--t-max", "2.0", "--out-dir", str(out)]) == 0
    rows = (out / "currents.csv").read_text().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    t = data[:, header.index("t")]
    assert np.allclose(data[:, header.index("J_1")], 2.0 * t, atol=1e-9)


# ---------------------------------------------------------------------------
# arrow
# ---------------------------------------------------------------------------


def test_arrow_exit_zero_and_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["arrow", "--scenario", TWO_LEVEL, "--out-dir", str(out)]) == 0
    text = capsys.readouterr().out
    assert "forward: verdict=flowed" in text
    assert "reverse: verdict=blocked" in text
    report = json.loads((out / "arrow_report.json").read_text())
    assert report["all_match"] is True
    assert report["reports"]["reverse"]["max_backflow"] == 0.0


def test_arrow_counterfactual_pair(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["arrow", "--scenario", TWO_LEVEL, "--gap-mode", "hermitian",
                 "--suspend", "n3_1", "--out-dir", str(out)])
    assert code == 0
    report = json.loads((out / "arrow_report.json").read_text())
    assert report["reports"]["suspended"]["verdict"] == "flowed"
    assert report["reports"]["suspended"]["max_backflow"] > 1e-3
    assert report["reports"]["restored"]["verdict"] == "blocked"
    assert report["reports"]["restored"]["max_backflow"] == 0.0


def test_arrow_check_entry_point(capsys):
    assert arrow_check_main(["--scenario", TWO_LEVEL]) == 0
    assert "reverse: verdict=blocked" in capsys.readouterr().out


def test_arrow_works_without_out_dir(capsys):
    assert main(["arrow", "--scenario", THREE_MODE]) == 0


# ---------------------------------------------------------------------------
# ensemble + rerun
# ---------------------------------------------------------------------------


def test_ensemble_writes_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["ensemble", "--scenario", THREE_MODE, "--n", "300",
                 "--seed", "3", "--out-dir", str(out)]) == 0
    report = json.loads((out / "ensemble_report.json").read_text())
    assert report["comparison"]["passed"] is True
    assert report["stats"]["n"] == 300
    assert (out / "hit_times_hist.csv").exists()
    assert (out / "survival.csv").exists()
    text = capsys.readouterr().out
    assert "passed" in text


def test_ensemble_worker_flag_is_byte_stable(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    base = ["ensemble", "--scenario", THREE_MODE, "--n", "120", "--seed", "8"]
    assert main(base + ["--workers", "1", "--out-dir", str(out_a)]) == 0
    assert main(base + ["--workers", "3", "--out-dir", str(out_b)]) == 0
    assert tree_bytes(out_a) == tree_bytes(out_b)


def test_rerun_reproduces_run_byte_for_byte(tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert main(["run", "--scenario", TWO_LEVEL, "--seed", "12", "--dt", "0.02",
                 "--out-dir", str(first)]) == 0
    assert main(["rerun", "--manifest", str(first / "manifest.json"),
                 "--out-dir", str(second)]) == 0
    assert tree_bytes(first) == tree_bytes(second)


def test_rerun_reproduces_ensemble(tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert main(["ensemble", "--scenario", THREE_MODE, "--n", "80", "--seed", "4",
                 "--out-dir", str(first)]) == 0
    assert main(["rerun", "--manifest", str(first / "manifest.json"),
                 "--out-dir", str(second)]) == 0
    assert tree_bytes(first) == tree_bytes(second)


def test_rerun_rejects_tampered_scenario(tmp_path):
    first = tmp_path / "first"
    assert main(["run", "--scenario", TWO_LEVEL, "--seed", "1",
                 "--out-dir", str(first)]) == 0
    manifest = json.loads((first / "manifest.json").read_text())
    manifest["scenario"]["sha256"] = "0" * 64
    (first / "manifest.json").write_text(json.dumps(manifest, indent=2))
    assert main(["rerun", "--manifest", str(first / "manifest.json"),
                 "--out-dir", str(tmp_path / "second")]) == 2
