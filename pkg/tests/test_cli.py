import json
import subprocess
import sys

import numpy as np
import pytest

from shotmetric import Episode, HeadConfig, save_episode
from shotmetric.cli import main
from shotmetric.heads import class_logits
from shotmetric.sensitivity import format_grid_csv, load_published_grid, read_report_csv, decompose


@pytest.fixture
def grids(tmp_path):
    paths = {}
    for name in ("inat_conv4__proto", "inat_conv4__cosine_proto"):
        p = tmp_path / f"{name}.csv"
        p.write_text(format_grid_csv(load_published_grid(name).grid))
        paths[name] = str(p)
    return paths


@pytest.fixture
def episode_file(tmp_path):
    rng = np.random.default_rng(0)
    ep = Episode([rng.standard_normal((3, 6)) for _ in range(4)], rng.standard_normal((5, 6)),
                 ["w", "x", "y", "z"])
    p = tmp_path / "episode.json"
    save_episode(ep, p)
    return ep, str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- classify ---------------------------------------------------------------------------


def test_classify_query_on_support_point(tmp_path, capsys):
    p = tmp_path / "ep.json"
    p.write_text(json.dumps({
        "classes": [{"id": "0", "support": [[1.0, 2.0]]}, {"id": "1", "support": [[4.0, -1.0]]}],
        "query": [[1.0, 2.0]],
    }))
    code, out, _ = run(capsys, "classify", str(p))
    assert code == 0
    pred = json.loads(out)["predictions"][0]
    assert pred["predicted"] == "0"
    assert pred["probabilities"][0] > 0.5


def test_classify_zero_query_cosine_exit_3(tmp_path, capsys):
    p = tmp_path / "ep.json"
    p.write_text(json.dumps({
        "classes": [{"id": "a", "support": [[1.0, 0.0]]}, {"id": "b", "support": [[0.0, 1.0]]}],
        "query": [[0.0, 0.0]],
    }))
    code, _, err = run(capsys, "classify", str(p), "--head", "proto_cosine")
    assert code == 3
    assert "ZeroNormVector" in err


@pytest.mark.parametrize("head", ["frn_simplified", "frn_full", "frn_cosine", "proto_cosine"])
def test_classify_matches_library(episode_file, capsys, head):
    ep, path = episode_file
    code, out, _ = run(capsys, "classify", path, "--head", head, "--sigma", "2.0", "--lambda", "0.3")
    assert code == 0
    doc = json.loads(out)
    lib = class_logits(ep, HeadConfig(head=head, temperature=2.0, frn_lambda=0.3))
    expected = json.dumps([row.tolist() for row in lib.scores])
    assert json.dumps([p["logits"] for p in doc["predictions"]]) == expected
    assert doc["config"]["head"] == head and doc["config"]["frn_lambda"] == 0.3


def test_classify_writes_out_file(episode_file, tmp_path, capsys):
    _, path = episode_file
    out = tmp_path / "pred.json"
    code, stdout, _ = run(capsys, "classify", path, "--out", str(out))
    assert code == 0 and stdout == ""
    assert len(json.loads(out.read_text())["predictions"]) == 5


@pytest.mark.parametrize(
    "content",
    ['{"classes": [], "query": [[1]]}', "not json", '{"classes": [{"id": "a"}], "query": []}',
     '{"classes": [{"id": "a", "support": [[1, 2]]}, {"id": "b", "support": [[1]]}], "query": [[1, 2]]}'],
)
def test_classify_malformed_exit_2(tmp_path, capsys, content):
    p = tmp_path / "bad.json"
    p.write_text(content)
    assert run(capsys, "classify", str(p))[0] == 2


def test_classify_missing_file_exit_2(capsys, tmp_path):
    assert run(capsys, "classify", str(tmp_path / "nope.json"))[0] == 2


def test_usage_error_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["classify"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["classify", "x.json", "--head", "knn"])
    assert exc.value.code == 1


# -- sensitivity -----------------------------------------------------------------------------


def test_sensitivity_score_line(grids, capsys):
    code, out, _ = run(capsys, "sensitivity", grids["inat_conv4__proto"])
    assert code == 0
    line = [ln for ln in out.splitlines() if "score =" in ln][0]
    assert abs(float(line.split("score =")[1]) - 14.86) <= 0.03


def test_sensitivity_pair_identical_gives_zero(grids, capsys):
    g = grids["inat_conv4__proto"]
    code, out, _ = run(capsys, "sensitivity", "--pair", g, g, "--json")
    assert code == 0
    assert json.loads(out)["gain"]["gains"] == [0.0] * 6


def test_sensitivity_pair_gains(grids, capsys):
    code, out, _ = run(capsys, "sensitivity", "--pair", grids["inat_conv4__proto"],
                       grids["inat_conv4__cosine_proto"], "--json")
    gains = json.loads(out)["gain"]["gains"]
    assert gains[0] == pytest.approx(13.33, abs=0.03)
    assert gains[-1] == pytest.approx(-0.39, abs=0.03)


def test_sensitivity_report_round_trip(grids, tmp_path, capsys):
    out_dir = tmp_path / "out"
    g = grids["inat_conv4__proto"]
    assert run(capsys, "sensitivity", g, "--out", str(out_dir))[0] == 0
    report = read_report_csv(out_dir / "inat_conv4__proto_report.csv")
    direct = decompose(load_published_grid("inat_conv4__proto").grid)
    np.testing.assert_allclose(report.heatmap, direct.heatmap, atol=1e-12, rtol=0)


def test_sensitivity_pair_writes_gain_csv(grids, tmp_path, capsys):
    out_dir = tmp_path / "out"
    run(capsys, "sensitivity", "--pair", grids["inat_conv4__proto"],
        grids["inat_conv4__cosine_proto"], "--out", str(out_dir))
    lines = (out_dir / "gain.csv").read_text().splitlines()
    assert lines[0] == "test_shot,gain" and len(lines) == 7


def test_sensitivity_bad_csv_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("wrong,4,8\n1,50,60\n2,60,70\n")
    assert run(capsys, "sensitivity", str(p))[0] == 2


def test_sensitivity_axis_mismatch_exit_2(grids, tmp_path, capsys):
    p = tmp_path / "other.csv"
    p.write_text("test_shot\\train_shot,4,8\n1,50,60\n2,60,70\n")
    assert run(capsys, "sensitivity", "--pair", grids["inat_conv4__proto"], str(p))[0] == 2


# -- verify / consistency -----------------------------------------------------------------------


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify", "--trials", "100", "--seed", "7")
    assert code == 0
    assert out.count("PASS") == 5


def test_verify_single_trial(capsys):
    code, out, _ = run(capsys, "verify", "--trials", "1", "--json")
    assert code == 0
    assert len(json.loads(out)["frobenius"]) == 5


def test_verify_legacy_is_informational(capsys):
    code, out, _ = run(capsys, "verify", "--trials", "20", "--regularizer", "legacy", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    legacy = {p["name"]: p["passed"] for p in doc["legacy"]}
    assert legacy["shot"] and not legacy["scale"]


def test_verify_bad_trials(capsys):
    assert run(capsys, "verify", "--trials", "0")[0] == 2


def test_consistency_near_zero_noise(tmp_path, capsys):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"way": 3, "dim": 4, "min_angle_deg": 60, "seed": 1, "stddev": 1e-9}))
    code, out, _ = run(capsys, "consistency", str(p), "--trials", "20")
    assert code == 0
    assert "euclidean        1.000" in out and "cosine           1.000" in out


def test_consistency_bad_spec_exit_2(tmp_path, capsys):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"means": [[1.0]], "stddev": 1.0}))
    assert run(capsys, "consistency", str(p))[0] == 2


def test_cli_is_byte_deterministic(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"way": 5, "dim": 16, "mean_norm_range": [0.5, 2.0],
                                "min_angle_deg": 45, "seed": 11}))
    cmd = [sys.executable, "-m", "shotmetric", "consistency", str(spec), "--trials", "100"]
    first = subprocess.run(cmd, capture_output=True, check=True).stdout
    second = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert first == second and first
