import csv
import json
from pathlib import Path

import numpy as np
import pytest

from flowcast.cli import main

SYNTH_ARGS = ["synth", "--seed", "11", "--config"]


def write_synth_config(path: Path) -> Path:
    cfg = {"synth": {"n_days": 10, "intervals_per_day": 24, "n_movements": 4,
                     "n_components": 2, "noise_sigma": 5.0}}
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("cli_data")
    cfg = write_synth_config(root / "config.json")
    rc = main(["synth", "--seed", "11", "--config", str(cfg),
               "--out-dir", str(root / "synth")])
    assert rc == 0
    return root / "synth"


def read_manifest_hash(out_dir: Path) -> str:
    doc = json.loads((out_dir / "manifest.json").read_text())
    return doc["manifest_hash"]


def test_synth_artifacts_and_hash_stamps(dataset_dir):
    for name in ("flows.csv", "flows.meta.json", "ground_truth.json", "manifest.json"):
        assert (dataset_dir / name).exists()
    mhash = read_manifest_hash(dataset_dir)
    assert len(mhash) == 64
    first_line = (dataset_dir / "flows.csv").read_text().splitlines()[0]
    assert first_line == f"# manifest_hash={mhash}"
    truth = json.loads((dataset_dir / "ground_truth.json").read_text())
    assert truth["manifest_hash"] == mhash
    assert len(truth["weights"]) == 10


def test_pca_command(dataset_dir, tmp_path):
    out = tmp_path / "pca"
    rc = main(["pca", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(out), "--n-components", "2"])
    assert rc == 0
    mhash = read_manifest_hash(out)
    model = json.loads((out / "pca_model.json").read_text())
    assert model["manifest_hash"] == mhash
    with open(out / "explained_variance.csv") as fh:
        assert fh.readline() == f"# manifest_hash={mhash}\n"
        rows = list(csv.DictReader(fh))
    fractions = [float(r["fraction"]) for r in rows]
    assert len(fractions) == 2
    assert all(0.0 <= f <= 1.0 for f in fractions)
    assert fractions[0] >= fractions[1]
    with open(out / "weights.csv") as fh:
        fh.readline()
        assert len(list(csv.DictReader(fh))) == 10


def test_predict_holdout(dataset_dir, tmp_path):
    out = tmp_path / "pred"
    rc = main(["predict", "--input", str(dataset_dir / "flows.csv"),
               "--date", "2024-01-04", "--out-dir", str(out),
               "--n-components", "2"])
    assert rc == 0
    with open(out / "prediction.csv") as fh:
        fh.readline()
        rows = list(csv.DictReader(fh))
    # default split on a 24-interval day: observe 1..10, predict 11..24
    assert len(rows) == 4 * 14
    assert {r["movement"] for r in rows} == {"NB LT", "NB T", "NB RT", "SB LT"}
    assert min(int(r["interval"]) for r in rows) == 11
    for r in rows:
        assert r["actual"] != ""
        float(r["predicted"]), float(r["mean"])


def test_predict_needs_date_or_sample(dataset_dir, tmp_path, capsys):
    rc = main(["predict", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(tmp_path / "x")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_segment_command(dataset_dir, tmp_path, capsys):
    out = tmp_path / "seg"
    rc = main(["segment", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(out), "--segments", "3"])
    assert rc == 0
    assert "3-period plan" in capsys.readouterr().out
    doc = json.loads((out / "plan.json").read_text())
    assert doc["kind"] == "segmentation_plan"
    times = doc["switch_times"]
    assert len(times) == 2 and times[0] < times[1]


def test_loocv_command(dataset_dir, tmp_path):
    out = tmp_path / "cv"
    rc = main(["loocv", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(out), "--n-components", "2"])
    assert rc == 0
    with open(out / "loocv.csv") as fh:
        fh.readline()
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    summary = json.loads((out / "loocv_summary.json").read_text())
    assert summary["n_days"] == 10
    assert 0.0 <= summary["fraction_positive_decrease"] <= 1.0
    assert summary["n_positive_decrease"] == sum(
        1 for r in rows if float(r["decrease"]) > 0)


def test_control_single_date(dataset_dir, tmp_path):
    out = tmp_path / "ctl"
    rc = main(["control", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(out), "--date", "2024-01-05",
               "--segments", "3", "--window", "1", "--n-components", "2"])
    assert rc == 0
    mhash = read_manifest_hash(out)
    assert (out / "plan.json").exists()
    assert list((out / "cache").glob("bank_*.json"))
    for suffix in ("seg", "seg_params"):
        doc = json.loads((out / f"predictive_plan_2024-01-05_{suffix}.json").read_text())
        assert doc["manifest_hash"] == mhash
    with open(out / "delay_2024-01-05.csv") as fh:
        assert fh.readline() == f"# manifest_hash={mhash}\n"
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24
    report = json.loads((out / "delay_report.json").read_text())
    assert len(report["days"]) == 1
    day = report["days"][0]
    assert day["lower_bound"] <= day["nominal"] + 1e-6
    assert day["improvement_seg"] == pytest.approx(
        day["nominal"] - day["predictive_seg"])


def test_control_with_explicit_plan(dataset_dir, tmp_path):
    seg_out = tmp_path / "seg"
    main(["segment", "--input", str(dataset_dir / "flows.csv"),
          "--out-dir", str(seg_out), "--segments", "2"])
    out = tmp_path / "ctl"
    rc = main(["control", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(out), "--date", "2024-01-03",
               "--plan", str(seg_out / "plan.json"),
               "--window", "1", "--n-components", "2"])
    assert rc == 0
    assert not (out / "plan.json").exists()  # plan came from the file
    doc = json.loads((out / "predictive_plan_2024-01-03_seg.json").read_text())
    assert len(doc["switch_times"]) == 1


def test_rerun_same_out_dir_is_byte_identical(tmp_path):
    cfg = write_synth_config(tmp_path / "config.json")
    out = tmp_path / "synth"
    argv = ["synth", "--seed", "3", "--config", str(cfg), "--out-dir", str(out)]
    assert main(argv) == 0
    before = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}
    assert main(argv) == 0
    after = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}
    assert before == after


def test_exit_codes(dataset_dir, tmp_path, capsys):
    assert main(["pca", "--out-dir", str(tmp_path / "a")]) == 1  # no --input
    assert "error:" in capsys.readouterr().err
    assert main(["pca", "--input", str(tmp_path / "nope.csv"),
                 "--out-dir", str(tmp_path / "b")]) == 2  # missing file
    assert "i/o error:" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["synth", "--config", str(bad),
                 "--out-dir", str(tmp_path / "c")]) == 1
    assert main(["frobnicate"]) == 1  # unknown command is a usage error
    assert "error:" in capsys.readouterr().err
    rc = main(["segment", "--input", str(dataset_dir / "flows.csv"),
               "--out-dir", str(tmp_path / "d"), "--segments", "99"])
    assert rc == 1  # more periods than intervals


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "flowcast" in capsys.readouterr().out
