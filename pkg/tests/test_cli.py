import csv
import subprocess
import sys

import pytest

from quantum_knn.cli import main
from quantum_knn.synthetic import make_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return make_dataset(tmp_path_factory.mktemp("cli"), per_class=6, seed=1, hard=False)


def test_features(dataset, tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["features", str(dataset), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 13 and len(rows[0]) == 82
    assert (tmp_path / "f.csv.bounds.json").exists()
    assert "wrote 12" in capsys.readouterr().out


def test_classify_against_directory_and_csv(dataset, tmp_path, capsys):
    image = dataset / "Leopards" / "Leopards_002.png"
    assert main(["classify", str(image), "--train", str(dataset), "--k", "1", "--c", "4"]) == 0
    assert "label: Leopards" in capsys.readouterr().out
    feats = tmp_path / "f.csv"
    main(["features", str(dataset), "--out", str(feats)])
    trace = tmp_path / "trace.txt"
    assert main(["classify", str(image), "--train", str(feats), "--k", "3", "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "label: Leopards" in out and "grover iterations" in out
    assert trace.read_text().startswith("start K=")


def test_evaluate_writes_report_and_figures(dataset, tmp_path, capsys):
    stem = tmp_path / "out" / "report"
    code = main(["evaluate", "--data", str(dataset), "--k", "1,3", "--ratio", "0.5", "--trials", "2",
                 "--report", str(stem)])
    assert code == 0
    for suffix in (".csv", "_cells.csv", ".txt", "_accuracy.png", "_iterations.png"):
        path = stem.parent / ("report" + suffix)
        assert path.exists() and path.stat().st_size > 0
    assert "overall accuracy" in capsys.readouterr().out


def test_evaluate_without_figures(dataset, tmp_path):
    stem = tmp_path / "r"
    assert main(["evaluate", "--data", str(dataset), "--k", "3", "--ratio", "0.5", "--report", str(stem),
                 "--no-figures"]) == 0
    assert not (tmp_path / "r_accuracy.png").exists()


def test_demo_command(tmp_path, capsys):
    assert main(["demo-paper", "--figures", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "test image classified as: airplanes" in out
    assert "v*78" in out and "ranking" in out
    assert (tmp_path / "demo_distances.png").exists() and (tmp_path / "search_cost.png").exists()


def test_config_file(dataset, tmp_path, capsys):
    cfg = tmp_path / "q.cfg"
    cfg.write_text("b = 6\nc = 2\n")
    image = dataset / "airplanes" / "airplanes_001.png"
    assert main(["classify", str(image), "--train", str(dataset), "--config", str(cfg)]) == 0
    assert "budget 12" in capsys.readouterr().out


def test_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["evaluate", "--data", str(tmp_path / "missing"), "--report", str(tmp_path / "r")]) == 2
    assert "error:" in capsys.readouterr().err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "quantum_knn.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "demo-paper" in proc.stdout
