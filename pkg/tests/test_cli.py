import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fglab.cli import emit_csv, main, read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
FAST = ["periods", "potential", "dubrovin", "soliton", "cm"]


def run_kind(kind, cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{kind}_cfg.json"
    path.write_text(json.dumps(cfg))
    return main([kind, "--config", str(path), "--out", str(out)])


def load(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


@pytest.mark.parametrize("kind", FAST)
def test_shipped_configs_run(kind, tmp_path):
    assert run_kind(kind, load(kind), tmp_path) == 0
    table = read_csv(tmp_path / f"{kind}.csv")
    assert len(table) > 0 and len({len(c) for c in table.values()}) == 1
    meta = json.loads((tmp_path / f"{kind}.json").read_text())
    assert meta["kind"] == kind


def test_bands_small_grid(tmp_path):
    cfg = load("bands")
    cfg["grid"] = 150
    assert run_kind("bands", cfg, tmp_path) == 0
    meta = json.loads((tmp_path / "bands.json").read_text())
    assert len(meta["gaps"]) >= 1


def test_verify_subset(tmp_path):
    assert run_kind("verify", {"criteria": [3, 4]}, tmp_path) == 0
    meta = json.loads((tmp_path / "verify.json").read_text())
    assert meta["all_passed"] and [r["number"] for r in meta["results"]] == [3, 4]


@pytest.mark.parametrize("cfg", [
    {"curve": {"branch_points": [0, 1, 1, 3, 4]}},
    {"curve": {"branch_points": [0, 1, 2, 3]}},
    {"curve": {}},
    {"curve": {"branch_points": [0, 1, 2]}, "seed": "x"},
])
def test_validation_errors_exit_2(cfg, tmp_path, capsys):
    assert run_kind("periods", cfg, tmp_path) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["category"] == "validation" and err["exit_code"] == 2
    assert json.loads((tmp_path / "error.json").read_text())["exit_code"] == 2


def test_bad_divisor_and_missing_file(tmp_path):
    cfg = load("dubrovin")
    cfg["divisor"] = [[0.5, 1], [3.6, 1]]
    assert run_kind("dubrovin", cfg, tmp_path) == 2
    assert main(["periods", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_numerical_error_exit_3(tmp_path, capsys):
    cfg = load("cm")
    cfg["positions"] = [[0.3, 0.0], [0.3, 1e-7]]
    assert run_kind("cm", cfg, tmp_path) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["category"] == "numerical" and err["type"] == "CollisionError"


def test_csv_roundtrip_17_digits(tmp_path):
    vals = np.array([np.pi, 1 / 3, -2.5e-300, 1e20 / 7])
    emit_csv({"a": vals, "n": np.arange(4)}, tmp_path / "t.csv")
    table = read_csv(tmp_path / "t.csv")
    assert list(table) == ["a", "n"]
    assert np.array_equal(table["a"], vals)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "a,n"
    assert lines[1] == f"{np.pi:.17g},0"


def test_outputs_are_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        out.mkdir()
        assert run_kind("dubrovin", load("dubrovin"), out) == 0
    assert (a / "dubrovin.csv").read_bytes() == (b / "dubrovin.csv").read_bytes()


def test_thread_cap_does_not_change_output(tmp_path, monkeypatch):
    cfg = load("bands")
    cfg["grid"] = 120
    outs = []
    for n in ("1", "3"):
        monkeypatch.setenv("FGLAB_THREADS", n)
        out = tmp_path / n
        assert run_kind("bands", cfg, out) == 0
        outs.append((out / "bands.csv").read_bytes())
    assert outs[0] == outs[1]


def test_console_script_entry(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps(load("periods")))
    r = subprocess.run([sys.executable, "-m", "fglab.cli", "periods", "--config", str(cfg),
                        "--out", str(tmp_path)], capture_output=True, text=True,
                       env={**os.environ, "FGLAB_THREADS": "1"})
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "periods.csv").exists()
