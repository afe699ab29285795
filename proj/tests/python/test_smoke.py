import os
import struct
import subprocess
from pathlib import Path

import numpy as np
import pytest

import podiff

ROOT = Path(__file__).resolve().parents[2]
SMOKE = ROOT / "configs" / "smoke.toml"


def test_field_roundtrip_and_layout(tmp_path):
    values = np.arange(6, dtype=float).reshape(2, 3) * 0.1
    path = tmp_path / "f.fld"
    podiff.write_field(path, values)
    raw = path.read_bytes()
    assert raw[:4] == b"FLD1"
    assert struct.unpack("<III", raw[4:16]) == (2, 2, 3)
    back, mask = podiff.read_field(path)
    assert mask is None
    assert np.array_equal(back, values)

    m = np.array([[1, 0, 1], [1, 1, 0]], dtype=np.uint8)
    podiff.write_field(path, values, m)
    _, mask = podiff.read_field(path)
    assert np.array_equal(mask, m)


def test_stack_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    fields = [rng.standard_normal((4, 4)) for _ in range(3)]
    path = tmp_path / "s.fst"
    podiff.write_stack(path, fields)
    back = podiff.read_stack(path)
    assert len(back) == 3
    for a, b in zip(fields, back):
        assert np.array_equal(a, b)


def test_corrupt_file_raises_with_exit_code(tmp_path):
    path = tmp_path / "bad.fld"
    path.write_bytes(b"FLD1" + b"\x00" * 5)
    with pytest.raises(podiff.PodiffError) as err:
        podiff.read_field(path)
    assert err.value.code == 4


def test_metrics_and_solver():
    assert podiff.crps_ensemble([0.0, 1.0], 0.5) == pytest.approx(0.25)
    emp = [0.5283, 0.6849, 0.9009, 0.9429]
    assert abs(podiff.mace(emp, [0.5, 0.7, 0.9, 0.95]) - 0.0128) <= 1e-4
    n = 64
    x = np.arange(n) / n
    u0 = np.tile(np.sin(2 * np.pi * x), (n, 1))
    u = podiff.propagate(u0, 0.0, 0.0, 1e-3, 200)
    assert np.max(np.abs(u - np.exp(-1e-3 * 4 * np.pi**2) * u0)) < 1e-10


def test_config_defaults():
    cfg = podiff.load_config(SMOKE)
    assert cfg["data"]["seed"] == 7
    assert cfg["diffusion"]["timesteps"] == 1000
    with pytest.raises(podiff.PodiffError) as err:
        podiff.load_config(ROOT / "configs" / "missing.toml")
    assert err.value.code == 2


def test_pipeline_artifacts(tmp_path):
    out = tmp_path / "run"
    summary = podiff.run(SMOKE, out=out)
    assert set(summary["methods"]) == {"podiff_k8", "randorth_k8", "podproj_k8", "rbf"}
    assert summary["methods"]["podiff_k8"]["linear_uq_max_abs_diff"] <= 1e-10

    rows = podiff.read_csv(out / "metrics" / "metrics.csv")
    assert {"method", "case", "metric", "value"} <= set(rows[0])
    rmse = [r["value"] for r in rows if r["method"] == "podiff_k8" and r["metric"] == "rmse" and r["case"] == "all"]
    assert rmse and rmse[0] == pytest.approx(summary["methods"]["podiff_k8"]["rmse"], rel=1e-12)

    members = sorted((out / "samples" / "podiff_k8").glob("case_*.fld"))
    assert len(members) == len(summary["cases"])
    manifest = podiff.read_manifest(out)
    for rel in ("data/train_hr.fst", "metrics/metrics.csv"):
        assert manifest["artifacts"][rel] == podiff.sha256_file(out / rel)


@pytest.mark.skipif(not os.environ.get("PODIFF_CLI"), reason="CLI path not provided")
def test_cli_exit_codes(tmp_path):
    cli = os.environ["PODIFF_CLI"]
    assert subprocess.run([cli, "evaluate", "--config", str(SMOKE), "--out", str(tmp_path)]).returncode == 3
    res = subprocess.run([cli, "config", "--config", str(SMOKE)], capture_output=True, text=True)
    assert res.returncode == 0
