import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from momray import cli
from momray.catalog import catalog_phantom
from momray.cli import ConfigError, ExperimentConfig, dump_config, load_config, main
from momray.files import read_sinogram_bin, read_sinogram_csv

from oracles import line_moment

COARSE = {"pCount": 256, "thetaCount": 64, "rnGridSize": 64, "pMax": 12.0}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def run(tmp_path, workflow, data, out="out", extra=()):
    cfg = write_cfg(tmp_path, data)
    code = main([workflow, "--config", cfg, "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- configuration -----------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict({"phantom": {"random": {"rank": 2, "lumps": 3}}, "grid": COARSE,
                                      "weights": [[0.5, 0.25]], "levels": 2, "seed": 4})
    again = ExperimentConfig.from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg and again.hash() == cfg.hash()
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


@pytest.mark.parametrize("data", [
    {"phantom": {"name": "gauss-vec-1"}, "gird": {}},
    {"phantom": {"name": "gauss-vec-1"}, "grid": {"pcount": 64}},
    {"phantom": {"name": "gauss-vec-1", "rank": 1}},
    {"phantom": {"name": "no-such-phantom"}},
    {"phantom": {"rank": 1, "lumps": [{"center": [0, 0], "width": 1, "colour": 1}]}},
    {"phantom": {"name": "gauss-vec-1"}, "weights": [[0, -0.5]]},
    {"phantom": {"name": "gauss-vec-1"}, "grid": {"pCount": 100}},
    {"phantom": {"name": "gauss-vec-1"}, "route": "sideways"},
    {"grid": COARSE},
])
def test_invalid_configs_are_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_unknown_key_exits_with_code_2(tmp_path, capsys):
    code, _ = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "grdi": {}})
    assert code == 2
    assert "grdi" in capsys.readouterr().err


def test_workflow_mismatch_and_bad_yaml_exit_2(tmp_path):
    code, _ = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "workflow": "invert"})
    assert code == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("phantom: [unclosed")
    assert main(["forward", "--config", str(bad)]) == 2
    assert main(["forward", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["no-such-workflow"]) == 2


def test_numerical_failure_exits_with_code_3(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise ArithmeticError("quadrature diverged")
    monkeypatch.setattr(cli, "_forward_sinograms", boom)
    code, _ = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "grid": COARSE})
    assert code == 3
    assert "[forward]" in capsys.readouterr().err


def test_too_many_levels_is_a_config_error(tmp_path):
    code, _ = run(tmp_path, "invert", {"phantom": {"name": "gauss-vec-1"}, "grid": COARSE}, extra=["--levels", "6"])
    assert code == 2


# -- forward ---------------------------------------------------------------------------------

def test_forward_zero_phantom_writes_zero_sinograms(tmp_path):
    code, out = run(tmp_path, "forward", {"phantom": {"rank": 1, "lumps": []}, "grid": COARSE})
    assert code == 0
    for k in (0, 1):
        g, _ = read_sinogram_bin(out / f"sinogram_k{k}")
        assert not np.any(g.values)


def test_forward_spot_values_match_oracle(tmp_path, rng):
    code, out = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "grid": COARSE})
    assert code == 0
    f = catalog_phantom("gauss-vec-1")
    for k in (0, 1):
        g, meta = read_sinogram_bin(out / f"sinogram_k{k}")
        assert meta["k"] == k
        from_csv = read_sinogram_csv(out / f"sinogram_k{k}.csv")[k]
        np.testing.assert_array_equal(from_csv.values, g.values)
        for _ in range(10):
            a, b = rng.integers(g.theta_count), rng.integers(g.p_count)
            th, p = g.theta[a], g.p[b]
            x = p * np.array([-np.sin(th), np.cos(th)])
            xi = np.array([np.cos(th), np.sin(th)])
            assert abs(g.values[a, b] - line_moment(f, k, x, xi)) < 1e-8


def test_forward_rank_two_writes_three_momenta(tmp_path):
    code, out = run(tmp_path, "forward", {"phantom": {"name": "gauss-tensor-2"}, "grid": COARSE,
                                          "formats": ["bin"]})
    assert code == 0
    assert sorted(p.name for p in out.glob("sinogram_k*.bin")) == [f"sinogram_k{k}.bin" for k in range(3)]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["rank"] == 2 and len(manifest["config_hash"]) == 64
    assert set(manifest["files"]) == {p.name for p in out.iterdir()} - {"manifest.json"}


# -- invert ----------------------------------------------------------------------------------

def test_forward_then_invert(tmp_path):
    grid = {"pCount": 512, "thetaCount": 128, "rnGridSize": 128}
    code, fwd = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "grid": grid}, out="fwd")
    assert code == 0
    code, inv = run(tmp_path, "invert", {"phantom": {"name": "gauss-vec-1"}, "grid": grid,
                                         "input": str(fwd)}, out="inv")
    assert code == 0
    rows = read_rows(inv / "errors.csv")
    assert [r["component"] for r in rows] == ["0", "1"]
    assert all(float(r["L2_err"]) < 0.02 for r in rows)
    assert all(r["angles"] == "128" for r in rows)


def test_invert_scalar_writes_one_component(tmp_path):
    code, out = run(tmp_path, "invert", {"phantom": {"name": "gauss-scalar-0"}, "grid": COARSE})
    assert code == 0
    assert sorted(p.name for p in out.glob("recon_*.bin")) == ["recon_scalar.bin"]


def test_invert_missing_momentum_exits_2(tmp_path, capsys):
    code, fwd = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "grid": COARSE}, out="fwd")
    assert code == 0
    (fwd / "sinogram_k1.bin").unlink()
    code, _ = run(tmp_path, "invert", {"phantom": {"name": "gauss-vec-1"}, "grid": COARSE,
                                       "input": str(fwd)}, out="inv")
    assert code == 2
    assert "I^1" in capsys.readouterr().err


def test_invert_rejects_foreign_sidecar(tmp_path):
    code, fwd = run(tmp_path, "forward", {"phantom": {"name": "gauss-vec-1"}, "grid": COARSE}, out="fwd")
    side = json.loads((fwd / "sinogram_k1.json").read_text())
    side["meta"]["config_hash"] = "0" * 64
    (fwd / "sinogram_k1.json").write_text(json.dumps(side))
    code, _ = run(tmp_path, "invert", {"phantom": {"name": "gauss-vec-1"}, "input": str(fwd)}, out="inv")
    assert code == 2


# -- verify ------------------------------------------------------------------------------------

def test_verify_reshetnyak_vector_ladder_strictly_decreases(tmp_path):
    code, out = run(tmp_path, "verify-reshetnyak", {"phantom": {"name": "gauss-vec-1"}}, extra=["--levels", "3"])
    assert code == 0
    rows = read_rows(out / "convergence.csv")
    for s, t in ((0.0, 0.0), (1.0, 0.0), (0.0, -0.25)):
        col = [float(r["rel_residual"]) for r in rows if float(r["s"]) == s and float(r["t"]) == t]
        assert len(col) == 3
        assert col[0] > col[1] > col[2]
    iso = read_rows(out / "isometry_stability.csv")
    assert all(r["stability_holds"] == "True" for r in iso)
    reports = json.loads((out / "reports.json").read_text())
    assert len(reports) == 9 and len(reports[0]["terms"]) == 4


def test_verify_reshetnyak_scalar_final_level(tmp_path):
    code, out = run(tmp_path, "verify-reshetnyak", {"phantom": {"name": "gauss-scalar-0"}, "weights": [[0, 0]]})
    assert code == 0
    (row,) = read_rows(out / "convergence.csv")
    assert float(row["rel_residual"]) < 0.01


def test_verify_identities_on_zero_phantom(tmp_path):
    code, out = run(tmp_path, "verify-identities", {"phantom": {"rank": 2, "lumps": []}})
    assert code == 0
    rows = read_rows(out / "identities.csv")
    assert rows and all(float(r["max_residual"]) == 0.0 for r in rows)


def test_verify_identities_catalog_phantom(tmp_path):
    code, out = run(tmp_path, "verify-identities", {"phantom": {"name": "gauss-vec-1"}})
    assert code == 0
    rows = read_rows(out / "identities.csv")
    names = {r["identity"] for r in rows}
    assert {"homogeneity", "shift-law", "origin-shift", "fourier-slice"} <= names
    assert all(float(r["max_residual"]) < 1e-6 for r in rows)


# -- determinism ---------------------------------------------------------------------------------

def _stable_files(out: Path):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize("workflow, phantom", [("forward", {"name": "gauss-tensor-2"}),
                                               ("invert", {"random": {"rank": 1}}),
                                               ("verify-identities", {"name": "two-lump-scalar-0"})])
def test_outputs_are_bit_identical(tmp_path, workflow, phantom):
    data = {"phantom": phantom, "grid": COARSE, "seed": 11}
    code_a, a = run(tmp_path, workflow, data, out="a")
    code_b, b = run(tmp_path, workflow, data, out="b")
    assert code_a == code_b == 0
    assert _stable_files(a) == _stable_files(b)
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    ma.pop("timings_s"), mb.pop("timings_s")
    ma["config"].pop("output"), mb["config"].pop("output")
    assert ma == mb and ma["seed"] == 11
