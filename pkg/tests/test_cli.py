import csv
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from fracspde.cli import main
from fracspde.solver import Ensemble, GridSpec, read_ensemble, write_ensemble

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "model": {"alpha": 2.0, "beta": 0.5},
    "grid": {"T": 1.0, "nt": 16, "half_width": 8.0, "nx": 64, "tail_tol": 1.0, "nyquist_tol": 1.0},
    "coefficients": {
        "b": {"family": "linear", "params": {"lam": 0.0}},
        "sigma": {"family": "linear", "params": {"lam": 1.0}},
    },
    "initial": {"kind": "constant", "values": 1.0},
    "ensemble": {"replicas": 130, "base_seed": 4},
    "probes": {"times": [0.5, 1.0], "positions": [0.0], "moment_orders": [2]},
}


def write_cfg(tmp_path, raw, name="c.yaml"):
    f = tmp_path / name
    f.write_text(yaml.safe_dump(raw))
    return str(f)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_constants(tmp_path, capsys):
    assert main(["constants", "--config", str(CONFIGS / "linear_sigma.yaml"), "--out", str(tmp_path)]) == 0
    rows = {r["name"]: float(r["value"]) for r in read_csv(tmp_path / "constants.csv")}
    assert rows["r"] == 0.25 and rows["Chash"] == pytest.approx(2.0648262958, rel=1e-9)
    assert "N_T" in capsys.readouterr().out


def test_kernel(tmp_path):
    assert main(["kernel", "--config", str(CONFIGS / "heat_spike.yaml"), "--out", str(tmp_path)]) == 0
    checks = read_csv(tmp_path / "kernel_checks.csv")
    assert checks and all(r["verdict"] == "pass" for r in checks)
    assert (tmp_path / "kernel.csv").exists()


def test_simulate_outputs(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    ens = read_ensemble(tmp_path / "ensemble.bin")
    assert ens.n_replicas == 130 and list(ens.time_indices) == [0, 8, 16] and len(ens.config_hash) == 64
    stats = {r["statistic"] for r in read_csv(tmp_path / "summary.csv")}
    assert stats == {"mean", "variance", "moment_2"}


@pytest.mark.parametrize("threads", [1, 8])
def test_simulate_byte_identical(tmp_path, threads):
    cfg = write_cfg(tmp_path, SMALL)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d), "--threads", str(threads)]) == 0
    assert (tmp_path / "a/ensemble.bin").read_bytes() == (tmp_path / "b/ensemble.bin").read_bytes()


def test_seed_override(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    assert read_ensemble(tmp_path / "b/ensemble.bin").base_seed == 99
    assert (tmp_path / "a/ensemble.bin").read_bytes() != (tmp_path / "b/ensemble.bin").read_bytes()


def test_verify_moments_pass(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["verify", "moments", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "report.csv")
    assert len(rows) == 2 and all(r["verdict"] == "pass" for r in rows)


def test_verify_fabricated_ensemble_fails(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    grid = GridSpec(1.0, 16, 8.0, 64)
    vals = np.full((200, 3, grid.nx), 1e40)
    write_ensemble(tmp_path / "fake.bin", Ensemble(grid, vals, np.array([0, 8, 16]), 0, np.arange(200)))
    code = main(["verify", "moments", "--config", cfg, "--out", str(tmp_path), "--ensemble", str(tmp_path / "fake.bin")])
    assert code == 1
    assert {r["verdict"] for r in read_csv(tmp_path / "report.csv")} == {"fail"}


def test_verify_converge(tmp_path):
    raw = SMALL | {"truncation": {"N_list": [0.5, 1.0, 1.5]}, "ensemble": {"replicas": 20, "base_seed": 1}}
    raw["coefficients"] = SMALL["coefficients"] | {"sigma": {"family": "loglip", "params": {"p": 1.3}}}
    assert main(["verify", "converge", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "report.csv")
    assert [r["quantity"] for r in rows] == ["convergence"] * 3


@pytest.mark.parametrize(
    "patch",
    [
        {"model": {"alpha": 2.0, "beta": 1.5}},
        {"grid": {"T": 1.0, "nt": 16, "half_width": 0.5, "nx": 64}},
        {"probes": {"times": [5.0]}},
        {"unknown": 1},
    ],
)
def test_config_errors_exit_2(tmp_path, patch, capsys):
    cfg = write_cfg(tmp_path, SMALL | patch)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_flags(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["simulate", "--config", cfg, "--threads", "0"]) == 2
    assert main(["simulate", "--config", cfg, "--seed", str(2**64)]) == 2
    with pytest.raises(SystemExit):
        main(["bogus", "--config", cfg])


def test_numerical_error_exit_3(tmp_path):
    raw = SMALL | {"initial": {"kind": "constant", "values": 1e300}}
    raw["coefficients"] = {"b": {"family": "linear", "params": {"lam": 1e10}}, "sigma": SMALL["coefficients"]["sigma"]}
    with np.errstate(all="ignore"):
        assert main(["simulate", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path)]) == 3


def test_verify_needs_probes(tmp_path):
    raw = SMALL | {"probes": {"times": []}}
    assert main(["verify", "moments", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path)]) == 2


def test_zero_sigma_config(tmp_path):
    assert main(["verify", "moments", "--config", str(CONFIGS / "zero_sigma.yaml"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "report.csv")
    assert all(math.isclose(float(r["ci_lo"]), float(r["ci_hi"])) for r in rows)
