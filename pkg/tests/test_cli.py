import csv
import json
import subprocess
import sys

import pytest

from conftest import ROOT
from riesz_condenser.cli import main
from riesz_condenser.config import Config, ConfigError, config_hash, load_config

CONFIGS = ROOT / "configs"


def small_config(**over):
    cfg = {
        "schema_version": 1,
        "dimension": 3,
        "alpha": 2.0,
        "kernel": {"mode": "exact"},
        "geometry": {"type": "touching_balls", "resolution": 6, "exclusion": 0.0},
        "g": [1.0, 1.0],
        "a": [1.0, 1.0],
        "sigma": {"type": "lebesgue_ratio", "factor": 2.0},
    }
    cfg.update(over)
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=1))
    return str(path)


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", write(tmp_path, small_config()), "--out", str(out)]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["result"]["status"] == "optimal"
    assert res["result"]["feasibility"]["feasible"]
    assert res["result"]["kkt_residual"] <= 1e-8
    assert res["config_hash"] == config_hash(small_config())
    rows = list(csv.reader((out / "weights.csv").open()))
    assert len(rows) > 2
    trace = list(csv.DictReader((out / "trace.csv").open()))
    assert float(trace[-1]["objective"]) <= float(trace[0]["objective"])
    assert "status=optimal" in capsys.readouterr().out


def test_solve_mass_failure_exits_three(tmp_path, capsys):
    cfg = small_config(sigma={"type": "lebesgue_ratio", "factor": 0.5})
    out = tmp_path / "out"
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(out)]) == 3
    assert "g_mass" in capsys.readouterr().err
    res = json.loads((out / "result.json").read_text())
    assert res["result"]["status"] == "infeasible"
    assert not (out / "weights.csv").exists()


def test_solve_iteration_limit_exits_two(tmp_path):
    cfg = small_config(solver={"max_iter": 1})
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_alpha_not_below_dimension_exits_one(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, small_config(alpha=3.0))]) == 1
    assert "alpha" in capsys.readouterr().err


def test_malformed_json_reports_location(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "alpha": 2.0,\n  "dimension" 3\n}\n')
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "bad.json:3:" in capsys.readouterr().err


@pytest.mark.parametrize("over, where", [
    ({"schema_version": 2}, "schema_version"),
    ({"kernel": {"mode": "soft"}}, "kernel.mode"),
    ({"solver": {"tolerance": 1}}, "solver"),
    ({"geometry": {"type": "cubes"}}, "geometry.type"),
])
def test_config_errors_name_the_field(tmp_path, over, where):
    with pytest.raises(ConfigError) as exc:
        cfg = load_config(write(tmp_path, small_config(**over)))
        cfg.problem()
        cfg.solve_options()
    assert exc.value.where == where


def test_config_hash_ignores_key_order_and_layout(tmp_path):
    cfg = small_config()
    flipped = dict(reversed(list(cfg.items())))
    a = load_config(write(tmp_path, cfg, "a.json"))
    (tmp_path / "b.json").write_text(json.dumps(flipped))
    b = load_config(str(tmp_path / "b.json"))
    assert a.hash == b.hash
    assert a.hash != Config(small_config(alpha=1.5)).hash


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, small_config())]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["config_hash"]
    bad = small_config(sigma={"type": "lebesgue_ratio", "factor": 0.5})
    assert main(["validate", "--config", write(tmp_path, bad)]) == 3


def test_kelvin_check(tmp_path, capsys):
    cfg = small_config(kelvin={"count": 10, "max_atoms": 50})
    assert main(["kelvin-check", "--config", write(tmp_path, cfg)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and all(line.endswith("ok") for line in lines)


def test_kelvin_check_refuses_regularized(tmp_path, capsys):
    cfg = small_config(kernel={"mode": "regularized"})
    assert main(["kelvin-check", "--config", write(tmp_path, cfg), "--count", "3"]) == 1
    assert "mode" in capsys.readouterr().err


def test_kelvin_check_pole_on_plate(tmp_path, capsys):
    ball = {"type": "ball", "center": [0, 0, 0], "radius": 1.0, "resolution": 4}
    far = {"type": "ball", "center": [3, 0, 0], "radius": 1.0, "resolution": 4}
    cfg = small_config(geometry={"type": "plates", "touch_point": [0.25, 0.25, 0.25],
                                 "plates": [ball, far]})
    assert main(["kelvin-check", "--config", write(tmp_path, cfg), "--count", "3"]) == 1
    assert "pole" in capsys.readouterr().err


def test_capacity_command(tmp_path, capsys):
    cfg = small_config(capacity={"cloud": {"type": "ball", "center": [0, 0, 0],
                                           "radius": 1.0, "resolution": 8}})
    out = tmp_path / "cap"
    assert main(["capacity", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    info = json.loads((out / "capacity.json").read_text())
    assert info["estimate"] == pytest.approx(1.0, rel=0.1)
    assert info["estimate"] * info["min_energy"] == pytest.approx(1.0)
    assert (out / "equilibrium.csv").exists()


def test_probe_command(tmp_path):
    out = tmp_path / "probe"
    cfg = str(CONFIGS / "short_circuit_probe.json")
    assert main(["probe", "--config", cfg, "--out", str(out), "--levels", "6,8"]) == 0
    rows = list(csv.DictReader((out / "probe.csv").open()))
    assert [int(r["level"]) for r in rows] == [6, 8]
    assert set(rows[0]) == {"level", "objective", "near_fraction_pos", "near_fraction_neg",
                            "upper_active_count"}
    info = json.loads((out / "probe.json").read_text())
    assert "contract" in info["checks"]


def test_bad_levels_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["probe", "--config", write(tmp_path, small_config()), "--levels", "6,x"])


@pytest.mark.parametrize("name", ["touching_constrained", "touching_kelvin",
                                  "unit_ball_capacity", "short_circuit_probe"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / f"{name}.json")
    assert cfg.problem() is not None


def test_threads_env_fallback(tmp_path, monkeypatch):
    cfg = write(tmp_path, small_config())
    monkeypatch.setenv("RIESZ_THREADS", "3")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "env")]) == 0
    monkeypatch.setenv("RIESZ_THREADS", "1")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "one")]) == 0
    assert (tmp_path / "env" / "weights.csv").read_bytes() == (tmp_path / "one" / "weights.csv").read_bytes()
    monkeypatch.setenv("RIESZ_THREADS", "0")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "zero")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "riesz_condenser", "validate", "--config",
                           write(tmp_path, small_config())], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
