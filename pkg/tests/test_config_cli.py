import json
from pathlib import Path

import pytest
import yaml

from nls_lab.errors import ConfigError
from nls_lab.experiments import cli
from nls_lab.experiments.config import from_dict, load_config
from nls_lab.experiments.runner import COLUMNS, run

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

SMALL_RECOVERY = {
    "scenario": "recovery_sweep",
    "grid": {"n": 128, "L": 32.0},
    "nonlinearity": {"kind": "power", "p": 3.0},
    "probes": {"sigmas": [0.3], "x0": [0.0, 0.5], "eps_rule": "proportional"},
    "solver": {"horizon": "sigma", "horizon_value": 8.0, "dt": 0.01},
    "params": {"mode": "holder"},
}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


# --- config parsing -----------------------------------------------------------------

@pytest.mark.parametrize("data,path", [
    ({"scenario": "recovery_sweep", "probes": {"sigma": [0.1]}}, "probes.sigma"),
    ({"scenario": "recovery_sweep", "grid": {"n": 128, "size": 3}}, "grid.size"),
    ({"scenario": "stability_curve", "params": {"detlas": [0.1]}}, "params.detlas"),
    ({"scenario": "validate_kernels", "extra": 1}, "extra"),
])
def test_unknown_key_names_field(data, path):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.field == path
    assert path in str(exc.value)


@pytest.mark.parametrize("patch,path", [
    ({"grid": {"n": 100}}, "grid.n"),
    ({"probes": {"x0": [30.0]}}, "probes.x0[0]"),
    ({"probes": {"sigmas": [0.3, -1.0]}}, "probes.sigmas[1]"),
    ({"params": {"mode": "bogus"}}, "params.mode"),
    ({"nonlinearity": {"p": 5.0}}, "nonlinearity.p"),
    ({"solver": {"dt": 0.5}}, "solver.dt"),
])
def test_invalid_values_name_field(patch, path):
    data = {**SMALL_RECOVERY, **patch}
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.field == path


def test_log_mode_rejects_large_sigma():
    data = {**SMALL_RECOVERY, "nonlinearity": {"p": 2.0}, "params": {"mode": "log_endpoint"},
            "probes": {"sigmas": [0.6]}}
    with pytest.raises(ConfigError):
        from_dict(data)


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = load_config(path)
        assert len(cfg.config_hash()) == 16


def test_hash_ignores_workers_and_output():
    a = from_dict(SMALL_RECOVERY)
    b = from_dict({**SMALL_RECOVERY, "workers": 4, "output_dir": "elsewhere"})
    c = from_dict({**SMALL_RECOVERY, "seed": 3})
    assert a.config_hash() == b.config_hash() != c.config_hash()


# --- CLI ----------------------------------------------------------------------------

def test_dry_run(tmp_path, capsys):
    assert cli.main(["recover", "--config", str(CONFIGS / "recover_p3.yaml"), "--dry-run"]) == 0
    assert "config ok" in capsys.readouterr().out
    assert not (tmp_path / "x").exists()


def test_exit_code_bad_config(tmp_path):
    path = write_cfg(tmp_path, {"scenario": "recovery_sweep", "bogus": 1})
    assert cli.main(["recover", "--config", str(path), "--dry-run"]) == cli.EXIT_CONFIG


def test_exit_code_scenario_mismatch():
    cfg = str(CONFIGS / "recover_p3.yaml")
    assert cli.main(["stability", "--config", cfg, "--dry-run"]) == cli.EXIT_CONFIG


def test_exit_code_missing_file(tmp_path):
    assert cli.main(["recover", "--config", str(tmp_path / "nope.yaml")]) == cli.EXIT_IO


def test_exit_code_numerical_failure(tmp_path):
    data = {"scenario": "scatter_convergence", "grid": {"n": 128, "L": 32.0},
            "probes": {"sigmas": [1.0], "x0": [0.0], "eps_rule": "fixed", "eps_value": 0.05},
            "solver": {"horizon": "fixed", "horizon_value": 1.0, "t_max_factor": 2.0,
                       "tol_scatter": 1e-15, "strict": True},
            "params": {"p_values": [2.0]}}
    path = write_cfg(tmp_path, data)
    code = cli.main(["scatter", "--config", str(path), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_NUMERICAL


def test_validate_kernels_run(tmp_path, capsys):
    out = tmp_path / "vk"
    code = cli.main(["validate-kernels", "--config", str(CONFIGS / "validate_kernels.yaml"),
                     "--out", str(out)])
    text = capsys.readouterr().out
    assert code == 0
    assert "lambda(p) table" in text and "residual bound check" in text and "PASS" in text
    for name in ("manifest.json", "validate_kernels.csv", "summary.txt", "summary.json",
                 "plot.gp"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    header = (out / "validate_kernels.csv").read_text().splitlines()[0].split(",")
    assert header == COLUMNS["validate_kernels"] + ["config_hash"]
    rows = (out / "validate_kernels.csv").read_text().splitlines()[1:]
    assert rows and all(r.endswith(manifest["config_hash"]) for r in rows)


def test_stability_same_coefficient_is_degenerate(tmp_path):
    cfg = from_dict({"scenario": "stability_curve", "grid": {"n": 128, "L": 32.0},
                     "params": {"p_values": [3.0], "deltas": [0.0], "probe_sigmas": [0.5, 1.0]}})
    res = run(cfg, tmp_path / "st")
    curve = res.summary["curves"][0]
    assert curve["degenerate"]
    assert "fits" not in curve
    assert all(d["distance"] == 0.0 for d in curve["distances"])
    assert "degenerate" in (tmp_path / "st" / "summary.txt").read_text()


def test_determinism_byte_identical(tmp_path):
    cfg_a = from_dict({**SMALL_RECOVERY, "workers": 1})
    cfg_b = from_dict({**SMALL_RECOVERY, "workers": 2})
    ra = run(cfg_a, tmp_path / "a")
    rb = run(cfg_b, tmp_path / "b")
    assert ra.csv_path.read_bytes() == rb.csv_path.read_bytes()
    assert (tmp_path / "a" / "summary.txt").read_bytes() == (tmp_path / "b" / "summary.txt").read_bytes()


def test_stability_random_probes_seeded(tmp_path):
    base = {"scenario": "stability_curve", "grid": {"n": 128, "L": 32.0},
            "params": {"p_values": [3.0], "deltas": [0.2], "probe_sigmas": [0.5, 1.0],
                       "random_probes": 2}}
    r1 = run(from_dict({**base, "seed": 5}), tmp_path / "s1")
    r2 = run(from_dict({**base, "seed": 5}), tmp_path / "s2")
    r3 = run(from_dict({**base, "seed": 6}), tmp_path / "s3")
    assert r1.csv_path.read_text() == r2.csv_path.read_text()
    assert r1.csv_path.read_text() != r3.csv_path.read_text()


def test_grid_independence_gate(tmp_path):
    cfg0 = from_dict(SMALL_RECOVERY)
    cfg1 = from_dict({**SMALL_RECOVERY, "refine": 1})
    e0 = run(cfg0, tmp_path / "r0").summary["sup_errors"][0]["sup_error"]
    e1 = run(cfg1, tmp_path / "r1").summary["sup_errors"][0]["sup_error"]
    assert abs(e1 - e0) <= cfg0.tolerances.grid_independence * abs(e0)
