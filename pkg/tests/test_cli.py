import json
import subprocess
import sys

import pytest

from wavepolymer.cli import main

CFG = {
    "J": 1, "T": 1, "n_modes": 8, "n_x": 32, "n_t": 20, "beta": 0.5, "seed": 3, "n_replicas": 24,
    "gibbs": {"n_steps": 40},
    "girsanov": {"a_values": [0.5], "n_replicas": 200},
    "sweep": {"J_values": [0.5, 1, 2, 4], "pcn_steps": 40, "pcn_burn": 10, "n_replicas": 24},
    "verify": {"variance_pairs": 200, "variance_modes": 512, "bm_paths": 2, "bm_T": [3], "bm_dt": 1e-3,
               "exp_t_max": 5, "exp_step": 0.01, "jensen_samples": 4},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG))
    return p


EXPECTED = {
    "simulate": ["simulate.csv", "simulate.json", "field_0.bin"],
    "radius": ["radius.csv", "radius.json", "theta.csv"],
    "gibbs": ["gibbs.csv", "gibbs.json", "localtime_0.csv", "pcn.csv"],
    "sweep": ["sweep.csv", "sweep.json"],
    "verify": ["verify_summary.json", "verify_worst.csv"],
    "girsanov-check": ["girsanov.json"],
}


@pytest.mark.parametrize("cmd", sorted(EXPECTED))
def test_subcommands_write_outputs(cmd, cfg_path, tmp_path):
    out = tmp_path / cmd
    assert main([cmd, "--config", str(cfg_path), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    for f in EXPECTED[cmd]:
        assert (out / f).is_file()
        assert f in man["outputs"]
    assert man["seed"] == 3 and len(man["config_hash"]) == 64


def test_gibbs_csv_columns(cfg_path, tmp_path):
    main(["gibbs", "--config", str(cfg_path), "--out", str(tmp_path)])
    raw = (tmp_path / "gibbs.csv").read_bytes()
    assert raw.startswith(b"replica_id,phi,log_weight,R\n") and b"\r" not in raw
    data = json.loads((tmp_path / "gibbs.json").read_text())
    assert {"z_hat", "q_mean", "ess", "n_replicas", "config_hash"} <= set(data)


def test_simulate_without_beta_has_no_weights(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({k: v for k, v in CFG.items() if k != "beta"}))
    main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")])
    assert (tmp_path / "o" / "simulate.csv").read_text().splitlines()[0] == "replica_id,R,R_modes"


def test_config_errors_exit_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**CFG, "n_x": 16}))
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "AliasRule" in capsys.readouterr().err


def test_seed_override_and_threads_env(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setenv("WAVEPOLYMER_THREADS", "3")
    main(["radius", "--config", str(cfg_path), "--out", str(tmp_path / "a"), "--seed", "9"])
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 9 and man["threads"] == 3


@pytest.mark.parametrize("cmd", ["simulate", "gibbs", "radius", "girsanov-check"])
def test_thread_count_does_not_change_outputs(cmd, cfg_path, tmp_path):
    for t in ("1", "4"):
        main([cmd, "--config", str(cfg_path), "--out", str(tmp_path / t), "--threads", t])
    names = sorted(p.name for p in (tmp_path / "1").iterdir() if p.name != "manifest.json")
    for n in names:
        assert (tmp_path / "1" / n).read_bytes() == (tmp_path / "4" / n).read_bytes(), n


def test_module_entry_point(cfg_path, tmp_path):
    r = subprocess.run([sys.executable, "-m", "wavepolymer", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "girsanov-check" in r.stdout
