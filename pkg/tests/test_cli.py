import json

import pytest

from gridless_doa import cli


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--angles", "70,100", "--snr", "30", "--seed", "3", "--out", out) == 0
    return out


def test_simulate_outputs(simulated):
    assert {p.name for p in simulated.iterdir()} == {"geometry.txt", "snapshot.txt", "truth.json",
                                                    "manifest.json"}
    truth = json.loads((simulated / "truth.json").read_text())
    assert truth["angles_deg"] == pytest.approx([70.0, 100.0])
    manifest = json.loads((simulated / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["command"] == "simulate"


def test_estimate_roundtrip(simulated, tmp_path, capsys):
    out = tmp_path / "est"
    code = run("estimate", "--geometry", simulated / "geometry.txt", "--snapshot",
               simulated / "snapshot.txt", "-k", 2, "--algos", "fnlanm", "--out", out)
    assert code == 0
    record = json.loads((out / "results.jsonl").read_text().splitlines()[0])
    assert record["angles_deg"] == pytest.approx([70.0, 100.0], abs=0.5)
    assert "fnlanm angles" in capsys.readouterr().out


def test_sweep_writes_csv(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nkind = snr_sweep\n[snr_sweep]\nsnr_grid_db = 20\n")
    out = tmp_path / "sw"
    assert run("sweep", "--config", cfg, "--trials", 2, "--algos", "dbf", "--threads", 1, "--out", out) == 0
    lines = (out / "snr_sweep.csv").read_text().splitlines()
    assert lines[0].startswith("sweep_var,sweep_value,algorithm")
    assert len(lines) == 3
    assert (out / "snr_sweep_runtime.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["threads"] == 1


def test_scenario_and_bench(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[scenario]\nranges_m = 20\n[bench]\nbench_orders = 8, 16, 32\n"
                   "bench_iterations = 2\nbench_repeats = 1\n")
    assert run("scenario", "--config", cfg, "--algos", "dbf,fnlanm", "--out", tmp_path / "s") == 0
    assert (tmp_path / "s" / "scenario.csv").read_text().count("\n") == 3
    assert run("bench", "--config", cfg, "--out", tmp_path / "b") == 0
    assert (tmp_path / "b" / "bench_mirror.csv").exists()


@pytest.mark.parametrize("argv", [
    ("sweep", "--algos", "music"),
    ("sweep", "--config", "/nonexistent/file.ini"),
    ("simulate", "--angles", "ninety"),
    ("simulate", "--angles", "0"),
    ("sweep", "--threads", "0"),
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    assert run(*argv, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_unparseable_snapshot_exit_2(simulated, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0 oops\n")
    assert run("estimate", "--geometry", simulated / "geometry.txt", "--snapshot", bad, "-k", 1,
               "--out", tmp_path) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_3(simulated, tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[solver]\nstep_size = 1e300\nmax_iter = 1\n")
    code = run("estimate", "--config", cfg, "--geometry", simulated / "geometry.txt", "--snapshot",
               simulated / "snapshot.txt", "-k", 1, "--algos", "fnlanm", "--out", tmp_path)
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "gridless_doa", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
