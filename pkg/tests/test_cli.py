import json

import numpy as np
import pytest

from spinshuttle.cli import main
from spinshuttle.dynamics import load_result
from spinshuttle.landscape import ValleyLandscape, save_landscape
from spinshuttle.params import WellParams


@pytest.fixture()
def small_config(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[well]\n"
        "device_length = 150\n"
        "[simulation]\n"
        "record_points = 40\n"
        "v = 5\n"
        "T1v = 1e6\n"
        "kappa_z = 1e-6\n"
        "[optimizer]\n"
        "M = 2\n"
        "max_iter = 25\n"
        "v = 5\n"
    )
    return cfg


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_generate_creates_files_and_manifest(small_config, tmp_path):
    out = tmp_path / "gen"
    code = run_cli("--config", small_config, "--seed", 7, "--out", out, "generate", "-n", 2)
    assert code == 0
    files = sorted(out.glob("landscape_*.csv"))
    assert [f.name for f in files] == ["landscape_000007.csv", "landscape_000008.csv"]
    assert (out / "generation_stats.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert len(manifest["tasks"]) == 3  # 2 landscapes + summary
    for task in manifest["tasks"]:
        for digest in task["outputs"].values():
            assert len(digest) == 64


def test_generate_reproducible_digests(small_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli("--config", small_config, "--seed", 3, "--out", out1, "generate", "-n", 1) == 0
    assert run_cli("--config", small_config, "--seed", 3, "--out", out2, "generate", "-n", 1) == 0
    d1 = (out1 / "landscape_000003.csv").read_bytes()
    d2 = (out2 / "landscape_000003.csv").read_bytes()
    assert d1 == d2


def test_generate_zero_is_config_error(small_config, tmp_path):
    assert run_cli("--config", small_config, "--out", tmp_path / "x", "generate", "-n", 0) == 2


def test_simulate_sweep_and_stats(small_config, tmp_path):
    gen = tmp_path / "gen"
    run_cli("--config", small_config, "--seed", 5, "--out", gen, "generate", "-n", 2)
    sim = tmp_path / "sim"
    code = run_cli(
        "--config", small_config, "--out", sim, "simulate",
        *sorted(gen.glob("landscape_*.csv")), "--v", "5", "--T1v", "1e6",
        "--kappa-z", "1e-6",
    )
    assert code == 0
    summary = (sim / "simulate_summary.csv").read_text().splitlines()
    assert summary[0].startswith("seed,v_m_per_s")
    assert len(summary) == 3
    results = sorted(sim.glob("sim_*.csv"))
    assert len(results) == 2
    # stats over the two runs
    st = tmp_path / "stats"
    code = run_cli("--out", st, "stats", *results)
    assert code == 0
    table = (st / "percentiles.csv").read_text().splitlines()
    assert table[0].startswith("v_m_per_s,")
    assert len(table) > 40


def test_single_result_percentiles_equal_trace(small_config, tmp_path):
    gen = tmp_path / "gen"
    run_cli("--config", small_config, "--seed", 11, "--out", gen, "generate", "-n", 1)
    sim = tmp_path / "sim"
    run_cli("--config", small_config, "--out", sim, "simulate",
            *gen.glob("landscape_*.csv"))
    result_file = next(sim.glob("sim_*.csv"))
    res = load_result(result_file)
    st = tmp_path / "stats"
    run_cli("--out", st, "stats", result_file)
    rows = (st / "percentiles.csv").read_text().splitlines()[1:]
    med = [r.split(",") for r in rows if r.split(",")[4] == "50"]
    infid = np.array([float(r[5]) for r in med])
    assert np.allclose(infid, res.infidelity, rtol=1e-12)


def test_simulate_warns_on_digest_mismatch(small_config, tmp_path, capsys):
    gen = tmp_path / "gen"
    run_cli("--config", small_config, "--seed", 5, "--out", gen, "generate", "-n", 1)
    other_cfg = tmp_path / "other.ini"
    other_cfg.write_text("[well]\ndevice_length = 150\nband_offset = 180\n")
    sim = tmp_path / "sim"
    code = run_cli("--config", other_cfg, "--out", sim, "simulate",
                   *gen.glob("landscape_*.csv"))
    assert code == 0  # warning, not fatal
    assert "different well parameters" in capsys.readouterr().err


def test_simulate_flat_landscape_is_ideal(tmp_path, small_config):
    x = np.arange(0.0, 151.5, 1.5)
    flat = ValleyLandscape(x, np.full(x.size, 0.04), np.zeros(x.size), 99,
                           WellParams(device_length=150.0))
    path = tmp_path / "flat.csv"
    save_landscape(flat, path)
    sim = tmp_path / "sim"
    code = run_cli("--config", small_config, "--out", sim, "simulate", path,
                   "--T1v", "1e15")
    assert code == 0
    summary = (sim / "simulate_summary.csv").read_text().splitlines()[1]
    final_infidelity = float(summary.split(",")[4])
    assert final_infidelity < 1e-9


def test_optimize_campaign(small_config, tmp_path):
    gen = tmp_path / "gen"
    run_cli("--config", small_config, "--seed", 2, "--out", gen, "generate", "-n", 1)
    opt = tmp_path / "opt"
    code = run_cli("--config", small_config, "--out", opt, "optimize",
                   *gen.glob("landscape_*.csv"), "--M", "2")
    assert code == 0
    summary = (opt / "optimize_summary.csv").read_text().splitlines()
    assert len(summary) == 2
    fields = summary[1].split(",")
    baseline, optimized = float(fields[5]), float(fields[6])
    assert optimized <= baseline + 1e-15
    assert (opt / "optimize_percentiles.csv").exists()
    assert list(opt.glob("opt_*.log.csv")) and list(opt.glob("opt_*.result.csv"))


def test_stats_rejects_wrong_schema(small_config, tmp_path):
    gen = tmp_path / "gen"
    run_cli("--config", small_config, "--seed", 5, "--out", gen, "generate", "-n", 1)
    landscape_file = next(gen.glob("landscape_*.csv"))
    assert run_cli("--out", tmp_path / "st", "stats", landscape_file) == 2


def test_diagnose(small_config, tmp_path):
    gen = tmp_path / "gen"
    run_cli("--config", small_config, "--seed", 5, "--out", gen, "generate", "-n", 1)
    diag = tmp_path / "diag"
    code = run_cli("--config", small_config, "--out", diag, "diagnose",
                   *gen.glob("landscape_*.csv"), "--v", "1,5")
    assert code == 0
    rows = (diag / "diagnostics.csv").read_text().splitlines()
    assert rows[0].startswith("landscape,")
    assert len(rows) == 3


def test_missing_config_is_exit_2(tmp_path):
    assert run_cli("--config", tmp_path / "nope.ini", "--out", tmp_path, "generate") == 2


def test_parallel_jobs_match_serial(small_config, tmp_path):
    out1, out2 = tmp_path / "serial", tmp_path / "par"
    run_cli("--config", small_config, "--seed", 4, "--out", out1, "generate", "-n", 2)
    run_cli("--config", small_config, "--seed", 4, "--jobs", 2, "--out", out2,
            "generate", "-n", 2)
    for name in ("landscape_000004.csv", "landscape_000005.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
