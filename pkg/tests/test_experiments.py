import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from giasec.cli import main
from giasec.experiments import (ExperimentConfig, StudyResult, derive_seed, rate_slope, read_csv, run,
                                run_case_study, run_secrecy_sweep, run_tradeoff_sweep, run_transitory_sweep,
                                secrecy_curve, transitory_grid, transitory_width)
from giasec.geometry import StochasticParams

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TINY_SECRECY = dict(kind="secrecy_sweep", lambda_l=0.04, lambda_j=0.09, snr_db=[0, 10, 30], topologies=2,
                    channel_draws=1, observation_radius=6.0, cutoff=[True, False])
TINY = {
    "case-study": dict(kind="case_study", channel_draws=3),
    "sweep-secrecy": TINY_SECRECY,
    "sweep-transitory": dict(kind="transitory_sweep", M_l=4, N_l=4, M_j=4, N_e=4, densities=[0.08], topologies=1,
                             transitory_points=5, observation_radius=None, links_per_topology=10),
    "sweep-tradeoff": dict(kind="tradeoff_sweep", M_l=4, N_l=4, M_j=4, N_e=8, lambda_l_values=[0.03, 0.09],
                           topologies=1, tradeoff_candidates=2, observation_radius=None, links_per_topology=10),
    "region-map": dict(kind="region_map", lambda_l=0.2, lambda_j=0.2, M_l=4, N_l=4, M_j=12, N_e=8, curve_points=11),
}


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(TINY_SECRECY)
    back = ExperimentConfig.from_yaml(_write(tmp_path, yaml.safe_load(cfg.to_yaml())))
    assert back == cfg and back.sha256() == cfg.sha256()
    assert cfg.params.lambda_j == 0.09 and cfg.cutoff == (True, False)


def test_shipped_configs_load():
    kinds = {ExperimentConfig.from_yaml(p).kind for p in CONFIGS.glob("*.yaml")}
    assert kinds == {"case_study", "secrecy_sweep", "transitory_sweep", "tradeoff_sweep", "region_map"}


@pytest.mark.parametrize("bad", [dict(kind="nope"), dict(kind="secrecy_sweep", strategies=["XYZ"]),
                                 dict(kind="secrecy_sweep", bogus=1), dict(kind="secrecy_sweep", topologies=0),
                                 dict(kind="secrecy_sweep", R_range=[0.5, -0.5]), dict(lambda_l=0.1),
                                 dict(kind="secrecy_sweep", observation_radius=None)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_derive_seed_stable():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(1, 0)


def test_secrecy_sweep_reproducible_across_workers():
    cfg = ExperimentConfig.from_dict(TINY_SECRECY)
    a = run_secrecy_sweep(cfg, workers=1).to_csv()
    b = run_secrecy_sweep(cfg, workers=2).to_csv()
    assert a == b
    assert a.splitlines()[:2] == ["# giasec secrecy_sweep v1", "strategy,snr_db,cutoff,mean_secrecy_rate,samples"]


def test_cutoff_matters_little_at_low_snr():
    cfg = ExperimentConfig.from_dict({**TINY_SECRECY, "snr_db": [0, 5, 10], "topologies": 3})
    res = run_secrecy_sweep(cfg)
    for s in cfg.strategies:
        _, with_cut = secrecy_curve(res, s, True)
        _, without = secrecy_curve(res, s, False)
        assert np.all(np.abs(with_cut - without) <= 0.1 * np.maximum(with_cut, 1e-3) + 1e-9)


def test_rate_slope():
    snr = np.array([0.0, 30.0, 60.0])
    rate = np.log2(1 + 10 ** (snr / 10))
    assert rate_slope(snr, rate, 30, 60) == pytest.approx(1.0, abs=1e-3)


def test_case_study_ordering():
    res = run_case_study(seed=1, draws=40)
    row = {r["strategy"]: r for r in res.rows}
    assert row["D"]["sdof"] == 1.0
    assert row["D"]["secrecy_rate"] >= row["C"]["secrecy_rate"] > max(row["A"]["secrecy_rate"],
                                                                       row["B"]["secrecy_rate"])


def test_transitory_grid_monotone_and_bounded():
    p = StochasticParams(lambda_l=0.08, lambda_j=0.08, M_l=4, N_l=4, M_j=4, N_e=4)
    grid = transitory_grid(p, (-0.6, 0.6), 41)
    n, R = zip(*grid)
    assert list(n) == sorted(set(n)) and np.all(np.diff(R) >= 0)
    assert R[0] <= -0.6 + 0.05 and len(grid) <= 41


def test_transitory_sweep_shape():
    cfg = ExperimentConfig.from_dict(TINY["sweep-transitory"])
    res = run_transitory_sweep(cfg)
    sd = np.array([r["mean_sdof"] for r in res.rows])
    assert sd[0] == 0.0 and np.all((sd >= 0) & (sd <= 1))
    assert set(res.extra["widths"]) == {0.08}


def test_transitory_width_interpolates():
    R = np.linspace(-1, 1, 21)
    frac = np.clip((R + 0.5), 0, 1)
    assert transitory_width(R, frac) == pytest.approx(0.8)
    assert np.isnan(transitory_width(R, np.full(21, 0.5)))


def test_tradeoff_rows():
    cfg = ExperimentConfig.from_dict(TINY["sweep-tradeoff"])
    res = run_tradeoff_sweep(cfg)
    assert [r["lambda_l"] for r in res.rows] == [0.03, 0.09]
    for r in res.rows:
        assert 0 <= r["sdof_per_node"] <= r["best_d_l"]
        assert r["sdof_per_area"] == pytest.approx(r["sdof_per_node"] * r["lambda_l"])
    with pytest.raises(ValueError):
        run_tradeoff_sweep(cfg.with_(lambda_l_values=(0.2,)))


def test_flag_threshold():
    assert StudyResult("x", ("a",), [], requested=20, skipped=1).flagged
    assert not StudyResult("x", ("a",), [], requested=100, skipped=4).flagged


@pytest.mark.parametrize("command", sorted(TINY))
def test_cli_subcommands(command, tmp_path, capsys):
    out = tmp_path / "out"
    assert main([command, "--config", str(_write(tmp_path, TINY[command])), "--out", str(out), "--seed", "3"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"kind", "config_sha256", "config", "seeds", "versions", "outputs"} <= set(manifest)
    assert manifest["seeds"] == [3]
    for name in manifest["outputs"]:
        assert (out / name).exists()
    csvs = [n for n in manifest["outputs"] if n.endswith(".csv")]
    assert csvs and read_csv(out / csvs[0])
    assert "wrote" in capsys.readouterr().out


def test_cli_rejects_mismatched_kind(tmp_path, capsys):
    assert main(["case-study", "--config", str(_write(tmp_path, TINY["region-map"]))]) == 2
    assert main(["case-study", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["case-study", "--workers", "0"]) == 2


def test_run_is_byte_identical(tmp_path):
    cfg = ExperimentConfig.from_dict(TINY["sweep-transitory"])
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for name in ("transitory_sweep.csv", "curves.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_read_csv_requires_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_tradeoff_shape():
    cfg = ExperimentConfig.from_yaml(CONFIGS / "tradeoff_sweep.yaml").with_(topologies=2, links_per_topology=30)
    base = run_tradeoff_sweep(cfg).rows
    per_node = [r["sdof_per_node"] for r in base]
    per_area = [r["sdof_per_area"] for r in base]
    assert int(np.argmax(per_node)) == 0
    peak = int(np.argmax(per_area))
    assert 0 < peak < len(per_area) - 1
    assert per_area[peak] > per_area[0] and per_area[peak] > per_area[-1]
    more_ne = run_tradeoff_sweep(cfg.with_(params=cfg.params.with_(N_e=2 * cfg.params.N_e))).rows
    assert all(b["sdof_per_node"] <= a["sdof_per_node"] for a, b in zip(base, more_ne))
