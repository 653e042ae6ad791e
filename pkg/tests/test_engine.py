import json

import numpy as np
import pytest

from ruralv2x.config import ScenarioConfig, expand_sweep
from ruralv2x.engine import RngStreams, run_point, run_replication, run_sweep
from ruralv2x.metrics import read_csv

SMALL = ScenarioConfig(density_rho=10, sim_duration=1.5, warmup=0.5)


def same(a, b):
    return (np.array_equal(a.receptions, b.receptions) and np.array_equal(a.successes, b.successes)
            and a.attempts == b.attempts and np.array_equal(a.delay_slots, b.delay_slots))


def test_replication_deterministic():
    assert same(run_replication(SMALL, 0), run_replication(SMALL, 0))
    assert not same(run_replication(SMALL, 0), run_replication(SMALL, 1))


def test_streams_independent():
    a, b = RngStreams(1, 0), RngStreams(1, 0)
    assert a.mobility.random() == b.mobility.random()
    assert RngStreams(1, 0).sps_for(3).random() != RngStreams(1, 0).sps_for(4).random()
    assert RngStreams(1, 0).decode.random() != RngStreams(1, 1).decode.random()


def test_zero_duration_is_empty():
    acc = run_replication(SMALL.replace(sim_duration=0.0, warmup=0.0))
    assert acc.attempts == 0 and acc.receptions.sum() == 0 and acc.episodes == 0


def test_lone_vehicle_near_rsu_always_decodes():
    cfg = ScenarioConfig(density_rho=0.5, sim_duration=2.0, warmup=0.0, max_eval_distance=1000.0,
                         prr_bin_width=50.0, speed_stddev=0.0, mean_speed_v=30.0)
    acc = run_replication(cfg)
    near = acc.receptions[:4].sum()
    if near:
        assert acc.successes[:4].sum() == near


def test_no_vehicles():
    acc = run_replication(SMALL.replace(density_rho=0.0))
    assert acc.attempts == 0 and acc.links == 0 and acc.episodes == 0


def test_blind_fixed_charges_every_attempt():
    acc = run_replication(SMALL)
    assert acc.attempts == SMALL.harq_max_attempts * acc.links
    trunc = run_replication(SMALL.replace(harq_mode="truncated_stop"))
    assert trunc.attempts <= SMALL.harq_max_attempts * trunc.links


def test_warmup_excluded():
    full = run_replication(SMALL.replace(warmup=0.0))
    late = run_replication(SMALL)
    assert late.links < full.links


def test_run_point_merges_replications():
    cfg = SMALL.replace(replications=2)
    acc = run_point(cfg)
    a, b = run_replication(cfg, 0), run_replication(cfg, 1)
    assert acc.attempts == a.attempts + b.attempts
    assert np.array_equal(acc.receptions, a.receptions + b.receptions)
    assert acc.replications == (0, 1)


def test_sweep_writes_manifest_and_resumes(tmp_path, caplog):
    points = expand_sweep(SMALL, [("pt_dbm", [23.0, 26.0])])
    rows = run_sweep(points, tmp_path, meta={"axes": {"pt_dbm": [23.0, 26.0]}})
    assert [r["status"] for r in rows] == ["ok", "ok"]
    manifest = read_csv(tmp_path / "manifest.csv")
    assert [json.loads(r["params"])["pt_dbm"] for r in manifest] == [23.0, 26.0]
    merged = read_csv(tmp_path / "energy.csv")
    assert len(merged) == 2
    before = (tmp_path / "energy.csv").read_bytes()
    stamp = (tmp_path / manifest[0]["outputs"] / "energy.csv").stat().st_mtime_ns
    caplog.set_level("INFO")
    run_sweep(points, tmp_path)
    assert (tmp_path / manifest[0]["outputs"] / "energy.csv").stat().st_mtime_ns == stamp
    assert (tmp_path / "energy.csv").read_bytes() == before
    assert "skipping completed point" in caplog.text


def test_failed_point_recorded(tmp_path, monkeypatch):
    import ruralv2x.engine as engine

    def boom(*a, **k):
        raise RuntimeError("kaput")
    monkeypatch.setattr(engine, "run_point", boom)
    rows = run_sweep([SMALL], tmp_path)
    assert rows[0]["status"] == "failed" and "kaput" in rows[0]["error"]
    with pytest.raises(ValueError):
        run_sweep([], tmp_path)
