import csv

import numpy as np
import pytest

from sfdist.cli import compare, main, run_experiment
from sfdist.config import write_config
from sfdist.engine import snapshot_rounds


@pytest.fixture(scope="module")
def small(sec5):
    return sec5.with_run(iterations=1200, seeds=(0, 1, 2), dense_until=1000, per_decade=50)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_csv_schema_and_row_counts(small, tmp_path):
    bundle = run_experiment(small, out=tmp_path, echo=None)
    K = snapshot_rounds(1200, 1000, 50).size
    for path in bundle.trajectories:
        rows = _read(path)
        assert rows[0] == ["k", "agent", "dim0", "consensus_error", "sq_dist"]
        body = np.array(rows[1:], dtype=float)
        assert body.shape == (K * 5, 5)
        np.testing.assert_array_equal(np.unique(body[:, 0]), snapshot_rounds(1200, 1000, 50))
        assert set(body[:, 1]) == {1, 2, 3, 4, 5}
        assert np.all(body[:, 3:] >= 0)
    agg = _read(bundle.aggregate)
    assert agg[0] == ["k", "mean_sq_dist", "se_sq_dist", "mean_consensus_error", "se_consensus_error"]
    assert len(agg) - 1 == K
    # per-agent terms add up to the aggregated totals
    per_seed = [np.array(_read(p)[1:], dtype=float) for p in bundle.trajectories]
    totals = np.mean([b[:, 4].reshape(K, 5).sum(axis=1) for b in per_seed], axis=0)
    np.testing.assert_allclose(totals, np.array(agg[1:], dtype=float)[:, 1], rtol=1e-12)
    assert "predicted mean-square rate exponent" in bundle.validation.read_text()
    assert "fitted log-log slope" in bundle.summary


def test_values_round_trip_exactly(small, tmp_path):
    bundle = run_experiment(small.with_run(iterations=20, seeds=(4,)), out=tmp_path, echo=None)
    body = np.array(_read(bundle.trajectories[0])[1:], dtype=float)
    np.testing.assert_array_equal(body[:, 2].reshape(-1, 5), bundle.records[0].iterates[:, :, 0])


def test_byte_identical_reruns(small, tmp_path):
    cfg = small.with_run(iterations=300)
    a = run_experiment(cfg, out=tmp_path / "a", echo=None)
    b = run_experiment(cfg, out=tmp_path / "b", echo=None)
    for pa, pb in zip(a.trajectories + [a.aggregate], b.trajectories + [b.aggregate]):
        assert pa.read_bytes() == pb.read_bytes()


def test_compare(small, tmp_path):
    base = small.with_run(algorithm="baseline", iterations=50)
    path, rounds, a, b = compare(small.with_run(iterations=50), base, tmp_path)
    rows = _read(path)
    assert rows[0] == ["k", "sq_dist_a", "sq_dist_b"] and len(rows) == 52
    path, rounds, a, b = compare(small.with_run(iterations=30), small.with_run(iterations=30), tmp_path)
    np.testing.assert_array_equal(a, b)
    path, rounds, a, b = compare(small.with_run(iterations=0), base.with_run(iterations=0), tmp_path)
    assert list(rounds) == [0] and len(_read(path)) == 2


def test_compare_rejects_different_problems(small, tmp_path):
    from sfdist.problem import NoiseModel
    from dataclasses import replace

    other = replace(small, problem=replace(small.problem, noise=NoiseModel("gaussian", 2.0)))
    with pytest.raises(ValueError, match="problem"):
        compare(small, other, tmp_path)


def test_main_exit_codes(sec5, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--config", "sec5", "--iterations", "30", "--seeds", "2", "--out", str(out)]) == 0
    assert (out / "trajectory_seed0.csv").exists() and (out / "trajectory_seed1.csv").exists()
    assert main(["--config", "sec5", "--validate-only"]) == 0
    bad = sec5.with_run(iterations=10)
    from dataclasses import replace
    from sfdist.schedules import ScheduleParams

    path = write_config(replace(bad, schedule=ScheduleParams(0.2, 0.8)), tmp_path / "bad.toml")
    assert main(["--config", str(path), "--validate-only"]) == 2
    assert "window" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.toml")]) == 2


def test_main_engine_error(sec5, tmp_path):
    from dataclasses import replace
    from sfdist.problem import Affine, Box, ProblemSpec
    from sfdist.schedules import ScheduleParams

    prob = ProblemSpec([Affine([1e300])] * 5, [Box([-1e308], [1e308])] * 5)
    cfg = replace(sec5, problem=prob, schedule=ScheduleParams(0.5, 0.5, scale_iota=1e10)).with_run(iterations=5, seeds=(0,))
    path = write_config(cfg, tmp_path / "boom.toml")
    with np.errstate(all="ignore"):
        assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_main_compare_and_plots(tmp_path):
    out = tmp_path / "cmp"
    code = main(
        ["--config", "sec5", "--iterations", "40", "--seeds", "2", "--algorithm", "sf-right", "--compare", "baseline", "--plot", "--out", str(out)]
    )
    assert code == 0
    assert (out / "comparison.csv").exists()
    for name in ("aggregate.png", "agent_sq_dist.png", "trajectory_seed0.png", "comparison.png"):
        assert (out / name).stat().st_size > 0
