import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfdist.analysis import (
    aggregate_over_seeds,
    centralized_minimize,
    consensus_error,
    fit_geometric,
    fit_rate,
    metrics_of,
    moment_probe,
    sq_dist_to,
)
from sfdist.engine import RunRecord
from sfdist.perturbation import DitherDistribution
from sfdist.problem import AbsSum, Affine, Ball, Box, Halfspace, MaxAffine, NoiseModel, ProblemSpec, Quadratic


def test_consensus_error_examples():
    assert consensus_error([[1.0, 2.0]] * 3) == 0.0
    assert consensus_error([[0.0], [2.0]]) == 2.0
    assert consensus_error([0.0, 1.0, 2.0]) == 2.0
    with pytest.raises(ValueError):
        consensus_error(np.zeros((0, 2)))


def test_sq_dist_examples():
    assert sq_dist_to([[1.0], [1.0]], [1.0]) == 0.0
    assert sq_dist_to([[3.0]], [1.0]) == 4.0
    assert sq_dist_to(np.ones((5, 1)), [1.0]) == 0.0
    with pytest.raises(ValueError):
        sq_dist_to([[1.0, 2.0]], [1.0])


@given(
    st.integers(1, 6).flatmap(
        lambda n: st.integers(1, 3).flatmap(
            lambda m: st.tuples(
                st.lists(st.floats(-100, 100), min_size=n * m, max_size=n * m).map(lambda v: np.reshape(v, (n, m))),
                st.lists(st.floats(-100, 100), min_size=m, max_size=m).map(np.array),
            )
        )
    )
)
def test_mean_minimizes_sum_of_squares(case):
    X, x = case
    assert consensus_error(X) <= sq_dist_to(X, x) + 1e-9 * max(1.0, sq_dist_to(X, x))


def _record(values, seed=0, fp="abc"):
    values = np.asarray(values, dtype=float)
    K = values.size
    return RunRecord(
        rounds=np.arange(K),
        iterates=np.zeros((K, 1, 1)),
        consensus_error=values * 0.5,
        sq_dist=values,
        agent_sq_dist=values[:, None],
        reference=np.zeros(1),
        seed=seed,
        fingerprint=fp,
    )


def test_aggregate_examples():
    r = _record([3.0, 2.0, 1.0])
    m = aggregate_over_seeds([r])
    np.testing.assert_array_equal(m.sq_dist, r.sq_dist)
    m2 = aggregate_over_seeds([r, _record([3.0, 2.0, 1.0], seed=1)])
    np.testing.assert_array_equal(m2.sq_dist, r.sq_dist)
    np.testing.assert_array_equal(m2.se_sq_dist, 0.0)
    with pytest.raises(ValueError):
        aggregate_over_seeds([r, _record([1.0, 1.0, 1.0], fp="other")])
    with pytest.raises(ValueError):
        aggregate_over_seeds([])


def test_standard_error_shrinks_with_seeds():
    rng = np.random.default_rng(3)
    K = 200

    def se(S):
        recs = [_record(rng.exponential(size=K) + 1, seed=s) for s in range(S)]
        return aggregate_over_seeds(recs).se_sq_dist.mean()

    ratio = se(10) / se(40)
    assert abs(ratio - 2.0) < 0.6


def test_fit_rate_exact_power_laws():
    k = np.arange(1, 1001)
    assert fit_rate(k, (10, 1000), k**-0.5).slope == pytest.approx(-0.5, abs=1e-9)
    assert fit_rate(k, (10, 1000), 7.0 / k).slope == pytest.approx(-1.0, abs=1e-9)
    m = metrics_of(_record(np.arange(1, 101) ** -2.0))
    m.rounds = np.arange(1, 101)
    assert fit_rate(m, (5, 100)).slope == pytest.approx(-2.0, abs=1e-6)


def test_fit_rate_errors():
    k = np.arange(1, 100)
    with pytest.raises(ValueError):
        fit_rate(k, (1, 5), 1.0 / k)
    with pytest.raises(ValueError):
        fit_rate(k, (1, 99), np.where(k > 50, 0.0, 1.0))
    with pytest.raises(ValueError):
        fit_rate(k, (50, 10), 1.0 / k)


def test_fit_geometric():
    ks = np.arange(1, 41)
    fit = fit_geometric(3.0 * 0.7**ks)
    assert fit.rho == pytest.approx(0.7, rel=1e-10)
    assert fit.scale == pytest.approx(3.0, rel=1e-9)
    assert fit.residual_rms < 1e-10


def test_centralized_minimize_examples(five_agent_problem):
    np.testing.assert_allclose(centralized_minimize(five_agent_problem), [1.0], atol=1e-6)
    p = ProblemSpec([Quadratic([3.0])], [Box([-100.0], [100.0])])
    np.testing.assert_allclose(centralized_minimize(p), [3.0], atol=1e-6)
    p = ProblemSpec([Quadratic([0.0])], [Halfspace([-1.0], -2.0)])
    np.testing.assert_allclose(centralized_minimize(p), [2.0], atol=1e-6)


@pytest.mark.parametrize(
    "objs",
    [
        [AbsSum([1.0], [2.0]), AbsSum([2.0], [-1.0])],
        [MaxAffine([[1.0], [-3.0]], [0.0, 2.0]), Quadratic([4.0])],
        [Affine([1.0]), Affine([0.5], 1.0)],
        [Quadratic([-7.0], [[0.5]]), AbsSum([3.0], [5.0])],
    ],
)
def test_centralized_minimize_matches_grid(objs):
    sets = [Box([-10.0], [8.0]), Ball([0.0], 9.0)][: len(objs)]
    p = ProblemSpec(objs, sets)
    x = centralized_minimize(p)[0]
    grid = np.linspace(-9.0, 8.0, 1_700_001)[:, None]
    best = grid[np.argmin(p.total(grid)), 0]
    assert abs(p.total(np.array([x])) - p.total(np.array([best]))) <= 1e-9 + 1e-9 * abs(p.total(np.array([best])))
    assert x == pytest.approx(best, abs=1e-4)


def test_centralized_minimize_two_dimensional():
    p = ProblemSpec(
        [AbsSum([1.0, 1.0], [2.0, -1.0]), Quadratic([0.0, 0.0])],
        [Ball([0.0, 0.0], 5.0), Halfspace([1.0, 1.0], 0.5)],
    )
    x = centralized_minimize(p)
    g = np.linspace(-5, 5, 1001)
    X, Y = np.meshgrid(g, g, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    ok = (np.linalg.norm(P, axis=1) <= 5.0) & (P.sum(axis=1) <= 0.5)
    assert p.total(x) <= p.total(P[ok]).min() + 1e-9


def test_moment_probe_noiseless_affine(rng, dither):
    f = Affine([2.0])
    rep = moment_probe("two-sided", f, Ball([0.0], 1.0), NoiseModel(), dither, [0.3], 0.5, 1000, rng)
    assert rep.noise_term == 0.0 and rep.bound_norm == 2.0
    assert rep.mean_norm <= rep.bound_norm + 1e-12


def test_moment_probe_bound_scales_with_gain(rng, dither):
    f, ball, noise = Quadratic([3.0]), Ball([0.0], 100.0), NoiseModel("gaussian", 1.0)
    a = moment_probe("two-sided", f, ball, noise, dither, [0.0], 0.5, 1000, rng)
    b = moment_probe("two-sided", f, ball, noise, dither, [0.0], 0.25, 1000, rng)
    assert b.noise_term == pytest.approx(2 * a.noise_term)
    assert a.norm_ok and a.sq_norm_ok
    with pytest.raises(ValueError):
        moment_probe("two-sided", f, ball, noise, dither, [0.0], 0.5, 999, rng)
