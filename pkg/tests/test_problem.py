import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfdist.problem import (
    AbsSum,
    Affine,
    Ball,
    Box,
    Custom,
    DimensionError,
    Halfspace,
    MaxAffine,
    NoiseModel,
    ProblemSpec,
    Quadratic,
    WholeSpace,
    evaluate,
    find_feasible_point,
    lipschitz_bound,
    noisy_observe,
    project,
    project_intersection,
    subgradient,
)
from sfdist.streams import derive_stream

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def vec(m):
    return st.lists(finite, min_size=m, max_size=m).map(np.array)


# -- evaluation ----------------------------------------------------------------


def test_evaluate_examples():
    assert evaluate(Quadratic([3.0]), [2.0]) == 1.0
    assert evaluate(Quadratic([0.0]), [0.0]) == 0.0
    assert evaluate(AbsSum([1.0, 1.0]), [-2.0, 3.0]) == 5.0


def test_evaluate_batched_matches_pointwise():
    f = Quadratic([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]])
    X = np.random.default_rng(0).normal(size=(7, 2))
    np.testing.assert_allclose(f.value(X), [f.value(x) for x in X], rtol=1e-14)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        evaluate(Quadratic([3.0]), [1.0, 2.0])
    with pytest.raises(DimensionError):
        project(Ball([0.0, 0.0], 1.0), [1.0])
    with pytest.raises(DimensionError):
        ProblemSpec([Quadratic([0.0]), Quadratic([0.0, 0.0])], [Ball([0.0], 1), Ball([0.0, 0.0], 1)])


def test_quadratic_rejects_non_psd():
    with pytest.raises(ValueError):
        Quadratic([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        Quadratic([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])


# -- noisy oracle ----------------------------------------------------------------


def test_noisy_observe_noiseless(rng):
    assert noisy_observe(Quadratic([3.0]), [2.0], NoiseModel(), rng) == 1.0


def test_noisy_observe_mean(rng):
    f, noise = Quadratic([3.0]), NoiseModel("gaussian", 1.0)
    N = 100_000
    ys = np.array([noisy_observe(f, [2.0], noise, rng) for _ in range(N)])
    assert abs(ys.mean() - 1.0) < 0.02


def test_noisy_observe_consecutive_calls_differ():
    rng = derive_stream(7, 0, 1, "noise")
    f, noise = Quadratic([3.0]), NoiseModel("gaussian", 1.0)
    assert noisy_observe(f, [2.0], noise, rng) != noisy_observe(f, [2.0], noise, rng)


def test_noise_model_moments():
    n = NoiseModel("gaussian", 2.0)
    assert n.second_moment == 4.0
    assert n.difference_rms == pytest.approx(2.0 * np.sqrt(2.0))
    assert NoiseModel().silent and NoiseModel("gaussian", 0.0).silent


# -- projection ------------------------------------------------------------------


def test_projection_examples():
    ball = Ball([0.0], 100.0)
    assert project(ball, [150.0])[0] == 100.0
    assert project(ball, [50.0])[0] == 50.0
    np.testing.assert_array_equal(project(Box([0, 0], [1, 1]), [-0.5, 2.0]), [0.0, 1.0])
    np.testing.assert_allclose(project(Halfspace([1.0, 1.0], 1.0), [2.0, 2.0]), [0.5, 0.5])
    np.testing.assert_array_equal(project(WholeSpace(3), [1.0, -2.0, 5.0]), [1.0, -2.0, 5.0])


def sets_and_points():
    m = st.integers(1, 4)

    def build(m):
        ball = st.builds(lambda c, r: Ball(c, r), vec(m), st.floats(0.1, 20))
        box = st.builds(
            lambda a, w: Box(a, a + w), vec(m), st.lists(st.floats(0.0, 20), min_size=m, max_size=m).map(np.array)
        )
        half = st.builds(
            lambda a, b: Halfspace(a, b),
            vec(m).filter(lambda a: np.linalg.norm(a) > 1e-3),
            finite,
        )
        sets = st.one_of(ball, box, half, st.just(WholeSpace(m)))
        return st.tuples(sets, vec(m).map(lambda v: 3 * v), vec(m).map(lambda v: 3 * v), vec(m))

    return m.flatmap(build)


@given(sets_and_points())
def test_projection_properties(case):
    S, x, y, z = case
    px, py = S.project(x), S.project(y)
    scale = max(1.0, float(np.abs(np.concatenate([x, y, z])).max()))
    # idempotence
    np.testing.assert_allclose(S.project(px), px, atol=1e-12 * scale)
    # non-expansive
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12 * scale
    # variational inequality and the three-point inequality, for a member w of S
    w = S.project(z)
    tol = 1e-9 * scale**2
    assert np.dot(x - px, w - px) <= tol
    assert np.sum((x - px) ** 2) + np.sum((w - px) ** 2) <= np.sum((x - w) ** 2) + tol
    assert S.contains(px, tol=1e-9 * scale)


def test_project_intersection_and_feasible_point():
    sets = [Ball([0.0, 0.0], 1.0), Halfspace([1.0, 0.0], -0.5)]
    p = project_intersection(sets, np.array([3.0, 0.0]))
    np.testing.assert_allclose(p, [-0.5, 0.0], atol=1e-9)
    x = find_feasible_point(sets)
    assert all(s.contains(x, tol=1e-7) for s in sets)
    with pytest.raises(ValueError):
        find_feasible_point([Ball([0.0], 1.0), Ball([5.0], 1.0)], iters=200)


# -- subgradients ------------------------------------------------------------------


def test_subgradient_examples():
    assert subgradient(Quadratic([3.0]), [2.0])[0] == -2.0
    assert subgradient(AbsSum([1.0]), [0.0])[0] == 0.0
    assert subgradient(MaxAffine([[1.0], [2.0]], [0.0, 0.0]), [1.0])[0] == 2.0


def test_max_affine_tie_picks_first_active_piece():
    f = MaxAffine([[1.0], [2.0]], [0.0, 0.0])
    assert subgradient(f, [0.0])[0] == 1.0


def test_lipschitz_examples():
    ball = Ball([0.0], 100.0)
    assert lipschitz_bound(Quadratic([0.0]), ball) == pytest.approx(200.0)
    assert lipschitz_bound(Quadratic([3.0]), ball) == pytest.approx(206.0)
    a = np.array([3.0, 4.0])
    assert lipschitz_bound(Affine(a), WholeSpace(2)) == 5.0
    with pytest.raises(ValueError):
        lipschitz_bound(Quadratic([0.0]), WholeSpace(1))


def objectives(m):
    quad = st.builds(
        lambda s, L: Quadratic(s, L @ L.T),
        vec(m),
        st.lists(st.floats(-2, 2), min_size=m * m, max_size=m * m).map(lambda v: np.array(v).reshape(m, m)),
    )
    aff = st.builds(lambda a, b: Affine(a, b), vec(m), finite)
    absum = st.builds(lambda w, s: AbsSum(np.abs(w), s), vec(m), vec(m))
    maxaff = st.builds(
        lambda S, o: MaxAffine(S, o),
        st.lists(vec(m), min_size=1, max_size=4).map(np.array),
        st.just(None),
    ).map(lambda f: MaxAffine(f.slopes, np.zeros(len(f.slopes))))
    return st.one_of(quad, aff, absum, maxaff)


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(objectives(m), vec(m), vec(m), st.floats(0, 1))))
def test_convexity_and_subgradient_inequality(case):
    f, x, y, lam = case
    scale = max(1.0, abs(float(f.value(x))), abs(float(f.value(y))))
    mid = lam * x + (1 - lam) * y
    assert f.value(mid) <= lam * f.value(x) + (1 - lam) * f.value(y) + 1e-9 * scale
    g = f.subgradient(y)
    assert f.value(x) - f.value(y) - g @ (x - y) >= -1e-9 * scale


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(objectives(m), vec(m).map(lambda v: v / 50.0))))
def test_subgradient_norm_within_lipschitz_bound(case):
    f, x = case
    ball = Ball(np.zeros(x.size), 1.0)
    x = ball.project(x)
    assert np.linalg.norm(f.subgradient(x)) <= lipschitz_bound(f, ball) * (1 + 1e-12) + 1e-12


def test_custom_objective():
    f = Custom(lambda p: float(np.sum(np.abs(p))), 2, grad=np.sign, lipschitz_const=np.sqrt(2), name="l1")
    assert f.value([1.0, -2.0]) == 3.0
    np.testing.assert_array_equal(f.subgradient([[1.0, -2.0]]), [[1.0, -1.0]])
    assert f.to_dict()["name"] == "l1"


def test_objective_round_trip_and_equality():
    from sfdist.problem import constraint_from_dict, objective_from_dict

    for f in (Quadratic([1.0, 2.0]), Affine([1.0], 2.0), AbsSum([1.0, 2.0], [0.0, 1.0]), MaxAffine([[1.0], [-1.0]], [0.0, 1.0])):
        assert objective_from_dict(f.to_dict()) == f
        assert hash(objective_from_dict(f.to_dict())) == hash(f)
    for s in (Ball([0.0], 2.0), Box([0.0], [1.0]), Halfspace([1.0], 2.0), WholeSpace(2)):
        assert constraint_from_dict(s.to_dict()) == s
