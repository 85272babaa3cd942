import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdpfed.data import split_and_partition
from gdpfed.linear import (
    LinearSVM,
    TrainConfig,
    evaluate,
    hinge_objective,
    hinge_subgradient,
    leakage_demo,
    local_train,
    zero_model,
)

TOY_X = np.array([[0.9] + [0.0] * 8, [0.1] + [0.0] * 8])
TOY_Y = np.array([1.0, -1.0])


def test_zero_model_hinge_is_one(bcwd):
    assert hinge_objective(zero_model(9), bcwd.X, bcwd.y) == 1.0


def test_hinge_vanishes_for_wide_margin():
    w = np.zeros(10)
    w[0], w[-1] = 10.0, -5.0
    assert hinge_objective(w, TOY_X, TOY_Y) == 0.0


def test_hinge_single_example():
    w = np.zeros(10)
    w[0] = 0.5
    x = np.zeros((1, 9))
    x[0, 0] = 1.0
    assert hinge_objective(w, x, np.array([1.0])) == pytest.approx(0.5, abs=1e-15)


def test_hinge_includes_l2_on_weights_only():
    w = np.zeros(10)
    w[0], w[-1] = 3.0, 100.0
    x = np.zeros((1, 9))
    # margin huge -> hinge 0; penalty 0.5 * 0.2 * 9
    assert hinge_objective(w, x, np.array([1.0]), l2_lambda=0.2) == pytest.approx(0.9)


def test_empty_data_rejected():
    with pytest.raises(ValueError):
        hinge_objective(zero_model(9), np.empty((0, 9)), np.empty(0))
    with pytest.raises(ValueError):
        evaluate(zero_model(9), np.empty((0, 9)), np.empty(0))


def test_train_config_validation():
    for bad in (dict(local_epochs=0), dict(learning_rate=0.0), dict(lr_decay=0.0),
                dict(lr_decay=1.5), dict(l2_lambda=-1.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_separable_toy_is_learned():
    cfg = TrainConfig(local_epochs=50, learning_rate=0.5, lr_decay=0.98, l2_lambda=1e-3)
    w = local_train(zero_model(9), TOY_X, TOY_Y, cfg, np.random.default_rng(0))
    # brute-force check of both points
    for x, y in zip(TOY_X, TOY_Y):
        assert np.sign(x @ w[:-1] + w[-1]) == y
    assert evaluate(w, TOY_X, TOY_Y).accuracy == 1.0


def test_tiny_learning_rate_leaves_model_unchanged():
    w0 = np.linspace(-1, 1, 10)
    cfg = TrainConfig(local_epochs=3, learning_rate=1e-15)
    w = local_train(w0, TOY_X, TOY_Y, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(w, w0, atol=1e-9, rtol=0)


def test_local_train_does_not_mutate_input():
    w0 = np.zeros(10)
    local_train(w0, TOY_X, TOY_Y, TrainConfig(), np.random.default_rng(0))
    assert not w0.any()


def test_local_train_deterministic(bcwd):
    cfg = TrainConfig()
    a = local_train(zero_model(9), bcwd.X, bcwd.y, cfg, np.random.default_rng(42))
    b = local_train(zero_model(9), bcwd.X, bcwd.y, cfg, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_single_step_matches_finite_difference():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.2, 1.0, size=(1, 9))
    y = np.array([1.0])
    w0 = rng.normal(scale=0.01, size=10)  # margin well below 1, away from the kink
    lam, lr = 0.3, 1e-3
    stepped = local_train(w0, x, y, TrainConfig(1, lr, 1.0, lam), np.random.default_rng(0))
    direction = (w0 - stepped) / lr

    h = 1e-6
    fd = np.array([
        (hinge_objective(w0 + h * e, x, y, lam) - hinge_objective(w0 - h * e, x, y, lam)) / (2 * h)
        for e in np.eye(10)
    ])
    np.testing.assert_allclose(direction, fd, rtol=1e-5)
    np.testing.assert_allclose(hinge_subgradient(w0, x, y, lam), fd, rtol=1e-5)


@pytest.mark.parametrize("seed", range(20))
def test_small_steps_do_not_increase_objective(seed):
    cfg = TrainConfig(local_epochs=1, learning_rate=1e-3, lr_decay=1.0, l2_lambda=0.0)
    rng = np.random.default_rng(seed)
    w = zero_model(9)
    before = hinge_objective(w, TOY_X, TOY_Y)
    for _ in range(30):
        w = local_train(w, TOY_X, TOY_Y, cfg, rng)
        after = hinge_objective(w, TOY_X, TOY_Y)
        assert after <= before + 1e-15
        before = after


def test_zero_model_accuracy_is_positive_fraction(bcwd):
    split = split_and_partition(bcwd, 20, 0.2, seed=0)
    m = evaluate(zero_model(9), split.X_test, split.y_test)
    assert m.accuracy == float((split.y_test > 0).mean())
    assert m.accuracy == pytest.approx(0.35, abs=0.01)
    assert m.hinge_loss == 1.0 and m.n_examples == 137


def test_evaluate_single_example():
    w = np.zeros(10)
    w[-1] = -1.0
    m = evaluate(w, np.zeros((1, 9)), np.array([-1.0]))
    assert m.accuracy == 1.0 and m.n_examples == 1 and m.hinge_loss == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_evaluate_permutation_invariant(bcwd, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=10)
    perm = rng.permutation(len(bcwd))
    a = evaluate(w, bcwd.X, bcwd.y)
    b = evaluate(w, bcwd.X[perm], bcwd.y[perm])
    assert a.accuracy == b.accuracy
    assert a.hinge_loss == pytest.approx(b.hinge_loss, rel=1e-12)


def test_leakage_examples():
    g, cos = leakage_demo([0.0, 0.0], [1.0, 2.0], 1.0)
    np.testing.assert_array_equal(g, [1.0, 2.0])
    assert cos == pytest.approx(1.0, abs=1e-12)

    g, cos = leakage_demo([1.0, 0.0], [2.0, 1.0], 0.0)
    np.testing.assert_array_equal(g, [-4.0, -2.0])
    assert cos == pytest.approx(1.0, abs=1e-12)

    g, cos = leakage_demo([1.0, 1.0], [2.0, 3.0], 5.0)
    np.testing.assert_array_equal(g, [0.0, 0.0])
    assert np.isnan(cos)

    with pytest.raises(ValueError):
        leakage_demo([1.0], [0.0], 1.0)


@settings(max_examples=200, deadline=None)
@given(
    w=arrays(np.float64, 6, elements=st.floats(-10, 10)),
    x=arrays(np.float64, 6, elements=st.floats(-10, 10)),
    y=st.floats(-10, 10),
)
def test_leakage_gradient_parallel_to_input(w, x, y):
    if not np.any(np.abs(x) > 1e-3) or abs(y - w @ x) < 1e-6:
        return
    _, cos = leakage_demo(w, x, y)
    assert abs(cos - 1.0) <= 1e-12


def test_estimator_fits_bcwd(bcwd):
    split = split_and_partition(bcwd, 1, 0.2, seed=0)
    X, y = split.pooled_train()
    clf = LinearSVM(local_epochs=5, n_rounds=10, random_state=0).fit(X, y)
    assert clf.score(split.X_test, split.y_test) > 0.92
    assert clf.coef_.shape == (1, 9) and clf.intercept_.shape == (1,)
    assert set(clf.predict(split.X_test)) <= {-1.0, 1.0}


def test_estimator_accepts_arbitrary_binary_labels(bcwd):
    labels = np.where(bcwd.y > 0, "malignant", "benign")
    clf = LinearSVM(n_rounds=5, random_state=1).fit(bcwd.X, labels)
    assert list(clf.classes_) == ["benign", "malignant"]
    assert clf.score(bcwd.X, labels) > 0.9


def test_estimator_params_roundtrip():
    clf = LinearSVM(learning_rate=0.1, random_state=3)
    assert clf.get_params()["learning_rate"] == 0.1
    assert clf.set_params(n_rounds=4).n_rounds == 4


def test_estimator_rejects_multiclass():
    with pytest.raises(ValueError):
        LinearSVM().fit(np.eye(3), [0, 1, 2])
