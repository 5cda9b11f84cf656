import numpy as np
import pandas as pd
import pytest

from losses.balancer import AdaptiveLossBalancer, adaptive_balance
from losses.objectives import (LossConfig, column_pearson, corr_boost_loss, cov_align_loss,
                               head_regularization, huber_loss, mse_loss)
from losses.winsorize import (TargetStatistics, describe_targets, soft_winsorize,
                              winsorize_targets)
from tensorcore import Tensor, backward
from tensorcore.gradcheck import check_gradients


# -------------------------------------------------
# WINSORIZATION
# -------------------------------------------------
def test_soft_winsorize_reference_values():
    assert float(soft_winsorize(1.0)) == 1.0
    assert float(soft_winsorize(-1.5)) == -1.5
    assert float(soft_winsorize(3.0)) == pytest.approx(2.6423912, abs=1e-6)
    assert float(soft_winsorize(-3.0)) == pytest.approx(-2.6423912, abs=1e-6)
    assert float(soft_winsorize(1e6)) == pytest.approx(3.0, abs=1e-6)


def test_soft_winsorize_monotone_and_bounded():
    out = soft_winsorize(np.linspace(-15, 15, 5001))
    assert np.all(np.diff(out) > 0)
    wide = soft_winsorize(np.linspace(-60, 60, 5001))
    assert np.all(np.diff(wide) >= 0)
    assert np.abs(wide).max() <= 3.0


def test_winsorize_targets_uses_train_statistics():
    Y = np.array([[0.0, 10.0], [2.0, 10.0], [4.0, 10.0]])
    stats = TargetStatistics.fit(Y, ["a", "b"])
    assert stats.std[1] == 1.0
    np.testing.assert_allclose(winsorize_targets(Y, stats), Y)
    far = np.array([[2.0 + 10 * stats.std[0], 10.0]])
    clipped = winsorize_targets(far, stats)
    assert clipped[0, 0] < 2.0 + 3.0 * stats.std[0]


def test_target_statistics_roundtrip():
    stats = TargetStatistics.fit(np.random.default_rng(0).standard_normal((6, 2)), ["x", "y"])
    back = TargetStatistics.from_dict(stats.to_dict())
    np.testing.assert_array_equal(back.mean, stats.mean)
    assert back.names == ["x", "y"]


def test_target_statistics_shape_mismatch():
    with pytest.raises(ValueError):
        TargetStatistics.fit(np.zeros((3, 2)), ["only_one"])


def test_describe_targets_columns():
    table = describe_targets(np.random.default_rng(0).standard_normal((20, 2)), ["a", "b"])
    assert isinstance(table, pd.DataFrame)
    assert list(table["Target"]) == ["a", "b"]
    assert {"Mean", "Std", "Skewness", "Kurtosis"} <= set(table.columns)


# -------------------------------------------------
# OBJECTIVES
# -------------------------------------------------
def test_huber_quadratic_and_linear_regions():
    assert huber_loss(np.array([[0.5]]), np.array([[0.0]])).item() == pytest.approx(0.125)
    assert huber_loss(np.array([[3.0]]), np.array([[0.0]])).item() == pytest.approx(2.5)
    assert huber_loss(np.array([[3.0]]), np.array([[0.0]]), delta=2.0).item() == pytest.approx(4.0)


def test_mse_loss():
    assert mse_loss(np.array([[1.0, 3.0]]), np.zeros((1, 2))).item() == pytest.approx(5.0)


def test_column_pearson_perfect_and_anti():
    y = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y_hat = np.array([[2.0, 3.0], [4.0, 2.0], [6.0, 1.0]])
    r = column_pearson(y_hat, y).data
    np.testing.assert_allclose(r, [1.0, -1.0], atol=1e-7)
    assert corr_boost_loss(y_hat, y, 0.1).item() == pytest.approx(0.0, abs=1e-7)


def test_corr_loss_needs_two_rows():
    with pytest.raises(ValueError):
        corr_boost_loss(np.ones((1, 3)), np.ones((1, 3)), 0.1)
    with pytest.raises(ValueError):
        cov_align_loss(np.ones((1, 3)), np.ones((1, 3)), 0.1)


def test_cov_align_zero_for_shifted_copy(rng):
    y = rng.standard_normal((6, 3))
    assert cov_align_loss(y + 5.0, y, 1.0).item() == pytest.approx(0.0, abs=1e-12)
    assert cov_align_loss(2.0 * y, y, 1.0).item() > 0


def test_head_regularization():
    w = [Tensor(np.ones((2, 2))), Tensor(np.full(3, 2.0))]
    assert head_regularization(w, 0.5).item() == pytest.approx(0.5 * (4 + 12))
    assert head_regularization([], 0.5).item() == 0.0


@pytest.mark.parametrize("loss", ["huber", "corr", "cov"])
def test_objective_gradients(loss, rng):
    y = rng.standard_normal((5, 3))
    fns = {"huber": lambda t: huber_loss(t, y, 1.0),
           "corr": lambda t: corr_boost_loss(t, y, 0.1),
           "cov": lambda t: cov_align_loss(t, y, 0.01)}
    x = y + 0.7 * rng.standard_normal((5, 3))
    assert check_gradients(fns[loss], x) < 1e-5


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig.from_dict({"mode": "magic"})
    with pytest.raises(ValueError):
        LossConfig.from_dict({"mix": 1.5})
    with pytest.raises(ValueError):
        LossConfig.from_dict({"unknown": 1})
    assert LossConfig.from_dict({"mode": "fixed"}).mode == "fixed"


# -------------------------------------------------
# BALANCER
# -------------------------------------------------
def components(values):
    return {k: Tensor(np.array(v)) for k, v in values.items()}


def test_balancer_starts_with_uniform_softmax():
    bal = AdaptiveLossBalancer(("a", "b"))
    total, beta = bal.combine(components({"a": 2.0, "b": 4.0}))
    np.testing.assert_allclose(beta, [0.5, 0.5])
    assert total.item() == pytest.approx(3.0)


def test_balancer_weights_sum_to_one_after_updates():
    bal = AdaptiveLossBalancer(("a", "b", "c"))
    rng = np.random.default_rng(0)
    for _ in range(20):
        bal.update({"a": rng.normal(1, 1.0), "b": rng.normal(1, 0.01), "c": 3.0})
    beta = bal.weights().data
    assert beta.sum() == pytest.approx(1.0)
    assert beta[2] > beta[1] > beta[0]


def test_balancer_first_update_sets_statistics():
    bal = AdaptiveLossBalancer(("a",))
    bal.update({"a": 2.0})
    np.testing.assert_allclose(bal.mean, [2.0])
    np.testing.assert_allclose(bal.variance(), [0.0])
    bal.update({"a": 4.0})
    assert bal.mean[0] == pytest.approx(0.99 * 2.0 + 0.01 * 4.0)


def test_fixed_balancer_ignores_statistics():
    bal = AdaptiveLossBalancer(("a", "b"), mix=1.0, learn_logits=False)
    for v in (1.0, 5.0, 2.0):
        bal.update({"a": v, "b": 0.0})
    np.testing.assert_allclose(bal.weights().data, [0.5, 0.5])
    assert not bal.alpha.requires_grad


def test_balancer_logit_gradient():
    bal = AdaptiveLossBalancer(("a", "b"))
    total, _ = bal.combine(components({"a": 1.0, "b": 3.0}))
    g = backward(total, params=[bal.alpha], accumulate=False)[bal.alpha]
    np.testing.assert_allclose(g, [-0.5, 0.5])


def test_balancer_rejects_missing_and_non_finite():
    bal = AdaptiveLossBalancer(("a", "b"))
    with pytest.raises(ValueError):
        bal.combine(components({"a": 1.0}))
    with pytest.raises(ValueError):
        bal.update({"a": np.nan, "b": 1.0})


def test_balancer_state_roundtrip():
    bal = AdaptiveLossBalancer(("a", "b"))
    bal.alpha.data = np.array([0.3, -0.2])
    bal.update({"a": 1.0, "b": 2.0})
    bal.update({"a": 1.5, "b": 2.5})
    other = AdaptiveLossBalancer(("a", "b"))
    other.load_state_dict(bal.state_dict())
    np.testing.assert_array_equal(other.weights().data, bal.weights().data)
    with pytest.raises(ValueError):
        AdaptiveLossBalancer(("x", "y")).load_state_dict(bal.state_dict())


def test_adaptive_balance_updates_state():
    bal = AdaptiveLossBalancer(("a", "b"))
    total, bal = adaptive_balance(components({"a": 1.0, "b": 2.0}), bal)
    assert bal.count == 1
    assert total.item() == pytest.approx(1.5)
