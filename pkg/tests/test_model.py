import numpy as np
import pytest

from geometry import manifolds
from model.config import GEOMETRIES, FeatureBundle, ModelConfig
from model.crmf import CrmfModel, StageError, project_manifolds
from model.fusion import Refiner, fuse_tangents, tangent_fuse
from model.head import MultiTaskHead, adapters
from model.params import ParamStore
from model.prefusion import attention_pool, mean_pool
from model.routing import (Router, hard_routing, load_balance_loss, routing_entropy,
                           routing_entropy_loss, uniform_routing)
from model.temporal import depthwise_conv1d
from tensorcore import Tensor, backward, ops
from tests.conftest import make_bundles


@pytest.fixture
def tiny():
    return ModelConfig.tiny()


# -------------------------------------------------
# CONFIG
# -------------------------------------------------
def test_geometry_selection_is_canonical_order():
    cfg = ModelConfig(geometry="euclidean+hyperbolic")
    assert cfg.enabled_geometries() == ("hyperbolic", "euclidean")
    assert ModelConfig().enabled_geometries() == GEOMETRIES


@pytest.mark.parametrize("overrides", [
    {"geometry": "flat"}, {"routing": "random"}, {"pooling": "max"}, {"head": "deep"},
    {"d_model": 15}, {"curvature": 0.0}, {"d_e": 0},
])
def test_invalid_config_rejected(overrides):
    with pytest.raises(ValueError):
        ModelConfig.tiny(**overrides).validate()


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"width": 3})


def test_from_dict_keeps_base_values():
    cfg = ModelConfig.from_dict({"routing": "uniform"}, base=ModelConfig.tiny())
    assert cfg.d_model == 16 and cfg.routing == "uniform"


def test_bundle_width_check():
    b = FeatureBundle("c", np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((2, 5)))
    with pytest.raises(ValueError):
        b.check_width(4)


# -------------------------------------------------
# PIPELINE PIECES
# -------------------------------------------------
def test_project_manifolds_lands_on_manifolds(rng):
    z = rng.standard_normal((5, 6)) * 4.0
    w = [rng.standard_normal((3, 6)) for _ in range(3)]
    x_h, x_s, x_e = project_manifolds(z, *w)
    assert manifolds.ball_violation(x_h) <= 1e-12
    assert manifolds.sphere_violation(x_s) <= 1e-12
    np.testing.assert_allclose(x_e.data, z @ w[2].T)


def test_project_manifolds_skips_missing_maps(rng):
    x_h, x_s, x_e = project_manifolds(rng.standard_normal((2, 3)), None, None,
                                      rng.standard_normal((2, 3)))
    assert x_h is None and x_s is None and x_e is not None


def test_uniform_routing_respects_mask():
    r = uniform_routing(4, [True, False, True]).data
    np.testing.assert_allclose(r, np.tile([0.5, 0.0, 0.5], (4, 1)))


def test_learned_routing_rows_sum_to_one(rng):
    store = ParamStore(0)
    router = Router(store, "router", 6, 4, "learned", ("hyperbolic", "euclidean"))
    r = router.forward(rng.standard_normal((7, 6))).data
    np.testing.assert_allclose(r.sum(axis=1), 1.0)
    assert np.all(r[:, 1] == 0.0)
    assert not router.logits_free()


def test_router_logits_free_modes():
    store = ParamStore(0)
    assert Router(store, "a", 4, 2, "uniform").logits_free()
    assert Router(store, "b", 4, 2, "learned", ("spherical",)).logits_free()


def test_hard_routing_straight_through(rng):
    logits = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    r = ops.softmax(logits)
    h = hard_routing(r)
    assert set(np.unique(h.data)) <= {0.0, 1.0}
    np.testing.assert_allclose(h.data.sum(axis=1), 1.0)
    w = rng.standard_normal((3, 3))
    g_hard = backward(ops.reduce_sum(h * w), params=[logits], accumulate=False)[logits]
    g_soft = backward(ops.reduce_sum(ops.softmax(logits) * w), params=[logits],
                      accumulate=False)[logits]
    np.testing.assert_allclose(g_hard, g_soft)


def test_routing_regularisers():
    uniform = np.full((4, 3), 1.0 / 3.0)
    assert routing_entropy_loss(uniform, 1.0).item() == pytest.approx(np.log(3.0))
    assert load_balance_loss(uniform, 1.0).item() == pytest.approx(0.0, abs=1e-15)
    one_hot = np.tile([1.0, 0.0, 0.0], (4, 1))
    assert routing_entropy_loss(one_hot, 1.0).item() == pytest.approx(0.0, abs=1e-15)
    assert load_balance_loss(one_hot, 1.0).item() == pytest.approx(2.0 / 9.0)
    np.testing.assert_allclose(routing_entropy(uniform), np.log(3.0))


def test_fuse_tangents_weighted_sum(rng):
    v = [rng.standard_normal((2, 4)) for _ in range(3)]
    r = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    fused = fuse_tangents([Tensor(x) for x in v], r).data
    np.testing.assert_allclose(fused, sum(r[:, [i]] * v[i] for i in range(3)))


def test_fuse_tangents_skips_disabled(rng):
    v = rng.standard_normal((2, 4))
    fused = fuse_tangents([None, None, Tensor(v)], np.tile([0.0, 0.0, 1.0], (2, 1)))
    np.testing.assert_allclose(fused.data, v)
    with pytest.raises(ValueError):
        fuse_tangents([None, None, None], np.ones((2, 3)))


def test_tangent_fuse_at_origin_and_pole():
    d = 4
    x_h = np.zeros((1, d))
    x_s = manifolds.north_pole(d)[None, :]
    x_e = np.arange(1.0, d + 1)[None, :]
    out = tangent_fuse(x_h, x_s, x_e, np.array([[0.25, 0.25, 0.5]])).data
    np.testing.assert_allclose(out, 0.5 * x_e, atol=1e-15)


def test_refiner_starts_as_identity(rng):
    store = ParamStore(0)
    refiner = Refiner(store, "refiner", 6)
    z = rng.standard_normal((3, 6))
    np.testing.assert_allclose(refiner.forward(z).data, z)


def test_adapters_match_loop(rng):
    K, a, s, B = 3, 2, 4, 5
    h = rng.standard_normal((B, s))
    w1, b1 = rng.standard_normal((K, a, s)), rng.standard_normal((K, a))
    w2, b = rng.standard_normal((K, a)), rng.standard_normal(K)
    out = adapters(h, Tensor(w1), Tensor(b1), Tensor(w2), Tensor(b)).data
    gelu = ops.gelu
    for k in range(K):
        expected = gelu(h @ w1[k].T + b1[k]).data @ w2[k] + b[k]
        np.testing.assert_allclose(out[:, k], expected)


def test_linear_head_has_no_adapters():
    store = ParamStore(0)
    head = MultiTaskHead(store, "head", 8, 12, mode="linear")
    assert head.adapter_weights() == []
    assert head.forward(np.zeros((2, 8))).shape == (2, 12)


def test_pooling_shapes(rng):
    h = rng.standard_normal((2, 5, 4))
    assert attention_pool(h, Tensor(np.zeros(4))).shape == (2, 4)
    np.testing.assert_allclose(attention_pool(h, Tensor(np.zeros(4))).data, h.mean(axis=1))
    np.testing.assert_allclose(mean_pool(h).data, h.mean(axis=1))


def test_depthwise_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 5, 3))
    kernel = np.zeros((3, 3))
    kernel[:, 1] = 1.0
    out = depthwise_conv1d(x, Tensor(kernel), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, x)


# -------------------------------------------------
# FULL MODEL
# -------------------------------------------------
def test_forward_shapes_and_diagnostics(tiny):
    model = CrmfModel(tiny, seed=0)
    y_hat, r, diag = model.forward(make_bundles(5, tiny.d_model))
    assert y_hat.shape == (5, tiny.n_targets)
    assert r.shape == (5, 3)
    np.testing.assert_allclose(r.data.sum(axis=1), 1.0)
    assert set(diag["tangent_norm"]) == set(GEOMETRIES)
    assert 0.0 <= diag["routing_entropy"] <= np.log(3.0) + 1e-12


def test_eval_forward_is_deterministic(tiny):
    bundles = make_bundles(4, tiny.d_model)
    a = CrmfModel(tiny, seed=3).predict(bundles)
    b = CrmfModel(tiny, seed=3).predict(bundles)
    np.testing.assert_array_equal(a, b)


def test_mixed_lengths_keep_input_order(tiny):
    model = CrmfModel(tiny, seed=1)
    short = make_bundles(2, tiny.d_model, seed=1, lengths=(2, 2, 2))
    long = make_bundles(2, tiny.d_model, seed=2, lengths=(3, 4, 5))
    mixed = [short[0], long[0], short[1], long[1]]
    together = model.predict(mixed)
    for i, b in enumerate(mixed):
        np.testing.assert_allclose(together[i], model.predict([b])[0], atol=1e-12)


def test_dropout_only_with_generator():
    cfg = ModelConfig.tiny(expert_dropout=0.5)
    model = CrmfModel(cfg, seed=0)
    bundles = make_bundles(3, cfg.d_model)
    eval_a = model.forward(bundles)[0].data
    train = model.forward(bundles, rng=np.random.default_rng(0))[0].data
    np.testing.assert_array_equal(eval_a, model.forward(bundles)[0].data)
    assert not np.allclose(eval_a, train)


@pytest.mark.parametrize("overrides", [
    {"geometry": "hyperbolic"}, {"geometry": "spherical+euclidean"}, {"routing": "uniform"},
    {"routing": "hard"}, {"pooling": "mean"}, {"head": "linear"}, {"use_temporal": False},
])
def test_ablations_run(overrides):
    cfg = ModelConfig.tiny(**overrides)
    model = CrmfModel(cfg, seed=0)
    y_hat, r, _ = model.forward(make_bundles(3, cfg.d_model))
    assert y_hat.shape == (3, cfg.n_targets)
    disabled = [i for i, g in enumerate(GEOMETRIES) if g not in cfg.enabled_geometries()]
    assert np.all(r.data[:, disabled] == 0.0)


def test_single_geometry_has_fewer_parameters(tiny):
    full = CrmfModel(tiny).store
    single = CrmfModel(ModelConfig.tiny(geometry="euclidean")).store
    assert len(single) < len(full)
    assert not any(name.startswith("experts.hyperbolic") for name in single)


def test_every_parameter_gets_a_gradient(tiny):
    model = CrmfModel(tiny, seed=0)
    w = model.store["refiner.l2.w"]
    w.data = np.random.default_rng(0).standard_normal(w.shape) * 0.1
    y_hat, _, _ = model.forward(make_bundles(4, tiny.d_model))
    params = [p for _, p in model.store.items()]
    grads = backward(ops.reduce_sum(y_hat * y_hat), params=params, accumulate=False)
    silent = [name for name, p in model.store.items() if not np.any(grads[p])]
    assert silent == []


def test_empty_batch_rejected(tiny):
    with pytest.raises(ValueError):
        CrmfModel(tiny).forward([])


def test_wrong_width_raises(tiny):
    with pytest.raises(ValueError):
        CrmfModel(tiny).forward(make_bundles(2, tiny.d_model + 2))


def test_stage_error_names_stage(tiny, monkeypatch):
    model = CrmfModel(tiny, seed=0)

    def broken(z):
        raise FloatingPointError("boom")

    monkeypatch.setattr(model.router, "forward", broken)
    with pytest.raises(StageError) as exc:
        model.forward(make_bundles(2, tiny.d_model))
    assert exc.value.stage == "route"
