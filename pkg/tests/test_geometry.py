import numpy as np
import pytest

from geometry import manifolds
from geometry.attention import AttentionConfig, IntraManifoldAttention
from geometry.euclidean_expert import EuclideanExpert
from geometry.hyperbolic_expert import HyperbolicExpert
from geometry.spherical_expert import SphericalExpert
from model.params import ParamStore
from tensorcore import Tensor, backward, ops
from tensorcore.gradcheck import check_gradients


def random_ball(rng, n, d, c=1.0, max_frac=0.95):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.uniform(0.0, max_frac, size=(n, 1)) / np.sqrt(c)


# -------------------------------------------------
# BALL
# -------------------------------------------------
@pytest.mark.parametrize("c", [1.0, 0.5])
def test_exp0_stays_inside_margin(rng, c):
    v = rng.standard_normal((500, 6)) * 50.0
    x = manifolds.exp0(v, c)
    assert manifolds.ball_violation(x, c) <= 1e-12


def test_exp0_of_huge_vector_sits_on_margin():
    x = manifolds.exp0(np.array([[1e6, 0.0, 0.0]]))
    assert np.linalg.norm(x.data) == pytest.approx(1.0 - manifolds.BALL_MARGIN, abs=1e-12)


def test_exp0_at_zero_is_zero():
    np.testing.assert_array_equal(manifolds.exp0(np.zeros((2, 4))).data, np.zeros((2, 4)))


def test_mobius_identities(rng):
    x = random_ball(rng, 200, 5)
    np.testing.assert_allclose(manifolds.mobius_add(np.zeros_like(x), x).data, x, atol=1e-10)
    np.testing.assert_allclose(manifolds.mobius_add(-x, x).data, 0.0, atol=1e-10)


def test_mobius_matvec_identity_matrix(rng):
    x = random_ball(rng, 50, 4, max_frac=0.9)
    np.testing.assert_allclose(manifolds.mobius_matvec(np.eye(4), x).data, x, atol=1e-9)


def test_log0_inverts_exp0(rng):
    v = rng.standard_normal((300, 8))
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0, 3, size=(300, 1))
    np.testing.assert_allclose(manifolds.log0(manifolds.exp0(v)).data, v, atol=1e-9)


def test_project_to_ball_leaves_interior_points(rng):
    x = random_ball(rng, 20, 3, max_frac=0.5)
    np.testing.assert_allclose(manifolds.project_to_ball(x).data, x)


# -------------------------------------------------
# SPHERE
# -------------------------------------------------
def test_sphere_projection_unit_norm(rng):
    y = manifolds.project_to_sphere(rng.standard_normal((100, 5)))
    assert manifolds.sphere_violation(y) <= 1e-12


def test_sphere_projection_rejects_zero():
    with pytest.raises(ValueError):
        manifolds.project_to_sphere(np.zeros((1, 3)))


def test_sphere_round_trip(rng):
    p = manifolds.project_to_sphere(rng.standard_normal((100, 6))).data
    v = manifolds.tangent_at(p, rng.standard_normal((100, 6))).data
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0, 3, size=(100, 1))
    back = manifolds.sphere_log(p, manifolds.sphere_exp(p, v)).data
    np.testing.assert_allclose(back, v, atol=1e-9)


def test_sphere_log_at_base_point_is_zero():
    p = manifolds.north_pole(4)[None, :]
    np.testing.assert_allclose(manifolds.sphere_log(p, p).data, 0.0, atol=1e-15)


def test_sphere_log_cut_locus():
    p = manifolds.north_pole(3)[None, :]
    with pytest.raises(manifolds.CutLocusError):
        manifolds.sphere_log(p, -p)


def test_sphere_log_gradient_near_base_point(rng):
    p = manifolds.north_pole(4)[None, :]
    x = p + 1e-5 * rng.standard_normal((1, 4))
    w = rng.standard_normal((1, 4))
    err = check_gradients(
        lambda t: ops.reduce_sum(manifolds.sphere_log(p, manifolds.project_to_sphere(t)) * w), x)
    assert err < 1e-3


# -------------------------------------------------
# EXPERTS
# -------------------------------------------------
@pytest.fixture
def store():
    return ParamStore(seed=3)


def test_hyperbolic_expert_closure(store, rng):
    expert = HyperbolicExpert(store, "experts.hyperbolic", 8)
    x = manifolds.exp0(rng.standard_normal((16, 8)) * 10.0)
    out = expert.forward(x, rng=np.random.default_rng(0))
    assert out.shape == (16, 8)
    assert manifolds.ball_violation(out) <= 1e-12


def test_spherical_expert_closure(store, rng):
    expert = SphericalExpert(store, "experts.spherical", 8)
    x = manifolds.project_to_sphere(rng.standard_normal((16, 8)) + 3.0 * expert.base_point)
    out = expert.forward(x)
    assert manifolds.sphere_violation(out) <= 1e-12


def test_euclidean_expert_residual_with_zero_weights(store, rng):
    expert = EuclideanExpert(store, "experts.euclidean", 4)
    for w in expert.weights:
        w.data = np.zeros_like(w.data)
    x = rng.standard_normal((5, 4))
    np.testing.assert_allclose(expert.forward(x).data, x)


def test_expert_eval_is_deterministic(store, rng):
    expert = HyperbolicExpert(store, "experts.hyperbolic", 8)
    x = manifolds.exp0(rng.standard_normal((4, 8)))
    np.testing.assert_array_equal(expert.forward(x).data, expert.forward(x).data)


def test_expert_needs_a_layer(store):
    with pytest.raises(ValueError):
        EuclideanExpert(store, "e", 4, n_layers=0)


def test_expert_parameters_receive_gradients(store, rng):
    expert = HyperbolicExpert(store, "experts.hyperbolic", 8)
    x = manifolds.exp0(rng.standard_normal((4, 8)))
    grads = backward(ops.reduce_sum(expert.forward(x) * 0.3), params=expert.weights,
                     accumulate=False)
    assert all(np.abs(g).sum() > 0 for g in grads.values())


# -------------------------------------------------
# ATTENTION
# -------------------------------------------------
def test_attention_config_validation():
    with pytest.raises(ValueError):
        AttentionConfig(tokens=3).validate(8)
    with pytest.raises(ValueError):
        AttentionConfig(heads=3, tokens=2).validate(8)
    with pytest.raises(ValueError):
        AttentionConfig(temperature=0.0).validate(8)


@pytest.mark.parametrize("expert_cls,check", [
    (HyperbolicExpert, manifolds.ball_violation),
    (SphericalExpert, manifolds.sphere_violation),
])
def test_attention_returns_manifold_points(store, rng, expert_cls, check):
    expert = expert_cls(store, "experts.x", 16)
    attn = IntraManifoldAttention(store, "attention.x", expert,
                                  AttentionConfig(heads=2, tokens=4))
    if expert_cls is HyperbolicExpert:
        x = manifolds.exp0(rng.standard_normal((6, 16)))
    else:
        x = manifolds.project_to_sphere(rng.standard_normal((6, 16)) + 4.0 * expert.base_point)
    out = attn.forward(x)
    assert out.shape == (6, 16)
    assert check(out) <= 1e-12


def test_attention_value_projection_starts_near_identity(store):
    expert = EuclideanExpert(store, "experts.euclidean", 16)
    IntraManifoldAttention(store, "attention.euclidean", expert, AttentionConfig(heads=2, tokens=4))
    wv = store["attention.euclidean.wv"].data
    assert np.abs(wv - np.eye(4)).max() < 0.1


def test_attention_gradient(store, rng):
    expert = EuclideanExpert(store, "experts.euclidean", 8)
    attn = IntraManifoldAttention(store, "attention.euclidean", expert,
                                  AttentionConfig(heads=2, tokens=2))
    x = rng.standard_normal((3, 8))
    w = rng.standard_normal((3, 8)) * 0.1
    assert check_gradients(lambda t: ops.reduce_sum(attn.forward(t) * w), x) < 1e-5


def test_tensor_input_accepted(store, rng):
    expert = EuclideanExpert(store, "experts.euclidean", 4)
    out = expert.forward(Tensor(rng.standard_normal((2, 4))))
    assert out.shape == (2, 4)
