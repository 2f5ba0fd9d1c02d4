import numpy as np
import pytest

from zsgen.errors import ConfigError, UsageError
from zsgen.nn import (
    AdamState, Layer, Mlp, activate, adam_step, glorot_init, gradient_check,
    init_mlp, mlp_backward, mlp_forward,
)


def single_layer(weight, bias, activation):
    return Mlp([Layer(np.array(weight, dtype=float),
                      np.array(bias, dtype=float), activation)])


def test_forward_identity_layer():
    mlp = single_layer(np.eye(2), [0.0, 0.0], "identity")
    out, _ = mlp_forward(mlp, np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(out, [[1.0, 2.0]])


def test_forward_relu_clamps_negative_preactivation():
    mlp = single_layer([[2.0]], [1.0], "relu")
    out, _ = mlp_forward(mlp, np.array([[-3.0]]))
    np.testing.assert_array_equal(out, [[0.0]])


def test_forward_matches_hand_rolled_two_layer_net():
    rng = np.random.default_rng(3)
    mlp = init_mlp([3, 4, 2], ["leaky_relu", "tanh"], rng)
    x = rng.normal(size=(5, 3))
    out, _ = mlp_forward(mlp, x)

    z1 = x @ mlp.layers[0].weight + mlp.layers[0].bias
    h1 = np.where(z1 >= 0.0, z1, 0.2 * z1)
    z2 = h1 @ mlp.layers[1].weight + mlp.layers[1].bias
    np.testing.assert_allclose(out, np.tanh(z2), rtol=0, atol=1e-15)


def test_forward_rejects_dimension_mismatch():
    mlp = single_layer(np.eye(2), [0.0, 0.0], "identity")
    with pytest.raises(ConfigError):
        mlp_forward(mlp, np.zeros((1, 3)))


def test_backward_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(0)
    mlp = init_mlp([3, 4, 2], ["relu", "identity"], rng)
    out, cache = mlp_forward(mlp, rng.normal(size=(6, 3)))
    grads, d_in = mlp_backward(mlp, cache, np.zeros_like(out))
    for g in grads:
        assert not g.any()
    assert not d_in.any()


def test_backward_scalar_linear_gradient_is_input():
    mlp = single_layer([[1.5]], [0.0], "identity")
    x = np.array([[4.0]])
    _, cache = mlp_forward(mlp, x)
    grads, _ = mlp_backward(mlp, cache, np.array([[1.0]]))
    np.testing.assert_array_equal(grads[0], [[4.0]])
    np.testing.assert_array_equal(grads[1], [1.0])


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(1)
    mlp = init_mlp([4, 5, 3], ["leaky_relu", "tanh"], rng)
    x = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 3))

    def f():
        out, cache = mlp_forward(mlp, x)
        diff = out - target
        grads, _ = mlp_backward(mlp, cache, 2.0 * diff)
        return float((diff * diff).sum()), grads

    assert gradient_check(f, mlp.param_arrays()) < 1e-4


def test_backward_rejects_stale_cache():
    rng = np.random.default_rng(2)
    mlp = init_mlp([3, 2], ["identity"], rng)
    out, cache = mlp_forward(mlp, rng.normal(size=(2, 3)))
    other = init_mlp([3, 4, 2], ["relu", "identity"], rng)
    with pytest.raises(UsageError):
        mlp_backward(other, cache, np.zeros_like(out))


def test_adam_zero_gradient_leaves_params_bit_identical():
    rng = np.random.default_rng(0)
    mlp = init_mlp([3, 2], ["identity"], rng)
    params = mlp.param_arrays()
    before = [p.copy() for p in params]
    state = AdamState.for_params(params)
    adam_step(params, [np.zeros_like(p) for p in params], state)
    for p, b in zip(params, before):
        assert (p == b).all()


def test_adam_single_step_hand_value():
    p = np.array([0.0])
    state = AdamState.for_params([p], alpha=0.001, beta1=0.5, beta2=0.9)
    adam_step([p], [np.array([1.0])], state)
    # bias correction makes m_hat = v_hat = 1 exactly after one unit-gradient step
    np.testing.assert_allclose(p, [-0.001 / (1.0 + 1e-8)], rtol=0, atol=1e-18)


def test_adam_two_steps_match_hand_recursion():
    p = np.array([0.2])
    state = AdamState.for_params([p], alpha=0.01, beta1=0.5, beta2=0.9)
    g = np.array([0.7])
    adam_step([p], [g.copy()], state)
    adam_step([p], [g.copy()], state)

    ref, m, v = 0.2, 0.0, 0.0
    for t in (1, 2):
        m = 0.5 * m + 0.5 * 0.7
        v = 0.9 * v + 0.1 * 0.7 * 0.7
        m_hat = m / (1.0 - 0.5 ** t)
        v_hat = v / (1.0 - 0.9 ** t)
        ref -= 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(p, [ref], rtol=0, atol=1e-15)


def test_adam_rejects_shape_mismatch():
    p = np.zeros(3)
    state = AdamState.for_params([p])
    with pytest.raises(UsageError):
        adam_step([p], [np.zeros(2)], state)


def test_gradient_check_quadratic_loss_is_tight():
    rng = np.random.default_rng(5)
    mlp = init_mlp([3, 2], ["identity"], rng)
    x = rng.normal(size=(4, 3))

    def f():
        out, cache = mlp_forward(mlp, x)
        grads, _ = mlp_backward(mlp, cache, 2.0 * out)
        return float((out * out).sum()), grads

    assert gradient_check(f, mlp.param_arrays()) < 1e-6


def test_activation_ranges():
    z = np.linspace(-5.0, 5.0, 101)
    assert (activate("relu", z) >= 0.0).all()
    t = activate("tanh", z)
    assert ((t > -1.0) & (t < 1.0)).all()


def test_glorot_bounds():
    rng = np.random.default_rng(0)
    w = glorot_init(rng, 30, 50)
    bound = np.sqrt(6.0 / 80.0)
    assert (np.abs(w) <= bound).all()


def test_init_mlp_zero_biases_and_dims():
    rng = np.random.default_rng(0)
    mlp = init_mlp([7, 5, 3], ["relu", "tanh"], rng)
    assert mlp.in_dim == 7 and mlp.out_dim == 3
    for layer in mlp.layers:
        assert not layer.bias.any()


def test_layer_validation():
    with pytest.raises(ConfigError):
        Layer(np.zeros((2, 3)), np.zeros(2), "identity")
    with pytest.raises(ConfigError):
        Layer(np.zeros((2, 2)), np.zeros(2), "swish")
    with pytest.raises(ConfigError):
        Layer(np.full((2, 2), np.nan), np.zeros(2), "identity")
