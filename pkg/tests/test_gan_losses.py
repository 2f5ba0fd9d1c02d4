import numpy as np
import pytest

from zsgen.errors import UsageError
from zsgen.gan import (
    Discriminator, DiscriminatorConfig, Generator, GeneratorConfig,
    discriminator_loss, generate, generator_loss, softmax_cross_entropy,
    triplet_loss, triplet_loss_grad,
)
from zsgen.nn import Layer, Mlp


def reference_triplet(synthetic, positives, negatives, margin):
    """Straight-line evaluation of the class-averaged hinged distance gap."""
    c = len(synthetic)
    gap = 0.0
    for i in range(c):
        pd = np.mean([np.linalg.norm(synthetic[i] - p) for p in positives[i]])
        nd = np.mean([np.linalg.norm(synthetic[i] - q) for q in negatives[i]])
        gap += pd - nd
    return max(gap / c + margin, 0.0)


def test_triplet_equal_distances_zero_margin():
    x = np.array([[0.0, 0.0]])
    assert triplet_loss(x, [np.array([[1.0, 0.0]])], [np.array([[0.0, 1.0]])], 0.0) == 0.0


def test_triplet_inactive_hinge():
    x = np.array([[0.0, 0.0]])
    loss = triplet_loss(x, [np.array([[1.0, 0.0]])], [np.array([[3.0, 0.0]])], 0.5)
    assert loss == 0.0


def test_triplet_active_hinge_hand_value():
    x = np.array([[0.0, 0.0]])
    loss = triplet_loss(x, [np.array([[2.0, 0.0]])], [np.array([[1.0, 0.0]])], 0.5)
    np.testing.assert_allclose(loss, 1.5)


def test_triplet_nonnegative_and_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = rng.integers(1, 5)
        d = rng.integers(1, 9)
        x = rng.normal(size=(c, d))
        pos = [rng.normal(size=(rng.integers(1, 4), d)) for _ in range(c)]
        neg = [rng.normal(size=(rng.integers(1, 4), d)) for _ in range(c)]
        margin = float(rng.uniform(0.0, 2.0))
        loss = triplet_loss(x, pos, neg, margin)
        assert loss >= 0.0
        np.testing.assert_allclose(loss, reference_triplet(x, pos, neg, margin),
                                   rtol=0, atol=1e-12)


def test_triplet_empty_class_rejected():
    with pytest.raises(UsageError):
        triplet_loss(np.zeros((1, 2)), [np.zeros((0, 2))], [np.ones((1, 2))], 0.0)


def test_triplet_zero_grad_when_hinge_inactive():
    x = np.array([[0.0, 0.0]])
    loss, grad = triplet_loss_grad(
        x, [np.array([[1.0, 0.0]])], [np.array([[5.0, 0.0]])], 0.1
    )
    assert loss == 0.0 and not grad.any()


def test_generator_loss_uniform_logits_is_log_c():
    n, c = 4, 3
    zeros = np.zeros(n)
    logits = np.zeros((n, c))
    labels = np.zeros(n, dtype=np.int64)
    loss = generator_loss(zeros, zeros, logits, logits, labels, 0.0, 1.0)
    np.testing.assert_allclose(loss, np.log(c), atol=1e-12)


def test_generator_loss_lambda_zero_ignores_triplet():
    n, c = 2, 2
    zeros = np.zeros(n)
    logits = np.zeros((n, c))
    labels = np.zeros(n, dtype=np.int64)
    a = generator_loss(zeros, zeros, logits, logits, labels, 123.0, 0.0)
    b = generator_loss(zeros, zeros, logits, logits, labels, 0.0, 0.0)
    assert a == b


def test_generator_loss_vanishes_on_matched_critics_and_perfect_logits():
    n, c = 3, 2
    critic = np.array([0.7, -0.2, 0.1])
    labels = np.array([0, 1, 0], dtype=np.int64)
    logits = np.full((n, c), -1000.0)
    logits[np.arange(n), labels] = 1000.0
    loss = generator_loss(critic, critic, logits, logits, labels, 0.0, 1.0)
    np.testing.assert_allclose(loss, 0.0, atol=1e-12)


def test_generator_loss_invariant_to_critic_constant_shift():
    rng = np.random.default_rng(3)
    n, c = 5, 4
    cf, cr = rng.normal(size=n), rng.normal(size=n)
    logits = rng.normal(size=(n, c))
    labels = rng.integers(0, c, size=n)
    base = generator_loss(cf, cr, logits, logits, labels, 0.3, 0.7)
    shifted = generator_loss(cf + 11.5, cr + 11.5, logits, logits, labels, 0.3, 0.7)
    np.testing.assert_allclose(base, shifted, atol=1e-9)


def test_generator_loss_label_out_of_range():
    with pytest.raises(UsageError):
        generator_loss(np.zeros(1), np.zeros(1), np.zeros((1, 2)),
                       np.zeros((1, 2)), np.array([5]), 0.0, 1.0)


def make_disc(rng, visual_dim=3, hidden=4, num_classes=2):
    return Discriminator(
        DiscriminatorConfig(visual_dim=visual_dim, hidden_dim=hidden,
                            num_classes=num_classes), rng
    )


def test_discriminator_constant_critic_pays_full_penalty():
    rng = np.random.default_rng(0)
    disc = make_disc(rng)
    disc.critic.layers[0].weight[:] = 0.0
    real = rng.uniform(-0.9, 0.9, size=(4, 3))
    fake = rng.uniform(-0.9, 0.9, size=(4, 3))
    labels = rng.integers(0, 2, size=4)
    eps = rng.uniform(0.0, 1.0, size=(4, 1))
    base = discriminator_loss(disc, real, fake, labels, 0.0, eps=eps)
    with_gp = discriminator_loss(disc, real, fake, labels, 5.0, eps=eps)
    # zero critic gradient everywhere: penalty (0 - 1)^2 = 1 per interpolate
    np.testing.assert_allclose(with_gp - base, 5.0, atol=1e-12)


def test_discriminator_identical_batches_reduce_to_classification():
    rng = np.random.default_rng(1)
    disc = make_disc(rng)
    x = rng.uniform(-0.9, 0.9, size=(5, 3))
    labels = rng.integers(0, 2, size=5)
    loss = discriminator_loss(disc, x, x, labels, 0.0)
    _, logits, _ = disc.forward(x)
    ce, _ = softmax_cross_entropy(logits, labels)
    np.testing.assert_allclose(loss, ce, atol=1e-12)


def test_discriminator_hand_built_critic_value():
    # trunk h = [relu(x), relu(-x)], critic = relu(x) - relu(-x) = x,
    # head gives the true class an overwhelming logit -> CE ~ 0
    trunk = Mlp([Layer(np.array([[1.0, -1.0]]), np.zeros(2), "relu")])
    critic = Mlp([Layer(np.array([[1.0], [-1.0]]), np.zeros(1), "identity")])
    head = Mlp([Layer(np.array([[1000.0, 0.0], [1000.0, 0.0]]), np.zeros(2), "identity")])
    disc = Discriminator.__new__(Discriminator)
    disc.cfg = DiscriminatorConfig(visual_dim=1, hidden_dim=2, num_classes=2)
    disc.trunk, disc.critic, disc.head = trunk, critic, head
    real = np.full((3, 1), 1.0)
    fake = np.full((3, 1), -1.0)
    labels = np.zeros(3, dtype=np.int64)
    loss = discriminator_loss(disc, real, fake, labels, 0.0)
    # mean critic(fake) - mean critic(real) = -1 - 1 = -2, CE terms ~ 0
    np.testing.assert_allclose(loss, -2.0, atol=1e-9)


def test_discriminator_needs_rng_or_eps_for_penalty():
    rng = np.random.default_rng(2)
    disc = make_disc(rng)
    x = rng.normal(size=(2, 3))
    with pytest.raises(UsageError):
        discriminator_loss(disc, x, x, np.zeros(2, dtype=np.int64), 10.0)


def make_gen(rng, **kw):
    cfg = GeneratorConfig(semantic_dim=6, visual_dim=4, reduce_dim=5,
                          hidden_dim=7, **kw)
    return Generator(cfg, rng)


def test_generate_output_strictly_inside_unit_interval():
    rng = np.random.default_rng(0)
    gen = make_gen(rng)
    sem = rng.normal(size=(10, 6))
    out = generate(gen, sem, gen.sample_noise(rng, 10))
    assert ((out > -1.0) & (out < 1.0)).all()
    assert out.shape == (10, 4)


def test_generate_deterministic_given_noise():
    rng = np.random.default_rng(1)
    gen = make_gen(rng)
    sem = rng.normal(size=(3, 6))
    noise = gen.sample_noise(rng, 3)
    np.testing.assert_array_equal(generate(gen, sem, noise), generate(gen, sem, noise))


def test_generate_sensitive_to_noise():
    rng = np.random.default_rng(2)
    gen = make_gen(rng)
    sem = rng.normal(size=(3, 6))
    a = generate(gen, sem, gen.sample_noise(rng, 3))
    b = generate(gen, sem, gen.sample_noise(rng, 3))
    assert not np.array_equal(a, b)


def test_generate_identical_rows_give_identical_outputs():
    rng = np.random.default_rng(3)
    gen = make_gen(rng)
    sem = np.repeat(rng.normal(size=(1, 6)), 2, axis=0)
    noise = np.repeat(gen.sample_noise(rng, 1), 2, axis=0)
    out = generate(gen, sem, noise)
    np.testing.assert_array_equal(out[0], out[1])


def test_generate_rejects_mismatched_noise():
    rng = np.random.default_rng(4)
    gen = make_gen(rng)
    with pytest.raises(UsageError):
        generate(gen, rng.normal(size=(2, 6)), rng.normal(size=(2, 3)))
    with pytest.raises(UsageError):
        generate(gen, rng.normal(size=(2, 6)), gen.sample_noise(rng, 3))


def test_concat_noise_mode():
    rng = np.random.default_rng(5)
    cfg = GeneratorConfig(semantic_dim=6, visual_dim=4, reduce_dim=5,
                          hidden_dim=7, noise_dim=3, noise_mode="concat")
    gen = Generator(cfg, rng)
    out = generate(gen, rng.normal(size=(2, 6)), gen.sample_noise(rng, 2))
    assert out.shape == (2, 4)
