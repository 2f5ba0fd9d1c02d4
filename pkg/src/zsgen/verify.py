"""Finite-difference verification harness for every differentiable piece."""

import numpy as np

from .gan import (
    Discriminator, DiscriminatorConfig, GanTrainConfig, Generator,
    GeneratorConfig, discriminator_loss_grads, generator_loss_grads,
    triplet_loss_grad,
)
from .nn import gradient_check, init_mlp, mlp_backward, mlp_forward


def small_mlp(rng, dims=(4, 5, 3), activations=("leaky_relu", "tanh")):
    return init_mlp(list(dims), list(activations), rng)


def check_mlp_backward(rng):
    """Quadratic loss on a small MLP against central differences."""
    mlp = small_mlp(rng)
    x = rng.normal(size=(3, mlp.in_dim))
    target = rng.normal(size=(3, mlp.out_dim))

    def f():
        out, cache = mlp_forward(mlp, x)
        diff = out - target
        loss = float((diff * diff).sum())
        grads, _ = mlp_backward(mlp, cache, 2.0 * diff)
        return loss, grads

    return gradient_check(f, mlp.param_arrays())


def check_triplet(rng, n_classes=3, dim=4):
    """Triplet loss gradients in the synthetic rows, at an active hinge."""
    synth = rng.normal(size=(n_classes, dim))
    pos = [rng.normal(size=(2, dim)) for _ in range(n_classes)]
    # negatives close to the synthetic rows keep the hinge active
    neg = [synth[c] + 0.1 * rng.normal(size=(2, dim)) for c in range(n_classes)]

    params = [synth]

    def f():
        loss, d_synth = triplet_loss_grad(synth, pos, neg, margin=5.0)
        return loss, [d_synth]

    return gradient_check(f, params)


def _toy_models(rng, n_classes=3, visual_dim=4):
    gen_cfg = GeneratorConfig(
        semantic_dim=5, visual_dim=visual_dim, reduce_dim=4, hidden_dim=6,
        noise_sigma=0.1,
    )
    disc_cfg = DiscriminatorConfig(
        visual_dim=visual_dim, hidden_dim=6, num_classes=n_classes
    )
    return Generator(gen_cfg, rng), Discriminator(disc_cfg, rng)


def check_generator_loss(rng):
    """Full generator loss against central differences, fixed discriminator."""
    gen, disc = _toy_models(rng)
    m = 3
    sem = rng.normal(size=(m, gen.cfg.semantic_dim))
    noise = gen.sample_noise(rng, m)
    real = rng.uniform(-0.9, 0.9, size=(m, gen.cfg.visual_dim))
    labels = rng.integers(0, disc.cfg.num_classes, size=m)
    pos = rng.normal(size=(m, 2, gen.cfg.visual_dim))
    neg = rng.normal(size=(m, 2, gen.cfg.visual_dim))
    cfg = GanTrainConfig(margin=5.0, lambda_t=0.7, batch_size=m)

    def f():
        loss, _, grads = generator_loss_grads(
            gen, disc, sem, noise, real, labels, pos, neg, cfg
        )
        return loss, grads

    return gradient_check(f, gen.params())


def check_discriminator_loss(rng, gp_weight=0.0):
    """Discriminator loss against central differences, fixed interpolates."""
    _, disc = _toy_models(rng)
    m = 3
    real = rng.uniform(-0.9, 0.9, size=(m, disc.cfg.visual_dim))
    fake = rng.uniform(-0.9, 0.9, size=(m, disc.cfg.visual_dim))
    labels = rng.integers(0, disc.cfg.num_classes, size=m)
    eps = rng.uniform(0.0, 1.0, size=(m, 1))

    def f():
        return discriminator_loss_grads(disc, real, fake, labels, gp_weight, eps=eps)

    return gradient_check(f, disc.params())


def run_gradient_checks(seed=0, n_seeds=20):
    """(name, max relative error) for every check, worst case over seeds."""
    results = []
    for name, fn in [
        ("mlp_backward", check_mlp_backward),
        ("triplet_loss", check_triplet),
        ("generator_loss", check_generator_loss),
        ("discriminator_loss[gp=0]", lambda r: check_discriminator_loss(r, 0.0)),
        ("discriminator_loss[gp=10]", lambda r: check_discriminator_loss(r, 10.0)),
    ]:
        worst = 0.0
        for s in range(n_seeds):
            rng = np.random.default_rng(seed + s)
            worst = max(worst, fn(rng))
        results.append((name, worst))
    return results
