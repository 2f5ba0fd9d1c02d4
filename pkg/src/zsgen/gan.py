"""Knowledge-to-visual generative model: generator, dual-head critic,
triplet/adversarial losses, and the inner adversarial training loop.

The generator maps a semantic vector through a linear reduction layer,
perturbs it with Gaussian noise, and decodes through leaky-relu and tanh
layers into the visual feature range (-1, 1). The discriminator shares a
relu trunk between a scalar Wasserstein critic head and a class-logit
head; its loss carries a gradient penalty toward unit critic gradients.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .errors import ConfigError, UsageError
from .knn import KnnClassifier, knn_scores
from .nn import (
    AdamState, Layer, Mlp, activate_grad, adam_step, glorot_init, init_mlp,
    mlp_backward, mlp_forward,
)


@dataclass
class GeneratorConfig:
    semantic_dim: int
    visual_dim: int
    reduce_dim: int = 1000
    hidden_dim: int = 2048
    noise_dim: int = 0          # 0: same as reduce_dim (additive mode)
    noise_sigma: float = 1.0
    noise_mode: str = "add"     # add | concat
    slope: float = 0.2

    def __post_init__(self):
        if min(self.semantic_dim, self.visual_dim, self.reduce_dim, self.hidden_dim) < 1:
            raise ConfigError("all generator dims must be >= 1")
        if self.noise_mode not in ("add", "concat"):
            raise ConfigError(f"unknown noise mode {self.noise_mode!r}")
        if self.noise_dim == 0:
            self.noise_dim = self.reduce_dim
        if self.noise_mode == "add" and self.noise_dim != self.reduce_dim:
            raise ConfigError("additive noise requires noise_dim == reduce_dim")


@dataclass
class DiscriminatorConfig:
    visual_dim: int
    hidden_dim: int = 2048
    num_classes: int = 1

    def __post_init__(self):
        if min(self.visual_dim, self.hidden_dim, self.num_classes) < 1:
            raise ConfigError("all discriminator dims must be >= 1")


@dataclass
class GanTrainConfig:
    margin: float = 0.1
    lambda_t: float = 1.0
    n_d: int = 5
    n_step: int = 10000
    patience: int = 100
    batch_size: int = 1000
    n_pos: int = 5
    n_neg: int = 5
    alpha: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.9
    gp_weight: float = 10.0
    eval_every: int = 40
    knn_k: int = 20
    probe_per_class: int = 60
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.margin < 0.0 or self.n_d < 1 or self.batch_size < 1:
            raise ConfigError("need margin >= 0, n_d >= 1, batch_size >= 1")


@dataclass
class FeatureScaler:
    """Per-dimension min-max map onto [-1, 1], fitted on the training split.

    Constant dimensions map to 0. The fitted bounds are persisted in
    checkpoints and reused verbatim at test time.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=np.float64)
        return cls(lo=x.min(axis=0), hi=x.max(axis=0))

    def transform(self, x):
        span = self.hi - self.lo
        safe = np.where(span > 0.0, span, 1.0)
        out = 2.0 * (np.asarray(x, dtype=np.float64) - self.lo) / safe - 1.0
        return np.where(span > 0.0, out, 0.0)


class Generator:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.reduce = init_mlp([cfg.semantic_dim, cfg.reduce_dim], ["identity"], rng)
        post_in = cfg.reduce_dim if cfg.noise_mode == "add" else cfg.reduce_dim + cfg.noise_dim
        self.decode = init_mlp(
            [post_in, cfg.hidden_dim, cfg.visual_dim],
            ["leaky_relu", "tanh"], rng, slope=cfg.slope,
        )

    def params(self):
        return self.reduce.param_arrays() + self.decode.param_arrays()

    def copy(self):
        out = Generator.__new__(Generator)
        out.cfg = replace(self.cfg)
        out.reduce = self.reduce.copy()
        out.decode = self.decode.copy()
        return out

    def sample_noise(self, rng, n):
        return rng.normal(0.0, self.cfg.noise_sigma, size=(n, self.cfg.noise_dim))

    def forward(self, semantics, noise):
        semantics = np.asarray(semantics, dtype=np.float64)
        noise = np.asarray(noise, dtype=np.float64)
        if semantics.shape[0] != noise.shape[0]:
            raise UsageError("semantics and noise batch sizes differ")
        if noise.shape[1] != self.cfg.noise_dim:
            raise UsageError(f"noise dim {noise.shape[1]} != {self.cfg.noise_dim}")
        reduced, reduce_cache = mlp_forward(self.reduce, semantics)
        if self.cfg.noise_mode == "add":
            h = reduced + noise
        else:
            h = np.hstack([reduced, noise])
        out, decode_cache = mlp_forward(self.decode, h)
        return out, (reduce_cache, decode_cache)

    def backward(self, cache, d_out):
        reduce_cache, decode_cache = cache
        decode_grads, d_h = mlp_backward(self.decode, decode_cache, d_out)
        d_reduced = d_h if self.cfg.noise_mode == "add" else d_h[:, : self.cfg.reduce_dim]
        reduce_grads, d_sem = mlp_backward(self.reduce, reduce_cache, d_reduced)
        return reduce_grads + decode_grads, d_sem


def generate(gen, semantics, noise):
    """Synthesize visual features; plain forward pass, no cache."""
    out, _ = gen.forward(semantics, noise)
    return out


class Discriminator:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.trunk = init_mlp([cfg.visual_dim, cfg.hidden_dim], ["relu"], rng)
        self.critic = init_mlp([cfg.hidden_dim, 1], ["identity"], rng)
        self.head = init_mlp([cfg.hidden_dim, cfg.num_classes], ["identity"], rng)

    def params(self):
        return self.trunk.param_arrays() + self.critic.param_arrays() + self.head.param_arrays()

    def copy(self):
        out = Discriminator.__new__(Discriminator)
        out.cfg = replace(self.cfg)
        out.trunk = self.trunk.copy()
        out.critic = self.critic.copy()
        out.head = self.head.copy()
        return out

    def forward(self, x):
        h, trunk_cache = mlp_forward(self.trunk, x)
        critic_out, critic_cache = mlp_forward(self.critic, h)
        logits, head_cache = mlp_forward(self.head, h)
        return critic_out[:, 0], logits, (trunk_cache, critic_cache, head_cache)

    def backward(self, cache, d_critic, d_logits):
        trunk_cache, critic_cache, head_cache = cache
        critic_grads, d_h1 = mlp_backward(self.critic, critic_cache, d_critic[:, None])
        head_grads, d_h2 = mlp_backward(self.head, head_cache, d_logits)
        trunk_grads, d_x = mlp_backward(self.trunk, trunk_cache, d_h1 + d_h2)
        return trunk_grads + critic_grads + head_grads, d_x


def _safe_unit(diff, dist):
    """diff / dist with zero rows where dist == 0."""
    out = np.zeros_like(diff)
    nz = dist > 0.0
    out[nz] = diff[nz] / dist[nz][..., None]
    return out


def triplet_loss(synthetic, positives, negatives, margin):
    loss, _ = triplet_loss_grad(synthetic, positives, negatives, margin)
    return loss


def triplet_loss_grad(synthetic, positives, negatives, margin):
    """Hinged inter/intra-class distance gap, plus its gradient in x-tilde.

    synthetic is one generated row per class; positives[c] / negatives[c]
    are the real same-class / other-class samples for class c. Euclidean
    distances, class-averaged, margin added inside the outer hinge.
    """
    synthetic = np.asarray(synthetic, dtype=np.float64)
    n_classes = synthetic.shape[0]
    if len(positives) != n_classes or len(negatives) != n_classes:
        raise UsageError("need one positive and one negative set per class")
    gap = 0.0
    grads = np.zeros_like(synthetic)
    for c in range(n_classes):
        pos = np.asarray(positives[c], dtype=np.float64)
        neg = np.asarray(negatives[c], dtype=np.float64)
        if pos.size == 0 or neg.size == 0:
            raise UsageError(f"class {c} needs at least one positive and one negative")
        pd = synthetic[c][None, :] - pos
        nd = synthetic[c][None, :] - neg
        pdist = np.linalg.norm(pd, axis=1)
        ndist = np.linalg.norm(nd, axis=1)
        gap += pdist.mean() - ndist.mean()
        grads[c] = (
            _safe_unit(pd, pdist).mean(axis=0) - _safe_unit(nd, ndist).mean(axis=0)
        ) / n_classes
    loss = gap / n_classes + margin
    if loss <= 0.0:
        return 0.0, np.zeros_like(synthetic)
    return loss, grads


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over softmax logits, with gradient in the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, n_cls = logits.shape
    if labels.min() < 0 or labels.max() >= n_cls:
        raise UsageError("label out of class range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.log(probs[np.arange(n), labels] + 1e-300).mean())
    d_logits = probs
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    return loss, d_logits


def generator_loss(critic_fake, critic_real, logits_fake, logits_real, labels,
                   triplet, lambda_t):
    """Wasserstein gap + averaged classification losses + weighted triplet term.

    The critic gap enters with the generated side negated: the
    discriminator drives critic(fake) down, so descending this loss pulls
    generated features toward critic scores of real ones.
    """
    ce_fake, _ = softmax_cross_entropy(logits_fake, labels)
    ce_real, _ = softmax_cross_entropy(logits_real, labels)
    return (
        float(np.mean(critic_real)) - float(np.mean(critic_fake))
        + 0.5 * (ce_fake + ce_real)
        + lambda_t * triplet
    )


def critic_input_gradient(disc, x):
    """Gradient of the scalar critic in its input, plus the chain internals
    needed to differentiate the gradient norm in the parameters."""
    h, trunk_cache = mlp_forward(disc.trunk, x)
    masks = [
        activate_grad(layer.activation, z, layer.slope)
        for layer, (_, z) in zip(disc.trunk.layers, trunk_cache)
    ]
    n = x.shape[0]
    # backward chain, critic head first, recording stage inputs
    t = np.broadcast_to(disc.critic.layers[0].weight[:, 0][None, :], (n, disc.trunk.out_dim)).copy()
    stages = []  # per trunk layer, top-down: (t_before_mask, masked)
    for layer, mask in zip(reversed(disc.trunk.layers), reversed(masks)):
        masked = t * mask
        stages.append((t, masked, mask, layer))
        t = masked @ layer.weight.T
    return t, stages  # t == d critic / d x, per row


def gradient_penalty_grads(disc, x_hat):
    """Value and discriminator-parameter gradients of the unit-gradient penalty.

    Penalty = mean over interpolates of (||grad_x critic|| - 1)^2. With
    piecewise-linear trunk activations the activation masks carry no
    derivative, so biases receive zero gradient from this term.
    """
    g, stages = critic_input_gradient(disc, x_hat)
    n = x_hat.shape[0]
    norms = np.linalg.norm(g, axis=1)
    penalty = float(((norms - 1.0) ** 2).mean())
    z = (2.0 / n) * _safe_unit(g, norms) * (norms - 1.0)[:, None]

    grads = [np.zeros_like(p) for p in disc.params()]
    trunk_n = len(disc.trunk.layers)
    d_t = z
    # walk the chain back up: trunk layer 1 was applied last
    for i, (t_before, masked, mask, layer) in enumerate(reversed(stages)):
        layer_idx = i  # trunk layer index, bottom-up
        grads[2 * layer_idx] += d_t.T @ masked  # (in, out) weight gradient
        d_masked = d_t @ layer.weight
        d_t = d_masked * mask
    # critic head weight: chain input was its weight column broadcast per row
    grads[2 * trunk_n] += d_t.sum(axis=0)[:, None]
    return penalty, grads


def discriminator_loss(disc, real_x, fake_x, labels, gp_weight, rng=None, eps=None):
    loss, _ = discriminator_loss_grads(disc, real_x, fake_x, labels, gp_weight,
                                       rng=rng, eps=eps)
    return loss


def discriminator_loss_grads(disc, real_x, fake_x, labels, gp_weight, rng=None, eps=None):
    """Critic gap + gradient penalty + averaged classification losses,
    with gradients in the discriminator parameters."""
    real_x = np.asarray(real_x, dtype=np.float64)
    fake_x = np.asarray(fake_x, dtype=np.float64)
    if real_x.shape != fake_x.shape:
        raise UsageError("real and fake batches must have identical shapes")
    n = real_x.shape[0]

    critic_r, logits_r, cache_r = disc.forward(real_x)
    critic_f, logits_f, cache_f = disc.forward(fake_x)
    ce_real, d_logits_r = softmax_cross_entropy(logits_r, labels)
    ce_fake, d_logits_f = softmax_cross_entropy(logits_f, labels)

    loss = (
        float(np.mean(critic_f)) - float(np.mean(critic_r))
        + 0.5 * (ce_fake + ce_real)
    )
    grads_f, _ = disc.backward(cache_f, np.full(n, 1.0 / n), 0.5 * d_logits_f)
    grads_r, _ = disc.backward(cache_r, np.full(n, -1.0 / n), 0.5 * d_logits_r)
    grads = [a + b for a, b in zip(grads_f, grads_r)]

    if gp_weight != 0.0:
        if eps is None:
            if rng is None:
                raise UsageError("gradient penalty needs rng or explicit eps")
            eps = rng.uniform(0.0, 1.0, size=(n, 1))
        x_hat = eps * real_x + (1.0 - eps) * fake_x
        penalty, gp_grads = gradient_penalty_grads(disc, x_hat)
        loss += gp_weight * penalty
        grads = [a + gp_weight * b for a, b in zip(grads, gp_grads)]
    return loss, grads


def generator_loss_grads(gen, disc, semantics, noise, real_x, labels,
                         pos_feats, neg_feats, cfg):
    """Full generator loss with gradients in the generator parameters.

    pos_feats / neg_feats are (m, n_pos, d) / (m, n_neg, d) real samples
    matched to each batch row's class.
    """
    fake_x, gen_cache = gen.forward(semantics, noise)
    critic_f, logits_f, disc_cache = disc.forward(fake_x)
    critic_r, logits_r, _ = disc.forward(real_x)

    n = fake_x.shape[0]
    ce_fake, d_logits_f = softmax_cross_entropy(logits_f, labels)
    ce_real, _ = softmax_cross_entropy(logits_r, labels)
    trip, d_trip = triplet_loss_grad(
        fake_x, list(pos_feats), list(neg_feats), cfg.margin
    )
    loss = (
        float(np.mean(critic_r)) - float(np.mean(critic_f))
        + 0.5 * (ce_fake + ce_real)
        + cfg.lambda_t * trip
    )
    _, d_fake = disc.backward(disc_cache, np.full(n, -1.0 / n), 0.5 * d_logits_f)
    d_fake = d_fake + cfg.lambda_t * d_trip
    grads, _ = gen.backward(gen_cache, d_fake)
    return loss, trip, grads


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    log_lines: list = field(default_factory=list)
    history: list = field(default_factory=list)
    best_gacc: float = float("nan")


def _class_index(labels):
    out = {}
    for c in np.unique(labels):
        out[int(c)] = np.flatnonzero(labels == c)
    return out


def _validation_split(train_y, seen_ids, frac, rng):
    """Per-class held-out validation indices over seen-class samples."""
    val = []
    for c in seen_ids:
        idx = np.flatnonzero(train_y == c)
        if idx.size < 2:
            continue
        n_val = max(1, int(round(frac * idx.size)))
        perm = rng.permutation(idx.size)
        val.extend(idx[perm[:n_val]].tolist())
    return np.array(sorted(val), dtype=np.int64)


def _probe_gacc(gen, dataset, val_x, val_y, cfg, rng, sweep):
    """kNN probe on synthetic features; generalized accuracy of validation
    seen-class queries over the full seen+unseen class space."""
    seen = sorted(dataset.split.seen)
    unseen = sorted(dataset.split.unseen)
    class_ids = np.array(seen + unseen, dtype=np.int64)
    refs, ref_labels = [], []
    for c in class_ids:
        sem = np.repeat(dataset.semantics_for([c]), cfg.probe_per_class, axis=0)
        refs.append(generate(gen, sem, gen.sample_noise(rng, cfg.probe_per_class)))
        ref_labels.append(np.full(cfg.probe_per_class, c, dtype=np.int64))
    clf = KnnClassifier(np.vstack(refs), np.concatenate(ref_labels), k=cfg.knn_k)
    scores = knn_scores(clf, val_x, class_ids)
    sm = metrics.ScoreMatrix(scores, class_ids, seen_count=len(seen))
    return metrics.generalized_accuracy(sm, val_y, sweep)


def train_gan(dataset, train_x, train_y, gen, disc, class_cols, cfg, rng,
              sweep=None):
    """Adversarial training on the (scaled) training split.

    class_cols maps class id -> discriminator logit column. Every
    eval_every steps a kNN probe records validation generalized accuracy;
    the best-scoring parameter snapshot is returned. Stops early after
    `patience` consecutive evaluations without improvement.
    """
    if train_x.shape[0] == 0:
        raise ConfigError("empty training split")
    sweep = sweep or metrics.CalibrationSweep()
    n_train = train_x.shape[0]
    m = min(cfg.batch_size, n_train)

    val_idx = _validation_split(train_y, sorted(dataset.split.seen),
                                cfg.val_fraction, rng)
    fit_mask = np.ones(n_train, dtype=bool)
    fit_mask[val_idx] = False
    fit_idx = np.flatnonzero(fit_mask)
    fit_x, fit_y = train_x[fit_idx], train_y[fit_idx]
    val_x, val_y = train_x[val_idx], train_y[val_idx]
    by_class = _class_index(fit_y)
    sem_cache = {c: dataset.semantics_for([c])[0] for c in class_cols}

    gen_adam = AdamState.for_params(gen.params(), cfg.alpha, cfg.beta1, cfg.beta2)
    disc_adam = AdamState.for_params(disc.params(), cfg.alpha, cfg.beta1, cfg.beta2)

    best = TrainResult(gen.copy(), disc.copy(), [], [], float("-inf"))
    log_lines, history = [], []
    p_count = 0
    last_ld = float("nan")

    for step in range(1, cfg.n_step + 1):
        for _ in range(cfg.n_d):
            idx = rng.integers(0, fit_x.shape[0], size=m)
            xb, yb = fit_x[idx], fit_y[idx]
            sem = np.stack([sem_cache[int(c)] for c in yb])
            fake = generate(gen, sem, gen.sample_noise(rng, m))
            cols = np.array([class_cols[int(c)] for c in yb])
            last_ld, grads = discriminator_loss_grads(
                disc, xb, fake, cols, cfg.gp_weight, rng=rng
            )
            if not math.isfinite(last_ld):
                raise UsageError(f"non-finite discriminator loss at step {step}")
            adam_step(disc.params(), grads, disc_adam)

        idx = rng.integers(0, fit_x.shape[0], size=m)
        xb, yb = fit_x[idx], fit_y[idx]
        sem = np.stack([sem_cache[int(c)] for c in yb])
        cols = np.array([class_cols[int(c)] for c in yb])
        pos = np.empty((m, cfg.n_pos, train_x.shape[1]))
        neg = np.empty((m, cfg.n_neg, train_x.shape[1]))
        for j, c in enumerate(yb):
            own = by_class[int(c)]
            pos_pick = rng.choice(own, size=cfg.n_pos, replace=own.size < cfg.n_pos)
            other = np.flatnonzero(fit_y != c)
            neg_pick = rng.choice(other, size=cfg.n_neg, replace=other.size < cfg.n_neg)
            pos[j] = fit_x[pos_pick]
            neg[j] = fit_x[neg_pick]
        lg, trip, grads = generator_loss_grads(
            gen, disc, sem, gen.sample_noise(rng, m), xb, cols, pos, neg, cfg
        )
        if not math.isfinite(lg):
            raise UsageError(f"non-finite generator loss at step {step}")
        adam_step(gen.params(), grads, gen_adam)

        if cfg.eval_every > 0 and step % cfg.eval_every == 0 and val_x.shape[0] > 0:
            gacc = _probe_gacc(gen, dataset, val_x, val_y, cfg, rng, sweep)
            log_lines.append(
                f"{step}\t{float(last_ld)!r}\t{float(lg)!r}"
                f"\t{float(trip)!r}\t{float(gacc)!r}"
            )
            history.append({
                "step": step, "loss_d": last_ld, "loss_g": lg,
                "triplet": trip, "val_gacc": gacc,
            })
            if gacc > best.best_gacc:
                best = TrainResult(gen.copy(), disc.copy(), [], [], gacc)
                p_count = 0
            else:
                p_count += 1
                if p_count >= cfg.patience:
                    break

    if best.best_gacc == float("-inf"):
        # no evaluation happened; final parameters are the result
        best = TrainResult(gen.copy(), disc.copy(), [], [], float("nan"))
    best.log_lines = log_lines
    best.history = history
    return best
