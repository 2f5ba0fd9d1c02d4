"""Semi-supervised outer loop: pseudo-label unseen samples with a kNN over
synthetic features, augment the training set, and widen the class head.

Each iteration trains the adversarial model, labels confident unseen
samples, and freezes those labels; a sample added once is never
re-labeled in later iterations.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .data import TRAIN, ZslDataset
from .errors import ConfigError, UsageError
from .gan import (
    Discriminator, FeatureScaler, GanTrainConfig, Generator, TrainResult,
    generate, train_gan,
)
from .knn import KnnClassifier, knn_predict_proba, knn_scores
from .nn import glorot_init


@dataclass
class SslConfig:
    psi: float = 0.5
    n_ssl: int = 1
    per_class_synthetic: int = 60
    knn_k: int = 20

    def __post_init__(self):
        if self.n_ssl < 1:
            raise ConfigError("n_ssl must be >= 1")


@dataclass
class PseudoLabelSet:
    samples: np.ndarray       # (n, visual_dim) real unseen features
    labels: np.ndarray        # (n,) pseudo class ids, all unseen
    confidences: np.ndarray   # (n,) vote fractions, all >= the psi used
    source_indices: np.ndarray = None  # rows of the x_u passed to pseudo_label

    def __len__(self):
        return self.labels.shape[0]


def synthesize_references(gen, class_ids, semantics, per_class, rng):
    """per_class generated feature rows for every class, with labels."""
    refs, labels = [], []
    for c, sem in zip(class_ids, semantics):
        batch = np.repeat(sem[None, :], per_class, axis=0)
        refs.append(generate(gen, batch, gen.sample_noise(rng, per_class)))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return np.vstack(refs), np.concatenate(labels)


def pseudo_label(gen, unseen_class_ids, unseen_semantics, x_u, cfg, rng):
    """Label real unseen features with a kNN fitted on synthetic ones.

    Keeps only predictions whose vote fraction reaches cfg.psi. May
    return an empty set.
    """
    x_u = np.asarray(x_u, dtype=np.float64)
    if x_u.shape[0] == 0:
        empty = np.empty(0, dtype=np.int64)
        return PseudoLabelSet(x_u, empty, np.empty(0), empty)
    refs, ref_labels = synthesize_references(
        gen, unseen_class_ids, unseen_semantics, cfg.per_class_synthetic, rng
    )
    clf = KnnClassifier(refs, ref_labels, k=cfg.knn_k)
    labels, conf = knn_predict_proba(clf, x_u)
    keep = np.flatnonzero(conf >= cfg.psi)
    return PseudoLabelSet(
        samples=x_u[keep], labels=labels[keep], confidences=conf[keep],
        source_indices=keep,
    )


def augment_training_set(dataset, pl):
    """Union the training split with a pseudo-labeled sample set.

    Rows identical to an existing training row are not re-added; new rows
    join the TRAIN partition with the pseudo flag set.
    """
    if len(pl) == 0:
        return dataset
    train_rows = {
        dataset.features[i].tobytes() for i in dataset.train_indices()
    }
    keep = [
        i for i, row in enumerate(pl.samples) if row.tobytes() not in train_rows
    ]
    if not keep:
        return dataset
    return ZslDataset(
        features=np.vstack([dataset.features, pl.samples[keep]]),
        labels=np.concatenate([dataset.labels, pl.labels[keep]]),
        class_ids=dataset.class_ids,
        semantics=dataset.semantics,
        split=dataset.split,
        partition=np.concatenate([dataset.partition,
                                  np.full(len(keep), TRAIN)]),
        pseudo=np.concatenate([dataset.pseudo, np.ones(len(keep), dtype=bool)]),
    )


def expand_classifier_head(disc, new_class_count, rng):
    """Widen the class head to new_class_count logits.

    Existing class columns are preserved bit-exactly; new columns get
    Glorot weights and zero bias. Shrinking is rejected.
    """
    current = disc.cfg.num_classes
    if new_class_count < current:
        raise UsageError(
            f"cannot shrink class head from {current} to {new_class_count}"
        )
    if new_class_count == current:
        return disc
    head = disc.head.layers[0]
    hidden = head.weight.shape[0]
    fresh = glorot_init(rng, hidden, new_class_count)
    new_w = np.hstack([head.weight, fresh[:, current:]])
    new_b = np.concatenate([head.bias, np.zeros(new_class_count - current)])
    head.weight = new_w
    head.bias = new_b
    disc.cfg.num_classes = new_class_count
    return disc


@dataclass
class SslResult:
    generator: Generator
    discriminator: Discriminator
    scaler: FeatureScaler
    class_cols: dict          # class id -> discriminator logit column
    dataset: ZslDataset       # scaled working dataset after augmentation
    reports: list = field(default_factory=list)
    train_logs: list = field(default_factory=list)  # one log-line list per iteration


def scaled_copy(dataset, scaler):
    return ZslDataset(
        features=scaler.transform(dataset.features),
        labels=dataset.labels.copy(),
        class_ids=dataset.class_ids,
        semantics=dataset.semantics,
        split=dataset.split,
        partition=dataset.partition.copy(),
        pseudo=dataset.pseudo.copy(),
    )


def prepare_models(dataset, gen_cfg, disc_cfg, rng):
    """Scale features and initialize generator/discriminator for training."""
    seen_train = dataset.train_indices()
    scaler = FeatureScaler.fit(dataset.features[seen_train])
    work = scaled_copy(dataset, scaler)
    gen = Generator(gen_cfg, rng)
    disc_cfg = replace(disc_cfg, num_classes=len(dataset.split.seen))
    disc = Discriminator(disc_cfg, rng)
    class_cols = {c: i for i, c in enumerate(sorted(dataset.split.seen))}
    return work, scaler, gen, disc, class_cols


def _unseen_top1(gen, work, ssl_cfg, rng):
    unseen = sorted(work.split.unseen)
    refs, ref_labels = synthesize_references(
        gen, unseen, work.semantics_for(unseen), ssl_cfg.per_class_synthetic, rng
    )
    clf = KnnClassifier(refs, ref_labels, k=ssl_cfg.knn_k)
    test_idx = work.test_indices()
    mask = np.isin(work.labels[test_idx], unseen)
    queries = work.features[test_idx][mask]
    labels = work.labels[test_idx][mask]
    scores = knn_scores(clf, queries, unseen)
    return metrics.top1_per_class(scores, unseen, labels)


def run_ssl(dataset, gen_cfg, disc_cfg, train_cfg, ssl_cfg, seed):
    """Full outer loop: (train -> pseudo-label -> augment -> widen head) x n_ssl."""
    rng = np.random.default_rng(seed)
    work, scaler, gen, disc, class_cols = prepare_models(
        dataset, gen_cfg, disc_cfg, rng
    )
    unseen = sorted(work.split.unseen)
    test_idx = work.test_indices()
    candidates = test_idx[np.isin(work.labels[test_idx], unseen)]
    frozen = np.zeros(candidates.shape[0], dtype=bool)

    reports, train_logs = [], []
    for iteration in range(1, ssl_cfg.n_ssl + 1):
        tr_idx = work.train_indices()
        result = train_gan(
            work, work.features[tr_idx], work.labels[tr_idx],
            gen, disc, class_cols, train_cfg, rng,
        )
        gen, disc = result.generator, result.discriminator
        train_logs.append(result.log_lines)

        open_rows = candidates[~frozen]
        pl = pseudo_label(
            gen, unseen, work.semantics_for(unseen),
            work.features[open_rows], ssl_cfg, rng,
        )
        frozen[np.flatnonzero(~frozen)[pl.source_indices]] = True

        new_classes = sorted(set(pl.labels.tolist()) - set(class_cols))
        for c in new_classes:
            class_cols[c] = len(class_cols)
        expand_classifier_head(disc, len(class_cols), rng)
        work = augment_training_set(work, pl)

        reports.append({
            "iteration": iteration,
            "retained": int(len(pl)),
            "new_classes": len(new_classes),
            "unseen_top1": _unseen_top1(gen, work, ssl_cfg, rng),
            "val_gacc": result.best_gacc,
        })
    return SslResult(gen, disc, scaler, class_cols, work, reports, train_logs)
