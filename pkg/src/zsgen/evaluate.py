"""Model persistence and the full evaluation protocol.

Scoring uses kNN probes over synthetic features: one probe restricted to
the unseen search space for plain zero-shot top-1, one over the combined
space for the calibrated/GZSL metrics. Retrieval queries are centroids of
generated per-class features.
"""

from dataclasses import asdict

import numpy as np

from . import data, metrics
from .errors import ConfigError
from .gan import (
    Discriminator, DiscriminatorConfig, FeatureScaler, Generator, GeneratorConfig,
)
from .knn import KnnClassifier, knn_scores
from .nn import Layer, Mlp
from .selftrain import synthesize_references

CHECKPOINT_KIND = "zsgen-model"


def _mlp_arrays(prefix, mlp):
    out = {}
    for i, layer in enumerate(mlp.layers):
        out[f"{prefix}.{i}.weight"] = layer.weight
        out[f"{prefix}.{i}.bias"] = layer.bias
    return out


def _mlp_meta(mlp):
    return [{"activation": l.activation, "slope": l.slope} for l in mlp.layers]


def _mlp_from(prefix, arrays, meta):
    layers = []
    for i, spec in enumerate(meta):
        layers.append(Layer(
            arrays[f"{prefix}.{i}.weight"], arrays[f"{prefix}.{i}.bias"],
            spec["activation"], spec["slope"],
        ))
    return Mlp(layers)


def save_model(path, gen, disc, scaler, class_cols, config_hash=""):
    arrays = {}
    arrays.update(_mlp_arrays("gen.reduce", gen.reduce))
    arrays.update(_mlp_arrays("gen.decode", gen.decode))
    arrays.update(_mlp_arrays("disc.trunk", disc.trunk))
    arrays.update(_mlp_arrays("disc.critic", disc.critic))
    arrays.update(_mlp_arrays("disc.head", disc.head))
    arrays["scaler.lo"] = scaler.lo
    arrays["scaler.hi"] = scaler.hi
    meta = {
        "kind": CHECKPOINT_KIND,
        "config_hash": config_hash,
        "gen_cfg": asdict(gen.cfg),
        "disc_cfg": asdict(disc.cfg),
        "gen_layers": {
            "reduce": _mlp_meta(gen.reduce), "decode": _mlp_meta(gen.decode),
        },
        "disc_layers": {
            "trunk": _mlp_meta(disc.trunk), "critic": _mlp_meta(disc.critic),
            "head": _mlp_meta(disc.head),
        },
        "class_cols": {str(k): v for k, v in class_cols.items()},
    }
    data.save_checkpoint(path, arrays, meta)


def load_model(path):
    arrays, meta = data.load_checkpoint(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{path} is not a model checkpoint")
    gen = Generator.__new__(Generator)
    gen.cfg = GeneratorConfig(**meta["gen_cfg"])
    gen.reduce = _mlp_from("gen.reduce", arrays, meta["gen_layers"]["reduce"])
    gen.decode = _mlp_from("gen.decode", arrays, meta["gen_layers"]["decode"])
    disc = Discriminator.__new__(Discriminator)
    disc.cfg = DiscriminatorConfig(**meta["disc_cfg"])
    disc.trunk = _mlp_from("disc.trunk", arrays, meta["disc_layers"]["trunk"])
    disc.critic = _mlp_from("disc.critic", arrays, meta["disc_layers"]["critic"])
    disc.head = _mlp_from("disc.head", arrays, meta["disc_layers"]["head"])
    scaler = FeatureScaler(lo=arrays["scaler.lo"], hi=arrays["scaler.hi"])
    class_cols = {int(k): v for k, v in meta["class_cols"].items()}
    return gen, disc, scaler, class_cols, meta


def retrieval_map(gen, class_ids, semantics, features, labels, ratio,
                  per_class_synthetic, rng):
    """Zero-shot retrieval mAP (%) with generated-centroid queries."""
    refs, ref_labels = synthesize_references(
        gen, class_ids, semantics, per_class_synthetic, rng
    )
    queries = {
        int(c): refs[ref_labels == c].mean(axis=0) for c in class_ids
    }
    return metrics.retrieval_precision(queries, features, labels, ratio)


def score_matrix(gen, dataset, queries, per_class_synthetic, knn_k, rng):
    """kNN vote-fraction scores over the combined seen+unseen class space."""
    seen = sorted(dataset.split.seen)
    unseen = sorted(dataset.split.unseen)
    class_ids = np.array(seen + unseen, dtype=np.int64)
    refs, ref_labels = synthesize_references(
        gen, class_ids, dataset.semantics_for(class_ids),
        per_class_synthetic, rng,
    )
    clf = KnnClassifier(refs, ref_labels, k=knn_k)
    scores = knn_scores(clf, queries, class_ids)
    return metrics.ScoreMatrix(scores, class_ids, seen_count=len(seen))


def evaluate_model(gen, dataset_scaled, sweep, ratios, per_class_synthetic,
                   knn_k, rng):
    """Full report on the test partition of an already-scaled dataset."""
    test_idx = dataset_scaled.test_indices()
    x_test = dataset_scaled.features[test_idx]
    y_test = dataset_scaled.labels[test_idx]
    unseen = sorted(dataset_scaled.split.unseen)
    unseen_mask = np.isin(y_test, unseen)
    if not unseen_mask.any():
        raise ConfigError("test partition has no unseen-class samples")

    # zero-shot top-1: unseen search space only
    u_refs, u_labels = synthesize_references(
        gen, unseen, dataset_scaled.semantics_for(unseen),
        per_class_synthetic, rng,
    )
    u_clf = KnnClassifier(u_refs, u_labels, k=knn_k)
    u_scores = knn_scores(u_clf, x_test[unseen_mask], unseen)
    top1_unseen = metrics.top1_per_class(u_scores, unseen, y_test[unseen_mask])

    sm = score_matrix(gen, dataset_scaled, x_test, per_class_synthetic, knn_k, rng)
    s, u, h = metrics.gzsl_suh(sm, y_test)
    g_acc = metrics.generalized_accuracy(sm, y_test, sweep)
    points = metrics.suc_curve(sm, y_test, sweep)
    area = metrics.ausuc(points)

    map_at = {}
    for ratio in ratios:
        map_at[int(round(100 * ratio))] = retrieval_map(
            gen, unseen, dataset_scaled.semantics_for(unseen),
            x_test[unseen_mask], y_test[unseen_mask], ratio,
            per_class_synthetic, rng,
        )
    return metrics.EvalReport(
        top1_unseen=top1_unseen, s=s, u=u, h=h, g_acc=g_acc,
        ausuc=area, suc_points=points, map_at=map_at,
    )


def write_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"top1_unseen: {report.top1_unseen!r}\n")
        fh.write(f"S: {report.s!r}\n")
        fh.write(f"U: {report.u!r}\n")
        fh.write(f"H: {report.h!r}\n")
        fh.write(f"G_acc: {report.g_acc!r}\n")
        fh.write(f"AUSUC: {report.ausuc!r}\n")
        for pct in sorted(report.map_at):
            fh.write(f"mAP@{pct}: {report.map_at[pct]!r}\n")
        fh.write("suc_points:\n")
        for x, y in report.suc_points:
            fh.write(f"  {x!r} {y!r}\n")


def write_suc_points(path, points):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("acc_unseen\tacc_seen\n")
        for x, y in points:
            fh.write(f"{x!r}\t{y!r}\n")
