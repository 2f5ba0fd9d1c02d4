"""Class knowledge overlay: name embedding, class similarity, article overlay.

Each class name is embedded as the mean of its word vectors, classes are
ranked by pairwise similarity, and every class article is extended with
the articles of its top-k most similar classes.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MissingEmbeddingError, ParseError


@dataclass
class EmbeddingTable:
    vectors: dict  # word -> np.ndarray
    dim: int


@dataclass
class ClassRecord:
    class_id: int
    name: str
    article: str
    article_overlay: str = ""


def load_embeddings(path):
    """Load a plain-text `word v1 v2 ... vd` embedding table."""
    vectors = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word = parts[0].lower()
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ParseError(
                    f"expected {dim} components, got {vec.shape[0]}",
                    path=path, line=lineno,
                )
            if not np.isfinite(vec).all():
                raise ParseError("non-finite embedding entry", path=path, line=lineno)
            vectors[word] = vec
    if not vectors:
        raise ConfigError(f"embedding table {path} is empty")
    return EmbeddingTable(vectors=vectors, dim=dim)


def name_tokens(name):
    """Split a class name on whitespace, hyphens, underscores and dots."""
    out = []
    for chunk in name.lower().replace("-", " ").replace("_", " ").replace(".", " ").split():
        token = "".join(ch for ch in chunk if ch.isalpha())
        if token:
            out.append(token)
    return out


def embed_class_name(table, name):
    """Mean of the embeddings of the name's tokens; unknown tokens skipped."""
    if not table.vectors:
        raise ConfigError("embedding table is empty")
    vecs = [table.vectors[t] for t in name_tokens(name) if t in table.vectors]
    if not vecs:
        raise MissingEmbeddingError(f"no embedding for any token of class name {name!r}")
    return np.mean(vecs, axis=0)


def _cosine(a, b):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def similarity_matrix(table, names, measure="cosine"):
    """Pairwise class-name similarity, cosine by default.

    measure="neg_euclidean" ranks by negated Euclidean distance instead;
    cosine keeps the unit diagonal the overlay heat maps assume.
    """
    embedded = [embed_class_name(table, name) for name in names]
    n = len(embedded)
    sm = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            if measure == "cosine":
                s = _cosine(embedded[i], embedded[j])
            elif measure == "neg_euclidean":
                s = -float(np.linalg.norm(embedded[i] - embedded[j]))
            else:
                raise ConfigError(f"unknown similarity measure {measure!r}")
            sm[i, j] = s
            sm[j, i] = s
    return sm


def top_k_similar(sm, i, class_ids, k):
    """Indices of the k classes most similar to class i, self excluded.

    Descending similarity; ties broken by ascending class id.
    """
    order = sorted(
        (j for j in range(sm.shape[0]) if j != i),
        key=lambda j: (-sm[i, j], class_ids[j]),
    )
    return order[:k]


def overlay(records, sm, k):
    """Populate each record's overlay article with its top-k neighbors' articles.

    The class's own article comes first, then neighbor articles joined by
    single newlines in descending similarity order.
    """
    n = len(records)
    if sm.shape != (n, n):
        raise ConfigError(f"similarity matrix shape {sm.shape} does not match {n} records")
    if not 0 <= k < n:
        raise ConfigError(f"overlay k={k} must satisfy 0 <= k < {n}")
    class_ids = [r.class_id for r in records]
    out = []
    for i, rec in enumerate(records):
        parts = [rec.article]
        for j in top_k_similar(sm, i, class_ids, k):
            parts.append(records[j].article)
        out.append(ClassRecord(rec.class_id, rec.name, rec.article, "\n".join(parts)))
    return out
