"""File formats, dataset assembly, and the synthetic verification dataset.

Matrix files come in two bit-lossless flavors:
  * text:   `# dims: <n> <d>` header, then `label v1 ... vd` per line,
            floats printed with shortest round-trip repr;
  * binary: magic ZSMX, version, int64 labels, float64 row-major values.
Split files are two lines, `seen: ids...` and `unseen: ids...`.
Checkpoints (magic ZSCK) hold named arrays plus a JSON metadata blob.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError

_MATRIX_MAGIC = b"ZSMX"
_CHECKPOINT_MAGIC = b"ZSCK"
_FORMAT_VERSION = 1


def save_matrix(path, labels, values):
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if values.ndim != 2 or labels.shape[0] != values.shape[0]:
        raise ConfigError("labels must align with matrix rows")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dims: {values.shape[0]} {values.shape[1]}\n")
        for label, row in zip(labels, values):
            fh.write(str(int(label)))
            for v in row:
                fh.write(" " + repr(float(v)))
            fh.write("\n")


def save_matrix_binary(path, labels, values):
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if values.ndim != 2 or labels.shape[0] != values.shape[0]:
        raise ConfigError("labels must align with matrix rows")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_MAGIC)
        fh.write(struct.pack("<III", _FORMAT_VERSION, values.shape[0], values.shape[1]))
        fh.write(labels.tobytes())
        fh.write(values.tobytes())


def load_matrix(path):
    """Load a matrix file of either flavor. Returns (labels, values)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _MATRIX_MAGIC:
        return _load_matrix_binary(path)
    return _load_matrix_text(path)


def _load_matrix_binary(path):
    with open(path, "rb") as fh:
        fh.read(4)
        version, n, d = struct.unpack("<III", fh.read(12))
        if version != _FORMAT_VERSION:
            raise ParseError(f"unsupported matrix format version {version}", path=path)
        labels = np.frombuffer(fh.read(8 * n), dtype=np.int64).copy()
        values = np.frombuffer(fh.read(8 * n * d), dtype=np.float64).copy()
        if values.size != n * d:
            raise ParseError("truncated binary matrix", path=path)
    return labels, values.reshape(n, d)


def _load_matrix_text(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# dims:"):
            raise ParseError("missing '# dims:' header", path=path, line=1)
        try:
            n, d = (int(x) for x in header[len("# dims:"):].split())
        except ValueError:
            raise ParseError("malformed '# dims:' header", path=path, line=1)
        labels = np.empty(n, dtype=np.int64)
        values = np.empty((n, d))
        row = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            if row >= n:
                raise ParseError(f"more than {n} data rows", path=path, line=lineno)
            parts = line.split()
            if len(parts) != d + 1:
                raise ParseError(
                    f"expected {d + 1} fields, got {len(parts)}", path=path, line=lineno
                )
            try:
                labels[row] = int(parts[0])
                values[row] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno)
            row += 1
    if row != n:
        raise ParseError(f"expected {n} data rows, found {row}", path=path)
    return labels, values


def load_features(path):
    """Features file: one sample per row, integer class label per row."""
    return load_matrix(path)


@dataclass(frozen=True)
class SplitSpec:
    seen: tuple
    unseen: tuple
    scheme: str = ""  # SCS | SCE, metadata only

    def __post_init__(self):
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            raise ConfigError(f"seen/unseen classes overlap: {sorted(overlap)}")


def save_split(path, split):
    with open(path, "w", encoding="utf-8") as fh:
        if split.scheme:
            fh.write(f"# scheme: {split.scheme}\n")
        fh.write("seen: " + " ".join(str(c) for c in split.seen) + "\n")
        fh.write("unseen: " + " ".join(str(c) for c in split.unseen) + "\n")


def load_split(path):
    seen = unseen = None
    scheme = ""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("# scheme:"):
                scheme = line[len("# scheme:"):].strip()
                continue
            if line.startswith("seen:"):
                seen = tuple(int(c) for c in line[len("seen:"):].split())
            elif line.startswith("unseen:"):
                unseen = tuple(int(c) for c in line[len("unseen:"):].split())
            else:
                raise ParseError(f"unrecognized line {line!r}", path=path, line=lineno)
    if seen is None or unseen is None:
        raise ParseError("split file needs both 'seen:' and 'unseen:' lines", path=path)
    return SplitSpec(seen=seen, unseen=unseen, scheme=scheme)


def validate_split(split, class_ids):
    """Check the split is a partition of the given class universe."""
    universe = set(class_ids)
    assigned = set(split.seen) | set(split.unseen)
    missing = universe - assigned
    if missing:
        raise ConfigError(f"classes not assigned to seen or unseen: {sorted(missing)}")
    extra = assigned - universe
    if extra:
        raise ConfigError(f"split names unknown classes: {sorted(extra)}")


TRAIN, TEST = 0, 1


@dataclass
class ZslDataset:
    """Visual features with labels, per-class semantics, and a seen/unseen split.

    partition marks each sample TRAIN or TEST; pseudo marks rows added by
    the self-training loop rather than present in the original data.
    """

    features: np.ndarray      # (N, visual_dim)
    labels: np.ndarray        # (N,) int64 class ids
    class_ids: np.ndarray     # (n_cls,) int64, sorted ascending
    semantics: np.ndarray     # (n_cls, semantic_dim), aligned with class_ids
    split: SplitSpec
    partition: np.ndarray     # (N,) TRAIN or TEST
    pseudo: np.ndarray = None  # (N,) bool

    def __post_init__(self):
        if self.pseudo is None:
            self.pseudo = np.zeros(self.labels.shape[0], dtype=bool)
        validate_split(self.split, self.class_ids.tolist())
        known = set(self.class_ids.tolist())
        unknown = set(self.labels.tolist()) - known
        if unknown:
            raise ConfigError(f"samples with labels lacking semantics: {sorted(unknown)}")
        genuine_train = (self.partition == TRAIN) & ~self.pseudo
        bad = set(self.split.unseen) & set(self.labels[genuine_train].tolist())
        if bad:
            raise ConfigError(
                f"unseen classes appear in the training partition: {sorted(bad)}"
            )

    @property
    def visual_dim(self):
        return self.features.shape[1]

    @property
    def semantic_dim(self):
        return self.semantics.shape[1]

    def semantics_for(self, class_ids):
        """Semantic vectors for the given class ids, as a matrix."""
        index = {int(c): i for i, c in enumerate(self.class_ids)}
        return self.semantics[[index[int(c)] for c in class_ids]]

    def train_indices(self):
        return np.flatnonzero(self.partition == TRAIN)

    def test_indices(self):
        return np.flatnonzero(self.partition == TEST)


def assemble_dataset(train_features_path, test_features_path, semantics_path, split_path):
    """Build a ZslDataset from the four on-disk pieces."""
    tr_labels, tr_feats = load_features(train_features_path)
    te_labels, te_feats = load_features(test_features_path)
    if tr_feats.shape[1] != te_feats.shape[1]:
        raise ConfigError(
            f"train/test feature dims differ: {tr_feats.shape[1]} vs {te_feats.shape[1]}"
        )
    sem_labels, sem = load_matrix(semantics_path)
    order = np.argsort(sem_labels, kind="stable")
    split = load_split(split_path)
    features = np.vstack([tr_feats, te_feats])
    labels = np.concatenate([tr_labels, te_labels])
    partition = np.concatenate([
        np.full(tr_labels.shape[0], TRAIN), np.full(te_labels.shape[0], TEST)
    ])
    return ZslDataset(
        features=features,
        labels=labels,
        class_ids=sem_labels[order],
        semantics=sem[order],
        split=split,
        partition=partition,
    )


@dataclass
class SyntheticSpec:
    num_seen: int = 10
    num_unseen: int = 5
    samples_per_class: int = 100
    semantic_dim: int = 50
    visual_dim: int = 64
    sigma: float = 0.05
    seed: int = 0
    test_fraction: float = 0.25  # held-out fraction of each seen class

    def __post_init__(self):
        if min(self.num_seen, self.num_unseen, self.samples_per_class,
               self.semantic_dim, self.visual_dim) < 1:
            raise ConfigError("all synthetic dataset counts must be >= 1")
        if self.sigma < 0.0:
            raise ConfigError("sigma must be >= 0")


def make_synthetic(spec):
    """Generate a desk-scale dataset with a known semantics -> visual map.

    A hidden linear map followed by tanh places one cluster center per
    class; samples are Gaussian around their center. Semantic vectors are
    sparse, non-negative and L2-normalized, mimicking tf-idf output, and
    share a low-rank latent basis so the semantics of held-out classes
    stay inside the span of the seen ones (otherwise zero-shot transfer
    from a handful of classes would be ill-posed). Unseen classes appear
    only in the test partition.
    """
    rng = np.random.default_rng(spec.seed)
    n_cls = spec.num_seen + spec.num_unseen
    class_ids = np.arange(n_cls, dtype=np.int64)

    latent_dim = max(1, min(spec.num_seen - 1, spec.semantic_dim // 8))
    nnz = max(1, int(round(0.2 * spec.semantic_dim)))
    basis = np.zeros((latent_dim, spec.semantic_dim))
    for r in range(latent_dim):
        support = rng.choice(spec.semantic_dim, size=nnz, replace=False)
        basis[r, support] = rng.uniform(0.2, 1.0, size=nnz)
    w_star = rng.normal(0.0, 1.0, size=(spec.semantic_dim, spec.visual_dim))

    # normalized semantics give unit-variance pre-activations, so tanh
    # centers spread over most of (-1, 1); keep the best-separated draw
    # so no two class centers collapse onto each other
    best = None
    best_sep = -1.0
    for _ in range(100):
        codes = rng.uniform(0.0, 1.0, size=(n_cls, latent_dim))
        sem = codes @ basis
        sem = sem / np.linalg.norm(sem, axis=1, keepdims=True)
        ctr = np.tanh(sem @ (w_star * 2.0))
        if n_cls < 2:
            best, best_sep = (sem, ctr), np.inf
            break
        gaps = np.linalg.norm(ctr[:, None, :] - ctr[None, :, :], axis=2)
        sep = gaps[np.triu_indices(n_cls, k=1)].min()
        if sep > best_sep:
            best, best_sep = (sem, ctr), sep
        if sep >= 0.5:
            break
    semantics, centers = best

    feats, labels, partition = [], [], []
    seen = class_ids[: spec.num_seen]
    n_test = max(1, int(round(spec.test_fraction * spec.samples_per_class)))
    for c in range(n_cls):
        samples = centers[c] + rng.normal(0.0, spec.sigma,
                                          size=(spec.samples_per_class, spec.visual_dim))
        feats.append(samples)
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))
        if c in seen:
            part = np.full(spec.samples_per_class, TRAIN)
            part[spec.samples_per_class - n_test:] = TEST
        else:
            part = np.full(spec.samples_per_class, TEST)
        partition.append(part)

    split = SplitSpec(
        seen=tuple(int(c) for c in seen),
        unseen=tuple(int(c) for c in class_ids[spec.num_seen:]),
        scheme="synthetic",
    )
    return ZslDataset(
        features=np.vstack(feats),
        labels=np.concatenate(labels),
        class_ids=class_ids,
        semantics=semantics,
        split=split,
        partition=np.concatenate(partition),
    )


def save_dataset(dataset, train_path, test_path, semantics_path, split_path):
    tr = dataset.train_indices()
    te = dataset.test_indices()
    save_matrix(train_path, dataset.labels[tr], dataset.features[tr])
    save_matrix(test_path, dataset.labels[te], dataset.features[te])
    save_matrix(semantics_path, dataset.class_ids, dataset.semantics)
    save_split(split_path, dataset.split)


def save_checkpoint(path, arrays, meta):
    """Write named float64/int64 arrays plus JSON metadata, deterministically."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            name_b = name.encode("utf-8")
            dtype_b = arr.dtype.str.encode("ascii")
            fh.write(struct.pack("<H", len(name_b)) + name_b)
            fh.write(struct.pack("<H", len(dtype_b)) + dtype_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read back (arrays, meta) written by save_checkpoint."""
    with open(path, "rb") as fh:
        if fh.read(4) != _CHECKPOINT_MAGIC:
            raise ParseError("not a checkpoint file", path=path)
        version, meta_len = struct.unpack("<II", fh.read(8))
        if version != _FORMAT_VERSION:
            raise ParseError(f"unsupported checkpoint version {version}", path=path)
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (dlen,) = struct.unpack("<H", fh.read(2))
            dtype = np.dtype(fh.read(dlen).decode("ascii"))
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(
                fh.read(size * dtype.itemsize), dtype=dtype
            ).copy().reshape(shape)
    return arrays, meta
