import numpy as np
import pytest

from zsgen import data
from zsgen.errors import ConfigError, ParseError


def test_matrix_text_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 9, size=6)
    values = rng.normal(size=(6, 4))
    path = str(tmp_path / "m.txt")
    data.save_matrix(path, labels, values)
    got_labels, got_values = data.load_matrix(path)
    assert (got_labels == labels).all()
    assert (got_values == values).all()  # bit-lossless via repr round trip


def test_matrix_binary_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 9, size=5)
    values = rng.normal(size=(5, 3))
    path = str(tmp_path / "m.bin")
    data.save_matrix_binary(path, labels, values)
    got_labels, got_values = data.load_matrix(path)
    assert (got_labels == labels).all()
    assert (got_values == values).all()


def test_two_row_fixture_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# dims: 2 3\n4 0.5 -1.5 2.0\n7 1.0 0.0 -3.25\n")
    labels, values = data.load_matrix(str(path))
    assert labels.tolist() == [4, 7]
    np.testing.assert_array_equal(values, [[0.5, -1.5, 2.0], [1.0, 0.0, -3.25]])


def test_wrong_width_row_names_line(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# dims: 2 2\n0 1.0 2.0\n1 3.0\n")
    with pytest.raises(ParseError) as err:
        data.load_matrix(str(path))
    assert err.value.line == 3


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("0 1.0\n")
    with pytest.raises(ParseError):
        data.load_matrix(str(path))


def test_split_round_trip(tmp_path):
    path = str(tmp_path / "split.txt")
    split = data.SplitSpec(seen=(0, 1), unseen=(2,), scheme="SCS")
    data.save_split(path, split)
    got = data.load_split(path)
    assert got == split


def test_split_overlap_rejected():
    with pytest.raises(ConfigError):
        data.SplitSpec(seen=(0,), unseen=(0,))


def test_split_coverage_validation():
    split = data.SplitSpec(seen=(0,), unseen=(2,))
    with pytest.raises(ConfigError):
        data.validate_split(split, [0, 1, 2])
    data.validate_split(data.SplitSpec(seen=(0, 1), unseen=(2,)), [0, 1, 2])


def test_split_unknown_class_rejected():
    split = data.SplitSpec(seen=(0, 5), unseen=(1,))
    with pytest.raises(ConfigError):
        data.validate_split(split, [0, 1])


def test_make_synthetic_sigma_zero_collapses_to_centers():
    spec = data.SyntheticSpec(num_seen=3, num_unseen=2, samples_per_class=4,
                              semantic_dim=10, visual_dim=6, sigma=0.0)
    ds = data.make_synthetic(spec)
    for c in range(5):
        rows = ds.features[ds.labels == c]
        assert (rows == rows[0]).all()
        assert rows.shape[0] == 4


def test_make_synthetic_deterministic():
    spec = data.SyntheticSpec(num_seen=3, num_unseen=2, samples_per_class=4,
                              semantic_dim=10, visual_dim=6, seed=11)
    a = data.make_synthetic(spec)
    b = data.make_synthetic(spec)
    assert (a.features == b.features).all()
    assert (a.semantics == b.semantics).all()


def test_make_synthetic_semantics_shape():
    ds = data.make_synthetic(data.SyntheticSpec())
    assert (ds.semantics >= 0.0).all()
    np.testing.assert_allclose(np.linalg.norm(ds.semantics, axis=1), 1.0)


def test_make_synthetic_unseen_only_in_test_partition():
    ds = data.make_synthetic(data.SyntheticSpec())
    train_labels = set(ds.labels[ds.train_indices()].tolist())
    assert train_labels.isdisjoint(ds.split.unseen)


def test_nearest_center_oracle_is_perfect():
    spec = data.SyntheticSpec(num_seen=3, num_unseen=2, samples_per_class=30,
                              semantic_dim=20, visual_dim=16, sigma=0.05, seed=0)
    ds = data.make_synthetic(spec)
    centers = np.stack([ds.features[ds.labels == c].mean(axis=0)
                        for c in range(5)])
    te = ds.test_indices()
    d = ((ds.features[te][:, None, :] - centers[None]) ** 2).sum(axis=2)
    assert (d.argmin(axis=1) == ds.labels[te]).all()


def test_dataset_round_trip_through_files(tmp_path):
    ds = data.make_synthetic(data.SyntheticSpec(
        num_seen=3, num_unseen=2, samples_per_class=5,
        semantic_dim=8, visual_dim=4,
    ))
    paths = [str(tmp_path / n) for n in
             ("train.txt", "test.txt", "sem.txt", "split.txt")]
    data.save_dataset(ds, *paths)
    back = data.assemble_dataset(*paths)
    assert (np.sort(back.labels) == np.sort(ds.labels)).all()
    assert back.split == ds.split
    assert (back.semantics == ds.semantics).all()


def test_dataset_rejects_unseen_in_train():
    ds = data.make_synthetic(data.SyntheticSpec(
        num_seen=2, num_unseen=1, samples_per_class=4,
        semantic_dim=8, visual_dim=4,
    ))
    bad_partition = ds.partition.copy()
    bad_partition[ds.labels == 2] = data.TRAIN
    with pytest.raises(ConfigError):
        data.ZslDataset(ds.features, ds.labels, ds.class_ids, ds.semantics,
                        ds.split, bad_partition)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    arrays = {"w": rng.normal(size=(3, 2)), "ids": np.array([4, 5], dtype=np.int64)}
    meta = {"kind": "test", "nested": {"a": 1}}
    path = str(tmp_path / "ck.bin")
    data.save_checkpoint(path, arrays, meta)
    got_arrays, got_meta = data.load_checkpoint(path)
    assert got_meta == meta
    assert (got_arrays["w"] == arrays["w"]).all()
    assert got_arrays["ids"].dtype == np.int64


def test_checkpoint_bytes_deterministic(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3)}
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    data.save_checkpoint(a, arrays, {"k": 1})
    data.save_checkpoint(b, arrays, {"k": 1})
    assert open(a, "rb").read() == open(b, "rb").read()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "ck.bin"
    path.write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(ParseError):
        data.load_checkpoint(str(path))
