import gzip
import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mnist_dir, tiny_dataset
from fedsim.data import (
    Dataset,
    IdxFormatError,
    PartitionPlan,
    apply_exchange,
    concat,
    exchange_indices,
    find_mnist,
    generate_synthetic,
    load_idx,
    load_mnist,
    partition_by_class,
    partition_random,
    write_idx,
)


def idx_pair(tmp_path, data, rows=None):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(data, img, lab, rows)
    return img, lab


def pixel_dataset(n=7, d=16, classes=10, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 256, size=(n, d)) / 255.0
    return Dataset(x, rng.integers(0, classes, size=n), classes)


# --- Dataset ----------------------------------------------------------------------

def test_dataset_validates_ranges():
    with pytest.raises(ValueError):
        Dataset(np.full((2, 2), 1.5), [0, 1], 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 2], 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0], 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), [], 2)


def test_dataset_is_read_only():
    d = tiny_dataset([0, 1, 1])
    with pytest.raises(ValueError):
        d.features[0, 0] = 0.5
    with pytest.raises(ValueError):
        d.labels[0] = 1


def test_concat_and_subset():
    d = tiny_dataset([0, 1, 2, 0, 1])
    parts = [d.subset([0, 1]), d.subset([2, 3, 4])]
    joined = concat(parts)
    assert np.array_equal(joined.features, d.features)
    assert np.array_equal(joined.labels, d.labels)


# --- IDX ---------------------------------------------------------------------------

def test_idx_round_trip(tmp_path):
    data = pixel_dataset()
    back = load_idx(*idx_pair(tmp_path, data))
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)
    assert back.class_count == 10


def test_idx_scaling_endpoints(tmp_path):
    x = np.array([[0.0, 1.0, 0.0, 1.0]])
    back = load_idx(*idx_pair(tmp_path, Dataset(x, [3], 10)))
    assert back.features[0, 1] == 1.0
    assert back.features[0, 0] == 0.0


def test_idx_header_layout(tmp_path):
    data = pixel_dataset(n=3, d=12)
    img, lab = idx_pair(tmp_path, data, rows=3)
    raw = img.read_bytes()
    assert struct.unpack(">IIII", raw[:16]) == (0x00000803, 3, 3, 4)
    assert len(raw) == 16 + 3 * 12
    assert struct.unpack(">II", lab.read_bytes()[:8]) == (0x00000801, 3)


def test_idx_bad_magic(tmp_path):
    img, lab = idx_pair(tmp_path, pixel_dataset())
    raw = bytearray(img.read_bytes())
    raw[3] = 0x01
    img.write_bytes(bytes(raw))
    with pytest.raises(IdxFormatError, match="bad magic"):
        load_idx(img, lab)
    # swapped files: each has the other's magic
    with pytest.raises(IdxFormatError, match="bad magic"):
        load_idx(lab, lab)


def test_idx_truncated(tmp_path):
    img, lab = idx_pair(tmp_path, pixel_dataset())
    raw = img.read_bytes()
    img.write_bytes(raw[:-5])
    with pytest.raises(IdxFormatError, match="truncated .*payload"):
        load_idx(img, lab)
    img.write_bytes(raw[:6])
    with pytest.raises(IdxFormatError, match="truncated .*header"):
        load_idx(img, lab)


def test_idx_count_mismatch(tmp_path):
    a = idx_pair(tmp_path, pixel_dataset(n=7))
    other = tmp_path / "other"
    other.mkdir()
    b = idx_pair(other, pixel_dataset(n=6))
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(a[0], b[1])


def test_idx_errors_are_distinct(tmp_path):
    messages = set()
    for corrupt in ("magic", "truncate", "count"):
        img, lab = idx_pair(tmp_path, pixel_dataset(n=4))
        if corrupt == "magic":
            img.write_bytes(b"\x00\x00\x08\x04" + img.read_bytes()[4:])
        elif corrupt == "truncate":
            img.write_bytes(img.read_bytes()[:20])
        else:
            lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes(3))
        with pytest.raises(IdxFormatError) as exc:
            load_idx(img, lab)
        messages.add(str(exc.value).split(": ", 1)[1].split(" ")[0])
    assert len(messages) == 3


def test_find_mnist_accepts_gzip(tmp_path):
    data = pixel_dataset(n=5, d=784)
    for split, (img_name, lab_name) in {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }.items():
        write_idx(data, tmp_path / img_name, tmp_path / lab_name)
        gz = tmp_path / (lab_name + ".gz")
        gz.write_bytes(gzip.compress((tmp_path / lab_name).read_bytes()))
        (tmp_path / lab_name).unlink()
    train, test = load_mnist(tmp_path)
    assert train.features.shape == (5, 784)
    assert np.array_equal(test.labels, data.labels)


def test_find_mnist_reports_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="train-images"):
        find_mnist(tmp_path)


@pytest.mark.skipif(mnist_dir() is None, reason="FEDSIM_MNIST_DIR not set")
def test_real_mnist_shape():
    train, test = load_mnist(mnist_dir())
    assert train.features.shape == (60000, 784)
    assert train.class_count == 10
    assert len(test) == 10000
    plan = partition_random(train, 10, seed=0)
    assert all(len(v) == 6000 for v in plan.assignments.values())
    by_class = partition_by_class(train, 10)
    for a, idx in by_class.assignments.items():
        assert np.all(train.labels[idx] == a)
    shards = apply_exchange(train, by_class, 128, seed=0)
    assert all(len(shards[a]) == len(by_class.assignments[a]) + 1152 for a in range(10))


# --- synthetic ---------------------------------------------------------------------

def test_synthetic_shape_and_balance():
    d = generate_synthetic(10, 600, 64, seed=0)
    assert d.features.shape == (6000, 64)
    assert np.all(d.class_histogram() == 600)
    assert d.features.min() >= 0.0 and d.features.max() <= 1.0


def test_synthetic_is_deterministic():
    a = generate_synthetic(3, 5, 4, seed=9)
    b = generate_synthetic(3, 5, 4, seed=9)
    c = generate_synthetic(3, 5, 4, seed=10)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_synthetic_train_and_test_share_centers():
    train, test = generate_synthetic(4, 400, 6, seed=2, test_per_class=400)
    for c in range(4):
        mu_train = train.features[train.labels == c].mean(axis=0)
        mu_test = test.features[test.labels == c].mean(axis=0)
        assert np.abs(mu_train - mu_test).max() < 0.03
    assert not np.array_equal(train.features[:400], test.features)


def test_synthetic_rejects_bad_shapes():
    for args in ((1, 5, 2), (3, 0, 2), (3, 5, 0)):
        with pytest.raises(ValueError):
            generate_synthetic(*args, seed=0)


# --- partitions ---------------------------------------------------------------------

def test_partition_single_agency():
    d = tiny_dataset([0, 1, 2, 1])
    plan = partition_random(d, 1, seed=3)
    assert sorted(plan.assignments[0]) == [0, 1, 2, 3]


def test_partition_random_sizes_differ_by_at_most_one():
    d = tiny_dataset(np.arange(23) % 3)
    sizes = [len(v) for v in partition_random(d, 5, seed=1).assignments.values()]
    assert max(sizes) - min(sizes) <= 1
    assert sum(sizes) == 23


def test_partition_random_rejects_too_many_agencies():
    with pytest.raises(ValueError):
        partition_random(tiny_dataset([0, 1]), 3, seed=0)


def test_partition_random_reproducible_and_seed_sensitive():
    d = tiny_dataset(np.arange(50) % 5)
    a = partition_random(d, 4, seed=11).assignments
    b = partition_random(d, 4, seed=11).assignments
    c = partition_random(d, 4, seed=12).assignments
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_partition_cover_exhaustive_small_n():
    for n, agencies in itertools.product(range(1, 9), range(1, 9)):
        if agencies > n:
            continue
        d = tiny_dataset(np.arange(n) % 2, classes=2)
        for seed in range(3):
            partition_random(d, agencies, seed).validate(n)
        if agencies <= 2:
            partition_by_class(d, agencies).validate(n)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 300), agencies=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
def test_partition_random_is_disjoint_cover(n, agencies, seed):
    if agencies > n:
        return
    d = tiny_dataset(np.zeros(n, dtype=int), dim=1, classes=1)
    plan = partition_random(d, agencies, seed)
    plan.validate(n)
    assert plan.agencies == agencies


def test_partition_random_label_mix_is_near_uniform():
    # 60000 examples, 10 agencies: each agency's per-class count within 20% of 600
    data = generate_synthetic(10, 6000, 1, seed=0)
    worst = 0.0
    for seed in range(5):
        for idx in partition_random(data, 10, seed).assignments.values():
            hist = np.bincount(data.labels[idx], minlength=10)
            worst = max(worst, np.abs(hist / 600 - 1).max())
    assert worst <= 0.20


def test_partition_by_class_one_class_each():
    d = tiny_dataset(np.arange(40) % 10, classes=10)
    plan = partition_by_class(d, 10)
    for a, idx in plan.assignments.items():
        assert set(d.labels[idx]) == {a}


def test_partition_by_class_mod_rule():
    d = tiny_dataset(np.arange(40) % 10, classes=10)
    plan = partition_by_class(d, 5)
    assert set(d.labels[plan.assignments[0]]) == {0, 5}
    assert set(d.labels[plan.assignments[3]]) == {3, 8}


def test_partition_by_class_rejects_more_agencies_than_classes():
    with pytest.raises(ValueError, match="agencies <= classes"):
        partition_by_class(tiny_dataset([0, 1, 2]), 4)


def test_plan_validate_detects_overlap_and_gaps():
    with pytest.raises(ValueError):
        PartitionPlan({0: [0, 1], 1: [1, 2]}).validate(3)
    with pytest.raises(ValueError):
        PartitionPlan({0: [0], 1: [2]}).validate(3)
    with pytest.raises(ValueError, match="no examples"):
        PartitionPlan({0: [0, 1, 2], 1: []}).validate(3)


# --- exchange -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def skewed():
    data = generate_synthetic(10, 300, 2, seed=5)
    return data, partition_by_class(data, 10)


def test_exchange_zero_returns_plan_shards(skewed):
    data, plan = skewed
    out = apply_exchange(data, plan, 0, seed=0)
    for a, shard in enumerate(plan.shards(data)):
        assert np.array_equal(out[a].features, shard.features)
        assert np.array_equal(out[a].labels, shard.labels)


def test_exchange_adds_k_per_foreign_class(skewed):
    data, plan = skewed
    out = apply_exchange(data, plan, 128, seed=0)
    for a in range(10):
        hist = out[a].class_histogram()
        assert hist[a] == 300
        assert np.all(np.delete(hist, a) == 128)
        assert len(out[a]) == 300 + 128 * 9


def test_exchange_draws_without_replacement_from_foreign_examples(skewed):
    data, plan = skewed
    got = exchange_indices(data, plan, 50, seed=3)
    for a, idx in got.items():
        assert len(np.unique(idx)) == idx.size
        assert not np.intersect1d(idx, plan.assignments[a]).size


def test_exchange_every_agency_holds_k_of_every_class():
    data = generate_synthetic(6, 40, 2, seed=1)
    plan = partition_random(data, 4, seed=2)
    out = apply_exchange(data, plan, 20, seed=0)
    for shard in out.values():
        assert np.all(shard.class_histogram() >= 20)
        # no example appears twice in one agency's local set
        assert len(np.unique(shard.features, axis=0)) == len(shard)


def test_exchange_takes_whole_foreign_pool_when_small():
    data = tiny_dataset(np.repeat(np.arange(2), 5), classes=2)
    plan = partition_random(data, 2, seed=0)
    idx = exchange_indices(data, plan, 5, seed=0)
    for a in range(2):
        assert sorted(np.concatenate([plan.assignments[a], idx[a]])) == list(range(10))


def test_exchange_rejects_k_above_class_size(skewed):
    data, plan = skewed
    with pytest.raises(ValueError, match="smallest class"):
        apply_exchange(data, plan, 301, seed=0)
    with pytest.raises(ValueError):
        apply_exchange(data, plan, -1, seed=0)


def test_exchange_leaves_inputs_untouched(skewed):
    data, plan = skewed
    before = {a: v.copy() for a, v in plan.assignments.items()}
    features = data.features.copy()
    apply_exchange(data, plan, 16, seed=4)
    assert np.array_equal(data.features, features)
    assert all(np.array_equal(before[a], plan.assignments[a]) for a in before)


def test_exchange_is_seeded(skewed):
    data, plan = skewed
    a = exchange_indices(data, plan, 16, seed=1)
    b = exchange_indices(data, plan, 16, seed=1)
    c = exchange_indices(data, plan, 16, seed=2)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)
