import struct

import numpy as np
import pytest
from scipy.linalg import lstsq
from scipy.stats import chisquare, ks_2samp, kstest

from fl_simulator.datagen import (IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC, BatchSampler, BatchSchedule,
                                  FederatedDataset, GenConfig, dataset_from_csv, dataset_from_idx,
                                  generate_synthetic, heterogeneous_label_split, load_csv, load_idx, pooled)
from fl_simulator.errors import InvalidArgumentError, ParseError
from fl_simulator.objectives import LeastSquaresProblem, gradient_dissimilarity


def test_synthetic_shapes_and_labels():
    data = generate_synthetic(GenConfig(alpha=0.5, beta=0.5, n_clients=6, dim=7, samples_per_client=25))
    assert data.n_clients == 6 and data.dim == 7
    assert data.client_sizes == [25] * 6
    for labels in data.labels:
        assert set(np.unique(labels)) <= {-1.0, 1.0}
    assert data.provenance["alpha"] == 0.5


def test_synthetic_is_deterministic_per_seed():
    a = generate_synthetic(GenConfig(alpha=1.0, beta=1.0, n_clients=3, dim=4, samples_per_client=10, seed=5))
    b = generate_synthetic(GenConfig(alpha=1.0, beta=1.0, n_clients=3, dim=4, samples_per_client=10, seed=5))
    c = generate_synthetic(GenConfig(alpha=1.0, beta=1.0, n_clients=3, dim=4, samples_per_client=10, seed=6))
    for fa, fb in zip(a.features, b.features):
        np.testing.assert_array_equal(fa, fb)
    assert not np.array_equal(a.features[0], c.features[0])


def test_client_shards_do_not_depend_on_client_count():
    small = generate_synthetic(GenConfig(alpha=1.0, beta=1.0, n_clients=2, dim=4, samples_per_client=10))
    large = generate_synthetic(GenConfig(alpha=1.0, beta=1.0, n_clients=5, dim=4, samples_per_client=10))
    np.testing.assert_array_equal(small.features[1], large.features[1])


def test_unequal_shard_sizes():
    data = generate_synthetic(GenConfig(n_clients=3, dim=2, samples_per_client=[5, 1, 9]))
    assert data.client_sizes == [5, 1, 9]
    with pytest.raises(InvalidArgumentError):
        GenConfig(n_clients=2, samples_per_client=[3, 0])


def _dissimilarity_at_optimum(alpha, beta):
    data = generate_synthetic(GenConfig(alpha=alpha, beta=beta, n_clients=8, dim=5, samples_per_client=40,
                                        label_model="linear"))
    problem = LeastSquaresProblem(data.features, data.labels)
    a, y = pooled(data)
    x_star = lstsq(a, y)[0]
    return gradient_dissimilarity(problem, x_star)


def test_heterogeneity_grows_with_alpha_beta():
    assert _dissimilarity_at_optimum(50.0, 50.0) > _dissimilarity_at_optimum(0.0, 0.0)


def _client_optima_spread(alpha, beta):
    data = generate_synthetic(GenConfig(alpha=alpha, beta=beta, n_clients=8, dim=5, samples_per_client=40,
                                        label_model="linear", seed=17))
    optima = [lstsq(a, y)[0] for a, y in zip(data.features, data.labels)]
    return np.mean([np.linalg.norm(optima[i] - optima[j])
                    for i in range(len(optima)) for j in range(i + 1, len(optima))])


def test_client_optima_drift_apart_with_alpha_beta():
    assert _client_optima_spread(50.0, 50.0) > 5.0 * _client_optima_spread(0.0, 0.0)


def test_zero_heterogeneity_matches_iid_client_means():
    m = 50
    diffs = []
    for seed in range(100):
        data = generate_synthetic(GenConfig(alpha=0.0, beta=0.0, n_clients=2, dim=20, samples_per_client=m,
                                            seed=seed, normalize=False))
        for u in data.model_means:
            np.testing.assert_array_equal(u, 0.0)
        diffs.append(data.features[0].mean(axis=0) - data.features[1].mean(axis=0))
    # v_i ~ N(0, I) per client, so mean differences are N(0, 2(1 + Σ_jj/m))
    cov_diag = np.arange(1, 21, dtype=float) ** -1.2
    z = np.array(diffs) / np.sqrt(2.0 * (1.0 + cov_diag / m))
    assert kstest(z.ravel(), "norm").pvalue > 0.01


def test_rows_are_unit_norm_by_default():
    data = generate_synthetic(GenConfig(alpha=50.0, beta=50.0, n_clients=3, dim=20, samples_per_client=30))
    for a in data.features:
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, rtol=1e-12)
    assert data.provenance["normalize"] is True
    raw = generate_synthetic(GenConfig(alpha=50.0, beta=50.0, n_clients=3, dim=20, samples_per_client=30,
                                       normalize=False))
    assert np.linalg.norm(raw.features[0], axis=1).min() > 10.0


def test_feature_noise_follows_covariance_decay():
    data = generate_synthetic(GenConfig(alpha=0.0, beta=0.0, n_clients=1, dim=5, samples_per_client=4000,
                                        normalize=False))
    a = data.features[0]
    centred = a - a.mean(axis=0)
    first = centred[:, 0] / 1.0
    last = centred[:, 4] / 5.0 ** (-1.2 / 2)
    assert ks_2samp(first, last).pvalue > 1e-3


def test_label_split_skews_labels():
    rng = np.random.default_rng(0)
    labels = np.arange(200, dtype=np.int64) % 4
    data = FederatedDataset([rng.standard_normal((100, 3)), rng.standard_normal((100, 3))],
                            [labels[:100], labels[100:]])
    skewed = heterogeneous_label_split(data, 4, uniform_fraction=0.0, seed=1)
    for i, labels in enumerate(skewed.labels):
        assert np.all(labels % 4 == i)
    balanced = heterogeneous_label_split(data, 4, uniform_fraction=1.0, seed=1)
    assert balanced.client_sizes == [50, 50, 50, 50]
    assert sum(skewed.client_sizes) == 200


def test_label_split_rejects_empty_client():
    data = generate_synthetic(GenConfig(alpha=1.0, beta=1.0, n_clients=2, dim=3, samples_per_client=20,
                                        label_model="multiclass", n_classes=2))
    with pytest.raises(InvalidArgumentError):
        heterogeneous_label_split(data, 5, uniform_fraction=0.0)


def _write_idx_images(path, images):
    count, rows, cols = images.shape
    path.write_bytes(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols) + images.astype(np.uint8).tobytes())


def test_idx_round_trip(tmp_path):
    images = np.arange(2 * 3 * 3).reshape(2, 3, 3)
    _write_idx_images(tmp_path / "img", images)
    (tmp_path / "lbl").write_bytes(struct.pack(">II", IDX_LABEL_MAGIC, 2) + bytes([7, 3]))
    data = dataset_from_idx(tmp_path / "img", tmp_path / "lbl")
    assert data.features[0].shape == (2, 9)
    assert data.features[0][1, 0] == pytest.approx(9 / 255.0)
    np.testing.assert_array_equal(data.labels[0], [7, 3])


@pytest.mark.parametrize("raw, offset", [
    (b"\x00\x00", 2),
    (struct.pack(">I", 0x1234), 0),
    (struct.pack(">II", IDX_IMAGE_MAGIC, 5), 8),
    (struct.pack(">IIII", IDX_IMAGE_MAGIC, 1, 2, 2) + b"\x01", 17),
])
def test_idx_errors_report_byte_offset(tmp_path, raw, offset):
    path = tmp_path / "bad.idx"
    path.write_bytes(raw)
    with pytest.raises(ParseError) as info:
        load_idx(path)
    assert info.value.offset == offset


def test_csv_with_header_and_label_column(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x1,x2,label\n1.0,2.0,1\n3.0,4.0,-1\n")
    data = dataset_from_csv(path)
    np.testing.assert_array_equal(data.features[0], [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(data.labels[0], [1.0, -1.0])


def test_csv_errors_report_line(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2,3\n4,5\n")
    with pytest.raises(ParseError) as info:
        load_csv(ragged)
    assert info.value.line == 2
    garbage = tmp_path / "garbage.csv"
    garbage.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError) as info:
        load_csv(garbage)
    assert info.value.line == 2
    binary = tmp_path / "binary.csv"
    binary.write_bytes(b"1,2\n3,4\n\xff\xfe,5\n")
    with pytest.raises(ParseError) as info:
        load_csv(binary)
    assert info.value.line == 3


def test_batches_are_sorted_unique_and_reproducible():
    sampler = BatchSampler(seed=3)
    batch = sampler.next_batch(client=2, round_index=4, step=1, b=10, m=50)
    assert len(np.unique(batch)) == 10 and np.all(np.diff(batch) > 0)
    np.testing.assert_array_equal(batch, BatchSampler(seed=3).next_batch(2, 4, 1, 10, 50))
    np.testing.assert_array_equal(sampler.next_batch(0, 1, 0, 7, 7), np.arange(7))
    with pytest.raises(InvalidArgumentError):
        sampler.next_batch(0, 1, 0, 8, 7)


def test_batches_do_not_depend_on_client_order():
    sampler = BatchSampler(seed=9)
    forward = [sampler.next_batch(i, 1, 0, 3, 20) for i in range(4)]
    backward = [sampler.next_batch(i, 1, 0, 3, 20) for i in reversed(range(4))][::-1]
    for a, b in zip(forward, backward):
        np.testing.assert_array_equal(a, b)


def test_batch_indices_are_uniform():
    sampler = BatchSampler(seed=11)
    counts = np.zeros(20)
    for r in range(1, 1001):
        counts[sampler.next_batch(0, r, 0, 5, 20)] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_schedule_full_gradient_entries_are_none():
    schedule = BatchSchedule.build(BatchSampler(), 1, [10, 12], tau=3, batch_size=None)
    assert schedule.n_clients == 2 and schedule.tau == 3
    assert schedule.get(1, 2) is None
    stochastic = BatchSchedule.build(BatchSampler(), 1, [10, 12], tau=3, batch_size=4)
    assert stochastic.get(1, 2).shape == (4,)
