from __future__ import annotations

import numpy as np
import pytest

from hsepm.distributions import RngStream
from hsepm.netdata import (
    EdgeListError,
    SnapshotTensor,
    SpecError,
    SyntheticSpec,
    block_probabilities,
    dyad_index,
    dyad_pairs,
    format_edge_list,
    generate_synthetic,
    load_edge_list,
    make_holdout,
    num_dyads,
    save_edge_list,
    training_edges,
)


def write(tmp_path, text, name="g.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_dyad_index_is_row_major():
    ii, jj = dyad_pairs(6)
    assert np.array_equal(dyad_index(ii, jj, 6), np.arange(num_dyads(6)))


def test_vdbunt_shape(vdbunt):
    data = load_edge_list(vdbunt)
    assert (data.num_nodes, data.num_steps, data.num_edges) == (32, 7, 308)


def test_empty_body_with_header(tmp_path):
    data = load_edge_list(write(tmp_path, "% nodes=5 timesteps=2\n"))
    assert data.shape == (2, 5, 5) and data.num_edges == 0
    assert data.dense().sum() == 0


def test_symmetric_duplicates_collapse(tmp_path):
    data = load_edge_list(write(tmp_path, "# comment\n0 1 2\n0 2 1\n0 1 2\n"))
    assert data.edges.tolist() == [[0, 1, 2]]
    assert data.has_edge(0, 2, 1) and not data.has_edge(0, 0, 1)


def test_self_loops_dropped():
    data = SnapshotTensor(3, 1, np.array([[0, 1, 1], [0, 0, 2]]))
    assert data.edges.tolist() == [[0, 0, 2]]


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("0 1\n", "line 1"),
        ("0 1 x\n", "line 1"),
        ("% nodes=3 timesteps=2\n0 1 3\n", "line 2"),
        ("% nodes=3 timesteps=2\n2 0 1\n", "line 2"),
        ("% nodes=3 timesteps\n", "line 1"),
        ("0 0 1\n2 0 1\n", "time steps [1]"),
    ],
)
def test_malformed_input(tmp_path, text, fragment):
    with pytest.raises(EdgeListError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        load_edge_list(write(tmp_path, text))


def test_round_trip_is_byte_identical(tmp_path, vdbunt):
    data = load_edge_list(vdbunt)
    out = tmp_path / "copy.txt"
    save_edge_list(data, out)
    again = load_edge_list(out)
    assert format_edge_list(again) == out.read_text(encoding="utf-8")
    assert np.array_equal(again.edges, data.edges)


def test_holdout_size_and_determinism(vdbunt):
    data = load_edge_list(vdbunt)
    m1 = make_holdout(data, 0.3, RngStream(1))
    m2 = make_holdout(data, 0.3, RngStream(1))
    assert abs(m1.size - 1042) <= 1
    assert np.array_equal(m1.masked, m2.masked)
    assert np.all(m1.masked[:, 1] < m1.masked[:, 2])


def test_holdout_smallest_fraction(vdbunt):
    data = load_edge_list(vdbunt)
    total = data.num_steps * num_dyads(data.num_nodes)
    mask = make_holdout(data, 1.0 / total, RngStream(2))
    assert mask.size == 1
    assert training_edges(data, mask).shape[0] >= data.num_edges - 1


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
def test_holdout_domain(vdbunt, fraction):
    with pytest.raises(ValueError):
        make_holdout(load_edge_list(vdbunt), fraction, RngStream(0))


def test_mask_and_training_partition_grid(vdbunt):
    data = load_edge_list(vdbunt)
    mask = make_holdout(data, 0.3, RngStream(3))
    train = training_edges(data, mask)
    assert not mask.contains(train[:, 0], train[:, 1], train[:, 2]).any()
    masked_edges = data.lookup(mask.masked[:, 0], mask.masked[:, 1], mask.masked[:, 2]).sum()
    assert train.shape[0] + masked_edges == data.num_edges


def test_synthetic_default_shape():
    data = generate_synthetic(SyntheticSpec())
    assert data.shape == (6, 60, 60)
    assert format_edge_list(data).startswith("% nodes=60 timesteps=6\n")


def test_synthetic_cliques():
    spec = SyntheticSpec(intra_prob=1.0, inter_prob=0.0, merge_steps=())
    data = generate_synthetic(spec)
    expected = spec.num_steps * sum(s * (s - 1) // 2 for s in spec.block_sizes)
    assert data.num_edges == expected


def test_synthetic_merge_density():
    spec = SyntheticSpec(seed=4)
    data = generate_synthetic(spec)
    labels = spec.labels()
    b = data.dense()
    a, c = spec.merge_pair
    for t in range(spec.num_steps):
        cross = b[t][np.ix_(labels == a, labels == c)].mean()
        expected = spec.intra_prob if t in spec.merge_steps else spec.inter_prob
        n = (labels == a).sum() * (labels == c).sum()
        assert abs(cross - expected) < 4 * np.sqrt(expected * (1 - expected) / n) + 1e-12
    assert block_probabilities(spec, 1)[a, c] == spec.intra_prob


def test_synthetic_intra_density_over_seeds():
    for seed in range(10):
        spec = SyntheticSpec(seed=seed)
        b = generate_synthetic(spec).dense()
        labels = spec.labels()
        blk = labels == 2
        sub = b[:, blk][:, :, blk]
        n = spec.num_steps * blk.sum() * (blk.sum() - 1)
        density = sub.sum() / n
        assert abs(density - spec.intra_prob) < 3 * np.sqrt(0.8 * 0.2 / (n / 2))


def test_synthetic_deterministic():
    a = generate_synthetic(SyntheticSpec(seed=9))
    b = generate_synthetic(SyntheticSpec(seed=9))
    assert np.array_equal(a.edges, b.edges)


@pytest.mark.parametrize(
    "kw",
    [dict(block_sizes=(30, 20)), dict(intra_prob=0.1, inter_prob=0.2), dict(merge_pair=(0, 0)), dict(merge_steps=(9,))],
)
def test_synthetic_spec_errors(kw):
    with pytest.raises(SpecError):
        generate_synthetic(SyntheticSpec(**kw))
