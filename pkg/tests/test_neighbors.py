import numpy as np
import pytest

from tac.core import RngState, normalize_rows
from tac.errors import FormatError, ParameterError
from tac.neighbors import (build_graph, load_graph, sample_neighbor,
                           sample_neighbors, save_graph)


def brute_force_graph(x, k):
    x = normalize_rows(x)
    sims = x @ x.T
    out = []
    for i in range(len(x)):
        order = sorted((j for j in range(len(x)) if j != i),
                       key=lambda j: (-sims[i, j], j))
        out.append(order[:k])
    return np.asarray(out)


def test_three_points_nearest():
    x = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]], dtype=np.float32)
    g = build_graph(x, 1)
    np.testing.assert_array_equal(g.indices, brute_force_graph(x, 1))


def test_duplicated_pair_mutual_first():
    rng = np.random.default_rng(0)
    x = normalize_rows(rng.normal(size=(5, 4))).astype(np.float32)
    x[3] = x[1]
    g = build_graph(x, 2)
    assert g.indices[1, 0] == 3
    assert g.indices[3, 0] == 1


def test_complete_graph():
    rng = np.random.default_rng(1)
    x = normalize_rows(rng.normal(size=(7, 5))).astype(np.float32)
    g = build_graph(x, 6)
    for i in range(7):
        assert sorted(g.indices[i].tolist()) == sorted(set(range(7)) - {i})


def test_matches_brute_force_randomized():
    rng = np.random.default_rng(2)
    for trial in range(10):
        n = int(rng.integers(5, 40))
        d = int(rng.integers(2, 8))
        k = int(rng.integers(1, n - 1))
        x = normalize_rows(rng.normal(size=(n, d))).astype(np.float32)
        g = build_graph(x, k, block=7)  # small block to exercise the blocking
        np.testing.assert_array_equal(g.indices, brute_force_graph(x, k))


def test_no_self_and_descending_sims():
    rng = np.random.default_rng(3)
    x = normalize_rows(rng.normal(size=(30, 6))).astype(np.float32)
    g = build_graph(x, 5)
    sims = x @ x.T
    for i in range(30):
        assert i not in g.indices[i]
        row = sims[i, g.indices[i]]
        assert all(row[j] >= row[j + 1] - 1e-7 for j in range(4))


def test_invalid_n_neighbors():
    x = np.eye(4, 3, dtype=np.float32)
    with pytest.raises(ParameterError):
        build_graph(x, 4)
    with pytest.raises(ParameterError):
        build_graph(x, 0)


def test_build_deterministic():
    rng = np.random.default_rng(4)
    x = normalize_rows(rng.normal(size=(50, 8))).astype(np.float32)
    a = build_graph(x, 7)
    b = build_graph(x, 7)
    assert np.array_equal(a.indices, b.indices)


def test_sample_single_neighbor():
    x = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]], dtype=np.float32)
    g = build_graph(x, 1)
    rng = RngState(0, 3)
    for _ in range(5):
        assert sample_neighbor(g, 0, rng) == g.indices[0, 0]


def test_sample_reproducible():
    rng = np.random.default_rng(5)
    x = normalize_rows(rng.normal(size=(20, 4))).astype(np.float32)
    g = build_graph(x, 6)
    s1 = RngState(9, 3)
    s2 = RngState(9, 3)
    seq1 = [sample_neighbor(g, i % 20, s1) for i in range(50)]
    seq2 = [sample_neighbor(g, i % 20, s2) for i in range(50)]
    assert seq1 == seq2


def test_sample_frequency_uniform():
    rng = np.random.default_rng(6)
    x = normalize_rows(rng.normal(size=(10, 4))).astype(np.float32)
    g = build_graph(x, 4)
    state = RngState(1, 3)
    draws = [sample_neighbor(g, 2, state) for _ in range(10**5)]
    counts = np.array([draws.count(int(j)) for j in g.indices[2]])
    freqs = counts / 10**5
    assert np.abs(freqs - 0.25).max() <= 0.02


def test_sample_neighbors_batch():
    rng = np.random.default_rng(7)
    x = normalize_rows(rng.normal(size=(15, 4))).astype(np.float32)
    g = build_graph(x, 3)
    rows = np.array([0, 5, 5, 14])
    picks = sample_neighbors(g, rows, RngState(2, 3))
    for row, pick in zip(rows, picks):
        assert pick in g.indices[row]


def test_cache_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    x = normalize_rows(rng.normal(size=(12, 5))).astype(np.float32)
    g = build_graph(x, 4)
    path = str(tmp_path / "g.graph")
    save_graph(path, g)
    back = load_graph(path)
    assert back.n_neighbors == 4
    assert np.array_equal(back.indices, g.indices)


def test_cache_truncated(tmp_path):
    path = tmp_path / "bad.graph"
    path.write_bytes(b"\x01\x02")
    with pytest.raises(FormatError):
        load_graph(str(path))


def test_graphs_built_on_their_own_modalities(bimodal):
    # the classic bug: both graphs built on the image matrix
    images, texts, _ = bimodal
    g_img = build_graph(images[:200], 5)
    g_txt = build_graph(texts[:200], 5)
    assert not np.array_equal(g_img.indices, g_txt.indices)
    # spot-check one row against its own modality
    sims_txt = texts[:200] @ texts[:200].T
    np.fill_diagonal(sims_txt, -np.inf)
    assert g_txt.indices[0, 0] == int(np.argmax(sims_txt[0]))
