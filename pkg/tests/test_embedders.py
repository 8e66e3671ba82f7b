"""Embedding providers: determinism, orthogonality, and the HTTP wire
contract."""

from __future__ import annotations

import numpy as np
import pytest

from stemstep_eval.embedders import HashedGaussianEmbedder, HttpEmbedder, OneHotEmbedder


def test_hash_embedder_deterministic_across_instances():
    a = HashedGaussianEmbedder(dim=32, seed=7).embed(["force", "mass", "force"])
    b = HashedGaussianEmbedder(dim=32, seed=7).embed(["force", "mass", "force"])
    assert np.array_equal(a, b)
    assert np.array_equal(a[0], a[2])
    assert not np.array_equal(a[0], a[1])


def test_hash_embedder_unit_rows_and_seed_sensitivity():
    vecs = HashedGaussianEmbedder(dim=32, seed=0).embed(["energy"])
    assert np.linalg.norm(vecs[0]) == pytest.approx(1.0)
    other = HashedGaussianEmbedder(dim=32, seed=1).embed(["energy"])
    assert not np.array_equal(vecs[0], other[0])


def test_hash_embedder_empty_input():
    assert HashedGaussianEmbedder(dim=8).embed([]).shape == (0, 8)
    with pytest.raises(ValueError):
        HashedGaussianEmbedder(dim=0)


def test_one_hot_orthogonal_per_distinct_token():
    embedder = OneHotEmbedder(dim=8)
    vecs = embedder.embed(["a", "b", "a"])
    assert np.dot(vecs[0], vecs[1]) == 0.0
    assert np.array_equal(vecs[0], vecs[2])


def test_one_hot_capacity():
    embedder = OneHotEmbedder(dim=2)
    embedder.embed(["a", "b"])
    with pytest.raises(ValueError):
        embedder.embed(["c"])


def test_http_embedder_round_trip(mock_server):
    embedder = HttpEmbedder(mock_server.url("/embed"))
    vecs = embedder.embed(["u", "v", "w"])
    assert vecs.shape == (3, 3)
    assert np.array_equal(vecs, np.eye(3))
    assert mock_server.requests[-1]["body"] == {"tokens": ["u", "v", "w"]}
    embedder.close()


def test_http_embedder_validates_endpoint():
    with pytest.raises(ValueError):
        HttpEmbedder("not-a-url")
