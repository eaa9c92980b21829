import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoidet.retrieval import (MockEmbeddingProvider, candidate_coverage,
                              compute_similarity, select_candidates,
                              training_free_scores)


def test_similarity_orthonormal_basis():
    t_c = np.eye(4)[:, :3]  # columns e1, e2, e3
    v_c = np.eye(4)[:, 0]
    np.testing.assert_allclose(compute_similarity(v_c, t_c), [1, 0, 0])


def test_similarity_zero_image_vector():
    np.testing.assert_allclose(compute_similarity(np.zeros(5), np.random.rand(5, 7)),
                               np.zeros(7))


def test_similarity_matches_loop_oracle():
    rng = np.random.default_rng(0)
    v_c = rng.standard_normal(8)
    t_c = rng.standard_normal((8, 5))
    got = compute_similarity(v_c, t_c)
    oracle = [sum(t_c[d, n] * v_c[d] for d in range(8)) for n in range(5)]
    np.testing.assert_allclose(got, oracle, rtol=1e-12)


def test_similarity_rejects_mismatched_dims():
    with pytest.raises(ValueError):
        compute_similarity(np.zeros(4), np.zeros((5, 7)))


LABELS10 = [f"label {i}" for i in range(10)]


def test_select_candidates_basic():
    cand = select_candidates(np.array([0.2, 0.9, 0.5]), 2, LABELS10[:3])
    assert cand.hoi_ids.tolist() == [1, 2]
    np.testing.assert_allclose(cand.similarities, [0.9, 0.5])
    assert cand.texts == ["label 1", "label 2"]


def test_select_candidates_all_sorted():
    m = np.array([0.2, 0.9, 0.5, 0.7])
    cand = select_candidates(m, 4, LABELS10[:4])
    assert cand.hoi_ids.tolist() == [1, 3, 2, 0]
    assert (np.diff(cand.similarities) <= 0).all()


def test_select_candidates_mask_excludes_top():
    m = np.array([0.2, 0.9, 0.5])
    mask = np.array([True, False, True])
    cand = select_candidates(m, 2, LABELS10[:3], seen_mask=mask)
    assert cand.hoi_ids.tolist() == [2, 0]


def test_select_candidates_k_too_large():
    with pytest.raises(ValueError):
        select_candidates(np.array([0.1, 0.2]), 3, LABELS10[:2])
    with pytest.raises(ValueError):
        select_candidates(np.array([0.1, 0.2, 0.3]), 3, LABELS10[:3],
                          seen_mask=np.array([True, True, False]))


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=40),
       st.integers(min_value=1, max_value=40))
def test_top_k_dominance(values, k):
    m = np.asarray(values)
    k = min(k, len(values))
    cand = select_candidates(m, k, [str(i) for i in range(len(values))])
    excluded = np.setdiff1d(np.arange(len(values)), cand.hoi_ids)
    if excluded.size:
        assert cand.similarities.min() >= m[excluded].max()


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=20)
def test_masking_never_leaks_unseen(seed):
    rng = np.random.default_rng(seed)
    n = 12
    m = rng.standard_normal(n)
    mask = rng.random(n) < 0.5
    mask[0] = True  # keep at least one eligible
    k = int(rng.integers(1, mask.sum() + 1))
    cand = select_candidates(m, k, [str(i) for i in range(n)], seen_mask=mask)
    assert mask[cand.hoi_ids].all()


def test_training_free_full_rank_is_softmax():
    m = np.array([0.3, -1.0, 2.0, 0.0])
    s = training_free_scores(m, 4)
    soft = np.exp(m) / np.exp(m).sum()
    np.testing.assert_allclose(s, soft, rtol=1e-12)


def test_training_free_rank_one():
    s = training_free_scores(np.array([0.3, -1.0, 2.0, 0.0]), 1)
    assert np.count_nonzero(s) == 1
    assert s[2] > 0


def test_training_free_uniform_tie_rule():
    n, r = 600, 10
    s = training_free_scores(np.zeros(n), r)
    expect = np.zeros(n)
    expect[:r] = 1.0 / n
    np.testing.assert_allclose(s, expect, rtol=1e-12)


def test_training_free_subprobability_properties():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 50))
        r = int(rng.integers(1, n + 1))
        s = training_free_scores(rng.standard_normal(n), r)
        assert (s >= 0).all()
        assert s.sum() <= 1 + 1e-12
        assert np.count_nonzero(s) == r
    with pytest.raises(ValueError):
        training_free_scores(np.zeros(4), 5)


def test_training_free_minmax_mode():
    m = np.array([1.0, 3.0, 2.0])
    s = training_free_scores(m, 2, mode="minmax")
    np.testing.assert_allclose(s, [0.0, 1.0, 0.5])


def test_mock_provider_noise_free_single_label(small_world):
    vocab = small_world.vocabulary
    provider = MockEmbeddingProvider(vocab, seed=3, noise=0.0, dim=32)
    ann = next(a for a in small_world.annotations if len(a.instances) == 1)
    v_c = provider.image_embed(ann)
    t_c = provider.text_embed(vocab.text_labels())
    m = compute_similarity(v_c, t_c)
    hoi_ids = np.flatnonzero(ann.instances[0].hoi_multi_hot)
    assert len(hoi_ids) == 1
    assert m.argmax() == hoi_ids[0]
    assert m.max() == pytest.approx(1.0, abs=1e-6)


def test_mock_provider_deterministic(small_world):
    vocab = small_world.vocabulary
    a = MockEmbeddingProvider(vocab, seed=5, noise=0.1, dim=16)
    b = MockEmbeddingProvider(vocab, seed=5, noise=0.1, dim=16)
    labels = vocab.text_labels()
    np.testing.assert_array_equal(a.text_embed(labels), b.text_embed(labels))
    ann = small_world.annotations[0]
    np.testing.assert_array_equal(a.image_embed(ann), b.image_embed(ann))
    c = MockEmbeddingProvider(vocab, seed=6, noise=0.1, dim=16)
    assert not np.array_equal(a.image_embed(ann), c.image_embed(ann))


def test_mock_provider_unit_norm(small_world, small_provider):
    labels = small_world.vocabulary.text_labels()
    t_c = small_provider.text_embed(labels)
    np.testing.assert_allclose(np.linalg.norm(t_c, axis=0), 1.0, rtol=1e-5)
    v = small_provider.image_embed(small_world.annotations[0])
    assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-5)


def test_coverage_full_k_is_one(small_world, small_provider):
    cov = candidate_coverage(small_world.annotations, small_world.vocabulary,
                             small_provider, small_world.vocabulary.num_hoi)
    assert cov == 1.0


def test_coverage_monotone(small_world, small_provider):
    values = [candidate_coverage(small_world.annotations, small_world.vocabulary,
                                 small_provider, k) for k in range(1, 9)]
    assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_coverage_empty_dataset_rejected(small_world, small_provider):
    with pytest.raises(ValueError):
        candidate_coverage([], small_world.vocabulary, small_provider, 2)
