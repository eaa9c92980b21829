import numpy as np
import pytest
import torch
from scipy.special import erf

from hoidet.semantic_fusion import (SemanticFusion, WordEmbeddingTables,
                                    embed_candidates, fuse_candidates)
from hoidet.synthetic import build_synthetic_vocabulary


def np_gelu(x):
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def np_mlp(seq, x):
    """Numpy forward of a Linear-GELU-Linear stack."""
    w1 = seq[0].weight.detach().numpy()
    b1 = seq[0].bias.detach().numpy()
    w2 = seq[2].weight.detach().numpy()
    b2 = seq[2].bias.detach().numpy()
    return np_gelu(x @ w1.T + b1) @ w2.T + b2


@pytest.fixture()
def fusion():
    torch.manual_seed(0)
    return SemanticFusion(word_dim=6, channels=4)


def test_embed_candidates_paper_scale_shapes():
    vocab = build_synthetic_vocabulary(117, 80, 600, seed=0)
    tables = WordEmbeddingTables(117, 80, 600, 512)
    ids = torch.arange(16)
    t_verb, t_obj, t_hoi = embed_candidates(ids, tables, vocab)
    assert t_verb.shape == (16, 512)
    assert t_obj.shape == (16, 512)
    assert t_hoi.shape == (16, 512)


def test_embed_candidates_duplicates_and_loop_oracle(small_vocab):
    tables = WordEmbeddingTables(small_vocab.num_verbs, small_vocab.num_objects,
                                 small_vocab.num_hoi, 8)
    # two candidates sharing a verb produce identical verb rows
    shared = [
        (a, b) for a in range(small_vocab.num_hoi)
        for b in range(small_vocab.num_hoi)
        if a < b and small_vocab.verb_of(a) == small_vocab.verb_of(b)
    ][0]
    ids = torch.tensor(shared)
    t_verb, t_obj, t_hoi = embed_candidates(ids, tables, small_vocab)
    assert torch.equal(t_verb[0], t_verb[1])
    for row, hoi_id in enumerate(ids.tolist()):
        v, o = small_vocab.compositions[hoi_id]
        assert torch.equal(t_verb[row], tables.verb_table.weight[v])
        assert torch.equal(t_obj[row], tables.object_table.weight[o])
        assert torch.equal(t_hoi[row], tables.hoi_table.weight[hoi_id])


def test_embed_candidates_unknown_id_rejected(small_vocab):
    tables = WordEmbeddingTables(small_vocab.num_verbs, small_vocab.num_objects,
                                 small_vocab.num_hoi, 8)
    with pytest.raises(ValueError):
        embed_candidates(torch.tensor([small_vocab.num_hoi]), tables, small_vocab)


def test_fuse_vo_identity_construction(fusion):
    # push activations into the asymptote so the stack reduces to a shift
    d = 6
    shift = 20.0
    with torch.no_grad():
        fusion.mlp_vo[0].weight.zero_()
        fusion.mlp_vo[0].weight[:, :d] = torch.eye(d)
        fusion.mlp_vo[0].bias.fill_(shift)
        fusion.mlp_vo[2].weight.copy_(torch.eye(d))
        fusion.mlp_vo[2].bias.fill_(-shift)
    t_verb = torch.randn(3, d)
    out = fusion.fuse_vo(t_verb, torch.zeros(3, d))
    assert torch.allclose(out, t_verb, atol=1e-5)


def test_fuse_vo_zero_mlp(fusion):
    with torch.no_grad():
        fusion.mlp_vo[2].weight.zero_()
        fusion.mlp_vo[2].bias.zero_()
    assert torch.all(fusion.fuse_vo(torch.randn(4, 6), torch.randn(4, 6)) == 0)


def test_fuse_vo_matches_matmul_oracle(fusion):
    rng = np.random.default_rng(0)
    t_verb = rng.standard_normal((5, 6)).astype(np.float32)
    t_obj = rng.standard_normal((5, 6)).astype(np.float32)
    out = fusion.fuse_vo(torch.from_numpy(t_verb), torch.from_numpy(t_obj))
    oracle = np_mlp(fusion.mlp_vo, np.concatenate([t_verb, t_obj], axis=1))
    np.testing.assert_allclose(out.detach().numpy(), oracle, atol=1e-5)


def test_project_hoi_matches_matmul_oracle(fusion):
    rng = np.random.default_rng(1)
    t_hoi = rng.standard_normal((4, 6)).astype(np.float32)
    out = fusion.project_hoi(torch.from_numpy(t_hoi))
    np.testing.assert_allclose(out.detach().numpy(), np_mlp(fusion.mlp_hoi, t_hoi),
                               atol=1e-5)


def test_correlation_identity_on_orthonormal(fusion):
    rows = torch.eye(6)[:4]
    with torch.no_grad():
        fusion.attn_weight.fill_(1.0)
    corr = fusion.correlation(rows, rows)
    assert torch.allclose(corr, torch.eye(4))


def test_correlation_zero_weights(fusion):
    with torch.no_grad():
        fusion.attn_weight.zero_()
    assert torch.all(fusion.correlation(torch.randn(4, 6), torch.randn(4, 6)) == 0)


def test_correlation_matches_loop_oracle(fusion):
    rng = np.random.default_rng(2)
    t_vo = rng.standard_normal((4, 6)).astype(np.float32)
    t_hoi = rng.standard_normal((4, 6)).astype(np.float32)
    w = fusion.attn_weight.detach().numpy()
    corr = fusion.correlation(torch.from_numpy(t_vo), torch.from_numpy(t_hoi))
    oracle = np.empty((4, 4), dtype=np.float64)
    for i in range(4):
        for j in range(4):
            oracle[i, j] = sum(w[c] * t_vo[i, c] * t_hoi[j, c] for c in range(6))
    np.testing.assert_allclose(corr.detach().numpy(), oracle, atol=1e-5)


def test_reweight_uniform_and_saturated():
    t_vo = torch.randn(4, 6)
    out = SemanticFusion.reweight(torch.zeros(4, 4), t_vo)
    assert torch.allclose(out, t_vo.mean(dim=0).expand(4, 6), atol=1e-6)
    corr = torch.zeros(4, 4)
    corr[1, 2] = 1e4
    out = SemanticFusion.reweight(corr, t_vo)
    assert torch.allclose(out[1], t_vo[2], atol=1e-5)


def test_reweight_matches_softmax_matmul_oracle():
    rng = np.random.default_rng(3)
    corr = rng.standard_normal((4, 4)).astype(np.float32)
    t_vo = rng.standard_normal((4, 6)).astype(np.float32)
    out = SemanticFusion.reweight(torch.from_numpy(corr), torch.from_numpy(t_vo))
    ex = np.exp(corr - corr.max(axis=1, keepdims=True))
    soft = ex / ex.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(out.numpy(), soft @ t_vo, atol=1e-5)
    np.testing.assert_allclose(soft.sum(axis=1), np.ones(4), atol=1e-6)


def test_fuse_final():
    t_vo_hat = torch.randn(4, 6)
    assert torch.equal(SemanticFusion.fuse_final(t_vo_hat, torch.ones(4, 6)), t_vo_hat)
    assert torch.all(SemanticFusion.fuse_final(t_vo_hat, torch.zeros(4, 6)) == 0)
    other = torch.randn(4, 6)
    np.testing.assert_allclose(
        SemanticFusion.fuse_final(t_vo_hat, other).numpy(),
        t_vo_hat.numpy() * other.numpy(), rtol=1e-6)


def test_aggregate_cancelling_rows_and_single_row(fusion):
    row = torch.randn(1, 6)
    cancelling = torch.cat([row, -row], dim=0)
    out = fusion.aggregate(cancelling)
    zero_out = fusion.mlp_out(torch.zeros(6))
    assert torch.allclose(out, zero_out, atol=1e-6)
    single = fusion.aggregate(row)
    assert torch.allclose(single, fusion.mlp_out(row[0]), atol=1e-6)


def test_aggregate_matches_sum_then_mlp_oracle(fusion):
    rng = np.random.default_rng(4)
    fused = rng.standard_normal((5, 6)).astype(np.float32)
    out = fusion.aggregate(torch.from_numpy(fused))
    oracle = np_mlp(fusion.mlp_out, fused.sum(axis=0))
    np.testing.assert_allclose(out.detach().numpy(), oracle, atol=1e-5)


def test_forward_shape_for_any_k(fusion):
    for k in (1, 2, 7):
        out = fusion(torch.randn(k, 6), torch.randn(k, 6), torch.randn(k, 6))
        assert out.shape == (4,)


def test_forward_invariant_under_candidate_permutation(fusion):
    torch.manual_seed(5)
    t_verb, t_obj, t_hoi = (torch.randn(5, 6) for _ in range(3))
    base = fusion(t_verb, t_obj, t_hoi)
    perm = torch.randperm(5)
    permuted = fusion(t_verb[perm], t_obj[perm], t_hoi[perm])
    assert torch.allclose(base, permuted, atol=1e-5)


def test_full_pipeline_differentiable(small_vocab):
    torch.manual_seed(6)
    tables = WordEmbeddingTables(small_vocab.num_verbs, small_vocab.num_objects,
                                 small_vocab.num_hoi, 8)
    fusion = SemanticFusion(8, 4)
    ids = torch.tensor([0, 3, 5])
    out = fuse_candidates(ids, tables, fusion, small_vocab)
    out.pow(2).sum().backward()
    assert tables.hoi_table.weight.grad.abs().sum() > 0
    assert fusion.attn_weight.grad.abs().sum() > 0


def test_gradients_match_finite_differences_smoke():
    from hoidet.selfcheck import fusion_gradient_max_error

    worst = max(fusion_gradient_max_error(seed) for seed in range(3))
    assert worst < 1e-4


def test_matrix_attention_weight_shape():
    fusion = SemanticFusion(word_dim=6, channels=4,
                            attention_weight_shape="matrix", k_candidates=5)
    assert fusion.attn_weight.shape == (5, 6)
    out = fusion(torch.randn(5, 6), torch.randn(5, 6), torch.randn(5, 6))
    assert out.shape == (4,)
