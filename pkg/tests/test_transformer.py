import numpy as np
import pytest
import torch

from hoidet.transformer import (Decoder, Encoder, apply_skip,
                                build_interaction_queries, instance_decode)


def zero_residual_paths(module):
    """Zero every residual contribution so each block becomes the identity."""
    with torch.no_grad():
        for name, param in module.named_parameters():
            if "out_proj" in name or "linear2" in name:
                param.zero_()


def test_encoder_preserves_shape():
    torch.manual_seed(0)
    enc = Encoder(channels=256, num_heads=8, num_layers=2)
    tokens = torch.randn(1, 64, 256)
    pos = torch.randn(64, 256)
    out = enc(tokens, pos)
    assert out.shape == (1, 64, 256)


def test_encoder_rejects_nan():
    enc = Encoder(channels=32, num_heads=4, num_layers=1)
    tokens = torch.randn(1, 8, 32)
    tokens[0, 3, 5] = float("nan")
    with pytest.raises(ValueError):
        enc(tokens, torch.randn(8, 32))


def test_encoder_permutation_equivariance():
    torch.manual_seed(1)
    enc = Encoder(channels=32, num_heads=4, num_layers=2)
    tokens = torch.randn(1, 10, 32)
    pos = torch.randn(10, 32)
    out = enc(tokens, pos)
    perm = torch.randperm(10)
    out_perm = enc(tokens[:, perm], pos[perm])
    assert torch.allclose(out[:, perm], out_perm, atol=1e-5)


def test_encoder_residual_identity():
    torch.manual_seed(2)
    enc = Encoder(channels=32, num_heads=4, num_layers=3)
    zero_residual_paths(enc)
    tokens = torch.randn(2, 8, 32)
    out = enc(tokens, torch.randn(8, 32))
    assert torch.equal(out, tokens)


def test_instance_decoder_layer_shapes():
    torch.manual_seed(0)
    dec = Decoder(channels=256, num_heads=8, num_layers=3)
    memory = torch.randn(1, 64, 256)
    pos = torch.randn(64, 256)
    q = torch.randn(1, 64, 256)
    v_h, v_o, _ = instance_decode(dec, memory, pos, q, q.clone())
    assert v_h.shape == (3, 1, 64, 256)
    assert v_o.shape == (3, 1, 64, 256)


def test_instance_decoder_rejects_stream_mismatch():
    dec = Decoder(channels=32, num_heads=4, num_layers=1)
    memory = torch.randn(1, 8, 32)
    pos = torch.randn(8, 32)
    with pytest.raises(ValueError):
        instance_decode(dec, memory, pos, torch.randn(1, 4, 32), torch.randn(1, 5, 32))


def test_identical_human_rows_stay_identical():
    torch.manual_seed(3)
    dec = Decoder(channels=32, num_heads=4, num_layers=2)
    memory = torch.randn(1, 8, 32)
    pos = torch.randn(8, 32)
    q_h = torch.randn(1, 1, 32).expand(1, 6, 32).contiguous()
    q_o = torch.randn(1, 6, 32)
    v_h, _, _ = instance_decode(dec, memory, pos, q_h, q_o)
    for layer in range(v_h.shape[0]):
        rows = v_h[layer, 0]
        assert torch.allclose(rows, rows[0].expand_as(rows), atol=1e-6)


def test_decoder_residual_identity_every_layer():
    torch.manual_seed(4)
    dec = Decoder(channels=32, num_heads=4, num_layers=3)
    zero_residual_paths(dec)
    queries = torch.randn(2, 5, 32)
    out, _ = dec(queries, torch.randn(2, 8, 32), torch.randn(8, 32))
    for layer in range(3):
        assert torch.equal(out[layer], queries)


def test_decoder_deterministic_repeat():
    torch.manual_seed(5)
    dec = Decoder(channels=32, num_heads=4, num_layers=2)
    queries = torch.randn(1, 4, 32)
    memory = torch.randn(1, 8, 32)
    pos = torch.randn(8, 32)
    a, _ = dec(queries, memory, pos)
    b, _ = dec(queries, memory, pos)
    assert torch.equal(a, b)


def test_interaction_queries_mean_of_equals():
    x = torch.randn(1, 4, 8)
    q_i = x[:, 0, :].clone()
    q_inter, q_repeat = build_interaction_queries(
        x[:, 0:1].expand(1, 4, 8).contiguous(),
        x[:, 0:1].expand(1, 4, 8).contiguous(), q_i)
    assert torch.allclose(q_inter, q_repeat)
    assert torch.allclose(q_inter, x[:, 0:1].expand(1, 4, 8))


def test_interaction_queries_zero_semantic():
    v_h = torch.randn(2, 4, 8)
    v_o = torch.randn(2, 4, 8)
    q_inter, q_repeat = build_interaction_queries(v_h, v_o, torch.zeros(2, 8))
    assert torch.allclose(q_inter, (v_h + v_o) / 3)
    assert torch.all(q_repeat == 0)


def test_interaction_queries_match_elementwise_mean_oracle():
    rng = np.random.default_rng(0)
    v_h = rng.standard_normal((1, 4, 8)).astype(np.float32)
    v_o = rng.standard_normal((1, 4, 8)).astype(np.float32)
    q_i = rng.standard_normal((1, 8)).astype(np.float32)
    q_inter, _ = build_interaction_queries(
        torch.from_numpy(v_h), torch.from_numpy(v_o), torch.from_numpy(q_i))
    oracle = np.empty_like(v_h)
    for n in range(4):
        for c in range(8):
            oracle[0, n, c] = (v_h[0, n, c] + v_o[0, n, c] + q_i[0, c]) / 3
    np.testing.assert_allclose(q_inter.numpy(), oracle, rtol=1e-6)


def test_interaction_queries_mean2_plus_mode():
    v_h = torch.randn(1, 3, 8)
    v_o = torch.randn(1, 3, 8)
    q_i = torch.randn(1, 8)
    q_inter, q_repeat = build_interaction_queries(v_h, v_o, q_i, mode="mean2_plus")
    assert torch.allclose(q_inter, (v_h + v_o) / 2 + q_repeat)


def test_apply_skip():
    v = torch.randn(2, 4, 8)
    q = torch.randn(2, 4, 8)
    assert torch.equal(apply_skip(v, torch.zeros_like(q)), v)
    assert torch.all(apply_skip(v, -v) == 0)
    np.testing.assert_allclose(apply_skip(v, q).numpy(), v.numpy() + q.numpy(),
                               rtol=1e-6)
