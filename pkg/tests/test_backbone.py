import pytest
import torch

from hoidet.backbone import (PatchEmbedder, extract_features, sinusoidal_positions,
                             token_centers)


def make_embedder(seed=0, channels=256, patch=8):
    torch.manual_seed(seed)
    return PatchEmbedder(channels, patch)


def test_token_count_and_width():
    fm = extract_features(torch.randn(3, 64, 64), make_embedder())
    assert fm.tokens.shape == (64, 256)
    assert fm.pos.shape == (64, 256)
    assert (fm.height, fm.width) == (8, 8)


def test_zero_image_zero_projection():
    emb = make_embedder()
    with torch.no_grad():
        emb.proj.weight.zero_()
        emb.proj.bias.zero_()
    fm = extract_features(torch.zeros(3, 64, 64), emb)
    assert torch.all(fm.tokens == 0)
    assert fm.pos.abs().sum() > 0


def test_deterministic_given_weights():
    emb = make_embedder(seed=7)
    image = torch.randn(3, 32, 32)
    a = extract_features(image.clone(), emb)
    b = extract_features(image.clone(), emb)
    assert torch.equal(a.tokens, b.tokens)
    assert torch.equal(a.pos, b.pos)


def test_non_divisible_rejected():
    with pytest.raises(ValueError, match="divisible"):
        extract_features(torch.randn(3, 60, 64), make_embedder())


def test_positions_independent_of_content():
    emb = make_embedder()
    a = extract_features(torch.randn(3, 32, 32), emb)
    b = extract_features(torch.randn(3, 32, 32), emb)
    assert torch.equal(a.pos, b.pos)


def test_sinusoidal_rejects_bad_width():
    with pytest.raises(ValueError):
        sinusoidal_positions(4, 4, 6)


def test_token_centers_grid():
    centers = token_centers(2, 2)
    assert centers.shape == (4, 2)
    assert torch.allclose(centers[0], torch.tensor([0.25, 0.25]))
    assert torch.allclose(centers[3], torch.tensor([0.75, 0.75]))
