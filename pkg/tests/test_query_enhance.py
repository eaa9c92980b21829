import numpy as np
import pytest
import torch
from torch import nn

from hoidet.data import GroundTruthInstance
from hoidet.query_enhance import (TokenObjectScores, classifier_targets,
                                  enhance_object_queries, score_tokens,
                                  select_top_n)
from hoidet.synthetic import build_synthetic_vocabulary


def make_scores(values) -> TokenObjectScores:
    """Single foreground class whose logit equals the given per-token value."""
    values = torch.as_tensor(values, dtype=torch.float32)
    logits = torch.stack([values, torch.full_like(values, -10.0)], dim=-1)
    return TokenObjectScores(logits=logits, detached_input=True)


def test_zero_weights_uniform_logits():
    linear = nn.Linear(8, 4)
    with torch.no_grad():
        linear.weight.zero_()
        linear.bias.zero_()
    scores = score_tokens(torch.randn(6, 8), linear)
    assert torch.all(scores.logits == 0)
    assert scores.detached_input


def test_ce_gradient_never_reaches_upstream():
    linear = nn.Linear(8, 4)
    enc = torch.randn(6, 8, requires_grad=True)
    scores = score_tokens(enc, linear)
    labels = torch.randint(0, 4, (6,))
    ce = torch.nn.functional.cross_entropy(scores.logits, labels)
    grads = torch.autograd.grad(ce, [enc, linear.weight], allow_unused=True)
    assert grads[0] is None or torch.all(grads[0] == 0)
    assert grads[1].abs().sum() > 0


def test_ce_gradient_on_classifier_matches_finite_difference():
    torch.manual_seed(0)
    linear = nn.Linear(8, 4).double()
    enc = torch.randn(6, 8, dtype=torch.float64)
    labels = torch.randint(0, 4, (6,))

    def ce() -> torch.Tensor:
        return torch.nn.functional.cross_entropy(score_tokens(enc, linear).logits,
                                                 labels)

    grad = torch.autograd.grad(ce(), linear.weight)[0]
    h = 1e-6
    with torch.no_grad():
        for idx in [(0, 0), (1, 3), (3, 7)]:
            orig = linear.weight[idx].item()
            linear.weight[idx] = orig + h
            up = ce().item()
            linear.weight[idx] = orig - h
            down = ce().item()
            linear.weight[idx] = orig
            numeric = (up - down) / (2 * h)
            assert numeric != 0
            assert abs(grad[idx].item() - numeric) < 1e-6


def test_select_top_n_basic():
    scores = make_scores([0.1, 0.9, 0.5, 0.3])
    enc = torch.arange(8, dtype=torch.float32).reshape(4, 2)
    sel = select_top_n(scores, enc, 2)
    assert sel.indices.tolist() == [1, 2]
    assert torch.equal(sel.features, enc[[1, 2]])


def test_select_all_sorted():
    scores = make_scores([0.1, 0.9, 0.5, 0.3])
    sel = select_top_n(scores, torch.randn(4, 2), 4)
    assert sel.indices.tolist() == [1, 2, 3, 0]


def test_select_ties_low_index_first():
    scores = make_scores([0.5, 0.5, 0.5, 0.7])
    sel = select_top_n(scores, torch.randn(4, 2), 3)
    assert sel.indices.tolist() == [3, 0, 1]


def test_select_too_many_rejected():
    with pytest.raises(ValueError):
        select_top_n(make_scores([0.1, 0.2]), torch.randn(2, 2), 3)


def test_select_matches_exhaustive_sort_oracle():
    rng = np.random.default_rng(0)
    torch.manual_seed(1)
    logits = torch.from_numpy(rng.standard_normal((32, 6)).astype(np.float32))
    scores = TokenObjectScores(logits=logits, detached_input=True)
    enc = torch.randn(32, 4)
    sel = select_top_n(scores, enc, 10)
    per_token = logits[:, :-1].max(dim=-1).values.numpy()
    oracle = sorted(range(32), key=lambda i: (-per_token[i], i))[:10]
    assert sel.indices.tolist() == oracle
    # top-n scores dominate every excluded token
    excluded = [i for i in range(32) if i not in oracle]
    assert per_token[oracle].min() >= per_token[excluded].max()


def test_enhance_identities_and_oracle():
    rng = np.random.default_rng(2)
    v_a = torch.from_numpy(rng.standard_normal((4, 8)).astype(np.float32))
    sel = type("S", (), {"indices": torch.arange(4), "features": v_a})()
    q = torch.from_numpy(rng.standard_normal((4, 8)).astype(np.float32))
    assert torch.equal(enhance_object_queries(torch.zeros(4, 8), sel), v_a)
    zero_sel = type("S", (), {"indices": torch.arange(4),
                              "features": torch.zeros(4, 8)})()
    assert torch.equal(enhance_object_queries(q, zero_sel), q)
    out = enhance_object_queries(q, sel)
    np.testing.assert_allclose(out.numpy(), q.numpy() + v_a.numpy(), rtol=1e-6)
    # subtracting the initial queries recovers the selected features; exact
    # in float64 where the add-subtract round trip does not lose bits
    q64, v64 = q.double(), v_a.double()
    sel64 = type("S", (), {"indices": torch.arange(4), "features": v64})()
    recovered = enhance_object_queries(q64, sel64) - q64
    np.testing.assert_allclose(recovered.numpy(), v64.numpy(), rtol=1e-12)


def test_enhance_shape_mismatch_rejected():
    sel = type("S", (), {"indices": torch.arange(3),
                         "features": torch.zeros(3, 8)})()
    with pytest.raises(ValueError):
        enhance_object_queries(torch.zeros(4, 8), sel)


def _instance(vocab, h_box, o_box, object_class):
    return GroundTruthInstance.build(h_box, o_box, object_class, [0], vocab)


def test_targets_no_boxes_all_background():
    vocab = build_synthetic_vocabulary(2, 3, 4, seed=0)
    labels = classifier_targets([], 4, 4, vocab.num_objects)
    assert torch.all(labels == vocab.num_objects)


def test_targets_full_image_box(small_vocab):
    inst = _instance(small_vocab, [0.5, 0.5, 1.0, 1.0], [0.5, 0.5, 1.0, 1.0], 2)
    labels = classifier_targets([inst], 4, 4, small_vocab.num_objects)
    assert torch.all(labels == 2)


def test_targets_nested_boxes_prefer_smaller(small_vocab):
    outer = _instance(small_vocab, [0.1, 0.1, 0.05, 0.05], [0.5, 0.5, 0.9, 0.9], 1)
    inner = _instance(small_vocab, [0.1, 0.1, 0.05, 0.05], [0.5, 0.5, 0.3, 0.3], 3)
    labels = classifier_targets([outer, inner], 8, 8, small_vocab.num_objects)
    # brute-force point-in-box oracle over the token grid
    from hoidet.backbone import token_centers

    centers = token_centers(8, 8).numpy()
    boxes = [([0.5, 0.5, 0.9, 0.9], 1), ([0.5, 0.5, 0.3, 0.3], 3)]
    for t, (x, y) in enumerate(centers):
        best = small_vocab.num_objects
        best_area = float("inf")
        for (cx, cy, w, h), cls in boxes:
            if cx - w / 2 <= x <= cx + w / 2 and cy - h / 2 <= y <= cy + h / 2:
                if w * h < best_area:
                    best, best_area = cls, w * h
        assert labels[t].item() == best


def test_targets_degenerate_box_warns(small_vocab):
    inst = _instance(small_vocab, [0.5, 0.5, 0.2, 0.2], [0.5, 0.5, 0.0, 0.1], 1)
    with pytest.warns(UserWarning, match="degenerate"):
        labels = classifier_targets([inst], 4, 4, small_vocab.num_objects)
    assert torch.all(labels == small_vocab.num_objects)
