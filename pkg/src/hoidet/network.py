"""The assembled detector: encoder, paired instance decoder, interaction
decoder, both query enhancements, and all prediction heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .config import ModelConfig
from .backbone import PatchEmbedder
from .heads import PredictionHeads
from .query_enhance import TokenObjectClassifier, enhance_object_queries, select_top_n
from .semantic_fusion import SemanticFusion, WordEmbeddingTables, fuse_candidates
from .transformer import (Decoder, Encoder, apply_skip, build_interaction_queries,
                          instance_decode)
from .vocabulary import HOIVocabulary, word_prompt


@dataclass
class ForwardOutputs:
    human_boxes: Tensor            # (L, B, N_q, 4) sigmoid cxcywh
    object_boxes: Tensor           # (L, B, N_q, 4)
    object_logits: Tensor          # (L, B, N_q, num_objects + 1)
    hoi_logits: Tensor             # (L, B, N_q, num_hoi)
    verb_logits: Tensor | None     # (L, B, N_q, num_verbs)
    token_logits: Tensor | None    # (B, H*W, num_objects + 1)
    selected_indices: Tensor | None  # (B, N_q)
    semantic_feature: Tensor | None  # (B, C')
    pooled_embedding: Tensor       # (B, D) projection fed to distillation
    v_human: Tensor                # (L, B, N_q, C')
    v_object: Tensor
    v_inter: Tensor
    q_repeat: Tensor               # (B, N_q, C')
    grid_h: int
    grid_w: int
    attention: dict | None = None


class HOIDetector(nn.Module):
    def __init__(self, cfg: ModelConfig, vocabulary: HOIVocabulary):
        super().__init__()
        if vocabulary.num_hoi != cfg.num_hoi:
            raise ValueError(
                f"config expects {cfg.num_hoi} compositions, vocabulary has {vocabulary.num_hoi}")
        if vocabulary.num_verbs != cfg.num_verbs or vocabulary.num_objects != cfg.num_objects:
            raise ValueError("config verb/object counts do not match the vocabulary")
        self.cfg = cfg
        self.vocabulary = vocabulary
        self.embedder = PatchEmbedder(cfg.channels, cfg.patch_size, cfg.image_channels)
        self.encoder = Encoder(cfg.channels, cfg.num_heads, cfg.encoder_layers,
                               cfg.hidden_scale, cfg.dropout)
        self.instance_decoder = Decoder(cfg.channels, cfg.num_heads,
                                        cfg.instance_decoder_layers,
                                        cfg.hidden_scale, cfg.dropout)
        self.interaction_decoder = Decoder(cfg.channels, cfg.num_heads,
                                           cfg.interaction_decoder_layers,
                                           cfg.hidden_scale, cfg.dropout)
        # human and object queries start from the same values: index i of
        # both streams addresses the same human-object pair
        init = torch.randn(cfg.num_queries, cfg.channels) * 0.02
        self.q_human = nn.Parameter(init.clone())
        self.q_object = nn.Parameter(init.clone())

        self.token_classifier = (
            TokenObjectClassifier(cfg.channels, cfg.num_objects)
            if cfg.use_object_enhancement else None
        )
        if cfg.use_semantic_enhancement:
            self.word_tables = WordEmbeddingTables(
                cfg.num_verbs, cfg.num_objects, cfg.num_hoi, cfg.word_dim)
            self.fusion = SemanticFusion(cfg.word_dim, cfg.channels,
                                         cfg.attention_weight_shape, cfg.k_candidates)
        else:
            self.word_tables = None
            self.fusion = None
        self.heads = PredictionHeads(cfg.channels, cfg.num_objects, cfg.num_hoi,
                                     cfg.num_verbs, use_verb_head=cfg.use_verb_head)
        self.kd_proj = nn.Linear(cfg.channels, cfg.embed_dim)
        verb_index = torch.as_tensor(vocabulary.verb_index)
        self.register_buffer("verb_index", verb_index, persistent=False)

    def init_word_tables(self, provider, projection_seed: int | None = None) -> None:
        """Seed the embedding tables from provider text vectors.

        Per-word prompts feed the verb and object tables; the composition
        labels feed the triplet table. Provider vectors are projected to
        the word width with a fixed seeded map when the widths differ,
        then unit-normalized. Tables stay learnable unless the config
        asks for the frozen variant.
        """
        cfg = self.cfg
        if self.word_tables is None or cfg.word_embed_init == "random":
            return
        verb_prompts = [word_prompt(v.name) for v in self.vocabulary.verbs]
        object_prompts = [word_prompt(o.name) for o in self.vocabulary.objects]
        hoi_prompts = self.vocabulary.text_labels()
        rows = [provider.text_embed(p).T for p in (verb_prompts, object_prompts, hoi_prompts)]
        dim = rows[0].shape[1]
        if dim != cfg.word_dim:
            seed = cfg.seed if projection_seed is None else projection_seed
            rng = np.random.default_rng(seed)
            proj = rng.standard_normal((dim, cfg.word_dim)) / np.sqrt(dim)
            rows = [r @ proj for r in rows]
        rows = [r / np.linalg.norm(r, axis=1, keepdims=True) for r in rows]
        tensors = [torch.as_tensor(r, dtype=torch.float32) for r in rows]
        self.word_tables.load_rows(*tensors,
                                   freeze=cfg.word_embed_init == "provider_frozen")

    def forward(self, images: Tensor, candidate_ids: Tensor | None = None,
                capture_attention: bool = False) -> ForwardOutputs:
        cfg = self.cfg
        b = images.shape[0]
        tokens, pos, grid_h, grid_w = self.embedder(images)
        enc = self.encoder(tokens, pos)

        q_human = self.q_human.expand(b, -1, -1)
        q_object = self.q_object.expand(b, -1, -1)
        token_logits = None
        selected_indices = None
        if self.token_classifier is not None:
            scores = self.token_classifier(enc)
            token_logits = scores.logits
            selected = select_top_n(scores, enc, cfg.num_queries,
                                    mode=cfg.token_selection_score)
            selected_indices = selected.indices
            q_object = enhance_object_queries(q_object, selected)

        v_human, v_object, inst_attn = instance_decode(
            self.instance_decoder, enc, pos, q_human, q_object,
            capture=capture_attention)

        semantic = None
        if self.fusion is not None and candidate_ids is not None:
            semantic = fuse_candidates(candidate_ids, self.word_tables,
                                       self.fusion, self.vocabulary)
            q_inter, q_repeat = build_interaction_queries(
                v_human[-1], v_object[-1], semantic, mode=cfg.interaction_query_mode)
        else:
            q_inter = (v_human[-1] + v_object[-1]) / 2.0
            q_repeat = torch.zeros_like(q_inter)

        v_inter, inter_attn = self.interaction_decoder(
            q_inter, enc, pos, capture=capture_attention)
        fused = apply_skip(v_inter, q_repeat[None])

        outputs = ForwardOutputs(
            human_boxes=self.heads.human_box(v_human),
            object_boxes=self.heads.object_box(v_object),
            object_logits=self.heads.object_class(v_object),
            hoi_logits=self.heads.interaction_class(fused),
            verb_logits=(self.heads.verb_class(fused)
                         if self.heads.verb_class is not None else None),
            token_logits=token_logits,
            selected_indices=selected_indices,
            semantic_feature=semantic,
            pooled_embedding=self.kd_proj(v_inter[-1].mean(dim=1)),
            v_human=v_human, v_object=v_object, v_inter=v_inter,
            q_repeat=q_repeat, grid_h=grid_h, grid_w=grid_w,
            attention=(
                {"instance": inst_attn, "interaction": inter_attn}
                if capture_attention else None
            ),
        )
        return outputs


def build_model(cfg: ModelConfig, vocabulary: HOIVocabulary,
                provider=None) -> HOIDetector:
    """Seeded construction; optionally seeds the word tables from a provider."""
    torch.manual_seed(cfg.seed)
    model = HOIDetector(cfg, vocabulary)
    if provider is not None:
        model.init_word_tables(provider)
    return model
