import numpy as np
import pytest
import torch

from hoidet.config import ModelConfig, SyntheticWorldConfig
from hoidet.retrieval import MockEmbeddingProvider
from hoidet.synthetic import build_synthetic_vocabulary, generate_synthetic_dataset

# fix the thread count so repeated forward passes are bitwise comparable
torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_vocab():
    return build_synthetic_vocabulary(num_verbs=4, num_objects=5,
                                      compositions=12, seed=0)


@pytest.fixture(scope="session")
def small_world():
    cfg = SyntheticWorldConfig(num_images=12, num_verbs=4, num_objects=5,
                               compositions=12, max_pairs_per_image=2,
                               image_size=32, seed=0)
    return generate_synthetic_dataset(cfg)


@pytest.fixture(scope="session")
def small_provider(small_world):
    return MockEmbeddingProvider(small_world.vocabulary, seed=0, noise=0.1, dim=16)


@pytest.fixture()
def tiny_model_cfg():
    return ModelConfig(
        num_queries=4, channels=32, encoder_layers=1,
        instance_decoder_layers=2, interaction_decoder_layers=2,
        num_heads=4, embed_dim=16, word_dim=16,
        num_objects=5, num_verbs=4, num_hoi=12,
        k_candidates=3, r_training_free=4, patch_size=8, seed=0,
    )


def rand_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    centers = rng.uniform(0.3, 0.7, size=(n, 2))
    sizes = rng.uniform(0.1, 0.4, size=(n, 2))
    return np.concatenate([centers, sizes], axis=1)
