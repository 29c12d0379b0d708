import numpy as np
import pytest
import torch

from scenefill.models import DiscriminatorSpec, GeneratorSpec, build_generator, save_generator_checkpoint
from scenefill.pipeline import load_bundle
from scenefill.toyworld import build_toy_corpus, default_toy_config, default_toy_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return default_toy_taxonomy()


@pytest.fixture(scope="session")
def toy_config():
    return default_toy_config()


@pytest.fixture(scope="session")
def small_corpus(taxonomy, toy_config):
    return build_toy_corpus(toy_config, taxonomy, 16, base_seed=11)


@pytest.fixture(scope="session")
def untrained_checkpoints(tmp_path_factory, taxonomy):
    """Randomly initialized (but loadable) stage1/stage2/boundary checkpoints."""
    out = tmp_path_factory.mktemp("ckpts")
    torch.manual_seed(5)
    spec = GeneratorSpec(depth=3, base_width=8, dropout=0.5)
    for role in ("stage1", "stage2", "boundary"):
        gen = build_generator(spec, role, taxonomy)
        save_generator_checkpoint(gen, taxonomy, out / f"{role}.ckpt")
    return out


@pytest.fixture(scope="session")
def bundle(untrained_checkpoints):
    return load_bundle(untrained_checkpoints)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
