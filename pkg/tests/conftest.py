import numpy as np
import pytest

from avgzsl.data import SynthSpec, synth_generate
from avgzsl.model import AblationSwitches, ModelDims


@pytest.fixture(scope="session")
def toy_dims():
    # dropout 0 so Train-mode forwards are deterministic without a generator
    return ModelDims(d_in_a=6, d_in_v=5, d_model=7, d_hidden=6, d_out=8,
                     dropout_rate=0.0)


@pytest.fixture(scope="session")
def small_archive():
    """Small synthetic archive shared by trainer/CLI tests."""
    spec = SynthSpec(train_seen_classes=4, val_unseen_classes=2,
                     test_unseen_classes=2, samples_per_split=12,
                     d_in_a=24, d_in_v=16, latent_dim=4, seed=7)
    return synth_generate(spec)


@pytest.fixture(scope="session")
def default_archive():
    """The full-size synthetic default; generated once per session."""
    return synth_generate(SynthSpec())
