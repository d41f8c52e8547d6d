import os

import numpy as np
import pytest

from InpaintX.tta import tensor as T
from InpaintX.tta.attention import AttentionConfig
from InpaintX.tta.config import TrainConfig
from InpaintX.tta.logger_config import remove_file_sinks
from InpaintX.tta.model import ModelConfig


def pytest_collection_modifyitems(config, items):
    if os.getenv("INPAINTX_SLOW", "") not in ("", "0"):
        return
    skip = pytest.mark.skip(reason="slow training run; set INPAINTX_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def no_debug():
    T.set_debug(False)
    yield
    T.set_debug(False)
    remove_file_sinks()


@pytest.fixture
def tiny_config():
    """16×16 two-level model small enough to train a few steps in a test."""
    return ModelConfig(
        levels=2,
        base_channels=4,
        input_size=16,
        dilations=(2, 4),
        attention=AttentionConfig(swap_patch=3, sim_patch=3, stride=1, downsample=2),
        disc_channels=(4, 8, 8, 8),
        disc_kernel=3,
        extractor_channels=(4, 8),
    )


@pytest.fixture
def tiny_train():
    return TrainConfig(
        steps=4,
        batch_size=2,
        checkpoint_every=2,
        log_every=1,
        eval_images=2,
        prefetch=1,
        mask_min_ratio=0.05,
        mask_max_ratio=0.6,
    )
