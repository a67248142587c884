"""Shared test fixtures: tiny synthetic videos and temp directories."""

import numpy as np
import pytest

from vidinpaint.video_io import MaskSequence, VideoSequence


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_video(rng):
    frames = rng.uniform(-1.0, 1.0, size=(4, 24, 32, 3)).astype(np.float32)
    names = [f"{i:05d}" for i in range(4)]
    return VideoSequence(frames=frames, frame_names=names)


@pytest.fixture
def tiny_masks(tiny_video, rng):
    masks = np.zeros((4, 24, 32), dtype=np.float32)
    for t in range(4):
        y, x = 4 + 2 * t, 6 + 3 * t
        masks[t, y:y + 8, x:x + 8] = 1.0
    return MaskSequence(masks=masks)
