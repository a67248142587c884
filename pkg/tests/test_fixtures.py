"""Synthetic scene builders: shapes, mask validity, and ground truth."""

import numpy as np
import pytest

from vidinpaint.fixtures import (
    FIXTURE_BUILDERS,
    deficiency_scene,
    moving_square,
    textured_disk,
)


@pytest.mark.parametrize("name", sorted(FIXTURE_BUILDERS))
def test_builder_contract(name):
    video, masks, gt = FIXTURE_BUILDERS[name](seed=0)
    n, h, w, c = video.frames.shape
    assert c == 3
    assert masks.masks.shape == (n, h, w)
    assert gt.frames.shape == video.frames.shape
    assert video.frames.min() >= -1 and video.frames.max() <= 1
    assert set(np.unique(masks.masks)) <= {0.0, 1.0}
    assert masks.masks.reshape(n, -1).sum(axis=1).min() > 0


@pytest.mark.parametrize("name", sorted(FIXTURE_BUILDERS))
def test_seed_determinism(name):
    a = FIXTURE_BUILDERS[name](seed=3)
    b = FIXTURE_BUILDERS[name](seed=3)
    assert np.array_equal(a[0].frames, b[0].frames)
    assert np.array_equal(a[1].masks, b[1].masks)
    c = FIXTURE_BUILDERS[name](seed=4)
    assert not np.array_equal(a[0].frames, c[0].frames)


def test_moving_square_gt_matches_outside_mask():
    video, masks, gt = moving_square(seed=0)
    keep = masks.masks[..., None] <= 0.5
    assert np.array_equal(video.frames[keep.repeat(3, -1)],
                          gt.frames[keep.repeat(3, -1)])
    assert not np.array_equal(video.frames, gt.frames)


def test_moving_square_hole_visible_elsewhere():
    # every hole pixel is unoccluded in at least one other frame
    _, masks, _ = moving_square(seed=0)
    assert (masks.masks.max(axis=0) < 1 + 1e-6).all()
    covered_everywhere = masks.masks.min(axis=0) > 0.5
    assert not covered_everywhere.any()


def test_deficiency_hole_is_static_center_square():
    video, masks, _ = deficiency_scene(seed=0, size=48, side=16)
    assert np.array_equal(masks.masks, np.repeat(masks.masks[:1],
                                                 masks.masks.shape[0], 0))
    assert masks.masks[0].sum() == 16 * 16
    assert masks.masks[0, 24, 24] == 1.0


def test_deficiency_frames_differ():
    video, _, _ = deficiency_scene(seed=0)
    diffs = np.abs(np.diff(video.frames, axis=0)).mean(axis=(1, 2, 3))
    assert (diffs > 1e-3).all()


def test_textured_disk_layout():
    video, masks, gt = textured_disk(seed=0)
    n, size = masks.masks.shape[0], masks.masks.shape[1]
    c = size // 2
    assert masks.masks[0, c, c] == 1.0
    # later disks never overlap the annotated frame's footprint
    for k in range(1, n):
        assert (masks.masks[k] * masks.masks[0]).sum() == 0
    # ground truth is the clean background: matches frames off-disk
    keep = masks.masks[..., None] <= 0.5
    assert np.array_equal(video.frames[keep.repeat(3, -1)],
                          gt.frames[keep.repeat(3, -1)])
