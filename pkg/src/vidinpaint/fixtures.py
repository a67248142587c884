"""Synthetic test scenes generated from a seed, so the repo ships no binary
assets. Each builder returns (video, masks, ground_truth); ground truth is
exact by construction.
"""

from __future__ import annotations

import os

import numpy as np

from .video_io import MaskSequence, VideoSequence, save_masks, save_sequence
from PIL import Image


def _smooth_texture(h: int, w: int, rng: np.random.Generator,
                    n_waves: int = 6, amplitude: float = 0.8) -> np.ndarray:
    """Sum of random low-frequency sinusoids per channel, range ~[-amp, amp]."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tex = np.zeros((h, w, 3))
    for c in range(3):
        acc = np.zeros((h, w))
        for _ in range(n_waves):
            fx = rng.uniform(-3.0, 3.0) / w
            fy = rng.uniform(-3.0, 3.0) / h
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.3, 1.0) * np.sin(
                2 * np.pi * (fx * xx + fy * yy) + phase)
        acc /= np.abs(acc).max() + 1e-9
        tex[..., c] = acc * amplitude
    return tex.astype(np.float32)


def _square_path(n: int, size: int, side: int, margin: int = 2) -> list:
    """Top-left corners sweeping the frame diagonally with a vertical wobble."""
    lo, hi = margin, size - side - margin
    tops = []
    for k in range(n):
        f = k / max(1, n - 1)
        x = int(lo + f * (hi - lo))
        y = int(lo + (hi - lo) * (0.5 + 0.4 * np.sin(2 * np.pi * f)))
        tops.append((min(max(y, lo), hi), x))
    return tops


def moving_square(seed: int = 0, n_frames: int = 16, size: int = 96,
                  side: int = 24):
    """Static smooth texture occluded by a moving opaque square.

    The occluded content is fully visible in other frames, so cross-frame
    propagation can recover it; ground truth is the clean texture.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    bg = _smooth_texture(size, size, rng)
    gt = np.repeat(bg[None], n_frames, axis=0)
    masks = np.zeros((n_frames, size, size), dtype=np.float32)
    frames = gt.copy()
    obj = np.zeros((side, side, 3), dtype=np.float32)
    obj[..., 0] = 0.9
    obj[..., 1] = -0.7
    obj[::4, :, 2] = 0.8  # stripes make the occluder visually distinct
    for k, (top, left) in enumerate(_square_path(n_frames, size, side)):
        masks[k, top:top + side, left:left + side] = 1.0
        frames[k, top:top + side, left:left + side] = obj
    return (VideoSequence(frames), MaskSequence(masks), VideoSequence(gt))


def deficiency_scene(seed: int = 0, n_frames: int = 8, size: int = 48,
                     side: int = 16, noise: float = 0.06):
    """A center region masked in every frame, over a static texture with
    per-frame exposure changes and sensor noise.

    No cross-frame evidence exists for the hole, so the generator must
    hallucinate its content. Training long enough to overfit the per-frame
    noise makes the hallucination frame-sensitive and hence flickery; the
    stabilization regularizer penalizes output changes that exceed input
    changes and damps that flicker."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
    base = _smooth_texture(size, size, rng, amplitude=0.7)
    frames = np.zeros((n_frames, size, size, 3), dtype=np.float32)
    for k in range(n_frames):
        gain = float(rng.uniform(0.95, 1.05))
        u = (base + 1.0) / 2.0 * gain
        f = 2.0 * u - 1.0 + rng.normal(0, noise, (size, size, 3))
        frames[k] = np.clip(f, -1, 1)
    gt = frames.copy()
    top = (size - side) // 2
    masks = np.zeros((n_frames, size, size), dtype=np.float32)
    masks[:, top:top + side, top:top + side] = 1.0
    return (VideoSequence(frames), MaskSequence(masks), VideoSequence(gt))


def textured_disk(seed: int = 0, n_frames: int = 12, size: int = 96,
                  radius: int = 12):
    """A high-frequency textured disk over a smooth background; ground-truth
    masks are the disk footprints.

    The annotated (first) frame has the disk at the center; later frames
    place it on a surrounding ring that stays clear of the first-frame
    footprint, since the segmenter's loss deliberately excludes the original
    object location and its response there is unconstrained."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    bg = _smooth_texture(size, size, rng, amplitude=0.45)
    yy, xx = np.mgrid[0:size, 0:size]
    checker = (((yy // 4) + (xx // 4)) % 2).astype(np.float32)
    # colors chosen outside the background's per-channel range so the
    # object has both a texture and a chroma signature
    disk_tex = np.stack([0.55 + 0.4 * checker,
                         -0.55 - 0.4 * checker,
                         0.7 - 1.4 * checker], axis=-1)
    frames = np.zeros((n_frames, size, size, 3), dtype=np.float32)
    masks = np.zeros((n_frames, size, size), dtype=np.float32)
    c = size // 2
    ring = 2 * radius + 8  # disjoint from the frame-0 footprint
    for k in range(n_frames):
        if k == 0:
            cx = cy = c
        else:
            ang = 2 * np.pi * (k - 1) / max(1, n_frames - 1)
            cx = int(round(c + ring * np.cos(ang)))
            cy = int(round(c + ring * np.sin(ang)))
        disk = ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius ** 2
        masks[k] = disk.astype(np.float32)
        frames[k] = np.where(disk[..., None], np.clip(disk_tex, -1, 1), bg)
    return (VideoSequence(frames), MaskSequence(masks),
            VideoSequence(np.repeat(bg[None], n_frames, axis=0)))


FIXTURE_BUILDERS = {
    "moving-square": moving_square,
    "deficiency": deficiency_scene,
    "textured-disk": textured_disk,
}


def write_fixture(name: str, root: str, seed: int = 0, **kwargs) -> None:
    """Persist a fixture as frames/, masks/, gt/ plus the first-frame
    annotated mask for the propagation workflow."""
    video, masks, gt = FIXTURE_BUILDERS[name](seed=seed, **kwargs)
    save_sequence(video, os.path.join(root, "frames"))
    save_masks(masks, os.path.join(root, "masks"), video.frame_names)
    save_sequence(gt, os.path.join(root, "gt"))
    first = (masks.masks[0] > 0.5).astype(np.uint8) * 255
    Image.fromarray(first).save(os.path.join(root, "annotated_mask.png"))
