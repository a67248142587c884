"""Frame/mask sequence loading, compositing and bit-exact persistence.

On-disk format: one 8-bit PNG (or other lossless image) per frame, frame order
defined by lexicographic filename sort. Pixel values map linearly to [-1, 1]
in memory (u -> 2*u/255 - 1). Masks are single-channel images thresholded at
>127, with 1 = unknown/to-remove.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (
    CountMismatch,
    EmptyDirectory,
    IOFailure,
    ShapeMismatch,
    UnreadableFile,
)


@dataclass(frozen=True)
class VideoSequence:
    """N frames of RGB images, float32 values in [-1, 1], shared H and W."""

    frames: np.ndarray  # (N, H, W, 3)
    frame_names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4 or f.shape[-1] != 3 or f.shape[0] < 1:
            raise ShapeMismatch(f"frames must be (N,H,W,3), got {f.shape}")
        if not self.frame_names:
            object.__setattr__(
                self, "frame_names", tuple(f"{i:05d}.png" for i in range(f.shape[0]))
            )
        if len(self.frame_names) != f.shape[0]:
            raise CountMismatch("frame_names length must match frame count")
        if f.min() < -1.0 or f.max() > 1.0:
            raise ShapeMismatch("frame values must lie in [-1, 1]")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class MaskSequence:
    """N binary masks aligned to a VideoSequence; 1 = unknown region."""

    masks: np.ndarray  # (N, H, W), values in {0, 1}

    def __post_init__(self):
        m = self.masks
        if m.ndim != 3 or m.shape[0] < 1:
            raise ShapeMismatch(f"masks must be (N,H,W), got {m.shape}")
        vals = np.unique(m)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ShapeMismatch("mask values must be exactly 0 or 1")

    @property
    def n_frames(self) -> int:
        return self.masks.shape[0]


def _list_images(directory: str, extension: str) -> list:
    if not os.path.isdir(directory):
        raise EmptyDirectory(f"not a directory: {directory}")
    ext = extension.lower().lstrip(".")
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith("." + ext)
    )
    if not names:
        raise EmptyDirectory(f"no .{ext} files in {directory}")
    return names


def load_sequence(directory: str, extension: str = "png") -> VideoSequence:
    """Load an 8-bit image directory as a [-1, 1] float sequence."""
    names = _list_images(directory, extension)
    frames = []
    for name in names:
        path = os.path.join(directory, name)
        try:
            img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
        except Exception as exc:  # noqa: BLE001 - surface as UnreadableFile
            raise UnreadableFile(f"cannot read {path}: {exc}") from exc
        frames.append(2.0 * (img / 255.0) - 1.0)
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ShapeMismatch(f"frames differ in size: {sorted(shapes)}")
    return VideoSequence(np.stack(frames).astype(np.float32), tuple(names))


def load_masks(directory: str, video: VideoSequence | None = None,
               extension: str = "png") -> MaskSequence:
    """Load binary masks (8-bit value > 127 -> 1) paired with ``video``."""
    names = _list_images(directory, extension)
    if video is not None and len(names) != video.n_frames:
        raise CountMismatch(
            f"{len(names)} mask files vs {video.n_frames} frames"
        )
    masks = []
    for name in names:
        path = os.path.join(directory, name)
        try:
            img = np.asarray(Image.open(path).convert("L"))
        except Exception as exc:  # noqa: BLE001
            raise UnreadableFile(f"cannot read {path}: {exc}") from exc
        masks.append((img > 127).astype(np.float32))
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise ShapeMismatch(f"masks differ in size: {sorted(shapes)}")
    out = np.stack(masks)
    if video is not None and out.shape[1:] != video.frames.shape[1:3]:
        raise ShapeMismatch(
            f"mask size {out.shape[1:]} vs frame size {video.frames.shape[1:3]}"
        )
    return MaskSequence(out)


def composite(video: VideoSequence, prediction: VideoSequence,
              masks: MaskSequence) -> VideoSequence:
    """Keep input pixels where mask=0, prediction pixels where mask=1."""
    if (video.frames.shape != prediction.frames.shape
            or masks.masks.shape != video.frames.shape[:3]):
        raise ShapeMismatch("composite inputs disagree in shape")
    m = masks.masks[..., None]
    out = np.where(m > 0.5, prediction.frames, video.frames)
    return VideoSequence(out.astype(np.float32), video.frame_names)


def to_uint8(frames: np.ndarray) -> np.ndarray:
    """[-1,1] float -> 8-bit with round-half-up, clamped to [0, 255]."""
    scaled = 255.0 * (frames.astype(np.float64) + 1.0) / 2.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def save_sequence(video: VideoSequence, directory: str) -> None:
    """Write frames as 8-bit PNGs; inverse of the load normalization."""
    os.makedirs(directory, exist_ok=True)
    data = to_uint8(video.frames)
    try:
        for frame, name in zip(data, video.frame_names):
            base = os.path.splitext(name)[0] + ".png"
            Image.fromarray(frame).save(os.path.join(directory, base))
    except OSError as exc:
        raise IOFailure(f"cannot write to {directory}: {exc}") from exc


def save_masks(masks: MaskSequence, directory: str,
               names: tuple | None = None) -> None:
    """Write binary masks as 8-bit PNGs (0 or 255)."""
    os.makedirs(directory, exist_ok=True)
    if names is None:
        names = tuple(f"{i:05d}.png" for i in range(masks.n_frames))
    try:
        for mask, name in zip(masks.masks, names):
            base = os.path.splitext(name)[0] + ".png"
            img = (mask > 0.5).astype(np.uint8) * 255
            Image.fromarray(img).save(os.path.join(directory, base))
    except OSError as exc:
        raise IOFailure(f"cannot write to {directory}: {exc}") from exc
