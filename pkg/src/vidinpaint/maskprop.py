"""Single-frame mask propagation: train a segmenter on one annotated frame
by pasting the object at random translations, then predict masks for the
whole sequence.

The segmenter reuses the base gated trunk with a 1-channel sigmoid head and
takes only the 3-channel frame as input. Predictions are thresholded and
dilated a little so the downstream removal step errs toward over-inclusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
import torch

from . import augment
from .errors import EmptyMask, NonFiniteLoss
from .generator import Generator, NetworkSpec, build_network
from .losses import weighted_bce
from .trainer import deterministic_mode
from .video_io import MaskSequence, VideoSequence


@dataclass
class MaskPropConfig:
    iters: int = 6000
    lr: float = 2e-4
    alpha: float = 0.8
    threshold: float = 0.5
    dilation_px: int = 2
    seed: int = 0
    width_scale: float = 1.0
    max_dilation: int = 16

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.dilation_px < 0:
            raise ValueError("dilation_px must be >= 0")

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(variant="base", width_scale=self.width_scale,
                           max_dilation=self.max_dilation, feed_mask=False,
                           out_channels=1, out_activation="sigmoid")


def paste_object(x0: np.ndarray, m0: np.ndarray, dx: int, dy: int):
    """Copy the object onto a translated location (object pixels overwrite
    background; the original object region stays in place, the loss excludes
    it). Returns (augmented frame, translated mask)."""
    if not m0.any():
        raise EmptyMask("annotated mask has no object pixels")
    m_aug = augment.translate_mask(m0, dx, dy)
    obj = augment.translate_mask(m0, dx, dy)  # footprint of pasted pixels
    shifted = np.zeros_like(x0)
    h, w = m0.shape
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    shifted[ys, xs] = x0[ys_src, xs_src]
    x_aug = np.where(obj[..., None] > 0.5, shifted, x0)
    return x_aug.astype(np.float32), m_aug


def train_mask_net(x0: np.ndarray, m0: np.ndarray,
                   cfg: MaskPropConfig) -> Generator:
    """Fit the segmenter to translated pastes of the single annotated object."""
    if not m0.any():
        raise EmptyMask("annotated mask has no object pixels")
    if deterministic_mode():
        torch.use_deterministic_algorithms(True)
        torch.manual_seed(cfg.seed)
    seg = build_network(cfg.network_spec(), cfg.seed)
    opt = torch.optim.Adam(seg.parameters(), lr=cfg.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    exclude = torch.from_numpy(m0).float()[None, None]
    dummy_mask = torch.zeros(1, 1, *m0.shape)
    for it in range(cfg.iters):
        dx, dy = augment.sample_offset(m0, rng)
        x_aug, m_aug = paste_object(x0, m0, dx, dy)
        x_t = torch.from_numpy(x_aug.transpose(2, 0, 1).copy()).float()[None]
        y_t = torch.from_numpy(m_aug).float()[None, None]
        pred = seg(x_t, dummy_mask)
        loss = weighted_bce(pred, y_t, cfg.alpha, exclude)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"non-finite mask-prop loss at iter {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
    return seg


def predict_frame(seg: Generator, frame: np.ndarray) -> np.ndarray:
    """Raw sigmoid response (H,W) in (0,1) for one frame."""
    x_t = torch.from_numpy(frame.transpose(2, 0, 1).copy()).float()[None]
    dummy_mask = torch.zeros(1, 1, *frame.shape[:2])
    seg.eval()
    with torch.no_grad():
        p = seg(x_t, dummy_mask)
    seg.train()
    return p[0, 0].numpy()


def propagate(video: VideoSequence, seg: Generator, cfg: MaskPropConfig,
              annotated_index: int | None = None,
              annotated_mask: np.ndarray | None = None) -> MaskSequence:
    """Threshold + dilate the segmenter response for every frame.

    When the annotated frame is part of the sequence, pass its index and
    mask: the training loss excludes the original object location, so the
    network's response there is unconstrained and the known annotation is
    used directly for that frame."""
    kernel = None
    if cfg.dilation_px > 0:
        k = 2 * cfg.dilation_px + 1
        kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (k, k))
    out = []
    for i, frame in enumerate(video.frames):
        if annotated_index is not None and i == annotated_index:
            out.append((annotated_mask > 0.5).astype(np.float32))
            continue
        m = (predict_frame(seg, frame) > cfg.threshold).astype(np.uint8)
        if kernel is not None:
            m = cv2.dilate(m, kernel)
        out.append(m.astype(np.float32))
    return MaskSequence(np.stack(out))
