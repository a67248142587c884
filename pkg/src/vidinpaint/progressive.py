"""Three-stage progressive pipeline for very high resolutions: coarse
full-frame inpainting, then patch-based refinement at each higher resolution
using the upsampled previous result as a 3-channel prior, with grid mask
sets, boundary-aware sampling, and feather-blended grid inference.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import cv2
import numpy as np
import torch

from . import augment
from .errors import IndivisibleGrid, NoEligibleMask, ShapeMismatch
from .generator import Generator
from .trainer import (
    TrainConfig,
    deterministic_mode,
    infer_sequence,
    init_state,
    train_internal,
)
from .video_io import MaskSequence, VideoSequence, composite, save_sequence

log = logging.getLogger(__name__)

ELIGIBLE_MIN_PIXELS = 1000
DEFAULT_STAGE_ITERS = (30000, 45000, 60000)
DEFAULT_STAGE_LR = 1e-4
DEFAULT_STAGE_BATCH = 2
FULL_STAGE_RES = ((960, 540), (1920, 1080), (3840, 2160))
FULL_STAGE_GRIDS = ((1, 1), (2, 2), (4, 4))


@dataclass(frozen=True)
class StagePlan:
    stage_index: int
    train_res: tuple  # (W, H)
    patch_res: tuple = (960, 540)
    grid: tuple = (1, 1)  # (cols, rows)
    iters: int = 30000
    lr: float = DEFAULT_STAGE_LR
    batch: int = DEFAULT_STAGE_BATCH
    use_prior: bool = False


def default_stage_plans(scale: float = 1.0, iters=None) -> list:
    """The published three-stage schedule, optionally scaled down for
    desk-scale runs (resolutions snap to multiples of 4)."""
    if iters is None:
        iters = DEFAULT_STAGE_ITERS
    w1 = max(32, int(round(FULL_STAGE_RES[0][0] * scale / 4)) * 4)
    h1 = max(32, int(round(FULL_STAGE_RES[0][1] * scale / 4)) * 4)
    plans = []
    for k in range(3):
        mult = 2 ** k
        plans.append(StagePlan(
            stage_index=k + 1,
            train_res=(w1 * mult, h1 * mult),
            patch_res=(w1, h1),
            grid=FULL_STAGE_GRIDS[k],
            iters=iters[k],
            use_prior=k > 0,
        ))
    return plans


@dataclass
class GridMaskSet:
    """Per-frame, per-cell crops of the full-resolution masks."""

    cells: list  # list over frames of list over cells of (H,W) arrays
    eligible: list  # parallel booleans: cell has >= min_pixels object pixels
    min_pixels: int = ELIGIBLE_MIN_PIXELS

    def eligible_masks(self) -> list:
        out = []
        for frame_cells, frame_flags in zip(self.cells, self.eligible):
            out.extend(c for c, e in zip(frame_cells, frame_flags) if e)
        return out


def build_grid_masks(masks: MaskSequence, grid: tuple,
                     min_pixels: int = ELIGIBLE_MIN_PIXELS) -> GridMaskSet:
    cols, rows = grid
    n, h, w = masks.masks.shape
    if h % rows or w % cols:
        raise IndivisibleGrid(f"{w}x{h} not divisible by grid {cols}x{rows}")
    ch, cw = h // rows, w // cols
    cells, eligible = [], []
    for k in range(n):
        frame_cells, frame_flags = [], []
        for r in range(rows):
            for c in range(cols):
                cell = masks.masks[k, r * ch:(r + 1) * ch, c * cw:(c + 1) * cw]
                frame_cells.append(cell.copy())
                frame_flags.append(bool(cell.sum() >= min_pixels))
        cells.append(frame_cells)
        eligible.append(frame_flags)
    return GridMaskSet(cells, eligible, min_pixels)


def _fit_to(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Center-crop or zero-pad a mask to (h, w)."""
    out = np.zeros((h, w), dtype=np.float32)
    mh, mw = mask.shape
    sh, sw = min(h, mh), min(w, mw)
    out[:sh, :sw] = mask[:sh, :sw]
    return out


def sample_training_patch(frame: np.ndarray, mask: np.ndarray,
                          prior: np.ndarray | None,
                          rng: np.random.Generator,
                          bas: augment.BASConfig | None,
                          grid_masks: GridMaskSet,
                          patch_res: tuple):
    """Aligned (image, mask, prior) crops plus an augmentation mask.

    The augmentation mask is a random eligible grid-cell mask translated with
    BAS weighting; with no eligible cell a free-form mask is drawn instead
    (logged once per call site).
    """
    pw, ph = patch_res
    h, w = frame.shape[:2]
    if h < ph or w < pw:
        raise ShapeMismatch(f"frame {w}x{h} smaller than patch {pw}x{ph}")
    top = int(rng.integers(0, h - ph + 1))
    left = int(rng.integers(0, w - pw + 1))
    img_p = frame[top:top + ph, left:left + pw]
    mask_p = mask[top:top + ph, left:left + pw]
    prior_p = prior[top:top + ph, left:left + pw] if prior is not None else None

    pool = grid_masks.eligible_masks()
    if pool:
        base = _fit_to(pool[int(rng.integers(len(pool)))], ph, pw)
        if base.any():
            dx, dy = augment.sample_offset(base, rng, bas)
            aug = augment.translate_mask(base, dx, dy)
        else:
            aug = augment.free_form_mask(ph, pw, rng)
    else:
        log.info("no eligible grid mask; falling back to free-form")
        aug = augment.free_form_mask(ph, pw, rng)
    return img_p, mask_p, prior_p, aug, (top, left)


def _resize_frames(frames: np.ndarray, w: int, h: int) -> np.ndarray:
    out = np.stack([cv2.resize(f, (w, h), interpolation=cv2.INTER_LINEAR)
                    for f in frames])
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def _resize_masks(masks: np.ndarray, w: int, h: int) -> np.ndarray:
    return np.stack([cv2.resize(m, (w, h), interpolation=cv2.INTER_NEAREST)
                     for m in masks]).astype(np.float32)


def _feather_weight(ph: int, pw: int, at_top: bool, at_bottom: bool,
                    at_left: bool, at_right: bool) -> np.ndarray:
    """Linear tent over the patch, flat against frame borders, floored so
    normalization never divides by zero."""
    ramp_y = max(1, ph // 4)
    ramp_x = max(1, pw // 4)
    wy = np.ones(ph)
    wx = np.ones(pw)
    idx = np.arange(ph)
    if not at_top:
        wy = np.minimum(wy, (idx + 1) / ramp_y)
    if not at_bottom:
        wy = np.minimum(wy, (ph - idx) / ramp_y)
    idx = np.arange(pw)
    if not at_left:
        wx = np.minimum(wx, (idx + 1) / ramp_x)
    if not at_right:
        wx = np.minimum(wx, (pw - idx) / ramp_x)
    return np.maximum(np.outer(wy, wx), 1e-3).astype(np.float64)


def _forward_patch(gen: Generator, img: np.ndarray, mask: np.ndarray,
                   prior: np.ndarray | None) -> np.ndarray:
    x = torch.from_numpy(img.transpose(2, 0, 1).copy()).float()[None]
    m = torch.from_numpy(mask.copy()).float()[None, None]
    p = None
    if prior is not None:
        p = torch.from_numpy(prior.transpose(2, 0, 1).copy()).float()[None]
    gen.eval()
    with torch.no_grad():
        y = gen(x * (1 - m), m, p)
    gen.train()
    if isinstance(y, tuple):
        y = y[0]
    return y[0].permute(1, 2, 0).numpy()


def enumerate_patches(h: int, w: int, grid: tuple) -> list:
    """Cell patches plus one seam patch centered on each interior grid-line
    segment. Returns (top, left, kind) with kind in {cell, vseam, hseam}."""
    cols, rows = grid
    if h % rows or w % cols:
        raise IndivisibleGrid(f"{w}x{h} not divisible by grid {cols}x{rows}")
    ch, cw = h // rows, w // cols
    patches = [(r * ch, c * cw, "cell") for r in range(rows)
               for c in range(cols)]
    for c in range(1, cols):  # vertical seams
        left = c * cw - cw // 2
        patches.extend((r * ch, left, "vseam") for r in range(rows))
    for r in range(1, rows):  # horizontal seams
        top = r * ch - ch // 2
        patches.extend((top, c * cw, "hseam") for c in range(cols))
    return patches


def grid_inference(gen: Generator, frame: np.ndarray, mask: np.ndarray,
                   prior: np.ndarray | None, grid: tuple) -> np.ndarray:
    """Evaluate the generator per grid cell plus seam patches, feather-blend
    the overlaps, and composite against the input outside the mask."""
    h, w = frame.shape[:2]
    cols, rows = grid
    ch, cw = h // rows, w // cols
    acc = np.zeros((h, w, 3), dtype=np.float64)
    weight = np.zeros((h, w, 1), dtype=np.float64)
    for top, left, _ in enumerate_patches(h, w, grid):
        img_p = frame[top:top + ch, left:left + cw]
        mask_p = mask[top:top + ch, left:left + cw]
        prior_p = prior[top:top + ch, left:left + cw] \
            if prior is not None else None
        out = _forward_patch(gen, img_p, mask_p, prior_p)
        wmap = _feather_weight(ch, cw, top == 0, top + ch == h,
                               left == 0, left + cw == w)[..., None]
        acc[top:top + ch, left:left + cw] += out * wmap
        weight[top:top + ch, left:left + cw] += wmap
    blended = (acc / weight).astype(np.float32)
    return np.where(mask[..., None] > 0.5, blended,
                    frame).astype(np.float32)


def _stage_config(plan: StagePlan, base_cfg: TrainConfig) -> TrainConfig:
    return replace(
        base_cfg,
        warmup_iters=plan.iters,
        regularized_iters=0,
        lr=plan.lr,
        batch=plan.batch,
        use_prior=plan.use_prior,
        use_ambiguity=False,
        use_stabilization=False,
    )


def _train_stage_patches(video: VideoSequence, masks: MaskSequence,
                         prior_frames: np.ndarray, plan: StagePlan,
                         cfg: TrainConfig, init_from: Generator | None,
                         bas: augment.BASConfig | None,
                         progress: bool = False) -> Generator:
    """Patch-sampled reconstruction training for refinement stages."""
    from .generator import build_network
    from .losses import reconstruction_loss

    if deterministic_mode():
        torch.use_deterministic_algorithms(True)
        torch.manual_seed(cfg.seed)
    gen = build_network(cfg.network_spec(), cfg.seed)
    if init_from is not None:
        try:
            gen.load_state_dict(init_from.state_dict())
        except RuntimeError:
            log.info("previous stage incompatible; training fresh")
    opt = torch.optim.Adam(gen.parameters(), lr=cfg.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    grid_masks = build_grid_masks(masks, plan.grid)
    n = video.n_frames
    for it in range(plan.iters):
        losses = []
        for _ in range(max(1, plan.batch)):
            i = int(rng.integers(n))
            img_p, mask_p, prior_p, aug, _ = sample_training_patch(
                video.frames[i], masks.masks[i], prior_frames[i], rng, bas,
                grid_masks, plan.patch_res)
            hole = augment.union_mask(aug, mask_p)
            x = torch.from_numpy(img_p.transpose(2, 0, 1).copy()).float()[None]
            m_hole = torch.from_numpy(hole).float()[None, None]
            m_i = torch.from_numpy(mask_p.copy()).float()[None, None]
            p = torch.from_numpy(prior_p.transpose(2, 0, 1).copy()).float()[None]
            pred = gen(x * (1 - m_hole), m_hole, p)
            if isinstance(pred, tuple):
                pred = pred[0]
            losses.append(reconstruction_loss(pred, x, m_i))
        loss = torch.stack(losses).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if progress and (it + 1) % 500 == 0:
            print(f"stage{plan.stage_index} iter {it + 1}/{plan.iters} "
                  f"rec={float(loss):.4f}", flush=True)
    return gen


def run_progressive(video: VideoSequence, masks: MaskSequence, plans: list,
                    base_cfg: TrainConfig | None = None,
                    workdir: str | None = None,
                    bas: augment.BASConfig | None = None,
                    fresh_per_stage: bool = False,
                    progress: bool = False) -> VideoSequence:
    """Run the staged pipeline and return the full-resolution composite."""
    if base_cfg is None:
        base_cfg = TrainConfig()
    if bas is None:
        bas = augment.BASConfig()
    h0, w0 = video.frames.shape[1:3]
    prev_result = None  # frames at the previous stage's train_res
    prev_gen = None
    for plan in plans:
        w, h = plan.train_res
        stage_frames = _resize_frames(video.frames, w, h)
        stage_masks = _resize_masks(masks.masks, w, h)
        stage_video = VideoSequence(stage_frames, video.frame_names)
        stage_mseq = MaskSequence(stage_masks)
        cfg = _stage_config(plan, base_cfg)
        if plan.stage_index == 1 or not plan.use_prior:
            state = init_state(stage_video, stage_mseq, cfg)
            if plan.iters > 0:
                state = train_internal(stage_video, stage_mseq, cfg,
                                       progress=progress)
            gen = state.generator
            result = infer_sequence(gen, stage_video, stage_mseq)
            result_frames = result.frames
        else:
            prior_up = _resize_frames(prev_result, w, h)
            gen = _train_stage_patches(
                stage_video, stage_mseq, prior_up, plan, cfg,
                None if fresh_per_stage else prev_gen, bas, progress)
            result_frames = np.stack([
                grid_inference(gen, stage_frames[i], stage_masks[i],
                               prior_up[i], plan.grid)
                for i in range(video.n_frames)
            ])
        if workdir:
            stage_dir = os.path.join(workdir, f"stage{plan.stage_index}",
                                     "frames")
            save_sequence(VideoSequence(result_frames, video.frame_names),
                          stage_dir)
        prev_result = result_frames
        prev_gen = gen
    if prev_result.shape[1:3] != (h0, w0):
        prev_result = _resize_frames(prev_result, w0, h0)
    pred = VideoSequence(prev_result, video.frame_names)
    return composite(video, pred, masks)
