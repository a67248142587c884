"""PSNR/SSIM metrics, the fixed-mask and shuffled-object-mask evaluation
protocols, and temporal-consistency profiling.

All metrics interpret pixel values in [0, 1]; helpers convert from the
in-memory [-1, 1] range. The flicker score (mean temporal L1 of a line
profile) is an artifact metric, not taken from any published benchmark.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import (
    FrameTooSmall,
    OutOfBounds,
    ShapeMismatch,
    TooFewSequences,
    TooShort,
)
from .video_io import MaskSequence, VideoSequence

PSNR_CAP = 99.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def to_unit(frames: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1]."""
    return (frames.astype(np.float64) + 1.0) / 2.0


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10*log10(1/MSE) for [0,1] images; identical inputs cap at 99 dB.

    With ``mask`` given, the MSE is restricted to mask=1 pixels."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    d = (a.astype(np.float64) - b.astype(np.float64)) ** 2
    if mask is not None:
        m = mask.astype(bool)
        if a.ndim == m.ndim + 1:
            m = m[..., None]
        sel = np.broadcast_to(m, d.shape)
        if not sel.any():
            return PSNR_CAP
        mse = d[sel].mean()
    else:
        mse = d.mean()
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    g = cv2.getGaussianKernel(size, sigma)
    return (g @ g.T).astype(np.float64)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5),
    k1=0.01, k2=0.03, on the channel-mean grayscale of [0,1] images."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if x.ndim == 3:
        x = x.mean(axis=-1)
        y = y.mean(axis=-1)
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    def filt(img):
        return cv2.filter2D(img, -1, win, borderType=cv2.BORDER_REFLECT)

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float((num / den).mean())


def fixed_center_mask(h: int, w: int) -> np.ndarray:
    """Centered rectangle of floor(W/4) x floor(H/4)."""
    if h < 8 or w < 8:
        raise FrameTooSmall(f"frame {w}x{h} too small for the fixed protocol")
    mh, mw = h // 4, w // 4
    top = (h - mh) // 2
    left = (w - mw) // 2
    mask = np.zeros((h, w), dtype=np.float32)
    mask[top:top + mh, left:left + mw] = 1.0
    return mask


def shuffle_object_protocol(videos: list, mask_sets: list, seed: int = 0):
    """Pair every video with a mask set from a different sequence.

    Returns a list of (video_index, mask_index, resized MaskSequence); the
    pairing is a uniformly drawn derangement, masks are nearest-resized to
    each video's resolution, and the original frames serve as ground truth.
    """
    n = len(videos)
    if n < 2 or len(mask_sets) != n:
        raise TooFewSequences("need >= 2 sequences with paired mask sets")
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            break
    tasks = []
    for vi, mi in enumerate(perm):
        video = videos[vi]
        masks = mask_sets[mi].masks
        h, w = video.frames.shape[1:3]
        resized = np.stack([
            cv2.resize(m, (w, h), interpolation=cv2.INTER_NEAREST)
            for m in masks
        ])
        n_frames = video.n_frames
        if resized.shape[0] >= n_frames:
            resized = resized[:n_frames]
        else:
            reps = -(-n_frames // resized.shape[0])
            resized = np.tile(resized, (reps, 1, 1))[:n_frames]
        tasks.append((vi, int(mi), MaskSequence(resized.astype(np.float32))))
    return tasks


def temporal_profile(video: VideoSequence, line: list) -> np.ndarray:
    """Stack one pixel line from every frame: output row k = line in frame k."""
    h, w = video.frames.shape[1:3]
    for r, c in line:
        if not (0 <= r < h and 0 <= c < w):
            raise OutOfBounds(f"({r},{c}) outside {h}x{w}")
    rows = np.array([r for r, _ in line])
    cols = np.array([c for _, c in line])
    return video.frames[:, rows, cols, :].copy()


def flicker_score(profile: np.ndarray) -> float:
    """Mean absolute difference between consecutive profile rows."""
    if profile.shape[0] < 2:
        raise TooShort("profile needs at least 2 rows")
    return float(np.abs(np.diff(profile.astype(np.float64), axis=0)).mean())


@dataclass
class EvalReport:
    protocol: str
    frame_psnr: list = field(default_factory=list)
    frame_ssim: list = field(default_factory=list)
    frame_psnr_hole: list = field(default_factory=list)
    flicker: float | None = None

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.frame_psnr))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.frame_ssim))

    @property
    def mean_psnr_hole(self) -> float:
        return float(np.mean(self.frame_psnr_hole)) \
            if self.frame_psnr_hole else float("nan")

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "psnr", "ssim", "psnr_hole"])
            for k in range(len(self.frame_psnr)):
                hole = (f"{self.frame_psnr_hole[k]:.4f}"
                        if self.frame_psnr_hole else "")
                writer.writerow([k, f"{self.frame_psnr[k]:.4f}",
                                 f"{self.frame_ssim[k]:.4f}", hole])
            writer.writerow(["mean", f"{self.mean_psnr:.4f}",
                             f"{self.mean_ssim:.4f}",
                             f"{self.mean_psnr_hole:.4f}"
                             if self.frame_psnr_hole else ""])
            if self.flicker is not None:
                writer.writerow(["flicker", f"{self.flicker:.6f}", "", ""])

    def table(self) -> str:
        lines = [f"protocol: {self.protocol}",
                 f"mean PSNR: {self.mean_psnr:.3f} dB",
                 f"mean SSIM: {self.mean_ssim:.4f}"]
        if self.frame_psnr_hole:
            lines.append(f"mean hole PSNR: {self.mean_psnr_hole:.3f} dB")
        if self.flicker is not None:
            lines.append(f"flicker: {self.flicker:.6f}")
        return "\n".join(lines)


def evaluate_sequences(result: VideoSequence, truth: VideoSequence,
                       masks: MaskSequence | None = None,
                       protocol: str = "direct") -> EvalReport:
    """Score a result sequence against ground truth, full-frame and, when
    masks are given, hole-only."""
    if result.frames.shape != truth.frames.shape:
        raise ShapeMismatch("result and truth differ in shape")
    report = EvalReport(protocol)
    a = to_unit(result.frames)
    b = to_unit(truth.frames)
    for k in range(result.n_frames):
        report.frame_psnr.append(psnr(a[k], b[k]))
        report.frame_ssim.append(ssim(a[k], b[k]))
        if masks is not None:
            report.frame_psnr_hole.append(psnr(a[k], b[k], masks.masks[k]))
    h, w = result.frames.shape[1:3]
    line = [(h // 2, c) for c in range(w)]
    report.flicker = flicker_score(temporal_profile(result, line))
    return report
