"""Mask perturbations, the stabilization transform family, and samplers.

All sampling takes an explicit numpy Generator so callers control
reproducibility; parallel callers must use independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import EmptyMask, OffsetTooLarge, ShapeMismatch

# Transform parameter ranges for the perturbation family g.
TRANSLATION_RANGE = (-3.0, 3.0)       # pixels
ROTATION_RANGE = (-2.0, 2.0)          # degrees
SCALE_RANGE = (0.95, 1.05)
SHEAR_RANGE = (-1.0, 1.0)             # degrees
GAIN_RANGE = (0.95, 1.05)             # linear intensity, in [0,1] space
BLUR_CHOICES = (0, 3, 5)              # Gaussian kernel size; 0 = none


@dataclass(frozen=True)
class TransformParams:
    tx: float = 0.0
    ty: float = 0.0
    rot: float = 0.0
    scale: float = 1.0
    shear: float = 0.0
    gain: float = 1.0
    blur: int = 0


@dataclass(frozen=True)
class BASConfig:
    """Boundary-aware sampling: offsets placing the translated mask centroid
    near the source bounding box get ``weight`` times the base probability."""

    height_window: int = 45
    width_window: int = 80
    weight: float = 5.0


def translate_mask(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift a binary mask by (dx right, dy down); out-of-frame pixels drop."""
    h, w = mask.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise OffsetTooLarge(f"offset ({dx},{dy}) exceeds mask size {w}x{h}")
    out = np.zeros_like(mask)
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def union_mask(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    return np.maximum(a, b)


def _bbox(mask: np.ndarray):
    ys, xs = np.nonzero(mask)
    return xs.min(), xs.max(), ys.min(), ys.max()


def _offset_ranges(mask: np.ndarray):
    """Offset rectangle keeping at least one mask pixel in frame."""
    h, w = mask.shape
    x0, x1, y0, y1 = _bbox(mask)
    return (-int(x1), int(w - 1 - x0)), (-int(y1), int(h - 1 - y0))


def _in_boundary_window(mask: np.ndarray, dx, dy, bas: BASConfig):
    x0, x1, y0, y1 = _bbox(mask)
    ys, xs = np.nonzero(mask)
    cx, cy = xs.mean() + dx, ys.mean() + dy
    near_v = min(abs(cy - y0), abs(cy - y1)) <= bas.height_window
    near_h = min(abs(cx - x0), abs(cx - x1)) <= bas.width_window
    return near_v or near_h


def sample_offset(mask: np.ndarray, rng: np.random.Generator,
                  bas: BASConfig | None = None):
    """Draw a translation offset keeping >=1 mask pixel in frame.

    Without BAS the draw is uniform over the valid offset rectangle. With
    BAS, offsets whose translated centroid lands within the configured
    window of the source bounding box are weighted ``bas.weight`` : 1.
    """
    if not mask.any():
        raise EmptyMask("cannot sample an offset for an empty mask")
    (dx_lo, dx_hi), (dy_lo, dy_hi) = _offset_ranges(mask)
    if bas is None:
        return (int(rng.integers(dx_lo, dx_hi + 1)),
                int(rng.integers(dy_lo, dy_hi + 1)))

    x0, x1, y0, y1 = _bbox(mask)
    ys, xs = np.nonzero(mask)
    cx, cy = xs.mean(), ys.mean()
    dxs = np.arange(dx_lo, dx_hi + 1)
    dys = np.arange(dy_lo, dy_hi + 1)
    near_h = np.minimum(np.abs(cx + dxs - x0), np.abs(cx + dxs - x1)) \
        <= bas.width_window
    near_v = np.minimum(np.abs(cy + dys - y0), np.abs(cy + dys - y1)) \
        <= bas.height_window
    n_in = (near_v.sum() * dxs.size + near_h.sum() * dys.size
            - near_v.sum() * near_h.sum())
    n_total = dxs.size * dys.size
    if n_in == 0 or n_in == n_total:
        return (int(rng.integers(dx_lo, dx_hi + 1)),
                int(rng.integers(dy_lo, dy_hi + 1)))
    p_boundary = bas.weight * n_in / (bas.weight * n_in + (n_total - n_in))
    want_boundary = bool(rng.random() < p_boundary)
    while True:  # rejection sample within the chosen stratum
        dx = int(rng.integers(dx_lo, dx_hi + 1))
        dy = int(rng.integers(dy_lo, dy_hi + 1))
        in_window = bool(near_h[dx - dx_lo] or near_v[dy - dy_lo])
        if in_window == want_boundary:
            return dx, dy


def sample_transform(rng: np.random.Generator) -> TransformParams:
    """Draw one perturbation g uniformly over the documented ranges."""
    return TransformParams(
        tx=float(rng.uniform(*TRANSLATION_RANGE)),
        ty=float(rng.uniform(*TRANSLATION_RANGE)),
        rot=float(rng.uniform(*ROTATION_RANGE)),
        scale=float(rng.uniform(*SCALE_RANGE)),
        shear=float(rng.uniform(*SHEAR_RANGE)),
        gain=float(rng.uniform(*GAIN_RANGE)),
        blur=int(rng.choice(BLUR_CHOICES)),
    )


def _affine_matrix(p: TransformParams, h: int, w: int) -> np.ndarray:
    """translate o rotate o scale o shear, about the image center."""
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    th = np.deg2rad(p.rot)
    sh = np.tan(np.deg2rad(p.shear))
    rot = np.array([[np.cos(th), -np.sin(th), 0],
                    [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    scale = np.diag([p.scale, p.scale, 1.0])
    shear = np.array([[1.0, sh, 0], [0, 1.0, 0], [0, 0, 1]])
    center = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    uncenter = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    trans = np.array([[1, 0, p.tx], [0, 1, p.ty], [0, 0, 1.0]])
    m = trans @ center @ rot @ scale @ shear @ uncenter
    return m[:2].astype(np.float64)


def apply_transform(image: np.ndarray, p: TransformParams,
                    geometric_only: bool = False) -> np.ndarray:
    """Warp (and optionally re-expose/blur) an image or binary mask.

    Masks must be warped with geometric_only=True, which uses nearest
    resampling and skips the intensity filters. Out-of-frame pixels fill
    with zero. Intensity gain acts in [0,1] space assuming [-1,1] input.
    """
    squeeze = image.ndim == 2
    src = image[..., None] if squeeze else image
    h, w = src.shape[:2]
    m = _affine_matrix(p, h, w)
    flags = cv2.INTER_NEAREST if geometric_only else cv2.INTER_LINEAR
    out = cv2.warpAffine(src.astype(np.float32), m, (w, h), flags=flags,
                         borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    if out.ndim == 2:
        out = out[..., None]
    if not geometric_only:
        u = (out + 1.0) / 2.0
        u = u * p.gain
        if p.blur:
            u = cv2.GaussianBlur(u, (p.blur, p.blur), 0)
            if u.ndim == 2:
                u = u[..., None]
        out = np.clip(2.0 * u - 1.0, -1.0, 1.0)
    return out[..., 0] if squeeze else out


def free_form_mask(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Random-stroke mask: 1-5 random walks, thickness 10-40 px.

    Strokes are re-drawn thinner if coverage exceeds half the frame, so the
    area fraction always lands in (0, 0.5].
    """
    max_thick = max(2, min(40, min(h, w) // 2))
    for attempt in range(20):
        mask = np.zeros((h, w), dtype=np.uint8)
        n_strokes = int(rng.integers(1, 6))
        thick_hi = max(2, max_thick // (attempt + 1))
        thick_lo = min(10, thick_hi)
        for _ in range(n_strokes):
            thickness = int(rng.integers(thick_lo, thick_hi + 1))
            x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
            n_seg = int(rng.integers(2, 9))
            for _ in range(n_seg):
                angle = rng.uniform(0, 2 * np.pi)
                length = int(rng.integers(max(2, min(h, w) // 8),
                                          max(3, min(h, w) // 3)))
                x2 = int(np.clip(x + length * np.cos(angle), 0, w - 1))
                y2 = int(np.clip(y + length * np.sin(angle), 0, h - 1))
                cv2.line(mask, (x, y), (x2, y2), 1, thickness)
                x, y = x2, y2
        frac = mask.mean()
        if 0 < frac <= 0.5:
            return mask.astype(np.float32)
    # Last resort: a single thin stroke is always under half coverage.
    mask = np.zeros((h, w), dtype=np.uint8)
    cv2.line(mask, (0, 0), (w - 1, h - 1), 1, 1)
    return mask.astype(np.float32)
