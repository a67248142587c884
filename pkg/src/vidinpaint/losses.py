"""Training objectives: masked reconstruction, anti-ambiguity contextual
matching, perturbation stabilization, and the weighted BCE used for mask
propagation.

Norm convention: every L1-style term is a mean (not a sum) over its included
elements, so loss magnitudes are resolution-independent and the default
weights transfer across scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import EncoderUnavailable, NonFiniteInput, ShapeMismatch

BCE_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    lambda_a: float = 0.1
    lambda_s: float = 0.2
    alpha: float = 0.8

    def __post_init__(self):
        if self.lambda_a < 0 or self.lambda_s < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")


def _check_shapes(*tensors):
    shapes = {tuple(t.shape[-2:]) for t in tensors}
    if len(shapes) != 1:
        raise ShapeMismatch(f"spatial shapes disagree: {sorted(shapes)}")


def reconstruction_loss(pred: torch.Tensor, target: torch.Tensor,
                        hole_mask: torch.Tensor) -> torch.Tensor:
    """Mean |pred - target| over all elements, zeroed inside the hole.

    Hole pixels contribute nothing to the value or the gradient; the
    denominator is the total element count.
    """
    _check_shapes(pred, target, hole_mask)
    return (torch.abs(pred - target) * (1.0 - hole_mask)).mean()


class RandomConvEncoder(nn.Module):
    """Fixed random 3-layer conv stack (stride 2,2,1) used as a perceptual
    stand-in when pretrained weights are unavailable; output is input/4."""

    def __init__(self, seed: int = 0, channels: int = 32):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        chans = [(3, channels, 2), (channels, channels * 2, 2),
                 (channels * 2, channels * 4, 1)]
        ws, bs = [], []
        for cin, cout, _ in chans:
            std = (cin * 9) ** -0.5
            ws.append(torch.randn(cout, cin, 3, 3, generator=g) * std)
            bs.append(torch.zeros(cout))
        self.strides = [s for _, _, s in chans]
        for i, (w, b) in enumerate(zip(ws, bs)):
            self.register_buffer(f"w{i}", w)
            self.register_buffer(f"b{i}", b)
        self.downscale = 4

    def forward(self, x):
        for i, s in enumerate(self.strides):
            w = getattr(self, f"w{i}")
            b = getattr(self, f"b{i}")
            x = F.conv2d(x, w, b, stride=s, padding=1)
            if i < len(self.strides) - 1:
                x = F.leaky_relu(x, 0.2)
        return x


class VGGFeatureEncoder(nn.Module):
    """Pretrained VGG-19 truncated at relu3_4 (output is input/4)."""

    RELU3_4_INDEX = 18  # slice end: conv/relu stack through relu3_4

    def __init__(self, weights_path: str | None = None):
        super().__init__()
        try:
            from torchvision.models import vgg19
            if weights_path:
                model = vgg19()
                state = torch.load(weights_path, map_location="cpu")
                model.load_state_dict(state)
            else:
                from torchvision.models import VGG19_Weights
                model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:  # noqa: BLE001 - download/IO failures
            raise EncoderUnavailable(
                f"pretrained VGG-19 weights unavailable: {exc}"
            ) from exc
        self.features = model.features[: self.RELU3_4_INDEX].eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.downscale = 4

    def forward(self, x):
        # [-1,1] -> ImageNet-normalized [0,1]
        u = (x + 1.0) / 2.0
        mean = torch.tensor([0.485, 0.456, 0.406], device=x.device).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225], device=x.device).view(1, 3, 1, 1)
        return self.features((u - mean) / std)


def make_encoder(kind: str = "random", seed: int = 0,
                 weights_path: str | None = None) -> nn.Module:
    if kind == "random":
        return RandomConvEncoder(seed=seed)
    if kind == "pretrained":
        return VGGFeatureEncoder(weights_path)
    raise EncoderUnavailable(f"unknown encoder kind {kind!r}")


def extract_features(image: torch.Tensor, encoder: nn.Module) -> torch.Tensor:
    """Spatial feature map (B,C,h,w) from a frame batch (B,3,H,W)."""
    return encoder(image)


def ambiguity_loss(pred: torch.Tensor, target_frame: torch.Tensor,
                   region_mask: torch.Tensor, encoder: nn.Module) -> torch.Tensor:
    """Contextual matching term: mean over source feature points of the
    minimum cosine distance to any target feature point.

    Both frames are multiplied by the region mask before encoding; feature
    points outside the (nearest-downsampled) region are dropped. An empty
    region yields exactly 0.
    """
    _check_shapes(pred, target_frame, region_mask)
    if region_mask.ndim == 2:
        region_mask = region_mask[None, None]
    m3 = region_mask
    fs = extract_features(pred * m3, encoder)
    ft = extract_features(target_frame * m3, encoder)
    mf = F.interpolate(region_mask, size=fs.shape[-2:], mode="nearest")
    keep = mf.reshape(-1) > 0.5
    if not keep.any():
        return pred.sum() * 0.0
    s = fs.permute(0, 2, 3, 1).reshape(-1, fs.shape[1])[keep]
    t = ft.permute(0, 2, 3, 1).reshape(-1, ft.shape[1])[keep]
    s = F.normalize(s, dim=1, eps=1e-8)
    t = F.normalize(t, dim=1, eps=1e-8)
    # all-pair cosine distance; for unit vectors 1 - s.t == |s - t|^2 / 2,
    # and the difference form makes a self-match exactly 0 in floats
    dist = torch.cdist(s, t, compute_mode="donot_use_mm_for_euclid_dist"
                       ).pow(2) / 2.0
    return dist.min(dim=1).values.mean()


def stabilization_loss(pred: torch.Tensor, pred_perturbed: torch.Tensor,
                       x: torch.Tensor, x_perturbed: torch.Tensor,
                       hole: torch.Tensor, hole_perturbed: torch.Tensor) -> torch.Tensor:
    """Mean |(pred' - pred) - (x' - x)| over pixels outside both holes."""
    _check_shapes(pred, pred_perturbed, x, x_perturbed, hole, hole_perturbed)
    delta = (pred_perturbed - pred) - (x_perturbed - x)
    valid = 1.0 - torch.maximum(hole, hole_perturbed)
    denom = valid.sum() * (delta.shape[-3] if delta.ndim >= 3 else 1)
    if denom == 0:
        return pred.sum() * 0.0
    return (torch.abs(delta) * valid).sum() / denom


def weighted_bce(pred_mask: torch.Tensor, target_mask: torch.Tensor,
                 alpha: float = 0.8,
                 exclude: torch.Tensor | None = None) -> torch.Tensor:
    """Asymmetric BCE: false negatives on object pixels cost full weight,
    false positives on background cost ``alpha``; averaged over pixels
    outside ``exclude``."""
    _check_shapes(pred_mask, target_mask)
    y = target_mask
    p = pred_mask.clamp(BCE_EPS, 1.0 - BCE_EPS)
    ll = y * torch.log(p) + alpha * (1.0 - y) * torch.log(1.0 - p)
    if exclude is None:
        return -ll.mean()
    _check_shapes(pred_mask, exclude)
    include = 1.0 - exclude
    denom = include.sum()
    if denom == 0:
        return pred_mask.sum() * 0.0
    return -(ll * include).sum() / denom


def total_loss(rec: torch.Tensor, amb: torch.Tensor, stab: torch.Tensor,
               w: LossWeights, stage: str = "regularized") -> torch.Tensor:
    """Warmup stage: rec only. Regularized: rec + la*amb + ls*stab."""
    for name, t in (("rec", rec), ("amb", amb), ("stab", stab)):
        if not torch.isfinite(torch.as_tensor(t)).all():
            raise NonFiniteInput(f"non-finite {name} component")
    if stage == "warmup":
        return rec
    if stage != "regularized":
        raise ValueError(f"unknown stage {stage!r}")
    return rec + w.lambda_a * amb + w.lambda_s * stab
