"""Scikit-learn style estimator wrappers around the internal training loops,
so the per-video inpainter and the single-frame mask propagator compose with
pipelines, cloning, and parameter search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import DataError
from .losses import LossWeights
from .maskprop import MaskPropConfig, propagate, train_mask_net
from .trainer import TrainConfig, infer_sequence, train_internal
from .video_io import MaskSequence, VideoSequence


def as_video(x) -> VideoSequence:
    """Accept a VideoSequence or an (N,H,W,3) float array in [-1,1]."""
    if isinstance(x, VideoSequence):
        return x
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise DataError(f"expected (N,H,W,3) frames, got {arr.shape}")
    return VideoSequence(arr)


def as_masks(m) -> MaskSequence:
    """Accept a MaskSequence or an (N,H,W) binary array."""
    if isinstance(m, MaskSequence):
        return m
    arr = np.asarray(m)
    if arr.ndim != 3:
        raise DataError(f"expected (N,H,W) masks, got {arr.shape}")
    return MaskSequence((arr > 0.5).astype(np.float32))


class InternalInpainter(BaseEstimator):
    """Overfits the gated generator to one masked video (fit), then renders
    the composited inpainting for any aligned mask set (predict)."""

    def __init__(self, warmup_iters=60000, regularized_iters=20000,
                 lr=2e-4, batch=1, seed=0, variant="base", width_scale=1.0,
                 max_dilation=16, lambda_a=0.1, lambda_s=0.2,
                 use_ambiguity=True, use_stabilization=True,
                 mask_scheme="object", encoder="random",
                 ambiguity_region="mask", stab_every=1.0):
        self.warmup_iters = warmup_iters
        self.regularized_iters = regularized_iters
        self.lr = lr
        self.batch = batch
        self.seed = seed
        self.variant = variant
        self.width_scale = width_scale
        self.max_dilation = max_dilation
        self.lambda_a = lambda_a
        self.lambda_s = lambda_s
        self.use_ambiguity = use_ambiguity
        self.use_stabilization = use_stabilization
        self.mask_scheme = mask_scheme
        self.encoder = encoder
        self.ambiguity_region = ambiguity_region
        self.stab_every = stab_every

    def _config(self) -> TrainConfig:
        return TrainConfig(
            warmup_iters=self.warmup_iters,
            regularized_iters=self.regularized_iters,
            lr=self.lr, batch=self.batch, seed=self.seed,
            weights=LossWeights(self.lambda_a, self.lambda_s),
            use_ambiguity=self.use_ambiguity,
            use_stabilization=self.use_stabilization,
            checkpoint_every=0, variant=self.variant,
            width_scale=self.width_scale, max_dilation=self.max_dilation,
            encoder=self.encoder, ambiguity_region=self.ambiguity_region,
            stab_every=self.stab_every, mask_scheme=self.mask_scheme,
        )

    def fit(self, X, masks):
        video = as_video(X)
        mseq = as_masks(masks)
        self.state_ = train_internal(video, mseq, self._config())
        return self

    def predict(self, X, masks) -> np.ndarray:
        check_is_fitted(self, "state_")
        video = as_video(X)
        mseq = as_masks(masks)
        return infer_sequence(self.state_.generator, video, mseq).frames

    # inpainting is a frame-to-frame mapping; transform aliases predict
    def transform(self, X, masks) -> np.ndarray:
        return self.predict(X, masks)

    def fit_predict(self, X, masks) -> np.ndarray:
        return self.fit(X, masks).predict(X, masks)


class MaskPropagator(BaseEstimator):
    """Learns an object segmenter from a single annotated frame (fit) and
    predicts binary masks for a whole sequence (predict)."""

    def __init__(self, iters=6000, lr=2e-4, alpha=0.8, threshold=0.5,
                 dilation_px=2, seed=0, width_scale=1.0, max_dilation=16):
        self.iters = iters
        self.lr = lr
        self.alpha = alpha
        self.threshold = threshold
        self.dilation_px = dilation_px
        self.seed = seed
        self.width_scale = width_scale
        self.max_dilation = max_dilation

    def _config(self) -> MaskPropConfig:
        return MaskPropConfig(
            iters=self.iters, lr=self.lr, alpha=self.alpha,
            threshold=self.threshold, dilation_px=self.dilation_px,
            seed=self.seed, width_scale=self.width_scale,
            max_dilation=self.max_dilation,
        )

    def fit(self, frame, mask):
        frame = np.asarray(frame, dtype=np.float32)
        mask = (np.asarray(mask) > 0.5).astype(np.float32)
        if frame.ndim != 3 or frame.shape[-1] != 3:
            raise DataError(f"expected (H,W,3) frame, got {frame.shape}")
        if mask.shape != frame.shape[:2]:
            raise DataError("annotated mask must match the frame size")
        self.segmenter_ = train_mask_net(frame, mask, self._config())
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "segmenter_")
        video = as_video(X)
        return propagate(video, self.segmenter_, self._config()).masks
