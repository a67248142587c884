"""Per-video internal-learning video inpainting with a gated-convolution
generator, ambiguity/stabilization regularizers, single-frame mask
propagation, and a progressive high-resolution pipeline."""

from .augment import (
    BASConfig,
    TransformParams,
    apply_transform,
    free_form_mask,
    sample_offset,
    sample_transform,
    translate_mask,
    union_mask,
)
from .estimators import InternalInpainter, MaskPropagator
from .evalkit import (
    EvalReport,
    evaluate_sequences,
    fixed_center_mask,
    flicker_score,
    psnr,
    shuffle_object_protocol,
    ssim,
    temporal_profile,
)
from .generator import Generator, LayerSpec, NetworkSpec, build_network
from .losses import (
    LossWeights,
    ambiguity_loss,
    make_encoder,
    reconstruction_loss,
    stabilization_loss,
    total_loss,
    weighted_bce,
)
from .maskprop import MaskPropConfig, paste_object, propagate, train_mask_net
from .progressive import (
    StagePlan,
    build_grid_masks,
    default_stage_plans,
    grid_inference,
    run_progressive,
    sample_training_patch,
)
from .trainer import (
    TrainConfig,
    TrainState,
    infer_sequence,
    train_internal,
    train_step,
)
from .video_io import (
    MaskSequence,
    VideoSequence,
    composite,
    load_masks,
    load_sequence,
    save_masks,
    save_sequence,
)

__version__ = "0.1.0"
