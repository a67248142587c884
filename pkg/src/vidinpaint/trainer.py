"""Per-video internal training loop: frame/mask sampling, loss assembly,
Adam stepping, resumable checkpointing, and full-sequence inference.

Checkpoints are pickled dicts of numpy arrays (deterministic bytes for
identical state), written atomically as ``ckpt/iter_<n>.bin`` with a
``ckpt/latest`` pointer file. The training log is an append-only CSV
``iter,rec,amb,stab,total,seconds``.
"""

from __future__ import annotations

import csv
import os
import pickle
import tempfile
import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import augment
from .errors import DataError, NonFiniteLoss
from .generator import Generator, NetworkSpec, build_network
from .losses import (
    LossWeights,
    ambiguity_loss,
    make_encoder,
    reconstruction_loss,
    stabilization_loss,
    total_loss,
)
from .video_io import MaskSequence, VideoSequence, composite

RNG_STREAMS = ("frame", "mask", "transform")
INTERMEDIATE_SUPERVISION_WEIGHT = 1.0

DETERMINISTIC_ENV = "INPAINT_DETERMINISTIC"


def deterministic_mode() -> bool:
    return os.environ.get(DETERMINISTIC_ENV, "") == "1"


@dataclass
class TrainConfig:
    warmup_iters: int = 60000
    regularized_iters: int = 20000
    lr: float = 2e-4
    batch: int = 1
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    use_ambiguity: bool = True
    use_stabilization: bool = True
    checkpoint_every: int = 10000
    checkpoint_dir: str | None = None
    log_csv: str | None = None
    # network
    variant: str = "base"
    width_scale: float = 1.0
    max_dilation: int = 16
    feed_mask: bool = True
    gate_order: str = "standard"
    use_prior: bool = False
    # regularizer plumbing
    encoder: str = "random"
    perceptual_weights: str | None = None
    ambiguity_region: str = "mask"  # "mask" | "complement"
    stab_every: float = 1.0
    mask_scheme: str = "object"  # "object" | "freeform"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.warmup_iters < 0 or self.regularized_iters < 0:
            raise ValueError("iteration counts must be >= 0")

    @property
    def total_iters(self) -> int:
        return self.warmup_iters + self.regularized_iters

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(
            variant=self.variant,
            width_scale=self.width_scale,
            max_dilation=self.max_dilation,
            feed_mask=self.feed_mask,
            prior_channels=3 if self.use_prior else 0,
            gate_order=self.gate_order,
        )


@dataclass
class TrainState:
    generator: Generator
    optimizer: torch.optim.Adam
    iteration: int
    rngs: dict
    history: deque
    frames_t: torch.Tensor  # (N,3,H,W)
    masks_t: torch.Tensor   # (N,1,H,W)
    priors_t: torch.Tensor | None = None
    encoder: torch.nn.Module | None = None


def _substreams(seed: int) -> dict:
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(RNG_STREAMS))
    return {name: np.random.default_rng(ss)
            for name, ss in zip(RNG_STREAMS, children)}


def _to_torch(video: VideoSequence, masks: MaskSequence):
    frames = torch.from_numpy(
        np.ascontiguousarray(video.frames.transpose(0, 3, 1, 2))
    ).float()
    m = torch.from_numpy(masks.masks[:, None]).float()
    return frames, m


def init_state(video: VideoSequence, masks: MaskSequence, cfg: TrainConfig,
               priors: VideoSequence | None = None) -> TrainState:
    if video.n_frames != masks.n_frames or \
            video.frames.shape[1:3] != masks.masks.shape[1:]:
        raise DataError("video and masks disagree in shape")
    if deterministic_mode():
        torch.use_deterministic_algorithms(True)
        torch.manual_seed(cfg.seed)
    gen = build_network(cfg.network_spec(), cfg.seed)
    opt = torch.optim.Adam(gen.parameters(), lr=cfg.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    frames_t, masks_t = _to_torch(video, masks)
    priors_t = None
    if cfg.use_prior:
        if priors is None:
            raise DataError("config requests a prior but none was given")
        priors_t, _ = _to_torch(priors, masks)
    encoder = None
    if cfg.use_ambiguity and cfg.regularized_iters > 0:
        encoder = make_encoder(cfg.encoder, seed=cfg.seed,
                               weights_path=cfg.perceptual_weights)
    return TrainState(gen, opt, 0, _substreams(cfg.seed), deque(maxlen=1000),
                      frames_t, masks_t, priors_t, encoder)


def _sample_hole(state: TrainState, masks: MaskSequence, i: int,
                 cfg: TrainConfig, bas: augment.BASConfig | None = None):
    """Union of frame i's mask with this step's augmentation mask."""
    rng = state.rngs["mask"]
    n = masks.n_frames
    h, w = masks.masks.shape[1:]
    m_i = masks.masks[i]
    if cfg.mask_scheme == "freeform":
        m_aug = augment.free_form_mask(h, w, rng)
    else:
        t = int(state.rngs["frame"].integers(n))
        m_t = masks.masks[t]
        if not m_t.any():
            nonempty = [k for k in range(n) if masks.masks[k].any()]
            if not nonempty:
                return m_i.copy()
            m_t = masks.masks[nonempty[int(rng.integers(len(nonempty)))]]
        dx, dy = augment.sample_offset(m_t, rng, bas)
        m_aug = augment.translate_mask(m_t, dx, dy)
    return augment.union_mask(m_aug, m_i)


def _one_sample_loss(state: TrainState, video: VideoSequence,
                     masks: MaskSequence, cfg: TrainConfig):
    rng_f = state.rngs["frame"]
    n = video.n_frames
    i = int(rng_f.integers(n))
    hole_np = _sample_hole(state, masks, i, cfg)
    hole = torch.from_numpy(hole_np).float()[None, None]
    x = state.frames_t[i:i + 1]
    m_i = state.masks_t[i:i + 1]
    prior = state.priors_t[i:i + 1] if state.priors_t is not None else None

    pred = state.generator(x * (1 - hole), hole, prior,
                           return_intermediate=cfg.variant != "base")
    inter = None
    if cfg.variant != "base":
        pred, inter = pred
    rec = reconstruction_loss(pred, x, m_i)
    if inter is not None:
        rec = rec + INTERMEDIATE_SUPERVISION_WEIGHT * \
            reconstruction_loss(inter, x, m_i)

    zero = pred.sum() * 0.0
    amb, stab = zero, zero
    stage = "warmup" if state.iteration < cfg.warmup_iters else "regularized"
    if stage == "regularized":
        if cfg.use_ambiguity:
            t2 = int(rng_f.integers(n))
            region = state.masks_t[t2:t2 + 1]
            if cfg.ambiguity_region == "complement":
                region = 1.0 - region
            amb = ambiguity_loss(pred, state.frames_t[t2:t2 + 1], region,
                                 state.encoder)
        if cfg.use_stabilization and \
                state.rngs["transform"].random() < cfg.stab_every:
            p = augment.sample_transform(state.rngs["transform"])
            x_pert_np = augment.apply_transform(video.frames[i], p)
            # nearest-warp commutes with union, so g(M't u Mi) = g(M't) u g(Mi)
            hole_pert_np = augment.apply_transform(hole_np, p,
                                                   geometric_only=True)
            m_i_pert_np = augment.apply_transform(
                masks.masks[i], p, geometric_only=True)
            x_pert = torch.from_numpy(
                x_pert_np.transpose(2, 0, 1)).float()[None]
            hole_pert = torch.from_numpy(hole_pert_np).float()[None, None]
            m_i_pert = torch.from_numpy(m_i_pert_np).float()[None, None]
            prior_pert = None
            if prior is not None:
                prior_np = prior[0].permute(1, 2, 0).numpy()
                prior_pert = torch.from_numpy(
                    augment.apply_transform(prior_np, p)
                    .transpose(2, 0, 1).copy()).float()[None]
            pred_pert = state.generator(x_pert * (1 - hole_pert), hole_pert,
                                        prior_pert)
            if cfg.variant != "base" and isinstance(pred_pert, tuple):
                pred_pert = pred_pert[0]
            stab = stabilization_loss(pred, pred_pert, x, x_pert,
                                      m_i, m_i_pert)
    total = total_loss(rec, amb, stab, cfg.weights, stage)
    return total, rec, amb, stab, {"frame": i, "hole": hole_np}


def train_step(state: TrainState, video: VideoSequence, masks: MaskSequence,
               cfg: TrainConfig):
    """One optimization step (averaging cfg.batch samples); returns the
    mutated state and a dict of loss components."""
    state.optimizer.zero_grad()
    totals = []
    recs, ambs, stabs = [], [], []
    last_dump = None
    for _ in range(max(1, cfg.batch)):
        total, rec, amb, stab, dump = _one_sample_loss(state, video, masks, cfg)
        totals.append(total)
        recs.append(float(rec.detach()))
        ambs.append(float(amb.detach()))
        stabs.append(float(stab.detach()))
        last_dump = dump
    loss = torch.stack(totals).mean()
    if not torch.isfinite(loss):
        path = _dump_diagnostics(state, cfg, last_dump)
        raise NonFiniteLoss(
            f"non-finite loss at iteration {state.iteration}", path)
    loss.backward()
    state.optimizer.step()
    state.iteration += 1
    components = {
        "rec": float(np.mean(recs)),
        "amb": float(np.mean(ambs)),
        "stab": float(np.mean(stabs)),
        "total": float(loss.detach()),
    }
    state.history.append(components)
    return state, components


def _dump_diagnostics(state: TrainState, cfg: TrainConfig, dump) -> str:
    out = os.path.join(tempfile.gettempdir(),
                       f"vidinpaint_nan_iter{state.iteration}.npz")
    np.savez(out, iteration=state.iteration, frame=dump["frame"],
             hole=dump["hole"])
    return out


# ---------------------------------------------------------------------------
# Checkpointing


def _tensor_tree_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy()
    if isinstance(obj, dict):
        return {k: _tensor_tree_to_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_tensor_tree_to_numpy(v) for v in obj)
    return obj


def _tensor_tree_to_torch(obj):
    if isinstance(obj, np.ndarray):
        return torch.from_numpy(obj.copy())
    if isinstance(obj, dict):
        return {k: _tensor_tree_to_torch(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_tensor_tree_to_torch(v) for v in obj)
    return obj


def checkpoint_bytes(state: TrainState, cfg: TrainConfig) -> bytes:
    payload = {
        "format": "vidinpaint-ckpt-v1",
        "spec": asdict(cfg.network_spec()),
        "seed": cfg.seed,
        "iteration": state.iteration,
        "model": _tensor_tree_to_numpy(state.generator.state_dict()),
        "optimizer": _tensor_tree_to_numpy(state.optimizer.state_dict()),
        "rng": {name: state.rngs[name].bit_generator.state
                for name in RNG_STREAMS},
    }
    return pickle.dumps(payload, protocol=4)


def save_checkpoint(state: TrainState, cfg: TrainConfig, ckpt_dir: str) -> str:
    os.makedirs(ckpt_dir, exist_ok=True)
    path = os.path.join(ckpt_dir, f"iter_{state.iteration}.bin")
    blob = checkpoint_bytes(state, cfg)
    fd, tmp = tempfile.mkstemp(dir=ckpt_dir)
    with os.fdopen(fd, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    with open(os.path.join(ckpt_dir, "latest.tmp"), "w") as fh:
        fh.write(os.path.basename(path))
    os.replace(os.path.join(ckpt_dir, "latest.tmp"),
               os.path.join(ckpt_dir, "latest"))
    return path


def load_checkpoint(path: str, video: VideoSequence, masks: MaskSequence,
                    cfg: TrainConfig,
                    priors: VideoSequence | None = None) -> TrainState:
    with open(path, "rb") as fh:
        payload = pickle.loads(fh.read())
    if payload.get("format") != "vidinpaint-ckpt-v1":
        raise DataError(f"not a vidinpaint checkpoint: {path}")
    state = init_state(video, masks, cfg, priors)
    state.generator.load_state_dict(_tensor_tree_to_torch(payload["model"]))
    state.optimizer.load_state_dict(
        _tensor_tree_to_torch(payload["optimizer"]))
    state.iteration = payload["iteration"]
    for name in RNG_STREAMS:
        state.rngs[name].bit_generator.state = payload["rng"][name]
    return state


def latest_checkpoint(ckpt_dir: str) -> str | None:
    pointer = os.path.join(ckpt_dir, "latest")
    if not os.path.exists(pointer):
        return None
    with open(pointer) as fh:
        return os.path.join(ckpt_dir, fh.read().strip())


# ---------------------------------------------------------------------------
# Driver


def train_internal(video: VideoSequence, masks: MaskSequence,
                   cfg: TrainConfig, resume_from: str | None = None,
                   priors: VideoSequence | None = None,
                   progress: bool = False) -> TrainState:
    """Run the full staged schedule and return the final state."""
    if resume_from:
        state = load_checkpoint(resume_from, video, masks, cfg, priors)
    else:
        state = init_state(video, masks, cfg, priors)
    log_fh = None
    writer = None
    if cfg.log_csv:
        new = not os.path.exists(cfg.log_csv)
        log_fh = open(cfg.log_csv, "a", newline="")
        writer = csv.writer(log_fh)
        if new:
            writer.writerow(["iter", "rec", "amb", "stab", "total", "seconds"])
    try:
        t0 = time.time()
        while state.iteration < cfg.total_iters:
            state, comps = train_step(state, video, masks, cfg)
            if writer is not None:
                writer.writerow([state.iteration, f"{comps['rec']:.6f}",
                                 f"{comps['amb']:.6f}", f"{comps['stab']:.6f}",
                                 f"{comps['total']:.6f}",
                                 f"{time.time() - t0:.3f}"])
            if progress and state.iteration % 500 == 0:
                print(f"iter {state.iteration}/{cfg.total_iters} "
                      f"rec={comps['rec']:.4f}", flush=True)
            if cfg.checkpoint_dir and cfg.checkpoint_every and \
                    state.iteration % cfg.checkpoint_every == 0:
                save_checkpoint(state, cfg, cfg.checkpoint_dir)
        if cfg.checkpoint_dir:
            save_checkpoint(state, cfg, cfg.checkpoint_dir)
    finally:
        if log_fh is not None:
            log_fh.close()
    return state


def infer_sequence(gen: Generator, video: VideoSequence, masks: MaskSequence,
                   priors: VideoSequence | None = None) -> VideoSequence:
    """Per-frame forward pass on the test masks, composited onto the input."""
    frames_t, masks_t = _to_torch(video, masks)
    priors_t = None
    if priors is not None:
        priors_t, _ = _to_torch(priors, masks)
    outs = []
    gen.eval()
    with torch.no_grad():
        for i in range(video.n_frames):
            m = masks_t[i:i + 1]
            prior = priors_t[i:i + 1] if priors_t is not None else None
            y = gen(frames_t[i:i + 1] * (1 - m), m, prior)
            if isinstance(y, tuple):
                y = y[0]
            outs.append(y[0].permute(1, 2, 0).numpy())
    gen.train()
    pred = VideoSequence(np.clip(np.stack(outs), -1, 1).astype(np.float32),
                         video.frame_names)
    return composite(video, pred, masks)
