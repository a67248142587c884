"""Command-line entrypoint: train / propagate / progressive / evaluate /
fixtures, driven by a plain ``key = value`` config plus flag overrides.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 non-finite
training loss.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evalkit, fixtures, progressive
from .augment import BASConfig
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, IndivisibleGrid, NonFiniteLoss
from .maskprop import MaskPropConfig, propagate, train_mask_net
from .trainer import DETERMINISTIC_ENV, infer_sequence, train_internal
from .video_io import (
    MaskSequence,
    VideoSequence,
    load_masks,
    load_sequence,
    save_masks,
    save_sequence,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NONFINITE = 3


def _common_overrides(args) -> dict:
    keys = ("seed", "width_scale", "variant", "lr", "batch", "mask_scheme",
            "warmup_iters", "regularized_iters", "use_ambiguity",
            "use_stabilization", "checkpoint_every", "encoder",
            "maskprop_iters", "threshold", "dilation_px", "scale_analog",
            "stages", "stage1_iters", "stage2_iters", "stage3_iters",
            "stage_lr", "stage_batch", "stage2_grid", "stage3_grid",
            "max_dilation", "deterministic")
    return {k: getattr(args, k) for k in keys
            if getattr(args, k, None) is not None}


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), _common_overrides(args))
    if cfg["deterministic"]:
        os.environ[DETERMINISTIC_ENV] = "1"
    return cfg


def _parse_grid(text: str) -> tuple:
    parts = text.lower().split("x")
    if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
        raise ConfigError(f"bad grid spec {text!r}; expected e.g. '2x2'")
    cols, rows = (int(p) for p in parts)
    if cols < 1 or rows < 1:
        raise ConfigError(f"grid sides must be positive, got {text!r}")
    return cols, rows


def _load_root(root: str):
    frames_dir = os.path.join(root, "frames")
    masks_dir = os.path.join(root, "masks")
    if not os.path.isdir(frames_dir):
        raise DataError(f"missing frames directory: {frames_dir}")
    if not os.path.isdir(masks_dir):
        raise DataError(f"missing masks directory: {masks_dir}")
    video = load_sequence(frames_dir)
    masks = load_masks(masks_dir, video)
    return video, masks


def cmd_train(args) -> int:
    cfg = _resolve(args)
    video, masks = _load_root(args.root)
    out = args.out or os.path.join(args.root, "out")
    os.makedirs(out, exist_ok=True)
    cfg.write(os.path.join(out, "resolved.cfg"))
    train_cfg = cfg.train_config(
        checkpoint_dir=os.path.join(out, "ckpt"),
        log_csv=os.path.join(out, "train_log.csv"),
    )
    state = train_internal(video, masks, train_cfg,
                           resume_from=args.resume, progress=not args.quiet)
    result = infer_sequence(state.generator, video, masks)
    save_sequence(result, os.path.join(out, "frames"))
    print(f"wrote {result.n_frames} frames to {os.path.join(out, 'frames')}")
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = _resolve(args)
    frames_dir = os.path.join(args.root, "frames")
    if not os.path.isdir(frames_dir):
        raise DataError(f"missing frames directory: {frames_dir}")
    video = load_sequence(frames_dir)
    mask_path = args.mask or os.path.join(args.root, "annotated_mask.png")
    if not os.path.exists(mask_path):
        raise DataError(f"missing annotated mask: {mask_path}")
    from PIL import Image
    m0 = (np.asarray(Image.open(mask_path).convert("L")) > 127
          ).astype(np.float32)
    if m0.shape != video.frames.shape[1:3]:
        raise DataError("annotated mask size differs from the frames")
    out = args.out or os.path.join(args.root, "masks_pred")
    os.makedirs(out, exist_ok=True)
    cfg.write(os.path.join(out, "resolved.cfg"))
    prop_cfg = MaskPropConfig(
        iters=cfg["maskprop_iters"], lr=cfg["maskprop_lr"],
        alpha=cfg["alpha"], threshold=cfg["threshold"],
        dilation_px=cfg["dilation_px"], seed=cfg["seed"],
        width_scale=cfg["width_scale"], max_dilation=cfg["max_dilation"],
    )
    seg = train_mask_net(video.frames[0], m0, prop_cfg)
    masks = propagate(video, seg, prop_cfg,
                      annotated_index=0, annotated_mask=m0)
    save_masks(masks, out, video.frame_names)
    print(f"wrote {masks.n_frames} masks to {out}")
    return EXIT_OK


def cmd_progressive(args) -> int:
    cfg = _resolve(args)
    video, masks = _load_root(args.root)
    out = args.out or os.path.join(args.root, "out_progressive")
    os.makedirs(out, exist_ok=True)
    cfg.write(os.path.join(out, "resolved.cfg"))
    iters = (cfg["stage1_iters"], cfg["stage2_iters"], cfg["stage3_iters"])
    plans = progressive.default_stage_plans(cfg["scale_analog"], iters)
    plans = [p for p in plans[: cfg["stages"]]]
    grids = {2: _parse_grid(cfg["stage2_grid"]),
             3: _parse_grid(cfg["stage3_grid"])}
    plans = [progressive.StagePlan(
        p.stage_index, p.train_res, p.patch_res,
        grids.get(p.stage_index, p.grid), p.iters,
        cfg["stage_lr"], cfg["stage_batch"], p.use_prior) for p in plans]
    for p in plans:
        w, h = p.train_res
        cols, rows = p.grid
        if w % cols or h % rows:
            raise IndivisibleGrid(
                f"stage {p.stage_index}: resolution {w}x{h} is not "
                f"divisible by grid {cols}x{rows}")
    bas = BASConfig(cfg["bas_height_window"], cfg["bas_width_window"],
                    cfg["bas_weight"])
    result = progressive.run_progressive(
        video, masks, plans, cfg.train_config(), workdir=out, bas=bas,
        fresh_per_stage=cfg["fresh_per_stage"], progress=not args.quiet)
    save_sequence(result, os.path.join(out, "frames"))
    print(f"wrote {result.n_frames} frames to {os.path.join(out, 'frames')}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _resolve(args)
    if args.protocol == "object-shuffle":
        root = args.truth
        seqs = sorted(
            d for d in os.listdir(root)
            if os.path.isdir(os.path.join(root, d, "frames"))
        ) if os.path.isdir(root) else []
        videos, mask_sets = [], []
        for d in seqs:
            v = load_sequence(os.path.join(root, d, "frames"))
            videos.append(v)
            mask_sets.append(load_masks(os.path.join(root, d, "masks"), v))
        tasks = evalkit.shuffle_object_protocol(videos, mask_sets,
                                                args.seed or 0)
        out = args.out or "shuffle_pairing.csv"
        with open(out, "w") as fh:
            fh.write("video,masks_from\n")
            for vi, mi, _ in tasks:
                fh.write(f"{seqs[vi]},{seqs[mi]}\n")
        print(f"wrote pairing for {len(tasks)} sequences to {out}")
        return EXIT_OK

    if not args.result:
        raise DataError("--result is required for this protocol")
    result = load_sequence(args.result)
    truth = load_sequence(args.truth)
    masks = None
    if args.protocol == "fixed":
        h, w = truth.frames.shape[1:3]
        fixed = evalkit.fixed_center_mask(h, w)
        masks = MaskSequence(np.repeat(fixed[None], truth.n_frames, axis=0))
    elif args.masks:
        masks = load_masks(args.masks, truth)
    report = evalkit.evaluate_sequences(result, truth, masks, args.protocol)
    out = args.out or "eval_report.csv"
    report.write_csv(out)
    print(report.table())
    return EXIT_OK


def cmd_fixtures(args) -> int:
    which = (list(fixtures.FIXTURE_BUILDERS) if args.which == "all"
             else [args.which])
    for name in which:
        if name not in fixtures.FIXTURE_BUILDERS:
            raise ConfigError(f"unknown fixture {name!r}")
        root = os.path.join(args.out, name)
        fixtures.write_fixture(name, root, seed=args.seed or 0)
        print(f"wrote fixture {name} to {root}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--width-scale", dest="width_scale", type=float)
    p.add_argument("--variant", choices=("base", "stacked", "coarse2fine"))
    p.add_argument("--max-dilation", dest="max_dilation", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--deterministic", action="store_const", const=True)
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidinpaint",
        description="Per-video internal-learning video inpainting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="overfit the generator to one video")
    p.add_argument("--root", required=True,
                   help="directory with frames/ and masks/")
    p.add_argument("--out")
    p.add_argument("--resume", help="checkpoint file to resume from")
    p.add_argument("--iters-warmup", dest="warmup_iters", type=int)
    p.add_argument("--iters-reg", dest="regularized_iters", type=int)
    p.add_argument("--mask-scheme", dest="mask_scheme",
                   choices=("object", "freeform"))
    p.add_argument("--no-ambiguity", dest="use_ambiguity",
                   action="store_const", const=False)
    p.add_argument("--no-stabilization", dest="use_stabilization",
                   action="store_const", const=False)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--encoder", choices=("random", "pretrained"))
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("propagate",
                       help="propagate one annotated mask to all frames")
    p.add_argument("--root", required=True)
    p.add_argument("--mask", help="annotated mask PNG (default "
                                  "<root>/annotated_mask.png)")
    p.add_argument("--out")
    p.add_argument("--iters", dest="maskprop_iters", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--dilation-px", dest="dilation_px", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("progressive",
                       help="three-stage high-resolution pipeline")
    p.add_argument("--root", required=True)
    p.add_argument("--out")
    p.add_argument("--scale-analog", dest="scale_analog", type=float)
    p.add_argument("--stages", type=int)
    p.add_argument("--stage1-iters", dest="stage1_iters", type=int)
    p.add_argument("--stage2-iters", dest="stage2_iters", type=int)
    p.add_argument("--stage3-iters", dest="stage3_iters", type=int)
    p.add_argument("--stage-lr", dest="stage_lr", type=float)
    p.add_argument("--stage-batch", dest="stage_batch", type=int)
    p.add_argument("--stage2-grid", dest="stage2_grid")
    p.add_argument("--stage3-grid", dest="stage3_grid")
    _add_common(p)
    p.set_defaults(func=cmd_progressive)

    p = sub.add_parser("evaluate", help="score results against ground truth")
    p.add_argument("--result")
    p.add_argument("--truth", required=True)
    p.add_argument("--masks", help="optional mask directory for hole PSNR")
    p.add_argument("--protocol", default="direct",
                   choices=("direct", "fixed", "object-shuffle"))
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fixtures", help="generate synthetic test videos")
    p.add_argument("--out", required=True)
    p.add_argument("--which", default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteLoss as exc:
        print(f"non-finite loss: {exc} (dump: {exc.dump_path})",
              file=sys.stderr)
        return EXIT_NONFINITE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
