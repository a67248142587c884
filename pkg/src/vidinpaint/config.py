"""Plain ``key = value`` run configuration with '#' comments.

Unknown keys are hard errors; every run writes the fully resolved config
next to its outputs so it can be replayed verbatim.
"""

from __future__ import annotations

import os

from .errors import ConfigError
from .losses import LossWeights
from .trainer import TrainConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_str(text: str):
    return None if text.strip().lower() in ("", "none") else text.strip()


# key -> (parser, default)
KNOWN_KEYS = {
    "seed": (int, 0),
    "deterministic": (_bool, False),
    # network
    "variant": (str, "base"),
    "width_scale": (float, 1.0),
    "max_dilation": (int, 16),
    "feed_mask": (_bool, True),
    "gate_order": (str, "standard"),
    # training schedule
    "warmup_iters": (int, 60000),
    "regularized_iters": (int, 20000),
    "lr": (float, 2e-4),
    "batch": (int, 1),
    "checkpoint_every": (int, 10000),
    # loss weights and regularizers
    "lambda_a": (float, 0.1),
    "lambda_s": (float, 0.2),
    "alpha": (float, 0.8),
    "use_ambiguity": (_bool, True),
    "use_stabilization": (_bool, True),
    "stab_every": (float, 1.0),
    "encoder": (str, "random"),
    "perceptual_weights": (_opt_str, None),
    "ambiguity_region": (str, "mask"),
    "mask_scheme": (str, "object"),
    # mask propagation
    "maskprop_iters": (int, 6000),
    "maskprop_lr": (float, 2e-4),
    "threshold": (float, 0.5),
    "dilation_px": (int, 2),
    # progressive pipeline
    "scale_analog": (float, 1.0),
    "stage1_iters": (int, 30000),
    "stage2_iters": (int, 45000),
    "stage3_iters": (int, 60000),
    "stage_lr": (float, 1e-4),
    "stage_batch": (int, 2),
    "stages": (int, 3),
    "stage2_grid": (str, "2x2"),
    "stage3_grid": (str, "4x4"),
    "fresh_per_stage": (_bool, False),
    "bas_height_window": (int, 45),
    "bas_width_window": (int, 80),
    "bas_weight": (float, 5.0),
}


class RunConfig:
    """Resolved key-value configuration."""

    def __init__(self, values: dict | None = None):
        self.values = {k: d for k, (_, d) in KNOWN_KEYS.items()}
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = KNOWN_KEYS[key]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        self.values[key] = value

    def __getitem__(self, key: str):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def train_config(self, **overrides) -> TrainConfig:
        v = self.values
        cfg = TrainConfig(
            warmup_iters=v["warmup_iters"],
            regularized_iters=v["regularized_iters"],
            lr=v["lr"],
            batch=v["batch"],
            seed=v["seed"],
            weights=LossWeights(v["lambda_a"], v["lambda_s"], v["alpha"]),
            use_ambiguity=v["use_ambiguity"],
            use_stabilization=v["use_stabilization"],
            checkpoint_every=v["checkpoint_every"],
            variant=v["variant"],
            width_scale=v["width_scale"],
            max_dilation=v["max_dilation"],
            feed_mask=v["feed_mask"],
            gate_order=v["gate_order"],
            encoder=v["encoder"],
            perceptual_weights=v["perceptual_weights"],
            ambiguity_region=v["ambiguity_region"],
            stab_every=v["stab_every"],
            mask_scheme=v["mask_scheme"],
        )
        for k, val in overrides.items():
            setattr(cfg, k, val)
        return cfg

    def write(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            for key in sorted(self.values):
                val = self.values[key]
                if val is None:
                    val = "none"
                fh.write(f"{key} = {val}\n")


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                cfg.set(key, value)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg.set(k, v)
    return cfg
