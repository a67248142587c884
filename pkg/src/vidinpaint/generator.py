"""Gated-convolution inpainting generator in three capacities.

Layer strings use C(out_c, k, stride, dilation) for gated conv blocks,
D(...) for bilinear-upsample + gated conv, and O for the 1x1 gated output
block with tanh. The conv inside a gated block emits 2*out_c channels which
are split into a feature half and a gate half, combined as
ELU(feature) * sigmoid(gate), so the block's effective width is out_c.
All padding is reflection padding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ChannelMismatch, InvalidSpec, NonFiniteInput

BASE_TRUNK = (
    "C(48,5,1,1)-C(96,3,2,1)-C(96,3,1,1)-C(192,3,2,1)-C(192,3,1,1)-"
    "C(192,3,1,1)-C(192,3,1,2)-C(192,3,1,4)-C(192,3,1,8)-C(192,3,1,16)-"
    "C(192,3,1,1)-C(192,3,1,1)-D(96,3,1,1)-C(96,3,1,1)-D(48,3,1,1)-"
    "C(24,3,1,1)-O"
)
REFINEMENT_BRANCH = (
    "C(48,5,1,1)-C(96,3,2,1)-C(96,3,1,1)-C(192,3,2,1)-C(192,3,1,1)-"
    "C(192,3,1,1)-C(192,3,1,2)-C(192,3,1,1)-C(192,3,1,1)"
)

VARIANTS = ("base", "stacked", "coarse2fine")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "ConvBlock" | "DeconvBlock" | "OutputBlock"
    out_c: int = 0
    k_size: int = 0
    stride: int = 1
    dilation: int = 1


def parse_layer_string(text: str) -> list:
    """Parse a C/D/O layer string into LayerSpec entries."""
    specs = []
    for token in text.split("-"):
        token = token.strip()
        if token == "O":
            specs.append(LayerSpec("OutputBlock"))
            continue
        m = re.fullmatch(r"([CD])\((\d+),(\d+),(\d+),(\d+)\)", token)
        if m is None:
            raise InvalidSpec(f"bad layer token {token!r}")
        kind = "ConvBlock" if m.group(1) == "C" else "DeconvBlock"
        specs.append(LayerSpec(kind, *(int(g) for g in m.groups()[1:])))
    return specs


@dataclass
class NetworkSpec:
    """Declarative description of the generator."""

    variant: str = "base"
    width_scale: float = 1.0
    max_dilation: int = 16
    in_channels: int = 3
    feed_mask: bool = True
    prior_channels: int = 0
    out_channels: int = 3
    out_activation: str = "tanh"  # "tanh" | "sigmoid"
    gate_order: str = "standard"  # "standard" | "elu_on_gate"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidSpec(f"unknown variant {self.variant!r}")
        if self.width_scale <= 0:
            raise InvalidSpec("width_scale must be positive")

    @property
    def total_in_channels(self) -> int:
        return self.in_channels + (1 if self.feed_mask else 0) + self.prior_channels

    def scaled(self, out_c: int) -> int:
        """Channel count after width scaling, rounded up to even, >= 2."""
        return max(2, math.ceil(out_c * self.width_scale / 2) * 2)

    def capped(self, dilation: int) -> int:
        return min(dilation, self.max_dilation)


def _reflect_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
    """Reflect-pad by ``pad`` on each side, chunked so feature maps smaller
    than the pad (tiny test inputs under large dilations) still work."""
    remaining = pad
    while remaining > 0:
        step = min(remaining, x.shape[-1] - 1, x.shape[-2] - 1)
        x = F.pad(x, (step, step, step, step), mode="reflect")
        remaining -= step
    return x


def gated_forward(x: torch.Tensor, weight: torch.Tensor,
                  bias: torch.Tensor | None, stride: int = 1,
                  dilation: int = 1, gate_order: str = "standard") -> torch.Tensor:
    """One gated conv: reflect-pad, conv to 2*out_c, split, gate."""
    if x.shape[1] != weight.shape[1]:
        raise ChannelMismatch(
            f"input has {x.shape[1]} channels, weights expect {weight.shape[1]}"
        )
    k = weight.shape[2]
    pad = dilation * (k // 2)
    if pad:
        x = _reflect_pad(x, pad)
    y = F.conv2d(x, weight, bias, stride=stride, dilation=dilation)
    feat, gate = y.chunk(2, dim=1)
    if gate_order == "elu_on_gate":
        return feat * torch.sigmoid(F.elu(gate))
    return F.elu(feat) * torch.sigmoid(gate)


class GatedConvBlock(nn.Module):
    def __init__(self, in_c: int, out_c: int, k: int, stride: int,
                 dilation: int, gate_order: str = "standard"):
        super().__init__()
        self.stride = stride
        self.dilation = dilation
        self.gate_order = gate_order
        self.weight = nn.Parameter(torch.empty(2 * out_c, in_c, k, k))
        self.bias = nn.Parameter(torch.zeros(2 * out_c))

    def forward(self, x):
        return gated_forward(x, self.weight, self.bias, self.stride,
                             self.dilation, self.gate_order)


class DeconvBlock(nn.Module):
    """Bilinear x2 upsampling followed by a gated conv block."""

    def __init__(self, *args, **kwargs):
        super().__init__()
        self.conv = GatedConvBlock(*args, **kwargs)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="bilinear",
                          align_corners=False)
        return self.conv(x)


class OutputBlock(nn.Module):
    """Plain 1x1 conv followed by tanh (or sigmoid for mask heads).

    The head is deliberately ungated: a gated ELU pre-activation saturates
    at -1, which both clips the usable tanh range and kills gradients when
    a sigmoid head is driven toward 0."""

    def __init__(self, in_c: int, out_c: int, activation: str,
                 gate_order: str = "standard"):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_c, in_c, 1, 1))
        self.bias = nn.Parameter(torch.zeros(out_c))
        self.activation = activation

    def forward(self, x):
        y = F.conv2d(x, self.weight, self.bias)
        return torch.sigmoid(y) if self.activation == "sigmoid" else torch.tanh(y)


class _Trunk(nn.Module):
    """One encoder/decoder trunk built from a layer string."""

    def __init__(self, spec: NetworkSpec, in_c: int, layer_string: str,
                 extra_decoder_channels: int = 0, with_output: bool = True):
        super().__init__()
        layers = parse_layer_string(layer_string)
        enc, dec = [], []
        seen_deconv = False
        c = in_c
        for ls in layers:
            if ls.kind == "OutputBlock":
                continue
            if ls.kind == "DeconvBlock" and not seen_deconv:
                seen_deconv = True
                c += extra_decoder_channels
            out_c = spec.scaled(ls.out_c)
            cls = DeconvBlock if ls.kind == "DeconvBlock" else GatedConvBlock
            block = cls(c, out_c, ls.k_size, ls.stride, spec.capped(ls.dilation),
                        gate_order=spec.gate_order)
            (dec if seen_deconv else enc).append(block)
            c = out_c
        if not seen_deconv and extra_decoder_channels:
            c += extra_decoder_channels
        self.encoder = nn.ModuleList(enc)
        self.decoder = nn.ModuleList(dec)
        self.out_channels = c
        self.output = (OutputBlock(c, spec.out_channels, spec.out_activation,
                                   spec.gate_order) if with_output else None)

    def encode(self, x):
        for block in self.encoder:
            x = block(x)
        return x

    def decode(self, x):
        for block in self.decoder:
            x = block(x)
        return self.output(x) if self.output is not None else x

    def forward(self, x):
        return self.decode(self.encode(x))


class Generator(nn.Module):
    """Inpainting network f; input = concat(masked image, mask[, prior])."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        in_c = spec.total_in_channels
        self.trunk1 = _Trunk(spec, in_c, BASE_TRUNK)
        self.trunk2 = None
        self.refine = None
        if spec.variant in ("stacked", "coarse2fine"):
            extra = 0
            if spec.variant == "coarse2fine":
                self.refine = _Trunk(spec, in_c, REFINEMENT_BRANCH,
                                     with_output=False)
                extra = self.refine.out_channels
            self.trunk2 = _Trunk(spec, in_c, BASE_TRUNK,
                                 extra_decoder_channels=extra)

    def _assemble_input(self, masked, mask, prior):
        parts = [masked]
        if self.spec.feed_mask:
            parts.append(mask)
        if self.spec.prior_channels:
            if prior is None:
                raise ChannelMismatch("spec expects a prior input")
            parts.append(prior)
        return torch.cat(parts, dim=1)

    def forward(self, masked: torch.Tensor, mask: torch.Tensor,
                prior: torch.Tensor | None = None,
                return_intermediate: bool = False):
        """Run f on a masked batch (B,3,H,W) with mask (B,1,H,W).

        H and W are reflect-padded to the next multiple of 4 internally and
        the output is cropped back.
        """
        if not torch.isfinite(masked).all() or not torch.isfinite(mask).all():
            raise NonFiniteInput("non-finite values in generator input")
        h, w = masked.shape[-2:]
        ph, pw = (-h) % 4, (-w) % 4
        x = self._assemble_input(masked, mask, prior)
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        y1 = self.trunk1(x)
        out = y1
        if self.trunk2 is not None:
            m = x[:, 3:4] if self.spec.feed_mask else None
            comp = x[:, :3] * (1 - m) + y1 * m if m is not None else y1
            parts = [comp]
            if self.spec.feed_mask:
                parts.append(m)
            if self.spec.prior_channels:
                parts.append(x[:, -self.spec.prior_channels:])
            x2 = torch.cat(parts, dim=1)
            feat = self.trunk2.encode(x2)
            if self.refine is not None:
                feat = torch.cat([feat, self.refine.encode(x2)], dim=1)
            out = self.trunk2.decode(feat)
        if ph or pw:
            out = out[..., :h, :w]
            y1 = y1[..., :h, :w]
        if return_intermediate:
            return out, y1
        return out


def build_network(spec: NetworkSpec, seed: int) -> Generator:
    """Instantiate a Generator with seeded fan-in-scaled normal init."""
    gen = Generator(spec)
    g = torch.Generator().manual_seed(seed)
    for name, p in sorted(gen.named_parameters()):
        if p.ndim == 4:  # conv weight
            fan_in = p.shape[1] * p.shape[2] * p.shape[3]
            std = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                p.copy_(torch.randn(p.shape, generator=g) * std)
        else:
            with torch.no_grad():
                p.zero_()
    return gen


def receptive_field_margin(spec: NetworkSpec) -> int:
    """Half-width of the receptive field of the base trunk at input scale."""
    margin = 0
    stride_acc = 1
    for ls in parse_layer_string(BASE_TRUNK):
        if ls.kind == "OutputBlock":
            continue
        if ls.kind == "DeconvBlock":
            stride_acc = max(1, stride_acc // 2)
        margin += spec.capped(ls.dilation) * (ls.k_size // 2) * stride_acc
        stride_acc *= ls.stride
    return margin
