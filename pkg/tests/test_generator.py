"""Network construction, gated-conv arithmetic, shift equivariance,
initialization determinism, and gradient flow."""

import numpy as np
import pytest
import torch

from vidinpaint.errors import ChannelMismatch, InvalidSpec
from vidinpaint.generator import (
    BASE_TRUNK,
    REFINEMENT_BRANCH,
    GatedConvBlock,
    Generator,
    NetworkSpec,
    build_network,
    gated_forward,
    parse_layer_string,
    receptive_field_margin,
)

torch.manual_seed(0)


class TestParseLayerString:
    def test_base_trunk_structure(self):
        specs = parse_layer_string(BASE_TRUNK)
        assert len(specs) == 17
        kinds = [s.kind for s in specs]
        assert kinds.count("ConvBlock") == 14
        assert kinds.count("DeconvBlock") == 2
        assert kinds[-1] == "OutputBlock"
        # widths run 48 -> 192 bottleneck -> 24 before the output layer
        assert specs[0].out_c == 48 and specs[0].k_size == 5
        assert max(s.out_c for s in specs[:-1]) == 192
        assert specs[-2].out_c == 24
        # the dilation pyramid 2,4,8,16 is present in order
        dils = [s.dilation for s in specs if s.dilation > 1]
        assert dils == [2, 4, 8, 16]
        # two stride-2 encoder stages -> 1/4 bottleneck
        assert [s.stride for s in specs].count(2) == 2

    def test_refinement_branch_structure(self):
        specs = parse_layer_string(REFINEMENT_BRANCH)
        assert len(specs) == 9
        assert all(s.kind == "ConvBlock" for s in specs)
        assert specs[-1].out_c == 192

    def test_bad_token_rejected(self):
        with pytest.raises(InvalidSpec):
            parse_layer_string("C(48,5,1)")
        with pytest.raises(InvalidSpec):
            parse_layer_string("X(1,2,3,4)")


class TestNetworkSpec:
    def test_scaled_channels_even_and_floored(self):
        spec = NetworkSpec(width_scale=0.25)
        assert spec.scaled(48) == 12
        assert spec.scaled(192) == 48
        assert spec.scaled(2) == 2  # never below 2
        assert spec.scaled(24) % 2 == 0

    def test_dilation_cap(self):
        spec = NetworkSpec(max_dilation=4)
        assert spec.capped(16) == 4
        assert spec.capped(2) == 2

    def test_invalid_variant(self):
        with pytest.raises(InvalidSpec):
            NetworkSpec(variant="nope")

    def test_input_channel_accounting(self):
        assert NetworkSpec().total_in_channels == 4  # rgb + mask
        assert NetworkSpec(feed_mask=False).total_in_channels == 3
        assert NetworkSpec(prior_channels=3).total_in_channels == 7


class TestGatedForward:
    def test_zero_weights_give_zero(self):
        x = torch.rand(1, 2, 8, 8)
        w = torch.zeros(4, 2, 3, 3)
        out = gated_forward(x, w, None)
        # elu(0)*sigmoid(0) = 0*0.5 = 0
        assert torch.all(out == 0)

    def test_hand_computed_1x1(self):
        # 1x1 kernel, 1-channel input x=2: feature = 2*a, gate = 2*b
        x = torch.full((1, 1, 3, 3), 2.0)
        w = torch.zeros(2, 1, 1, 1)
        w[0, 0, 0, 0] = 0.5   # feature weight -> feat = 1.0
        w[1, 0, 0, 0] = 10.0  # gate weight -> gate = 20, sigmoid ~ 1
        out = gated_forward(x, w, None)
        expected = torch.nn.functional.elu(torch.tensor(1.0)) * \
            torch.sigmoid(torch.tensor(20.0))
        assert torch.allclose(out, expected.expand(1, 1, 3, 3), atol=1e-6)

    def test_gate_saturation_passes_feature(self):
        x = torch.rand(1, 1, 4, 4) + 0.5
        w = torch.zeros(2, 1, 1, 1)
        w[0, 0, 0, 0] = 1.0
        b = torch.tensor([0.0, 100.0])  # gate saturated at 1
        out = gated_forward(x, w, b)
        assert torch.allclose(out, torch.nn.functional.elu(x), atol=1e-5)

    def test_gate_closed_blocks_feature(self):
        x = torch.rand(1, 1, 4, 4)
        w = torch.zeros(2, 1, 1, 1)
        w[0, 0, 0, 0] = 1.0
        b = torch.tensor([0.0, -100.0])  # gate ~ 0
        out = gated_forward(x, w, b)
        assert out.abs().max() < 1e-6

    def test_shape_preserved_stride1(self):
        x = torch.rand(2, 3, 11, 13)
        w = torch.randn(8, 3, 3, 3) * 0.1
        assert gated_forward(x, w, None).shape == (2, 4, 11, 13)

    def test_stride2_halves(self):
        x = torch.rand(1, 3, 12, 16)
        w = torch.randn(8, 3, 3, 3) * 0.1
        assert gated_forward(x, w, None, stride=2).shape == (1, 4, 6, 8)

    def test_channel_mismatch(self):
        with pytest.raises(ChannelMismatch):
            gated_forward(torch.rand(1, 2, 4, 4), torch.randn(4, 3, 3, 3), None)

    def test_gradient_matches_finite_difference(self):
        torch.manual_seed(1)
        x0 = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        w = (torch.randn(4, 2, 3, 3, dtype=torch.float64) * 0.3)
        b = torch.randn(4, dtype=torch.float64) * 0.1

        def fn(x):
            return gated_forward(x, w, b, dilation=2).sum()

        x = x0.clone().requires_grad_(True)
        fn(x).backward()
        analytic = x.grad.clone()
        eps = 1e-6
        numeric = torch.zeros_like(x0)
        flat, nf = x0.reshape(-1), numeric.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = fn(x0).item()
            flat[i] = orig - eps
            lo = fn(x0).item()
            flat[i] = orig
            nf[i] = (hi - lo) / (2 * eps)
        rel = (analytic - numeric).norm() / max(analytic.norm().item(), 1e-12)
        assert rel <= 1e-4


def _forward(gen, shape=(1, 3, 37, 41), seed=0):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(*shape, generator=g) * 2 - 1
    m = (torch.rand(shape[0], 1, *shape[2:], generator=g) > 0.8).float()
    return gen(x * (1 - m), m)


class TestGenerator:
    @pytest.mark.parametrize("variant", ["base", "stacked", "coarse2fine"])
    def test_forward_shape_and_range(self, variant):
        spec = NetworkSpec(variant=variant, width_scale=0.125, max_dilation=4)
        gen = build_network(spec, seed=0)
        out = _forward(gen)
        assert out.shape == (1, 3, 37, 41)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_same_seed_identical_weights(self):
        spec = NetworkSpec(width_scale=0.25)
        a = build_network(spec, seed=3)
        b = build_network(spec, seed=3)
        for (na, pa), (nb, pb) in zip(sorted(a.named_parameters()),
                                      sorted(b.named_parameters())):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_different_seed_different_weights(self):
        spec = NetworkSpec(width_scale=0.25)
        a = build_network(spec, seed=3)
        b = build_network(spec, seed=4)
        diffs = [not torch.equal(pa, pb) for (_, pa), (_, pb) in
                 zip(sorted(a.named_parameters()), sorted(b.named_parameters()))
                 if pa.requires_grad and pa.ndim > 1]
        assert any(diffs)

    def test_biases_start_at_zero(self):
        gen = build_network(NetworkSpec(width_scale=0.25), seed=0)
        for name, p in gen.named_parameters():
            if name.endswith("bias"):
                assert torch.all(p == 0)

    def test_forward_deterministic(self):
        gen = build_network(NetworkSpec(width_scale=0.25, max_dilation=4),
                            seed=1)
        a = _forward(gen, seed=5)
        b = _forward(gen, seed=5)
        assert torch.equal(a, b)

    def test_sigmoid_head_range(self):
        spec = NetworkSpec(width_scale=0.125, max_dilation=4,
                           out_channels=1, out_activation="sigmoid",
                           feed_mask=False)
        gen = build_network(spec, seed=0)
        x = torch.rand(1, 3, 24, 24) * 2 - 1
        out = gen(x, torch.zeros(1, 1, 24, 24))
        assert out.shape == (1, 1, 24, 24)
        assert out.min() > 0.0 and out.max() < 1.0

    def test_stacked_intermediate_output(self):
        spec = NetworkSpec(variant="stacked", width_scale=0.125,
                           max_dilation=4)
        gen = build_network(spec, seed=0)
        g = torch.Generator().manual_seed(0)
        x = torch.rand(1, 3, 32, 32, generator=g) * 2 - 1
        m = torch.zeros(1, 1, 32, 32)
        final, inter = gen(x, m, return_intermediate=True)
        assert final.shape == inter.shape == (1, 3, 32, 32)
        assert not torch.equal(final, inter)

    def test_prior_channels_accepted(self):
        spec = NetworkSpec(width_scale=0.125, max_dilation=4,
                           prior_channels=3)
        gen = build_network(spec, seed=0)
        x = torch.rand(1, 3, 24, 24) * 2 - 1
        m = torch.zeros(1, 1, 24, 24)
        out = gen(x, m, prior=torch.rand(1, 3, 24, 24))
        assert out.shape == (1, 3, 24, 24)

    def test_all_parameters_receive_gradient(self):
        spec = NetworkSpec(width_scale=0.125, max_dilation=4)
        gen = build_network(spec, seed=0)
        out = _forward(gen)
        out.abs().mean().backward()
        for name, p in gen.named_parameters():
            assert p.grad is not None, name
            assert torch.isfinite(p.grad).all(), name

    def test_receptive_field_margins(self):
        full = receptive_field_margin(NetworkSpec())
        capped = receptive_field_margin(NetworkSpec(max_dilation=4))
        assert full == 149
        assert capped == 85
        assert capped < full


class TestEquivariance:
    def test_interior_shift_equivariance(self):
        # all-conv reflection-padded network: shifting the input shifts the
        # output, up to border effects within the receptive-field margin
        spec = NetworkSpec(width_scale=0.25, max_dilation=4)
        gen = build_network(spec, seed=0)
        margin = receptive_field_margin(spec)
        sh = 4
        size = 2 * margin + 40
        g = torch.Generator().manual_seed(2)
        big = torch.rand(1, 3, size + sh, size + sh, generator=g) * 2 - 1
        mask = torch.zeros(1, 1, size + sh, size + sh)
        mask[0, 0, margin + 10:margin + 20, margin + 10:margin + 20] = 1.0
        x1 = big[:, :, :size, :size]
        m1 = mask[:, :, :size, :size]
        x2 = big[:, :, sh:, sh:]
        m2 = mask[:, :, sh:, sh:]
        with torch.no_grad():
            y1 = gen(x1 * (1 - m1), m1)
            y2 = gen(x2 * (1 - m2), m2)
        inner1 = y1[:, :, margin + sh:size - margin, margin + sh:size - margin]
        inner2 = y2[:, :, margin:size - margin - sh, margin:size - margin - sh]
        assert (inner1 - inner2).abs().max().item() <= 1e-5
