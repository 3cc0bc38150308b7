import pytest
import torch
from helpers import fd_gradient_check, max_relative_error, projected

from ear3d.config import NetworkConfig
from ear3d.errors import ConfigurationError, InvalidArgumentError
from ear3d.model import EARNet
from ear3d.model.attention import CBAM3d, EdgeAttentionModule, GatedConvBlock
from ear3d.model.ear import count_parameters
from ear3d.model.layers import DecoderLayer, EncoderLayer, FrequencyEnhancement

TABLE2_ROWS = [(False, False, False), (True, False, False), (True, True, False), (True, True, True)]


def randn(*shape, seed=0, dtype=torch.float32):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=dtype)


# ---------------------------------------------------------------- shape contracts


def test_encoder_layer_shape():
    enc = EncoderLayer(2, 16)
    assert enc(randn(1, 2, 32, 32, 32)).shape == (1, 16, 16, 16, 16)
    out = enc(torch.zeros(2, 2, 8, 8, 8))
    assert torch.isfinite(out).all()
    with pytest.raises(ConfigurationError):
        enc(randn(1, 2, 7, 8, 8))


def test_fem_preserves_shape():
    fem = FrequencyEnhancement(6)
    x = randn(2, 6, 8, 4, 6)
    assert fem(x).shape == x.shape


def test_fem_identity_branch_reproduces_normalised_input():
    fem = FrequencyEnhancement(5).double()
    with torch.no_grad():
        for conv in (fem.conv_real, fem.conv_imag):
            conv.weight.zero_()
            conv.weight[:, :, 0, 0, 0] = torch.eye(5, dtype=torch.float64)
            conv.bias.zero_()
    x = randn(2, 5, 6, 6, 6, dtype=torch.float64) * 3 + 1
    branch = fem.frequency_branch(x)
    assert torch.max(torch.abs(branch - fem.norm(x))).item() < 1e-5


def test_gcb_forced_gate_zero_and_one(monkeypatch):
    block = GatedConvBlock(4, 6)
    f_cur, f_prev = randn(2, 4, 5, 5, 5), randn(2, 6, 5, 5, 5, seed=1)
    monkeypatch.setattr(block, "gate", lambda a, b: torch.zeros_like(a))
    assert torch.equal(block(f_cur, f_prev), f_cur)
    monkeypatch.setattr(block, "gate", lambda a, b: torch.ones_like(a))
    assert torch.equal(block(f_cur, f_prev), 2 * f_cur)


def test_gcb_zero_weights_give_half_gate():
    # zeroed convolutions leave sigmoid(0) = 0.5, not a closed gate
    block = GatedConvBlock(3, 3).eval()
    with torch.no_grad():
        for m in block.gate_net:
            if isinstance(m, torch.nn.Conv3d):
                m.weight.zero_()
                m.bias.zero_()
    f = randn(1, 3, 4, 4, 4)
    assert torch.allclose(block(f, randn(1, 3, 4, 4, 4, seed=2)), 1.5 * f)


def test_gcb_gate_range_and_alignment():
    block = GatedConvBlock(4, 2)
    g = block.gate(randn(2, 4, 6, 6, 6), randn(2, 2, 6, 6, 6, seed=3))
    assert (g > 0).all() and (g < 1).all()
    with pytest.raises(InvalidArgumentError):
        block(randn(1, 4, 6, 6, 6), randn(1, 2, 3, 3, 3))


def test_eam_output_and_chain_check():
    eam = EdgeAttentionModule(4, 8, 16)
    a = eam(randn(2, 4, 16, 16, 16), randn(2, 8, 8, 8, 8, seed=1), randn(2, 16, 4, 4, 4, seed=2))
    assert a.shape == (2, 1, 16, 16, 16)
    assert (a > 0).all() and (a < 1).all()
    with pytest.raises(ConfigurationError):
        eam(randn(1, 4, 16, 16, 16), randn(1, 8, 4, 4, 4), randn(1, 16, 2, 2, 2))


def test_cbam_shapes_and_ranges():
    cbam = CBAM3d(16)
    x = randn(2, 16, 6, 6, 6)
    a_c, a_s = cbam.attention_maps(x)
    assert a_c.shape == (2, 16, 1, 1, 1) and a_s.shape == (2, 1, 6, 6, 6)
    for a in (a_c, a_s):
        assert (a > 0).all() and (a < 1).all()
    out = cbam(x)
    assert out.shape == x.shape
    assert torch.allclose(out, x * a_c * a_s)


def test_cbam_channel_permutation_equivariance():
    cbam = CBAM3d(16)
    with torch.no_grad():
        cbam.channel.mlp[0].weight.fill_(0.05)
        cbam.channel.mlp[2].weight.fill_(-0.3)
    x = randn(1, 16, 5, 5, 5)
    perm = torch.randperm(16, generator=torch.Generator().manual_seed(7))
    torch.testing.assert_close(cbam(x[:, perm]), cbam(x)[:, perm], rtol=1e-6, atol=1e-6)


def test_decoder_doubling_and_eam_toggle():
    dec = DecoderLayer(8, 4, 4).eval()
    f, skip = randn(1, 8, 4, 4, 4), randn(1, 4, 8, 8, 8, seed=1)
    a1, a2 = torch.rand(1, 1, 4, 4, 4), torch.rand(1, 1, 4, 4, 4)
    off = dec(f, skip, a1, use_eam=False)
    assert off.shape == (1, 4, 8, 8, 8)
    assert torch.equal(off, dec(f, skip, a2, use_eam=False))
    assert torch.equal(dec(f, skip, torch.zeros(1, 1, 4, 4, 4), use_eam=True), off)
    assert not torch.equal(dec(f, skip, a1, use_eam=True), off)
    with pytest.raises(ConfigurationError):
        dec(f, randn(1, 4, 4, 4, 4))
    with pytest.raises(ConfigurationError):
        dec(f, None)


# ---------------------------------------------------------------- full network


def test_network_config_invariants():
    with pytest.raises(ConfigurationError):
        NetworkConfig(depth=4)
    with pytest.raises(ConfigurationError):
        NetworkConfig(input_resolution=48)
    with pytest.raises(ConfigurationError):
        NetworkConfig.from_dict({"depth": 5, "bogus": 1})
    w = NetworkConfig(base_width=3).width_per_level
    assert w == (3, 6, 12, 24, 48) and list(w) == sorted(w)
    cfg = NetworkConfig(enable_fem=False)
    assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("abs_, fem, eam", TABLE2_ROWS)
def test_table2_rows_forward(abs_, fem, eam):
    cfg = NetworkConfig(base_width=4, enable_abs=abs_, enable_fem=fem, enable_eam=eam)
    torch.manual_seed(0)
    model = EARNet(cfg)
    pred, a_e = model(randn(2, 2, 32, 32, 32))
    assert pred.shape == (2, 1, 32, 32, 32)
    assert torch.isfinite(pred).all()
    if eam:
        assert a_e.shape == (2, 1, 16, 16, 16) and (a_e > 0).all() and (a_e < 1).all()
    else:
        assert a_e is None


def test_toggles_shrink_the_model():
    sizes = [count_parameters(EARNet(NetworkConfig(base_width=4, enable_abs=a, enable_fem=f, enable_eam=e)))
             for a, f, e in TABLE2_ROWS]
    assert sizes == sorted(sizes) and len(set(sizes)) == 4


def test_forward_rejects_bad_resolution():
    model = EARNet(NetworkConfig(base_width=2))
    with pytest.raises(ConfigurationError):
        model(randn(1, 2, 48, 48, 40))
    with pytest.raises(ConfigurationError):
        model(randn(1, 3, 32, 32, 32))


def test_eval_forward_deterministic():
    torch.manual_seed(3)
    model = EARNet(NetworkConfig(base_width=4)).eval()
    x = randn(1, 2, 32, 32, 32)
    with torch.no_grad():
        a, ea = model(x)
        b, eb = model(x)
    assert torch.equal(a, b) and torch.equal(ea, eb)


def test_same_seed_same_init():
    torch.manual_seed(5)
    a = EARNet(NetworkConfig(base_width=2))
    torch.manual_seed(5)
    b = EARNet(NetworkConfig(base_width=2))
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb and torch.equal(va, vb)


# ---------------------------------------------------------------- finite-difference gradients


def _module_cases():
    d = torch.float64
    torch.manual_seed(0)
    cases = {}

    enc = EncoderLayer(2, 4).double()
    x = randn(2, 2, 8, 8, 8, dtype=d)
    cases["encoder"] = (lambda: enc(x), [x] + list(enc.parameters()), (2, 4, 4, 4, 4))

    fem = FrequencyEnhancement(3).double()
    xf = randn(2, 3, 8, 8, 8, dtype=d, seed=1)
    cases["fem"] = (lambda: fem(xf), [xf] + list(fem.parameters()), (2, 3, 8, 8, 8))

    fem4 = FrequencyEnhancement(3).double()
    x4 = randn(2, 3, 4, 4, 4, dtype=d, seed=2)
    cases["fem_branch_4"] = (lambda: fem4.frequency_branch(x4), [x4] + [fem4.conv_real.weight, fem4.conv_imag.weight],
                             (2, 3, 4, 4, 4))

    gcb = GatedConvBlock(3, 4).double()
    fc, fp = randn(2, 3, 8, 8, 8, dtype=d, seed=3), randn(2, 4, 8, 8, 8, dtype=d, seed=4)
    cases["m_gcb"] = (lambda: gcb(fc, fp), [fc, fp] + list(gcb.parameters()), (2, 3, 8, 8, 8))

    cbam = CBAM3d(8).double()
    xc = randn(2, 8, 8, 8, 8, dtype=d, seed=5)
    cases["cbam_shortcut"] = (lambda: cbam(xc), [xc] + list(cbam.parameters()), (2, 8, 8, 8, 8))

    dec = DecoderLayer(6, 3, 3).double()
    fd_, sk = randn(2, 6, 4, 4, 4, dtype=d, seed=6), randn(2, 3, 8, 8, 8, dtype=d, seed=7)
    ae = torch.rand(2, 1, 4, 4, 4, dtype=d, generator=torch.Generator().manual_seed(8))
    cases["decoder"] = (lambda: dec(fd_, sk, ae, use_eam=True), [fd_, sk, ae] + list(dec.parameters()),
                        (2, 3, 8, 8, 8))

    eam = EdgeAttentionModule(2, 4, 8).double()
    e1, e2, e3 = (randn(2, c, s, s, s, dtype=d, seed=9 + i) for i, (c, s) in enumerate([(2, 8), (4, 4), (8, 2)]))
    cases["eam"] = (lambda: eam(e1, e2, e3), [e1, e2, e3] + list(eam.parameters()), (2, 1, 8, 8, 8))
    return cases


MODULE_CASES = _module_cases()


@pytest.mark.parametrize("name", sorted(MODULE_CASES))
def test_module_gradients_float64(name):
    fn, leaves, out_shape = MODULE_CASES[name]
    pairs = fd_gradient_check(projected(fn, out_shape), leaves, n_probes=12, seed=sum(map(ord, name)))
    assert max_relative_error(pairs) < 1e-5
