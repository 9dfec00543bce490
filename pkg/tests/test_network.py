import dataclasses

import numpy as np
import pytest

from ucmnet import tensor as T
from ucmnet.loss import LossConfig, total_loss
from ucmnet.network import PRESETS, ModelConfig, UCMNet, count_parameters, forward
from ucmnet.tensor import ShapeError

from conftest import SEEDS, check_block_gradients, checkerboard


def hand_count_one_stage(C, N):
    """Parameter total for stages=1, blocks=1, growth=2, written out term by term."""
    C2 = 2 * C

    def fcm(c):
        amp = (c * c + c) * 2  # two 1x1 convs
        expand = c * 2 * c + 2 * c
        dw = 9 * 2 * c + 2 * c
        sca = c * c + c
        proj = c * c + c
        return amp + expand + dw + sca + proj

    embed = 3 * 3 * 3 * C + C
    encoder = fcm(C) + (2 * 2 * C * C2 + C2)
    middle = fcm(C2)
    upt = (9 * C2 * C2 + C2) + (C2 * C2 + C2) + 6 * C2 * C2 + 2 + N * C2
    decoder = fcm(C2) + upt + (2 * 2 * C * C2 + C) + (9 * C2 * 3 + 3)
    head = 9 * C * 3 + 3
    return embed + encoder + middle + decoder + head


def test_parameter_count_matches_hand_count():
    cfg = ModelConfig(stages=1, base_channels=2, bank_size=8)
    assert hand_count_one_stage(2, 8) == 1068
    assert count_parameters(cfg) == 1068


def test_memory_tokens_are_not_parameters():
    cfg = ModelConfig(stages=2, base_channels=4, bank_size=16)
    m = UCMNet(cfg)
    assert m.count_memory_tokens() == 16 * 8 + 16 * 16
    names = m.parameters()
    assert not any(k.endswith("bank.memory") for k in names)
    assert any(k.endswith("bank.context") for k in names)


def test_desk_and_paper_scale_counts_are_reported(capsys):
    desk = count_parameters(PRESETS["desk"])
    paper = count_parameters(PRESETS["paper-scale"])
    print(f"desk {desk} paper-scale {paper}")
    assert 0 < desk < paper


def test_identity_init_returns_input(rng):
    m = UCMNet(PRESETS["tiny"], seed=1, dtype=np.float64)
    x = rng.uniform(size=(2, 8, 8, 3))
    y, _ = m.forward(x)
    np.testing.assert_array_equal(y.data, x)


@pytest.mark.parametrize("H,W", [(16, 16), (13, 10), (9, 17)])
def test_output_size_matches_input(H, W, rng):
    m = UCMNet(ModelConfig(stages=2, base_channels=4, bank_size=8), zero_residual=False)
    x = rng.uniform(size=(H, W, 3)).astype(np.float32)
    y, stages = m.forward(x)
    assert y.shape == (H, W, 3)
    assert len(stages) == 2


def test_stage_outputs_per_decoder(rng):
    cfg = ModelConfig(stages=3, base_channels=4, bank_size=8)
    _, stages = UCMNet(cfg).forward(rng.uniform(size=(1, 16, 16, 3)))
    assert [s.image.shape for s in stages] == [(1, 2, 2, 3), (1, 4, 4, 3), (1, 8, 8, 3)]
    assert [s.uncertainty.shape for s in stages] == [(1, 2, 2, 1), (1, 4, 4, 1), (1, 8, 8, 1)]
    assert [s.features.shape[-1] for s in stages] == [32, 16, 8]
    assert all(np.all(s.uncertainty.data >= 0) for s in stages)


def test_module_forward_matches_class(rng):
    m = UCMNet(PRESETS["tiny"], seed=3, zero_residual=False, dtype=np.float64)
    x = rng.uniform(size=(1, 8, 8, 3))
    np.testing.assert_array_equal(forward(x, m.config, m.params)[0].data, m.forward(x)[0].data)


def test_rejects_non_rgb():
    with pytest.raises(ShapeError):
        UCMNet(PRESETS["tiny"]).forward(np.zeros((1, 8, 8, 4)))


def test_seed_determines_init():
    a, b = UCMNet(PRESETS["tiny"], seed=5), UCMNet(PRESETS["tiny"], seed=5)
    for (k, ta), tb in zip(a.state_tensors().items(), b.state_tensors().values()):
        np.testing.assert_array_equal(ta.data, tb.data, err_msg=k)


def test_invalid_config():
    with pytest.raises(ValueError):
        ModelConfig(stages=0)
    with pytest.raises(ValueError):
        ModelConfig(alpha_init=-1.0)


@pytest.mark.parametrize("seed", SEEDS)
def test_full_tiny_model_gradients(seed):
    """End-to-end check through forward and total_loss, subsampling coordinates."""
    # small attention scales and unit-size context tokens keep the attention
    # gradients well above finite-difference round-off
    rng = np.random.default_rng(seed)
    cfg = dataclasses.replace(PRESETS["tiny"], alpha_init=2.0, beta_init=2.0)
    m = UCMNet(cfg, seed=seed, dtype=np.float64, zero_residual=False)
    for bank in m.banks():
        bank.context.data = rng.standard_normal(bank.context.shape)
    x = T.parameter(rng.uniform(size=(2, 6, 8, 3)))
    target = 0.5 + checkerboard((2, 6, 8, 3), 2, 4.0)

    def run():
        y, stages = m.forward(x)
        return total_loss(stages, target, y, LossConfig())[0]

    # context tokens and their key projection only reach the loss through
    # near-uniform cosine retrieval, so their gradients are ~1e-7 of the loss
    # and drown in round-off at the default step; nothing downstream of the
    # keys has a kink, so a wide step is safe there
    steps = {
        f"decoders.{k}.upt.{name}": 1e-2 for k in range(cfg.stages) for name in ("bank.context", "wk1")
    }
    check_block_gradients(run, {"input": x, **m.parameters()}, seed, max_coords=3, steps=steps)
