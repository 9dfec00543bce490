import numpy as np
import pytest

from ucmnet import tensor as T
from ucmnet.config import RunConfig
from ucmnet.loss import LossConfig
from ucmnet.network import PRESETS, UCMNet
from ucmnet.trainer import OptimizerState, TrainConfig, Trainer, TrainingError, adam_step, evaluate, restore


def _scalar_state(value, lr=0.1, total=10):
    p = {"w": T.parameter(np.array(value))}
    return p, OptimizerState.create(p, lr=lr, total_steps=total)


def test_adam_single_step_by_hand():
    p, state = _scalar_state(1.0)
    lr = adam_step(p, {"w": T.Tensor(np.array(0.5))}, state)
    # m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25
    expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8)
    assert lr == 0.1
    assert abs(float(p["w"].data) - expected) <= 1e-12
    assert state.step == 1


def test_adam_two_steps_by_hand():
    p, state = _scalar_state(0.0, lr=0.2, total=4)
    adam_step(p, {"w": T.Tensor(np.array(1.0))}, state)
    adam_step(p, {"w": T.Tensor(np.array(-2.0))}, state)
    m1, v1 = 0.1, 0.001
    m2, v2 = 0.9 * m1 + 0.1 * -2.0, 0.999 * v1 + 0.001 * 4.0
    w1 = 0.0 - 0.2 * (m1 / 0.1) / (np.sqrt(v1 / 0.001) + 1e-8)
    lr2 = 0.2 * (1 - 1 / 4)
    w2 = w1 - lr2 * (m2 / (1 - 0.9**2)) / (np.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
    assert abs(float(p["w"].data) - w2) <= 1e-12


def test_zero_gradients_leave_params_unchanged(rng):
    p = {"a": T.parameter(rng.standard_normal((3, 2)))}
    before = p["a"].data.copy()
    state = OptimizerState.create(p, lr=1e-2, total_steps=5)
    adam_step(p, {"a": T.Tensor(np.zeros((3, 2)))}, state)
    np.testing.assert_array_equal(p["a"].data, before)
    assert state.step == 1


def test_lr_schedule_reaches_zero():
    state = OptimizerState(lr=2e-4, total_steps=7)
    lrs = [state.lr_at(t) for t in range(8)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert lrs[-1] == 0.0
    p, state = _scalar_state(3.0, total=2)
    state.step = 2
    adam_step(p, {"w": T.Tensor(np.array(7.0))}, state)
    assert float(p["w"].data) == 3.0


def test_non_finite_gradient_names_parameter():
    p, state = _scalar_state(1.0)
    with pytest.raises(TrainingError, match="'w'"):
        adam_step(p, {"w": T.Tensor(np.array(np.nan))}, state)


def _tiny_trainer(seed=0, noise=1e-3, **train):
    cfg = TrainConfig(steps=20, batch_size=2, patch_size=16, noise_std=noise, seed=seed, dtype="float64", **train)
    model = UCMNet(PRESETS["tiny"], seed=seed, dtype=np.float64)
    return Trainer(model, LossConfig(), cfg)


def _data(seed=0, n=3, size=16):
    r = np.random.default_rng(seed)
    clean = r.uniform(size=(n, size, size, 3))
    return np.clip(0.5 * clean + 0.02 * r.standard_normal(clean.shape), 0, 1), clean


def test_zero_noise_feeds_stored_input(monkeypatch):
    tr = _tiny_trainer(noise=0.0)
    x, y = _data(n=2)
    seen = {}
    orig = tr.model.forward

    def spy(inp):
        seen["x"] = np.array(inp.data)
        return orig(inp)

    monkeypatch.setattr(tr.model, "forward", spy)
    tr.train_step(x, y)
    np.testing.assert_array_equal(seen["x"], x)


def test_ground_truth_is_not_mutated():
    tr = _tiny_trainer()
    x, y = _data()
    xc, yc = x.copy(), y.copy()
    tr.train_step(x, y)
    np.testing.assert_array_equal(y, yc)
    np.testing.assert_array_equal(x, xc)


def test_step_record_fields():
    tr = _tiny_trainer()
    rec = tr.train_step(*_data())
    assert {"step", "lr", "loss", "hf_udl", "fidelity", "grad_norm"} <= set(rec)
    assert rec["loss"] == pytest.approx(rec["hf_udl"] + rec["fidelity"])


def test_memory_bank_updated_after_step():
    tr = _tiny_trainer()
    before = tr.model.banks()[0].memory.data.copy()
    tr.train_step(*_data())
    assert not np.array_equal(before, tr.model.banks()[0].memory.data)


def test_identical_seeds_give_identical_logs():
    data = _data()
    a = _tiny_trainer(seed=4).fit(*data, steps=6)
    b = _tiny_trainer(seed=4).fit(*data, steps=6)
    assert a == b
    c = _tiny_trainer(seed=5).fit(*data, steps=6)
    assert a != c


def test_single_sample_overfit_decreases_loss():
    cfg = RunConfig(PRESETS["tiny"], LossConfig(), TrainConfig(steps=50, batch_size=1, patch_size=16, seed=0, dtype="float64"))
    model = UCMNet(cfg.model, seed=0, dtype=np.float64)
    x, y = _data(n=1)
    hist = Trainer(model, cfg.loss, cfg.train).fit(x, y)
    losses = [h["loss"] for h in hist]
    assert len(losses) == 50
    assert np.mean(losses[-5:]) < np.mean(losses[:5])


def test_fit_writes_json_lines(tmp_path):
    import json

    tr = _tiny_trainer()
    with open(tmp_path / "log.jsonl", "w") as fh:
        tr.fit(*_data(), steps=3, log_file=fh)
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert [json.loads(s)["step"] for s in lines] == [1, 2, 3]


def test_restore_and_evaluate_on_identity_model(rng):
    model = UCMNet(PRESETS["tiny"], seed=0, dtype=np.float64)
    x = rng.uniform(size=(2, 16, 16, 3))
    np.testing.assert_array_equal(restore(model, x), x)
    scores = evaluate(model, x, x)
    assert scores["psnr"] >= 120.0 and scores["psnr_input"] >= 120.0


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dtype="float16")
    with pytest.raises(ValueError):
        TrainConfig(steps=0)
