import struct

import numpy as np
import pytest

from ucmnet.checkpoint import (
    MAGIC,
    CheckpointError,
    decode,
    encode,
    from_model,
    from_trainer,
    load_checkpoint,
    save_checkpoint,
)
from ucmnet.config import load_config
from ucmnet.network import UCMNet
from ucmnet.trainer import Trainer


def _run_config():
    return load_config("tiny", ["train.dtype=float64", "train.steps=12", "train.patch_size=16"])


def _data(n=3, size=16):
    r = np.random.default_rng(0)
    clean = r.uniform(size=(n, size, size, 3))
    return np.clip(0.6 * clean, 0, 1), clean


def _trainer(cfg):
    model = UCMNet(cfg.model, seed=cfg.train.seed, dtype=np.float64)
    return Trainer(model, cfg.loss, cfg.train)


@pytest.fixture
def trained(tmp_path):
    cfg = _run_config()
    tr = _trainer(cfg)
    tr.fit(*_data(), steps=3)
    return cfg, tr


def test_save_load_save_is_byte_identical(trained, tmp_path):
    cfg, tr = trained
    a = save_checkpoint(tmp_path / "a.ucmn", from_trainer(tr, cfg))
    b = save_checkpoint(tmp_path / "b.ucmn", load_checkpoint(a))
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes()[:4] == MAGIC


def test_round_trip_restores_every_tensor(trained):
    cfg, tr = trained
    ck = decode(encode(from_trainer(tr, cfg)))
    model = ck.build_model()
    for name, t in tr.model.state_tensors().items():
        np.testing.assert_array_equal(model.state_tensors()[name].data, t.data, err_msg=name)
    assert ck.step == 3
    assert ck.config == cfg


def test_resume_matches_uninterrupted_training(tmp_path):
    cfg = _run_config()
    data = _data()
    straight = _trainer(cfg)
    full = straight.fit(*data, steps=8)

    first = _trainer(cfg)
    head = first.fit(*data, steps=4)
    path = save_checkpoint(tmp_path / "mid.ucmn", from_trainer(first, cfg))
    resumed = load_checkpoint(path).build_trainer()
    tail = resumed.fit(*data, steps=8)
    assert head + tail == full
    for name, t in straight.model.state_tensors().items():
        np.testing.assert_array_equal(resumed.model.state_tensors()[name].data, t.data, err_msg=name)


def test_bad_magic(trained):
    cfg, tr = trained
    buf = bytearray(encode(from_trainer(tr, cfg)))
    buf[:4] = b"PNG\x00"
    with pytest.raises(CheckpointError, match="magic.*offset 0"):
        decode(bytes(buf))


def test_wrong_version_refused(trained):
    cfg, tr = trained
    buf = bytearray(encode(from_trainer(tr, cfg)))
    buf[4:8] = struct.pack("<I", 99)
    with pytest.raises(CheckpointError, match="version 99"):
        decode(bytes(buf))


@pytest.mark.parametrize("cut", [6, 20, 0.5, 0.999])
def test_truncated_file_reports_offset(trained, cut):
    cfg, tr = trained
    buf = encode(from_trainer(tr, cfg))
    n = cut if isinstance(cut, int) else int(len(buf) * cut)
    with pytest.raises(CheckpointError) as err:
        decode(buf[:n])
    assert err.value.offset is not None and 0 <= err.value.offset <= n
    assert "byte offset" in str(err.value)


def test_trailing_bytes_rejected(trained):
    cfg, tr = trained
    with pytest.raises(CheckpointError, match="trailing"):
        decode(encode(from_trainer(tr, cfg)) + b"\x00")


def test_corrupt_header(trained):
    cfg, tr = trained
    buf = bytearray(encode(from_trainer(tr, cfg)))
    buf[12] = ord("!")
    with pytest.raises(CheckpointError, match="header"):
        decode(bytes(buf))


def test_mismatched_model_tensors(trained):
    cfg, tr = trained
    ck = from_trainer(tr, cfg)
    del ck.tensors[next(k for k in ck.tensors if k.startswith("param/"))]
    with pytest.raises(CheckpointError, match="missing"):
        ck.build_model()


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "nope.ucmn")


def test_float32_checkpoint(tmp_path):
    cfg = load_config("tiny")
    model = UCMNet(cfg.model, seed=1)
    ck = load_checkpoint(save_checkpoint(tmp_path / "m.ucmn", from_model(model, cfg)))
    assert ck.dtype == "float32"
    assert all(a.dtype == np.float32 for k, a in ck.tensors.items())
    assert ck.build_model().dtype == np.float32
