import struct

import numpy as np
import pytest

from loadaug.checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    CheckpointError,
    ChecksumError,
    VersionError,
    dumps,
    load_model,
    loads,
    save_model,
)
from loadaug.dataset import NormalizationParams
from loadaug.diffusion import DenoiserModel, build_schedule, generate_rows
from loadaug.forecast import fit_forest, fit_gbdt, predict_ensemble
from loadaug.timegan import TimeGanModel, generate_rows_gan


def _blob():
    return dumps(Checkpoint("timegan", {"a": 1}, {"w": np.arange(6.0).reshape(2, 3), "i": np.arange(4)}, seed=9, extra={"k": "v"}))


def test_bytes_roundtrip():
    ck = loads(_blob())
    assert ck.kind == "timegan" and ck.seed == 9 and ck.extra == {"k": "v"}
    np.testing.assert_array_equal(ck.tensors["w"], np.arange(6.0).reshape(2, 3))
    assert ck.tensors["i"].dtype == np.int64
    assert _blob() == _blob()


@pytest.mark.parametrize("cut", [1, 8, 100, 10_000])
def test_truncated_file_is_checksum_error(cut):
    blob = _blob()
    with pytest.raises(ChecksumError):
        loads(blob[: max(len(blob) - cut, 0)])


def test_flipped_byte_is_checksum_error():
    blob = bytearray(_blob())
    blob[-40] ^= 0xFF
    with pytest.raises(ChecksumError):
        loads(bytes(blob))


def test_version_bump_is_version_error():
    blob = bytearray(_blob())
    struct.pack_into("<I", blob, 8, FORMAT_VERSION + 1)
    with pytest.raises(VersionError):
        loads(bytes(blob))


def test_not_a_checkpoint():
    with pytest.raises(CheckpointError):
        loads(b"x" * 100)


def test_diffusion_roundtrip_generates_identical_rows(tmp_path):
    sched = build_schedule(20)
    model = DenoiserModel.init(6, 8, hidden=16, seed=3)
    params = NormalizationParams(np.zeros(8), np.arange(1.0, 9.0))
    path = save_model(model, tmp_path / "d.ckpt", schedule=sched, seed=3)
    back = load_model(path)
    assert back.kind == "diffusion" and back.seed == 3
    for name in ("beta", "alpha", "alpha_bar", "one_minus_alpha_bar"):
        np.testing.assert_array_equal(getattr(back.schedule, name), getattr(sched, name))
    a = generate_rows(model, sched, 4, params, seed=7)
    b = generate_rows(back.model, back.schedule, 4, params, seed=7)
    np.testing.assert_array_equal(a.values, b.values)


def test_timegan_roundtrip_generates_identical_rows(tmp_path):
    model = TimeGanModel.init(8, 6, seed=2)
    model.steps_trained = {"embedding": 5, "supervised": 1, "joint": 0}
    params = NormalizationParams(np.zeros(8), np.ones(8))
    back = load_model(save_model(model, tmp_path / "g.ckpt"))
    assert back.model.steps_trained == model.steps_trained and back.model.hidden == 6
    a = generate_rows_gan(model, 3, params, seed=7)
    b = generate_rows_gan(back.model, 3, params, seed=7)
    np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.parametrize("fit", [lambda X, y: fit_forest(X, y, n_estimators=5, seed=1), lambda X, y: fit_gbdt(X, y, rounds=7, seed=1)])
def test_ensemble_roundtrip(tmp_path, fit):
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(50, 4)), rng.normal(size=50)
    model = fit(X, y)
    back = load_model(save_model(model, tmp_path / "e.ckpt"))
    np.testing.assert_array_equal(predict_ensemble(back.model, X), predict_ensemble(model, X))


def test_save_errors(tmp_path):
    with pytest.raises(ValueError):
        save_model(DenoiserModel.init(4, 2, hidden=4), tmp_path / "x")
    with pytest.raises(TypeError):
        save_model(object(), tmp_path / "x")
