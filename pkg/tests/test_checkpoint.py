import json
import struct

import numpy as np
import pytest

from fcncd import FCNCD, build_variant
from fcncd.baselines import BaselineKind, make_baseline
from fcncd.checkpoint import MAGIC, CheckpointError, load_checkpoint, model_kind, read_header, save_checkpoint

FAST = dict(max_epochs=1)
SMALL = {
    "random": {},
    "mf": dict(width=3, h1=4, h2=3, **FAST),
    "ranknet": dict(width=3, h1=4, h2=3, **FAST),
    "ncdm-r": dict(h1=4, h2=3, **FAST),
    "mupp-2pl": FAST,
}


def _fitted(kind, dataset):
    if kind == "fcncd":
        return FCNCD(d=4, h1=5, h2=3, **FAST).fit(dataset)
    return make_baseline(kind, **SMALL[kind]).fit(dataset)


@pytest.mark.parametrize("kind", ["fcncd"] + [k.value for k in BaselineKind])
def test_round_trip_preserves_predictions(kind, toy_mole, tmp_path):
    model = _fitted(kind, toy_mole)
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    loaded = load_checkpoint(path)
    assert type(loaded) is type(model)
    assert model_kind(loaded) == kind
    assert loaded.get_params() == model.get_params()
    for name, value in model.params_.items():
        np.testing.assert_array_equal(loaded.params_[name], value)
    np.testing.assert_array_equal(loaded.decision_function(toy_mole), model.decision_function(toy_mole))


def test_variant_config_survives(toy_mole, tmp_path):
    model = build_variant("eb", d=3, h1=4, h2=3, **FAST).fit(toy_mole)
    loaded = load_checkpoint(save_checkpoint(model, tmp_path / "eb.ckpt"))
    assert loaded.skip_mapping and "W_1" not in loaded.params_
    np.testing.assert_array_equal(loaded.transform(), model.transform())


def test_layout(toy_mole, tmp_path):
    model = FCNCD(d=4, h1=5, h2=3, **FAST).fit(toy_mole)
    raw = save_checkpoint(model, tmp_path / "m.ckpt").read_bytes()
    assert raw[:8] == MAGIC
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n])
    assert header["kind"] == "fcncd"
    assert header["fitted"]["n_dims"] == toy_mole.n_dims
    assert [p["name"] for p in header["params"]] == sorted(model.params_)
    spec = next(p for p in header["params"] if p["name"] == "W_s")
    start = 16 + n + spec["offset"]
    values = np.frombuffer(raw[start:start + model.params_["W_s"].nbytes], dtype="<f8")
    np.testing.assert_array_equal(values.reshape(spec["shape"]), model.params_["W_s"])
    assert len(raw) == 16 + n + header["payload_bytes"]


def test_saving_is_byte_identical(toy_mole, tmp_path):
    model = FCNCD(d=4, h1=5, h2=3, **FAST).fit(toy_mole)
    a = save_checkpoint(model, tmp_path / "a.ckpt").read_bytes()
    b = save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"), tmp_path / "b.ckpt").read_bytes()
    assert a == b


def test_unfitted_model_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(FCNCD(), tmp_path / "x.ckpt")


def test_corrupt_files(toy_mole, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        read_header(bad)
    raw = save_checkpoint(FCNCD(d=4, h1=5, h2=3, **FAST).fit(toy_mole), tmp_path / "m.ckpt").read_bytes()
    bad.write_bytes(raw[:-8])
    with pytest.raises(CheckpointError, match="payload"):
        load_checkpoint(bad)
