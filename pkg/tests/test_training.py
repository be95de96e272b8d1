import numpy as np
import pytest

from fcncd import FCNCD
from fcncd.data import BlockType, ResponseDataset
from fcncd.training import PROFILES, TrainConfig, make_split, predict_scores, train


def tiny(**kw):
    return FCNCD(d=4, h1=6, h2=5, **kw)


def test_profiles():
    assert PROFILES["sim-mole"] == {"lam": 10.0, "batch_size": 32, "lr": 5e-4}
    cfg = TrainConfig.from_profile("map", seed=3)
    assert (cfg.lam, cfg.batch_size, cfg.lr, cfg.seed) == (8.0, 256, 1e-2, 3)
    assert TrainConfig.from_profile("bfi").lam == 5.0
    with pytest.raises(ValueError):
        TrainConfig.from_profile("nope")


@pytest.mark.parametrize("kw", [
    dict(patience=0), dict(train_fraction=1.0), dict(batch_size=0), dict(split="time"),
    dict(loss="hinge"), dict(lam=0.0),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_loss_decreases_on_toy_data(small_mole):
    ds, _ = small_mole
    model = tiny(max_epochs=10, patience=10, lr=0.01, batch_size=8).fit(ds)
    losses = [h["loss"] for h in model.history_]
    assert len(losses) == 10
    assert losses[-1] < losses[0]


def test_early_stopping_on_frozen_metric(toy_mole):
    # no learning: held-out PRA never improves after the first epoch
    model = tiny(lr=0.0, max_epochs=50, patience=5).fit(toy_mole)
    assert len(model.history_) == 6
    assert model.best_epoch_ == 1
    assert model.stopped_early_
    assert len({h["pra"] for h in model.history_}) == 1


def test_same_seed_same_history(small_mole):
    ds, _ = small_mole
    a = tiny(max_epochs=3, lr=0.01, seed=4).fit(ds)
    b = tiny(max_epochs=3, lr=0.01, seed=4).fit(ds)
    assert a.history_ == b.history_
    for k in a.params_:
        np.testing.assert_array_equal(a.params_[k], b.params_[k])
    c = tiny(max_epochs=3, lr=0.01, seed=5).fit(ds)
    assert c.history_ != a.history_


def test_best_epoch_parameters_restored(small_mole):
    ds, _ = small_mole
    model = tiny(max_epochs=8, patience=8, lr=0.05, batch_size=4).fit(ds)
    held = model.held_out(ds)
    best = model.history_[model.best_epoch_ - 1]
    assert best["pra"] == max(h["pra"] for h in model.history_)
    assert model.score(held) == pytest.approx(best["pra"], abs=1e-12)


def test_single_record_cannot_be_split():
    q = np.eye(3, dtype=int)
    ds = ResponseDataset.from_q_matrix(q, np.array([[0, 1, 2]]), BlockType.RANK, 1, [(0, 0, [1, 2, 3])])
    with pytest.raises(ValueError):
        tiny(max_epochs=1).fit(ds)


def test_response_split_fraction_per_participant(small_mole):
    ds, _ = small_mole
    mask = make_split(ds, TrainConfig(seed=1))
    for p in range(ds.n_participants):
        own = mask[ds.participants == p]
        assert own.sum() == round(0.8 * len(own))
    np.testing.assert_array_equal(mask, make_split(ds, TrainConfig(seed=1)))
    assert not np.array_equal(mask, make_split(ds, TrainConfig(seed=2)))


def test_block_split_keeps_blocks_together(small_mole):
    ds, _ = small_mole
    mask = make_split(ds, TrainConfig(split="block", seed=0))
    for block in range(ds.n_blocks):
        assert len(set(mask[ds.block_ids == block])) == 1
    train_blocks = {int(b) for b in ds.block_ids[mask]}
    assert len(train_blocks) == round(0.8 * ds.n_blocks)


def test_model_records_split(small_mole):
    ds, _ = small_mole
    model = tiny(max_epochs=1, seed=2).fit(ds)
    np.testing.assert_array_equal(model.train_mask_, make_split(ds, model.train_config()))
    assert model.held_out(ds).n_records == (~model.train_mask_).sum()
    with pytest.raises(ValueError):
        model.held_out(ds.subset(np.arange(5)))


def test_predict_scores_chunking_invariant(small_mole):
    ds, _ = small_mole
    model = tiny(max_epochs=1).fit(ds)
    np.testing.assert_array_equal(predict_scores(model, model.params_, ds, chunk=7),
                                  predict_scores(model, model.params_, ds))


def test_direct_train_call(toy_mole):
    model = tiny()
    model._remember_shapes(toy_mole)
    result = train(model, toy_mole, TrainConfig(max_epochs=2, lr=0.01))
    assert [h["epoch"] for h in result.history] == [1, 2]
    assert result.train_mask.dtype == bool
