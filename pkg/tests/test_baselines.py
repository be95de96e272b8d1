import math

import numpy as np
import pytest

from fcncd import numerics as nx
from fcncd.baselines import (
    MUPP2PL,
    BaselineKind,
    MFRanker,
    NCDMRanker,
    RandomRanker,
    RankNetRanker,
    make_baseline,
    mf_item_scores,
    mupp_2pl_probability,
    ncdm_item_scores,
    to_pairs,
)
from fcncd.data import BlockType
from fcncd.metrics import lra, pra, rank_matrix
from gradcheck import TOLERANCE, model_loss, worst_error

TRAINABLE = [
    lambda: MFRanker(width=3, h1=4, h2=3),
    lambda: RankNetRanker(width=3, h1=4, h2=3),
    lambda: NCDMRanker(h1=4, h2=3),
    lambda: MUPP2PL(),
]


def test_pair_conversion_counts():
    assert len(to_pairs([3, 1, 2])) == math.comb(3, 2)
    assert len(to_pairs([1, 2, 3, 4])) == 6
    assert len(to_pairs([3, 2, 2, 1])) == math.comb(4, 2) - math.comb(2, 2)
    assert sorted(to_pairs([3, 2, 2, 1])) == [(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)]


def test_kinds_registry():
    for kind in BaselineKind:
        assert make_baseline(kind).__class__.__name__
    assert isinstance(make_baseline("ncdm-r", lr=0.1, d=7), NCDMRanker)
    with pytest.raises(ValueError):
        make_baseline("kancd-r")


# --------------------------------------------------------------------------
# Random

def test_random_baseline_rank3(rank3):
    model = RandomRanker(seed=0).fit(rank3)
    s = model.decision_function(rank3)
    assert ((s >= 0) & (s < 1)).all()
    np.testing.assert_array_equal(s, RandomRanker(seed=0).fit(rank3).decision_function(rank3))


def test_random_baseline_expected_metrics():
    from fcncd import SimConfig, generate

    ds, _ = generate(SimConfig(n_participants=300, seed=1))
    model = RandomRanker(seed=3).fit(ds)
    s = model.decision_function(ds)
    assert abs(pra(s, ds.ranks) - 0.5) < 0.005
    assert abs(lra(rank_matrix(s, BlockType.MOLE), ds.ranks) - 1 / 12) < 0.01
    assert model.transform().shape == (300, 24)


# --------------------------------------------------------------------------
# MF / RankNet / NCDM-R

def _consts(params):
    g = nx.Graph()
    return {k: g.const(v) for k, v in params.items()}


def test_mf_output_range_and_zero_latents(toy_mole):
    model = MFRanker(width=3, h1=4, h2=3)
    params = model._init_params(toy_mole, np.random.default_rng(0))
    y = mf_item_scores(_consts(params), [0, 1, 1], [0, 3, 5]).value
    assert ((y > 0) & (y < 1)).all()
    params["H_s"][:] = 0.0
    params["H_e"][:] = 0.0
    y = mf_item_scores(_consts(params), [0, 1, 1], [0, 3, 5]).value
    assert np.ptp(y) == 0.0


def test_ranknet_uses_relu_hidden_layers(toy_mole):
    model = RankNetRanker(width=3, h1=4, h2=3)
    assert model.pair_loss == "cross-entropy"
    assert MFRanker.pair_loss == "weighted-bpr"
    assert not MFRanker.interpretable and not RankNetRanker.interpretable


def test_ncdm_output_range_and_masking(toy_mole):
    model = NCDMRanker(h1=4, h2=3)
    params = model._init_params(toy_mole, np.random.default_rng(1))
    model._project(params)
    y = ncdm_item_scores(_consts(params), [0, 1], [0, 5], [0, 1]).value
    assert ((y > 0) & (y < 1)).all()

    def build(g, P):
        return nx.total(ncdm_item_scores(P, [1], [5], [1]))

    _, grads = nx.forward_backward(build, params)
    mask = np.ones(toy_mole.n_dims, dtype=bool)
    mask[1] = False
    assert not grads["H_s"][1, mask].any()
    assert not grads["H_diff"][5, mask].any()
    assert grads["H_s"][1, 1] != 0


def test_ncdm_mlp_weights_nonnegative_after_training(toy_mole):
    model = NCDMRanker(h1=4, h2=3, max_epochs=3, lr=0.05).fit(toy_mole)
    for name in ("W_1", "W_2", "W_3"):
        assert (model.params_[name] >= 0).all()
    ab = model.transform()
    assert ((ab > 0) & (ab < 1)).all()


@pytest.mark.parametrize("make", TRAINABLE, ids=["mf", "ranknet", "ncdm-r", "mupp-2pl"])
def test_baseline_gradients_match_finite_differences(make, toy_mole):
    model = make()
    build = model_loss(model, toy_mole)
    for trial in range(3):
        rng = np.random.default_rng(trial)
        params = model._init_params(toy_mole, rng)
        params = {k: v + rng.normal(scale=0.5, size=v.shape) for k, v in params.items()}
        model._project(params)
        assert worst_error(build, params) < TOLERANCE


# --------------------------------------------------------------------------
# MUPP-2PL

def test_mupp_symmetric_items():
    assert mupp_2pl_probability(0.3, 0.3, 1.2, 1.2, 0.1, 0.1) == 0.5


def test_mupp_unit_example():
    assert mupp_2pl_probability(1.0, 0.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(0.7310585786300049, abs=1e-12)


def test_mupp_increasing_in_trait():
    ps = [mupp_2pl_probability(th, 0.2, 1.3, 0.8, -0.2, 0.4) for th in np.linspace(-3, 3, 13)]
    assert all(b > a for a, b in zip(ps, ps[1:]))


def test_mupp_discriminations_stay_positive(small_mole):
    ds, _ = small_mole
    model = MUPP2PL(max_epochs=3, lr=0.2).fit(ds)
    assert (model.a_ > 0).all()
    assert model.theta_.shape == (ds.n_participants, ds.n_dims)
    p = model.predict_pair(0, int(ds.blocks[0, 0]), int(ds.blocks[0, 1]))
    q = model.predict_pair(0, int(ds.blocks[0, 1]), int(ds.blocks[0, 0]))
    assert p + q == pytest.approx(1.0)


def test_mupp_pair_probability_matches_scores(small_mole):
    ds, _ = small_mole
    model = MUPP2PL(max_epochs=1).fit(ds)
    s = model.decision_function(ds)
    i, j = ds.blocks[ds.block_ids[0], :2]
    expected = 1 / (1 + np.exp(-(s[0, 0] - s[0, 1])))
    assert model.predict_pair(int(ds.participants[0]), int(i), int(j)) == pytest.approx(expected, abs=1e-12)
