import numpy as np
import pytest

from irwalk.chernoff import eligible_leaves, imbalance_condition, run_chernoff
from irwalk.models import BernoulliTreeModel, ExponentialFlowModel
from irwalk.tree import GroundTruth, place_targets


def test_imbalance_condition_symmetric_family():
    # symmetric per-leaf divergences reduce the rule to L <= M - L
    model = BernoulliTreeModel(mu0=0.4)
    assert imbalance_condition(model, 3, 16)
    assert imbalance_condition(model, 8, 16)
    assert not imbalance_condition(model, 10, 16)
    assert imbalance_condition(model, 16, 16)


def test_imbalance_condition_lopsided_family():
    # confirming an occupied leaf is far cheaper than clearing an empty
    # one here, so the empty side sets the pace unless L is tiny
    model = ExponentialFlowModel(lambda_g=10.0, lambda_f=0.01)
    assert not imbalance_condition(model, 1, 16)
    assert imbalance_condition(model, 16, 16)
    with pytest.raises(ValueError):
        imbalance_condition(model, 0, 16)


def test_eligible_front_window():
    scores = [5.0, -1.0, 3.0, 0.5]
    undeclared = [True, True, True, True]
    assert eligible_leaves(scores, undeclared, 2, True) == [0, 2]
    assert eligible_leaves(scores, undeclared, 1, True) == [0]


def test_eligible_back_window_keeps_nonnegative_front():
    """A front-runner at score zero stays probe-able in back mode.

    Without this the pool can wedge: an untouched true target sits in
    the front ranks at exactly zero and nothing would ever sample it.
    """
    scores = [0.0, -1.0, -2.0, -3.0]
    undeclared = [True, True, True, True]
    pool = eligible_leaves(scores, undeclared, 1, False)
    assert pool == [0, 1, 2, 3]

    # a strictly negative front-runner is left out
    scores = [-0.5, -1.0, -2.0, -3.0]
    pool = eligible_leaves(scores, undeclared, 1, False)
    assert pool == [1, 2, 3]


def test_eligible_skips_declared_and_breaks_ties_by_index():
    scores = [2.0, 2.0, 2.0, -1.0]
    undeclared = [True, False, True, True]
    assert eligible_leaves(scores, undeclared, 2, True) == [0, 2]
    assert eligible_leaves(scores, undeclared, 2, False) == [0, 2, 3]


def test_run_chernoff_validation():
    model = BernoulliTreeModel(mu0=0.4)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        run_chernoff(model, 8, 0.01, GroundTruth(M=8), rng)
    with pytest.raises(ValueError):
        run_chernoff(model, 8, 0.01, GroundTruth(M=4, target_leaves=(0,)),
                     rng)


def test_run_chernoff_deterministic_per_seed():
    model = BernoulliTreeModel(mu0=0.4)
    truth = GroundTruth(M=8, target_leaves=(5,))
    a = run_chernoff(model, 8, 0.01, truth, np.random.default_rng(42))
    b = run_chernoff(model, 8, 0.01, truth, np.random.default_rng(42))
    assert a == b


def test_run_chernoff_single_target_accuracy():
    model = BernoulliTreeModel(mu0=0.4)
    hits = 0
    runs = 300
    for rep in range(runs):
        rng = np.random.default_rng(200 + rep)
        truth = place_targets(8, 1, rng)
        res = run_chernoff(model, 8, 0.01, truth, rng)
        assert len(res.declared) == 1
        assert res.test_samples == 0
        assert res.samples == res.leaf_samples
        hits += res.correct
    assert hits / runs >= 0.95


def test_run_chernoff_multi_target():
    model = ExponentialFlowModel(lambda_g=10.0, lambda_f=0.001)
    hits = 0
    runs = 150
    for rep in range(runs):
        rng = np.random.default_rng(700 + rep)
        truth = place_targets(16, 3, rng)
        res = run_chernoff(model, 16, 1e-3, truth, rng,
                           max_samples=10 ** 7)
        assert len(res.declared) == 3
        hits += res.correct
    assert hits / runs >= 0.9


def test_run_chernoff_truncation():
    model = BernoulliTreeModel(mu0=0.45)
    truth = GroundTruth(M=8, target_leaves=(1,))
    res = run_chernoff(model, 8, 1e-8, truth, np.random.default_rng(1),
                       max_samples=25)
    assert res.truncated
    assert res.declared == ()
    assert not res.correct
