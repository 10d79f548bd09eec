import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis.strategies import floats, integers

from irwalk.models import (
    Bernoulli,
    BernoulliTreeModel,
    DecaySchedule,
    Exponential,
    ExponentialFlowModel,
    kl,
    llr,
    node_distributions,
    sample,
)


def test_llr_bernoulli_value():
    got = llr(Bernoulli(0.6), Bernoulli(0.4), 1.0)
    np.testing.assert_allclose(got, 0.405465, atol=1e-6)


def test_llr_identical_distributions_is_zero():
    assert llr(Bernoulli(0.3), Bernoulli(0.3), 1.0) == 0.0
    assert llr(Exponential(2.0), Exponential(2.0), 0.7) == 0.0


def test_llr_exponential_value():
    got = llr(Exponential(10.0), Exponential(0.01), 0.1)
    np.testing.assert_allclose(got, math.log(1000.0) - 9.99 * 0.1, atol=1e-9)
    np.testing.assert_allclose(got, 5.90876, atol=1e-5)


def test_llr_rejects_mixed_families():
    with pytest.raises(TypeError):
        llr(Bernoulli(0.6), Exponential(1.0), 1.0)


def test_kl_bernoulli_value():
    got = kl(Bernoulli(0.6), Bernoulli(0.4))
    np.testing.assert_allclose(got, 0.2 * math.log(0.6 / 0.4), atol=1e-12)
    np.testing.assert_allclose(got, 0.081093, atol=1e-6)


def test_kl_exponential_value():
    got = kl(Exponential(10.0), Exponential(0.01))
    np.testing.assert_allclose(got, math.log(10.0 / 0.01) + 0.01 / 10.0 - 1.0,
                               atol=1e-12)


def test_kl_exponential_matches_numerical_integration():
    """Closed form against a brute-force integral on a fine grid."""
    a, b = Exponential(3.0), Exponential(0.5)
    xs = np.linspace(1e-9, 40.0 / a.rate, 400001)
    pa = a.rate * np.exp(-a.rate * xs)
    integrand = pa * (np.log(a.rate / b.rate) - (a.rate - b.rate) * xs)
    numeric = np.trapezoid(integrand, xs)
    np.testing.assert_allclose(kl(a, b), numeric, rtol=1e-6)


@given(floats(min_value=0.05, max_value=0.95),
       floats(min_value=0.05, max_value=0.95))
def test_kl_nonnegative_and_zero_only_at_equality(p, q):
    d = kl(Bernoulli(p), Bernoulli(q))
    assert d >= 0.0
    if abs(p - q) > 1e-9:
        assert d > 0.0


def test_sample_determinism_and_degenerate():
    rng1 = np.random.default_rng(42)
    rng2 = np.random.default_rng(42)
    a = [sample(Bernoulli(0.6), rng1) for _ in range(20)]
    b = [sample(Bernoulli(0.6), rng2) for _ in range(20)]
    assert a == b
    rng = np.random.default_rng(0)
    assert all(sample(Bernoulli(0.0), rng) == 0.0 for _ in range(10))


def test_sample_means():
    rng = np.random.default_rng(123)
    n = 10 ** 5
    bern = np.mean([sample(Bernoulli(0.6), rng) for _ in range(n)])
    assert abs(bern - 0.6) < 0.005
    expo = np.mean([sample(Exponential(10.0), rng) for _ in range(n)])
    assert abs(expo - 0.1) < 0.001


def test_llr_sign_under_each_distribution():
    """Mean score is about +KL under present and -KL under absent."""
    present, absent = Bernoulli(0.65), Bernoulli(0.35)
    rng = np.random.default_rng(99)
    n = 10 ** 5
    from_present = np.mean([llr(present, absent, sample(present, rng))
                            for _ in range(n)])
    from_absent = np.mean([llr(present, absent, sample(absent, rng))
                           for _ in range(n)])
    sigma = 3.0 * abs(llr(present, absent, 1.0)) / math.sqrt(n)
    assert abs(from_present - kl(present, absent)) < sigma
    assert abs(from_absent + kl(absent, present)) < sigma
    assert from_present > 0.0 > from_absent


def test_decay_schedule_values():
    poly = DecaySchedule("polynomial", alpha=1.0)
    np.testing.assert_allclose(poly.mu_at(0.4, 1), 0.45, atol=1e-12)
    expo = DecaySchedule("exponential", alpha=2.0)
    np.testing.assert_allclose(expo.mu_at(0.4, 1), 0.5 - 0.1 / 2.0,
                               atol=1e-12)
    const = DecaySchedule()
    assert const.mu_at(0.4, 9) == 0.4


def test_decay_schedule_validation():
    with pytest.raises(ValueError):
        DecaySchedule("polynomial", alpha=0.0)
    with pytest.raises(ValueError):
        DecaySchedule("exponential", alpha=1.0)
    with pytest.raises(ValueError):
        DecaySchedule("geometric", alpha=2.0)
    with pytest.raises(ValueError):
        BernoulliTreeModel(mu0=0.6)


@given(integers(min_value=2, max_value=14))
def test_decay_monotone_below_half(log2m):
    for sched in (DecaySchedule("polynomial", alpha=1.0),
                  DecaySchedule("exponential", alpha=1.2)):
        mus = [sched.mu_at(0.4, l) for l in range(log2m + 1)]
        assert all(m < 0.5 for m in mus)
        assert all(b > a for a, b in zip(mus, mus[1:]))


def test_decay_approaches_half():
    sched = DecaySchedule("exponential", alpha=1.6)
    assert sched.mu_at(0.4, 14) > 0.499


def test_bernoulli_tree_levels():
    model = BernoulliTreeModel(mu0=0.4,
                               decay=DecaySchedule("polynomial", alpha=1.0))
    present, absent = node_distributions(model, 1, 1)
    np.testing.assert_allclose(absent.mean, 0.45, atol=1e-12)
    np.testing.assert_allclose(present.mean, 0.55, atol=1e-12)
    leaf_present, leaf_absent = node_distributions(model, 0, 1)
    assert leaf_present.mean == 0.6
    assert leaf_absent.mean == 0.4


def test_bernoulli_tree_kl_symmetry():
    model = BernoulliTreeModel(mu0=0.4,
                               decay=DecaySchedule("exponential", alpha=1.2))
    for level in range(8):
        g, f = node_distributions(model, level, 1)
        np.testing.assert_allclose(kl(g, f), kl(f, g), rtol=1e-12)


def test_bernoulli_tree_rejects_multi_target():
    model = BernoulliTreeModel(mu0=0.4)
    with pytest.raises(ValueError):
        model.distribution(2, 2)
    with pytest.raises(ValueError):
        model.distribution(1, -1)


def test_exponential_flow_rates():
    model = ExponentialFlowModel(lambda_g=10.0, lambda_f=0.01)
    d1, d0 = node_distributions(model, 1, 1)
    np.testing.assert_allclose(d1.rate, 10.01, atol=1e-12)
    np.testing.assert_allclose(d0.rate, 0.02, atol=1e-12)
    assert model.distribution(0, 1).rate == 10.0


def test_exponential_flow_capacity_error():
    model = ExponentialFlowModel(lambda_g=10.0, lambda_f=0.01)
    with pytest.raises(ValueError):
        model.distribution(0, 2)
    with pytest.raises(ValueError):
        ExponentialFlowModel(lambda_g=0.5, lambda_f=1.0)


def test_exponential_flow_additive_aggregation():
    """A node's rate equals the sum of its children's rates, any split."""
    model = ExponentialFlowModel(lambda_g=5.0, lambda_f=0.2)
    for level in range(1, 7):
        cap = 1 << level
        for d in range(min(cap, 9) + 1):
            if d > cap:
                continue
            total = model.rate(level, d)
            for d_left in range(max(0, d - cap // 2), min(d, cap // 2) + 1):
                lr = model.rate(level - 1, d_left)
                rr = model.rate(level - 1, d - d_left)
                np.testing.assert_allclose(total, lr + rr, rtol=1e-12)


def test_occupancy_kl_ordering():
    """Separation from d' shrinks as d' approaches the true count d."""
    model = ExponentialFlowModel(lambda_g=4.0, lambda_f=0.3)
    for level in range(2, 6):
        cap = 1 << level
        for d in range(1, min(4, cap) + 1):
            pd = model.distribution(level, d)
            for dp in range(0, min(4, cap)):
                if dp + 1 > cap:
                    continue
                gap = (kl(pd, model.distribution(level, dp))
                       - kl(pd, model.distribution(level, dp + 1)))
                if dp <= d - 1:
                    assert gap > 0.0
                else:
                    assert gap < 0.0
