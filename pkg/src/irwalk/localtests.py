"""Local hypothesis tests run at internal tree nodes.

Each test observes the two children of a node and decides whether the
subtree looks empty (H0), the left child looks occupied (H1), the right
child does (H2), or, in the sign-rule variant, both do (H3).  Decisions
are built from sign-adjusted log-likelihood ratios of child samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special, stats

from .models import (
    Bernoulli,
    Distribution,
    Exponential,
    ExponentialFlowModel,
    HierarchicalModel,
    llr,
    sample,
)

TEST_KINDS = ("fixed", "sequential", "active")

H0, H1, H2, H3 = "H0", "H1", "H2", "H3"


def sequential_thresholds(p_fa: float, p_md: float) -> Tuple[float, float]:
    """Wald stopping boundaries (upper, lower) for target error rates."""
    if not (0.0 < p_fa < 1.0 and 0.0 < p_md < 1.0):
        raise ValueError("error rates must lie in (0, 1)")
    upper = math.log((1.0 - p_md) / p_fa)
    lower = math.log(p_md / (1.0 - p_fa))
    return upper, lower


def active_thresholds(p: float) -> Tuple[float, float]:
    """Stopping boundaries (upper, lower) for the adaptive-allocation test.

    Derived from a prior that puts mass p on the commanded hypothesis and
    splits the rest evenly, so the upper boundary is log(2p / (1 - p)).
    """
    if not 0.5 < p < 1.0:
        raise ValueError("confidence must lie in (0.5, 1)")
    upper = math.log(2.0 * p / (1.0 - p))
    return upper, -upper


def default_error_pair(p: float) -> Tuple[float, float]:
    """Symmetric (P_FA, P_MD) choice meeting (1-P_FA)(1-P_MD) >= p."""
    e = 1.0 - math.sqrt(p)
    return e, e


@dataclass(frozen=True)
class LocalTestSpec:
    """Configuration for the per-node test: kind, confidence, error split."""

    kind: str = "fixed"
    p: float = 0.5625
    p_fa: Optional[float] = None
    p_md: Optional[float] = None
    cap_factor: int = 10

    def __post_init__(self) -> None:
        if self.kind not in TEST_KINDS:
            raise ValueError(f"unknown test kind {self.kind!r}")
        if not 0.5 < self.p < 1.0:
            raise ValueError("confidence p must lie in (0.5, 1)")
        if (self.p_fa is None) != (self.p_md is None):
            raise ValueError("set both p_fa and p_md or neither")
        if self.p_fa is not None:
            if not (0.0 < self.p_fa < 0.5 and 0.0 < self.p_md < 0.5):
                raise ValueError("error rates must lie in (0, 0.5)")
            if (1.0 - self.p_fa) * (1.0 - self.p_md) < self.p - 1e-12:
                raise ValueError("error rates too large for confidence p")
        if self.cap_factor < 1:
            raise ValueError("cap_factor must be positive")

    def error_pair(self) -> Tuple[float, float]:
        if self.p_fa is not None:
            return self.p_fa, self.p_md
        return default_error_pair(self.p)

    def wald_boundaries(self) -> Tuple[float, float]:
        p_fa, p_md = self.error_pair()
        return sequential_thresholds(p_fa, p_md)

    def active_boundaries(self) -> Tuple[float, float]:
        return active_thresholds(self.p)


@dataclass
class LocalVerdict:
    verdict: str
    samples_used: int
    s_left: float
    s_right: float
    truncated: bool = False


def _child_sllr(truth: Distribution, present: Distribution,
                absent: Distribution, k: int, rng: np.random.Generator,
                ) -> float:
    """Sum of k log-likelihood ratios from one child.

    Bernoulli children consume a single binomial variate; continuous
    children consume k uniforms through the inverse CDF.
    """
    if isinstance(truth, Bernoulli):
        ones = int(rng.binomial(k, truth.mean))
        return ones * llr(present, absent, 1.0) + (k - ones) * llr(
            present, absent, 0.0)
    total = 0.0
    for _ in range(k):
        y = sample(truth, rng)
        total += llr(present, absent, y)
    return total


def fixed_sample_test(truth_left: Distribution, truth_right: Distribution,
                      present: Distribution, absent: Distribution, k: int,
                      rng: np.random.Generator) -> LocalVerdict:
    """Fixed budget test: k samples per child, decide by the larger score.

    Declares H0 when neither child's score is positive; otherwise the
    child with the larger score wins, left on ties.
    """
    if k < 1:
        raise ValueError("sample budget must be at least 1")
    s_left = _child_sllr(truth_left, present, absent, k, rng)
    s_right = _child_sllr(truth_right, present, absent, k, rng)
    if s_left <= 0.0 and s_right <= 0.0:
        verdict = H0
    elif s_left >= s_right:
        verdict = H1
    else:
        verdict = H2
    return LocalVerdict(verdict, 2 * k, s_left, s_right)


def sequential_test(truth_left: Distribution, truth_right: Distribution,
                    present: Distribution, absent: Distribution,
                    upper: float, lower: float, cap: int,
                    rng: np.random.Generator) -> LocalVerdict:
    """Two one-sided sequential tests, left child first.

    Each leg samples until its running score crosses a boundary.  A leg
    ending at or above the upper boundary flags its child; if the left
    leg flags, the right child is never sampled.  Legs that exhaust the
    cap resolve by the sign of the score at truncation.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    truncated = False

    def leg(truth: Distribution) -> Tuple[float, int, bool]:
        s = 0.0
        used = 0
        while used < cap:
            y = sample(truth, rng)
            used += 1
            s += llr(present, absent, y)
            if s >= upper:
                return s, used, True
            if s <= lower:
                return s, used, False
        nonlocal truncated
        truncated = True
        return s, used, s > 0.0

    s_left, used_left, hit_left = leg(truth_left)
    if hit_left:
        return LocalVerdict(H1, used_left, s_left, 0.0, truncated)
    s_right, used_right, hit_right = leg(truth_right)
    verdict = H2 if hit_right else H0
    return LocalVerdict(verdict, used_left + used_right, s_left, s_right,
                        truncated)


def active_test(truth_left: Distribution, truth_right: Distribution,
                present: Distribution, absent: Distribution,
                upper: float, lower: float, cap: int,
                rng: np.random.Generator) -> LocalVerdict:
    """Adaptive-allocation test: always sample the leading child.

    Stops with H1/H2 once a score reaches the upper boundary, or with H0
    once the larger score falls to the lower boundary.  Ties in the
    leader choice go left.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    s_left = 0.0
    s_right = 0.0
    used = 0
    while used < cap:
        if s_left >= s_right:
            y = sample(truth_left, rng)
            s_left += llr(present, absent, y)
        else:
            y = sample(truth_right, rng)
            s_right += llr(present, absent, y)
        used += 1
        if s_left >= upper:
            return LocalVerdict(H1, used, s_left, s_right)
        if s_right >= upper:
            return LocalVerdict(H2, used, s_left, s_right)
        if max(s_left, s_right) <= lower:
            return LocalVerdict(H0, used, s_left, s_right)
    if s_left > 0.0 or s_right > 0.0:
        verdict = H1 if s_left >= s_right else H2
    else:
        verdict = H0
    return LocalVerdict(verdict, used, s_left, s_right, truncated=True)


def sign_rule_fixed_test(truth_left: Distribution,
                         truth_right: Distribution,
                         pair_left: Tuple[Distribution, Distribution],
                         pair_right: Tuple[Distribution, Distribution],
                         k_left: int, k_right: int,
                         skip_left: bool, skip_right: bool,
                         rng: np.random.Generator) -> LocalVerdict:
    """Fixed budget test scored per child and decided by score signs.

    Each child carries its own likelihood pair and budget, so the two
    sides may test different occupancy increments.  A skipped child is
    not sampled and counts as non-positive.  Both signs positive yields
    H3; the walk breaks that tie, not the test.
    """
    s_left = 0.0
    s_right = 0.0
    used = 0
    if not skip_left:
        if k_left < 1:
            raise ValueError("sample budget must be at least 1")
        s_left = _child_sllr(truth_left, pair_left[0], pair_left[1],
                             k_left, rng)
        used += k_left
    if not skip_right:
        if k_right < 1:
            raise ValueError("sample budget must be at least 1")
        s_right = _child_sllr(truth_right, pair_right[0], pair_right[1],
                              k_right, rng)
        used += k_right
    pos_left = (not skip_left) and s_left > 0.0
    pos_right = (not skip_right) and s_right > 0.0
    if pos_left and pos_right:
        verdict = H3
    elif pos_left:
        verdict = H1
    elif pos_right:
        verdict = H2
    else:
        verdict = H0
    return LocalVerdict(verdict, used, s_left, s_right)


def eq33_sample_size(mu: float, eta: float) -> int:
    """Closed-form per-child budget guaranteeing confidence eta.

    Conservative Chernoff-style bound for symmetric Bernoulli children
    with noise parameter mu < 1/2.
    """
    if not 0.0 < mu < 0.5:
        raise ValueError("mu must lie in (0, 0.5)")
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    return math.ceil(12.0 * (1.0 - mu) * math.log(1.0 / (1.0 - eta))
                     / (1.0 - 2.0 * mu) ** 2)


def _exp_single_confidence(model: ExponentialFlowModel, level: int,
                           k: int) -> Tuple[float, float]:
    """Exact (p_g, p_f) for exponential children at one budget k.

    The score after k draws is k*step - drift*G with G a Gamma(k) sum,
    so both confidences reduce to Gamma tails; the win probability
    against an independent empty sibling is a one dimensional integral
    over the occupied child's Gamma density.
    """
    child = level - 1
    hi_rate = model.rate(child, 1)
    lo_rate = model.rate(child, 0)
    step = math.log(hi_rate / lo_rate)
    drift = hi_rate - lo_rate
    t_zero = k * step / drift
    neg = float(special.gammaincc(k, lo_rate * t_zero))
    p_f = neg * neg

    def integrand(g: float) -> float:
        dens = stats.gamma.pdf(g, a=k, scale=1.0 / hi_rate)
        return dens * float(special.gammaincc(k, lo_rate * g))

    p_g, _ = integrate.quad(integrand, 0.0, t_zero, limit=200,
                            epsabs=1e-12, epsrel=1e-10)
    return float(p_g), p_f


def fixed_confidence(model: HierarchicalModel, level: int,
                     k: int) -> Tuple[float, float]:
    """Confidence pair (p_g, p_f) of the fixed test at a given level."""
    from .oracle import exact_fixed_confidence

    if level < 1:
        raise ValueError("tests run at internal levels only")
    if model.family == "bernoulli":
        return exact_fixed_confidence(k, model.mu(level - 1))
    return _exp_single_confidence(model, level, k)


def calibrate_k(model: HierarchicalModel, level: int, p: float, *,
                k_max: int = 10 ** 6) -> int:
    """Smallest per-child budget whose confidences both exceed p."""
    from .oracle import exact_fixed_confidence

    if not 0.5 < p < 1.0:
        raise ValueError("confidence p must lie in (0.5, 1)")
    if level < 1:
        raise ValueError("tests run at internal levels only")

    if model.family == "bernoulli":
        mu = model.mu(level - 1)

        def ok(k: int) -> bool:
            p_g, p_f = exact_fixed_confidence(k, mu)
            return p_g > p and p_f > p

        for k in range(1, min(65, k_max + 1)):
            if ok(k):
                return k
        # Larger budgets: odd k dominates its even neighbours and both
        # confidences grow along the odd subsequence, so bracket and
        # bisect over odd k only.
        lo = 65
        hi = lo
        while hi <= k_max and not ok(hi):
            lo = hi
            hi = 2 * hi + 1
        if hi > k_max:
            raise ValueError(f"no budget up to {k_max} reaches p={p}")
        while hi - lo > 2:
            mid = lo + (hi - lo) // 2
            mid += (mid % 2 == 0)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return hi

    for k in range(1, k_max + 1):
        p_g, p_f = _exp_single_confidence(model, level, k)
        if p_g > p and p_f > p:
            return k
    raise ValueError(f"no budget up to {k_max} reaches p={p}")


def calibrate_k_sign(model: ExponentialFlowModel, level: int, d_hat: int,
                     p: float, *, k_max: int = 10 ** 6) -> int:
    """Smallest per-child budget for the sign-rule test at one child state.

    The child score compares occupancy d_hat + 1 against d_hat.  Both
    sign probabilities (non-positive under d_hat, positive under
    d_hat + 1) must exceed sqrt(p), making any joint verdict over two
    independent children at least p-reliable.  Both are Gamma tails,
    so the search is exact.
    """
    if not 0.5 < p < 1.0:
        raise ValueError("confidence p must lie in (0.5, 1)")
    if level < 1:
        raise ValueError("tests run at internal levels only")
    child = level - 1
    hi_rate = model.rate(child, d_hat + 1)
    lo_rate = model.rate(child, d_hat)
    step = math.log(hi_rate / lo_rate)
    drift = hi_rate - lo_rate
    target = math.sqrt(p)
    for k in range(1, k_max + 1):
        t_zero = k * step / drift
        q_minus = float(special.gammaincc(k, lo_rate * t_zero))
        q_plus = float(special.gammainc(k, hi_rate * t_zero))
        if q_minus > target and q_plus > target:
            return k
    raise ValueError(f"no budget up to {k_max} reaches sqrt(p)")
