"""Observation distributions attached to tree nodes.

Two families are supported. In the Bernoulli family a level-l node emits
Bernoulli observations whose mean depends on whether the target sits below it;
the absent mean mu_l may decay toward 1/2 with the level. In the exponential
family a node aggregates the arrival rates of the processes below it, so a
level-l node with d targets observes Exponential(d * lambda_g +
(2^l - d) * lambda_f) inter-arrival times.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union


@dataclass(frozen=True)
class Bernoulli:
    mean: float

    def __post_init__(self):
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"Bernoulli mean must be in [0, 1], got {self.mean}")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError(f"Exponential rate must be positive, got {self.rate}")


Distribution = Union[Bernoulli, Exponential]

DECAY_KINDS = ("constant", "polynomial", "exponential")


@dataclass(frozen=True)
class DecaySchedule:
    """How the absent-mean mu_l approaches 1/2 as the level grows.

    polynomial: mu_l = 1/2 - (1/2 - mu0) * (l + 1)^(-alpha), alpha > 0
    exponential: mu_l = 1/2 - (1/2 - mu0) * alpha^(-l), alpha > 1
    constant: mu_l = mu0
    """

    kind: str = "constant"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in DECAY_KINDS:
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if self.kind == "polynomial" and self.alpha <= 0:
            raise ValueError("polynomial decay needs alpha > 0")
        if self.kind == "exponential" and self.alpha <= 1:
            raise ValueError("exponential decay needs alpha > 1")

    def mu_at(self, mu0: float, level: int) -> float:
        gap = 0.5 - mu0
        if self.kind == "constant":
            return mu0
        if self.kind == "polynomial":
            return 0.5 - gap * (level + 1) ** (-self.alpha)
        return 0.5 - gap * self.alpha ** (-level)


@dataclass(frozen=True)
class BernoulliTreeModel:
    """Level-dependent Bernoulli pair: present Ber(1 - mu_l), absent Ber(mu_l)."""

    mu0: float
    decay: DecaySchedule = DecaySchedule()

    def __post_init__(self):
        if not 0.0 < self.mu0 < 0.5:
            raise ValueError(f"mu0 must be in (0, 1/2), got {self.mu0}")

    family = "bernoulli"

    def mu(self, level: int) -> float:
        return self.decay.mu_at(self.mu0, level)

    def distribution(self, level: int, target_count: int) -> Bernoulli:
        if target_count not in (0, 1):
            raise ValueError(
                "Bernoulli nodes only model 0 or 1 targets; "
                f"got target_count={target_count}"
            )
        m = self.mu(level)
        return Bernoulli(1.0 - m if target_count else m)


@dataclass(frozen=True)
class ExponentialFlowModel:
    """Additive-rate exponential family: rate(l, d) = d*lambda_g + (2^l - d)*lambda_f."""

    lambda_g: float
    lambda_f: float

    def __post_init__(self):
        if self.lambda_f <= 0 or self.lambda_g <= self.lambda_f:
            raise ValueError("need 0 < lambda_f < lambda_g")

    family = "exponential"

    def rate(self, level: int, target_count: int) -> float:
        n_leaves = 1 << level
        if not 0 <= target_count <= n_leaves:
            raise ValueError(
                f"target_count {target_count} exceeds level-{level} capacity {n_leaves}"
            )
        return target_count * self.lambda_g + (n_leaves - target_count) * self.lambda_f

    def distribution(self, level: int, target_count: int) -> Exponential:
        return Exponential(self.rate(level, target_count))


HierarchicalModel = Union[BernoulliTreeModel, ExponentialFlowModel]


def node_distributions(
    model: HierarchicalModel, level: int, target_count: int
) -> Tuple[Distribution, Distribution]:
    """Distribution of a node holding `target_count` targets, paired with the
    one-fewer reference the local test scores against (floored at zero)."""
    return (
        model.distribution(level, target_count),
        model.distribution(level, max(target_count - 1, 0)),
    )


def llr(present: Distribution, absent: Distribution, y: float) -> float:
    """log(density_present(y) / density_absent(y)); the families cannot mix."""
    if isinstance(present, Bernoulli) and isinstance(absent, Bernoulli):
        if y not in (0.0, 1.0):
            raise ValueError(f"Bernoulli observation must be 0.0 or 1.0, got {y}")
        p, q = (present.mean, absent.mean) if y else (1 - present.mean, 1 - absent.mean)
        return math.log(p / q)
    if isinstance(present, Exponential) and isinstance(absent, Exponential):
        if y < 0:
            raise ValueError(f"Exponential observation must be >= 0, got {y}")
        return math.log(present.rate / absent.rate) - (present.rate - absent.rate) * y
    raise TypeError("llr requires two distributions of the same family")


def kl(a: Distribution, b: Distribution) -> float:
    """KL divergence D(a || b) in nats, closed form."""
    if isinstance(a, Bernoulli) and isinstance(b, Bernoulli):
        total = 0.0
        for pa, pb in ((a.mean, b.mean), (1 - a.mean, 1 - b.mean)):
            if pa > 0.0:
                total += pa * math.log(pa / pb)
        return total
    if isinstance(a, Exponential) and isinstance(b, Exponential):
        return math.log(a.rate / b.rate) + b.rate / a.rate - 1.0
    raise TypeError("kl requires two distributions of the same family")


def sample(dist: Distribution, rng) -> float:
    """One observation, consuming exactly one uniform from the stream.

    The inverse-CDF form is used for the exponential so the compiled backend
    can reproduce the identical draw from the raw bit stream.
    """
    u = rng.random()
    if isinstance(dist, Bernoulli):
        return 1.0 if u < dist.mean else 0.0
    return -math.log1p(-u) / dist.rate
