"""Independent oracles for the local-test layer.

Everything here is computed from first principles (binomial enumeration,
absorbing-chain solves, raw Monte Carlo) without touching the policy code, so
the test suite can cross-validate the implementation against it.
"""

import math
from dataclasses import dataclass
from math import comb, fsum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import binom

# Direct enumeration is exact and cheap up to here; beyond it the tails are
# evaluated through the regularized incomplete beta with a +-12 sigma window,
# which keeps every term well inside float64 accuracy.
_ENUM_LIMIT = 200


def _binom_pmf_vec(K: int, q: float, lo: int, hi: int) -> np.ndarray:
    return binom.pmf(np.arange(lo, hi + 1), K, q)


def exact_fixed_confidence(K: int, mu: float) -> Tuple[float, float]:
    """Confidence pair (p_g, p_f) of the fixed-sample test on Bernoulli children.

    With A ~ Bin(K, 1-mu) successes at the child holding the target and
    B ~ Bin(K, mu) at the other child, the K-sample SLLRs are monotone in the
    counts, so

        p_g = P(A > B and 2A - K > 0)   (target child wins strictly, and its
                                         SLLR is strictly positive)
        p_f = P(2B - K < 0)^2           (both target-free children go negative)

    Ties (equal counts, or a count exactly at K/2) count against the test.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 < mu < 0.5:
        raise ValueError(f"mu must be in (0, 1/2), got {mu}")
    half = K / 2.0
    if K <= _ENUM_LIMIT:
        pmf_g = [comb(K, a) * (1 - mu) ** a * mu ** (K - a) for a in range(K + 1)]
        pmf_f = [comb(K, b) * mu**b * (1 - mu) ** (K - b) for b in range(K + 1)]
        cdf_f_excl = [0.0] * (K + 2)
        for b in range(K + 1):
            cdf_f_excl[b + 1] = cdf_f_excl[b] + pmf_f[b]
        p_g = fsum(pmf_g[a] * cdf_f_excl[a] for a in range(K + 1) if a > half)
        single = fsum(pmf_f[b] for b in range(K + 1) if b < half)
        return p_g, single * single

    sd_g = math.sqrt(K * mu * (1 - mu))
    mean_g = K * (1 - mu)
    lo = max(int(math.floor(half)) + 1, int(mean_g - 12 * sd_g))
    hi = min(K, int(mean_g + 12 * sd_g) + 1)
    a_vals = np.arange(lo, hi + 1)
    pmf_g = _binom_pmf_vec(K, 1 - mu, lo, hi)
    cdf_f = binom.cdf(a_vals - 1, K, mu)
    p_g = float(np.sum(pmf_g * cdf_f))
    # strict K/2 cut: largest b with 2b - K < 0
    b_cut = (K - 1) // 2 if K % 2 else K // 2 - 1
    single = float(binom.cdf(b_cut, K, mu))
    return p_g, single * single


def sprt_exact_errors(
    mu: float, gamma0: float, gamma1: float
) -> Tuple[float, float]:
    """Exact error pair of a single-child SPRT on the Bernoulli lattice.

    The per-sample log-likelihood ratio is +-s with s = log((1-mu)/mu), so the
    running SLLR lives on a lattice. Thresholds that are not lattice multiples
    are snapped outward (ceil) to the nearest reachable boundary, which is the
    conservative direction. Returns (P_FA, P_MD).
    """
    if not 0.0 < mu < 0.5:
        raise ValueError(f"mu must be in (0, 1/2), got {mu}")
    if not (gamma0 < 0.0 < gamma1):
        raise ValueError("need gamma0 < 0 < gamma1")
    s = math.log((1 - mu) / mu)
    n_up = max(1, math.ceil(gamma1 / s - 1e-12))
    n_dn = max(1, math.ceil(-gamma0 / s - 1e-12))

    def absorb_up(p_up: float) -> float:
        # interior positions -n_dn+1 .. n_up-1; absorbing walls at -n_dn, +n_up
        n_states = n_dn + n_up - 1
        A = np.zeros((n_states, n_states))
        b = np.zeros(n_states)
        for k in range(n_states):
            pos = k - (n_dn - 1)
            A[k, k] = 1.0
            if pos + 1 == n_up:
                b[k] += p_up
            else:
                A[k, k + 1] -= p_up
            if pos - 1 > -n_dn:
                A[k, k - 1] -= 1.0 - p_up
        return float(np.linalg.solve(A, b)[n_dn - 1])

    p_fa = absorb_up(mu)
    p_md = 1.0 - absorb_up(1 - mu)
    return p_fa, p_md


def mc_verdict_distribution(
    run_test: Callable[[np.random.Generator], str],
    n_runs: int,
    seed: int = 0,
) -> Dict[str, float]:
    """Empirical verdict frequencies of a local-test closure."""
    rng = np.random.default_rng(seed)
    counts: Dict[str, int] = {}
    for _ in range(n_runs):
        v = run_test(rng)
        counts[v] = counts.get(v, 0) + 1
    return {k: v / n_runs for k, v in counts.items()}


def binomial_tail_bound_ok(n: int, q: float, delta: float) -> Tuple[float, float]:
    """Exact upper tail P(X >= (1+delta) nq) of Bin(n, q) next to exp(-nq d^2/3).

    Returns (exact_tail, bound); the bound should dominate for delta in (0, 1].
    """
    nu = n * q
    thresh = math.ceil((1 + delta) * nu - 1e-12)
    exact = float(binom.sf(thresh - 1, n, q))
    bound = math.exp(-nu * delta * delta / 3.0)
    return exact, bound


@dataclass
class OracleCheck:
    name: str
    passed: bool
    detail: str


def _mc_sigma(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / n)


def verify_report(mc_runs: int = 40000, seed: int = 1234) -> List[OracleCheck]:
    """Self-contained oracle suite behind `irw verify`."""
    from . import localtests as lt
    from .models import Bernoulli

    checks: List[OracleCheck] = []

    # Single draw per child: the target child wins only on the up step
    # (0.6) with the empty sibling on its down step (0.6); the empty
    # child goes negative with probability 0.6, squared across siblings.
    pg1, pf1 = exact_fixed_confidence(1, 0.4)
    checks.append(
        OracleCheck(
            "fixed-confidence K=1 mu=0.4",
            abs(pf1 - 0.36) < 1e-12 and abs(pg1 - 0.36) < 1e-12,
            f"p_g={pg1:.6f} p_f={pf1:.6f} (expect 0.36, 0.36)",
        )
    )

    both = [
        K
        for K in range(1, 16)
        if all(v > 0.5625 for v in exact_fixed_confidence(K, 0.4))
    ]
    checks.append(
        OracleCheck(
            "fixed-confidence minimal K at p=0.5625",
            both and both[0] == 11,
            f"smallest K with both inequalities: {both[0] if both else 'none'}",
        )
    )

    g1 = math.log(3.0)
    pfa, pmd = sprt_exact_errors(0.4, -g1, g1)
    checks.append(
        OracleCheck(
            "sprt lattice errors at +-log 3",
            abs(pfa - pmd) < 1e-12 and abs(pfa - 0.2285714285714286) < 1e-9,
            f"P_FA={pfa:.7f} P_MD={pmd:.7f} (expect 0.2285714, both <= 0.25)",
        )
    )

    # Monte Carlo fixed test against the exact pair
    pg7, pf7 = exact_fixed_confidence(7, 0.4)

    def fixed_h0(rng):
        v = lt.fixed_sample_test(
            Bernoulli(0.4), Bernoulli(0.4), Bernoulli(0.6), Bernoulli(0.4), 7, rng
        )
        return v.verdict

    freq = mc_verdict_distribution(fixed_h0, mc_runs, seed)
    h0 = freq.get("H0", 0.0)
    tol = 3 * _mc_sigma(pf7, mc_runs)
    checks.append(
        OracleCheck(
            "fixed test MC vs exact (H0 side, K=7)",
            abs(h0 - pf7) <= tol,
            f"MC P(H0|no target)={h0:.4f} exact={pf7:.4f} tol={tol:.4f}",
        )
    )

    def fixed_h1(rng):
        v = lt.fixed_sample_test(
            Bernoulli(0.6), Bernoulli(0.4), Bernoulli(0.6), Bernoulli(0.4), 7, rng
        )
        return v.verdict

    # The running test breaks positive SLLR ties toward H1, so its H1
    # rate exceeds the strict-inequality p_g by the positive-tie mass.
    def pmf(k, j, q):
        return math.comb(k, j) * q ** j * (1 - q) ** (k - j)

    tie_pos = sum(pmf(7, j, 0.6) * pmf(7, j, 0.4) for j in range(4, 8))
    target = pg7 + tie_pos
    freq = mc_verdict_distribution(fixed_h1, mc_runs, seed + 1)
    h1 = freq.get("H1", 0.0)
    tol = 3 * _mc_sigma(target, mc_runs)
    checks.append(
        OracleCheck(
            "fixed test MC vs exact (H1 side, K=7)",
            abs(h1 - target) <= tol,
            f"MC P(H1|left target)={h1:.4f} exact={target:.4f} tol={tol:.4f}",
        )
    )

    ok = True
    worst = ""
    for n in (20, 50, 200, 1000):
        for q in (0.05, 0.2, 0.4):
            for delta in (0.1, 0.3, 0.5, 1.0):
                exact, bound = binomial_tail_bound_ok(n, q, delta)
                if exact > bound + 1e-15:
                    ok = False
                    worst = f"n={n} q={q} delta={delta}: {exact:.3g} > {bound:.3g}"
    checks.append(
        OracleCheck(
            "binomial upper-tail bound dominates exact tail",
            ok,
            worst or "exp(-nu delta^2/3) >= exact tail on the whole grid",
        )
    )

    ok = True
    worst = ""
    for mu in (0.30, 0.35, 0.40, 0.44, 0.47):
        for eta in (0.6, 0.75, 0.9):
            K33 = lt.eq33_sample_size(mu, eta)
            pg, pf = exact_fixed_confidence(K33, mu)
            target = eta * eta
            if pg <= target or pf <= target:
                ok = False
                worst = f"mu={mu} eta={eta}: K={K33} p_g={pg:.4f} p_f={pf:.4f}"
    checks.append(
        OracleCheck(
            "closed-form K bound never under-sizes",
            ok,
            worst or "exact confidences exceed eta^2 at the closed-form K",
        )
    )

    return checks
