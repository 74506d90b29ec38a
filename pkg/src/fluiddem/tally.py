"""Exact and Monte Carlo tallies of correctness probabilities.

Direct voting is correct when the number of correct votes strictly exceeds
n/2; weighted fluid voting is correct when the weight-weighted correct votes
strictly exceed n/2 (ties count as incorrect, which matters for even n). The
exact path is a dynamic program over achievable weighted totals; the Monte
Carlo path samples full vote vectors and reports Hoeffding confidence
intervals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .delegation_graph import DelegationGraph, compute_weights

MAX_TOTAL_WEIGHT = 100_000_000
BRUTE_FORCE_MAX_N = 20
EXACT_GAIN_CAP = 20_000


@dataclass(frozen=True)
class GainReport:
    """P[fluid correct] - P[direct correct] for one instance."""

    p_direct: float
    p_fluid: float
    gain: float
    method: str  # "exact" | "brute_force" | "monte_carlo"
    ci_halfwidth: Optional[float] = None
    reps: Optional[int] = None

    def to_json(self) -> str:
        payload = {
            "p_direct": self.p_direct,
            "p_fluid": self.p_fluid,
            "gain": self.gain,
            "method": self.method,
        }
        if self.ci_halfwidth is not None:
            payload["ci_halfwidth"] = self.ci_halfwidth
        if self.reps is not None:
            payload["reps"] = self.reps
        return json.dumps(payload)


def _tail_from_pmf(pmf: np.ndarray, threshold: float) -> float:
    kmin = int(math.floor(threshold)) + 1
    if kmin <= 0:
        return 1.0  # every achievable total exceeds the threshold
    if kmin >= pmf.shape[0]:
        return 0.0
    return min(math.fsum(pmf[kmin:].tolist()), 1.0)


def weighted_poisson_binomial_tail(weights, probs, threshold: float) -> float:
    """Exact P[sum_i w_i V_i > threshold] with independent V_i ~ Bernoulli(p_i).

    Dynamic program over achievable totals 0..sum(w); absolute error within
    1e-12 (final tail summed with compensated summation).
    """
    w = np.asarray(weights)
    p = np.asarray(probs, dtype=float)
    if w.shape != p.shape:
        raise ValueError("weights and probs must have equal length")
    if not np.issubdtype(w.dtype, np.integer):
        w_int = np.asarray(np.rint(w), dtype=np.int64)
        if np.any(np.abs(w - w_int) > 0):
            raise ValueError("weights must be nonnegative integers")
        w = w_int
    w = w.astype(np.int64)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative integers")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("probs must lie in [0, 1]")
    total = int(w.sum())
    if total > MAX_TOTAL_WEIGHT:
        raise ValueError(f"total weight {total} exceeds supported maximum {MAX_TOTAL_WEIGHT}")

    pmf = np.zeros(total + 1)
    pmf[0] = 1.0
    top = 0
    nz = np.where(w > 0)[0]
    for i in nz.tolist():
        wi = int(w[i])
        pi = float(p[i])
        seg = pmf[: top + 1].copy()
        pmf[: top + wi + 1] = 0.0
        pmf[: top + 1] = seg * (1.0 - pi)
        pmf[wi : top + wi + 1] += seg * pi
        top += wi
    return _tail_from_pmf(pmf, threshold)


def direct_tail(probs) -> float:
    """Exact P[number of correct votes > n/2] under direct voting."""
    p = np.asarray(probs, dtype=float)
    n = p.shape[0]
    if n < 1:
        raise ValueError("need at least one voter")
    return weighted_poisson_binomial_tail(np.ones(n, dtype=np.int64), p, n / 2.0)


def brute_force_tail(weights, probs, threshold: float) -> float:
    """Test oracle: exact tail by enumerating all 2^n vote outcomes (n <= 20)."""
    w = np.asarray(weights, dtype=np.int64)
    p = np.asarray(probs, dtype=float)
    n = p.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force supports n <= {BRUTE_FORCE_MAX_N}, got {n}")
    masks = np.arange(1 << n, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.uint8)
    totals = bits @ w
    outcome_probs = np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)
    selected = outcome_probs[totals > threshold]
    return min(math.fsum(selected.tolist()), 1.0)


def exact_gain(competencies, graph: DelegationGraph, cap: int = EXACT_GAIN_CAP) -> GainReport:
    """Exact gain report for one instance (n <= cap; O(n^2) dynamic program)."""
    p = np.asarray(competencies, dtype=float)
    n = graph.n
    if n > cap:
        raise ValueError(
            f"exact gain supports n <= {cap}; use monte_carlo_gain for larger instances"
        )
    profile = compute_weights(graph)
    p_fluid = weighted_poisson_binomial_tail(profile.weight, p, n / 2.0)
    p_direct = direct_tail(p)
    return GainReport(p_direct=p_direct, p_fluid=p_fluid, gain=p_fluid - p_direct, method="exact")


def brute_force_gain(competencies, graph: DelegationGraph) -> GainReport:
    """Gain by full outcome enumeration (n <= 20); oracle for exact_gain."""
    p = np.asarray(competencies, dtype=float)
    n = graph.n
    profile = compute_weights(graph)
    p_fluid = brute_force_tail(profile.weight, p, n / 2.0)
    p_direct = brute_force_tail(np.ones(n, dtype=np.int64), p, n / 2.0)
    return GainReport(
        p_direct=p_direct, p_fluid=p_fluid, gain=p_fluid - p_direct, method="brute_force"
    )


def hoeffding_halfwidth(reps: int, delta: float) -> float:
    """Two-sided Hoeffding confidence half-width for a mean of [0, 1] samples."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * reps))


def monte_carlo_gain(
    competencies,
    graph: DelegationGraph,
    reps: int,
    delta: float,
    rng: np.random.Generator,
) -> GainReport:
    """Estimate the gain by sampling full vote vectors.

    ci_halfwidth is the Hoeffding half-width per estimated probability at
    confidence 1 - delta; the gain estimate is the difference of the two
    estimates, so a conservative interval for the gain is +- 2*ci_halfwidth.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    p = np.asarray(competencies, dtype=float)
    n = graph.n
    profile = compute_weights(graph)
    w = profile.weight.astype(np.float64)
    half = n / 2.0

    fluid_hits = 0
    direct_hits = 0
    done = 0
    chunk = max(1, min(reps, 8_000_000 // max(n, 1)))
    while done < reps:
        m = min(chunk, reps - done)
        votes = rng.random((m, n)) < p
        direct_hits += int(np.count_nonzero(votes.sum(axis=1) > half))
        fluid_hits += int(np.count_nonzero(votes @ w > half))
        done += m
    p_direct = direct_hits / reps
    p_fluid = fluid_hits / reps
    return GainReport(
        p_direct=p_direct,
        p_fluid=p_fluid,
        gain=p_fluid - p_direct,
        method="monte_carlo",
        ci_halfwidth=hoeffding_halfwidth(reps, delta),
        reps=reps,
    )
