"""Reference stochastic processes for delegation-concentration analysis.

The samplers here are the comparison processes used to study how much weight
a single voter can accumulate: the sequential component-growth (infinite
Polya urn / preferential attachment with escape) process, the single
component-size recurrences W and V, the binomial graph branching process, the
live/dead/neutral delegation branching process, and a bucketized multi-type
Poisson branching process with its expected-children matrix.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import distributions
from .mechanisms import (
    ConfidenceBased,
    MechanismSpec,
    PairWeightFn,
    Upward,
    delegation_probability,
    pair_weight,
    phi_bounds,
    phi_mean_in_y,
    phi_x_knots,
    sampling_equivalent,
)

MAX_BUCKETS = 2048


# ---------------------------------------------------------------------------
# component growth (sequential equivalent of upward delegation)


def simulate_simon_components(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sizes of all components after n sequential arrivals.

    Arrival t joins an existing component C with probability p*|C|/(t-1)
    (realized by picking a uniform earlier arrival), otherwise founds a new
    component. Sizes always sum to n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    sizes = [1]
    owner = [0]
    u_join = rng.random(n)
    u_pick = rng.random(n)
    for t in range(2, n + 1):
        if u_join[t - 1] < p:
            comp = owner[int(u_pick[t - 1] * (t - 1))]
            sizes[comp] += 1
            owner.append(comp)
        else:
            owner.append(len(sizes))
            sizes.append(1)
    return np.asarray(sizes, dtype=np.int64)


def simulate_w_process(n: int, k: int, p: float, rng: np.random.Generator) -> int:
    """Size at time n of a component born at time k (growth rate p*W/(t-1))."""
    return int(simulate_w_process_batch(n, k, p, 1, rng)[0])


def simulate_w_process_batch(
    n: int, k: int, p: float, reps: int, rng: np.random.Generator
) -> np.ndarray:
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    w = np.ones(reps, dtype=np.int64)
    for t in range(k, n):
        w += rng.random(reps) < (p * w / t)
    return w


def expected_w(n: int, k: int, p: float) -> float:
    """E[W_n] for the component-size recurrence, via log-gamma.

    Equals the telescoping product prod_{i=k}^{n-1} (1 + p/i) to relative
    1e-10; the gamma form avoids overflow for large n.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return float(math.exp(gammaln(n + p) + gammaln(k) - gammaln(p + k) - gammaln(n)))


def simulate_v_process(n: int, start_other: int, rng: np.random.Generator) -> int:
    """Polya urn: one tracked ball vs start_other others, after n additions."""
    return int(simulate_v_process_batch(n, start_other, 1, rng)[0])


def simulate_v_process_batch(
    n: int, start_other: int, reps: int, rng: np.random.Generator
) -> np.ndarray:
    if start_other < 1:
        raise ValueError("start_other must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    v = np.ones(reps, dtype=np.int64)
    total = 1 + start_other
    for _ in range(n):
        v += rng.random(reps) < (v / total)
        total += 1
    return v


# ---------------------------------------------------------------------------
# branching processes


def simulate_graph_branching(n: int, p_prime: float, rng: np.random.Generator) -> int:
    """Total dead count of the binomial graph branching process.

    Offspring at each step are Bin(N, p_prime/n) drawn from the shrinking
    neutral pool of initial size n - 1; sub-critical for p_prime < 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < p_prime < 1.0:
        raise ValueError("p_prime must be in (0, 1)")
    live = 1
    neutral = n - 1
    dead = 0
    rate = p_prime / n
    while live > 0:
        children = int(rng.binomial(neutral, rate)) if neutral > 0 else 0
        live += children - 1
        neutral -= children
        dead += 1
    return dead


def simulate_graph_branching_batch(
    n: int, p_prime: float, reps: int, rng: np.random.Generator
) -> np.ndarray:
    return np.asarray(
        [simulate_graph_branching(n, p_prime, rng) for _ in range(reps)], dtype=np.int64
    )


def _pair_weight_row_sums(mech: MechanismSpec, p_vec: np.ndarray) -> np.ndarray:
    """S[k] = sum over k' != k of phi(p_k, p_k')."""
    n = p_vec.shape[0]
    if isinstance(mech, ConfidenceBased):
        return np.full(n, float(n - 1))
    if isinstance(mech, Upward):
        asc = np.sort(p_vec)
        return (n - np.searchsorted(asc, p_vec, side="right")).astype(float)
    phi = mech.phi
    if not phi.depends_on_x:
        g = np.asarray(phi(0.0, p_vec), dtype=float)
        return g.sum() - g
    out = np.empty(n)
    chunk = max(1, 4_000_000 // max(n, 1))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        block = np.asarray(phi(p_vec[s:e, None], p_vec[None, :]), dtype=float)
        block[np.arange(e - s), np.arange(s, e)] = 0.0
        out[s:e] = block.sum(axis=1)
    return out


def simulate_delegation_branching(
    mech: MechanismSpec, competencies, root: int, rng: np.random.Generator
) -> int:
    """Dead count of the live/dead/neutral delegation branching process.

    Explores the delegation tree rooted at `root`: each neutral voter k joins
    a live voter j with the probability that k delegates to j conditioned on
    k not delegating to any already-dead voter. The returned count has the
    same distribution as 1 + dels(root) under direct graph sampling.
    """
    p_vec = np.asarray(competencies, dtype=float)
    n = p_vec.shape[0]
    if not 0 <= root < n:
        raise ValueError("root must be a voter index")
    if hasattr(mech, "phi"):
        # per-x rescalings cancel from the conditional ratios below
        mech = type(mech)(mech.p, sampling_equivalent(mech.phi))
    q_vec = np.asarray(delegation_probability(mech, p_vec), dtype=float)
    totals = _pair_weight_row_sums(mech, p_vec)
    status = np.zeros(n, dtype=np.uint8)  # 0 neutral, 1 live, 2 dead
    status[root] = 1
    queue = deque([root])
    dead = 0
    while queue:
        j = queue.popleft()
        neutral = np.where(status == 0)[0]
        if neutral.size:
            w = np.asarray(pair_weight(mech, p_vec[neutral], p_vec[j]), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                join_p = np.where(totals[neutral] > 0.0, q_vec[neutral] * w / totals[neutral], 0.0)
            joins = neutral[rng.random(neutral.size) < join_p]
            status[joins] = 1
            queue.extend(joins.tolist())
        status[j] = 2
        dead += 1
        # j is dead from now on: conditional denominators exclude weight on j
        totals = totals - np.asarray(pair_weight(mech, p_vec, p_vec[j]), dtype=float)
    return dead


# ---------------------------------------------------------------------------
# bucketized multi-type Poisson branching


@dataclass(frozen=True, eq=False)
class BucketModel:
    """Finite-type model of a pairwise weight function under a distribution.

    [0, 1] is split into B equal competence buckets with masses pi. phi_prime
    is the per-bucket-pair supremum of phi; phi_tilde renormalizes each row so
    that sum_t' phi_tilde[t, t'] * pi[t'] = 1 + eps. M[t, t'] is the expected
    number of type-t children of a type-t' parent in the dominating Poisson
    branching process (columns index the parent type), and satisfies
    M @ pi = p*(1+eps)^3/(1-2*eps) * pi.
    """

    B: int
    boundaries: np.ndarray
    pi: np.ndarray
    phi_prime: np.ndarray
    phi_tilde: np.ndarray
    eps: float
    M: np.ndarray
    spectral_radius: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "B": self.B,
                "boundaries": self.boundaries.tolist(),
                "pi": self.pi.tolist(),
                "phi_prime": self.phi_prime.tolist(),
                "phi_tilde": self.phi_tilde.tolist(),
                "eps": self.eps,
                "M": self.M.tolist(),
                "spectral_radius": self.spectral_radius,
            }
        )


def subcriticality_factor(p: float, eps: float) -> float:
    """p*(1+eps)^3/(1-2*eps); the dominating process is sub-critical iff < 1."""
    if eps >= 0.5:
        return math.inf
    return p * (1.0 + eps) ** 3 / (1.0 - 2.0 * eps)


def _grid_modulus(phi: PairWeightFn, B: int) -> float:
    """Largest phi variation within any square of side 1/B, on a half-step lattice."""
    lattice = np.linspace(0.0, 1.0, 2 * B + 1)
    vals = np.asarray(phi(lattice[:, None], lattice[None, :]), dtype=float)
    hi = None
    lo = None
    for di in range(3):
        for dj in range(3):
            sub = vals[di : di + 2 * B - 1 : 2, dj : dj + 2 * B - 1 : 2]
            hi = sub if hi is None else np.maximum(hi, sub)
            lo = sub if lo is None else np.minimum(lo, sub)
    return float(np.max(hi - lo))


def _bucket_sup_table(phi: PairWeightFn, boundaries: np.ndarray, B: int) -> np.ndarray:
    """phi_prime[t, t'] = sup over x in bucket t of phi(x, upper bound of t').

    Monotonicity in y makes the y-supremum exact at the bucket's upper
    boundary; the x-supremum is taken on a 32-point interior grid plus the
    bucket endpoints (exact for x-independent and tabulated variants).
    """
    uppers = boundaries[1:]
    if not phi.depends_on_x:
        row = np.asarray(phi(0.0, uppers), dtype=float)
        return np.tile(row, (B, 1))
    extra = phi_x_knots(phi)
    table = np.empty((B, B))
    for t in range(B):
        xs = np.linspace(boundaries[t], boundaries[t + 1], 34)
        inner = [x for x in extra if boundaries[t] < x < boundaries[t + 1]]
        if inner:
            xs = np.concatenate([xs, inner])
        table[t] = np.asarray(phi(xs[:, None], uppers[None, :]), dtype=float).max(axis=0)
    return table


def build_bucket_model(phi: PairWeightFn, dist, p: float, eps: float) -> BucketModel:
    """Bucketize a normalized phi into a sub-critical multi-type Poisson model.

    Requires eps > 0 with p*(1+eps)^3/(1-2*eps) < 1, and phi with unit
    y-mean under dist (see normalize_phi). The bucket count B doubles until
    the grid-estimated modulus of continuity over squares of side 1/B drops
    to L*eps, where [L, U] are the bounds of phi.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    factor = subcriticality_factor(p, eps)
    if not factor < 1.0:
        raise ValueError(
            f"p*(1+eps)^3/(1-2*eps) = {factor:.6g} >= 1: the branching model would not be sub-critical"
        )
    for x in np.linspace(0.0, 1.0, 21):
        m = phi_mean_in_y(phi, dist, float(x))
        if abs(m - 1.0) > 1e-6:
            raise ValueError(
                f"phi is not normalized: E_y[phi({x:.2f}, y)] = {m:.8f}; apply normalize_phi first"
            )
    low, _high = phi_bounds(phi)

    B = 1
    while _grid_modulus(phi, B) > low * eps:
        B *= 2
        if B > MAX_BUCKETS:
            raise ValueError(f"phi varies too quickly to bucketize with B <= {MAX_BUCKETS}")

    boundaries = np.linspace(0.0, 1.0, B + 1)
    cdf_vals = np.asarray(distributions.cdf(dist, boundaries), dtype=float)
    pi = np.diff(cdf_vals)

    phi_prime = _bucket_sup_table(phi, boundaries, B)
    row_means = phi_prime @ pi
    phi_tilde = phi_prime * (1.0 + eps) / row_means[:, None]

    growth = p * (1.0 + eps) ** 2 / (1.0 - 2.0 * eps)
    M = growth * pi[:, None] * phi_tilde

    spectral_radius = _power_iteration_radius(M)
    return BucketModel(
        B=B,
        boundaries=boundaries,
        pi=pi,
        phi_prime=phi_prime,
        phi_tilde=phi_tilde,
        eps=eps,
        M=M,
        spectral_radius=spectral_radius,
    )


def _power_iteration_radius(M: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Dominant eigenvalue of an entrywise nonnegative matrix."""
    v = np.ones(M.shape[0])
    v /= v.sum()
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v
        total = w.sum()
        if total <= 0.0:
            return 0.0
        new_lam = total  # v sums to 1
        w /= total
        if abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)):
            return float(new_lam)
        v = w
        lam = new_lam
    return float(lam)


def simulate_multitype_poisson(
    model: BucketModel, start_type: int, cap: int, rng: np.random.Generator
) -> int:
    """Total progeny (root included) of the multi-type Poisson branching process.

    A parent of type t' begets Pois(M[t, t']) children of each type t,
    independently. The result is capped at `cap` to bound runtime; a returned
    value equal to cap means the process was truncated.
    """
    if not 0 <= start_type < model.B:
        raise ValueError("start_type must be a bucket index")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    live = np.zeros(model.B, dtype=np.int64)
    live[start_type] = 1
    total = 1
    while total < cap:
        parents = np.where(live > 0)[0]
        if parents.size == 0:
            break
        parent = int(parents[0])
        live[parent] -= 1
        children = rng.poisson(model.M[:, parent])
        live += children
        total += int(children.sum())
    return min(total, cap)


def simulate_multitype_sizes(
    model: BucketModel, start_type: int, cap: int, reps: int, rng: np.random.Generator
) -> np.ndarray:
    return np.asarray(
        [simulate_multitype_poisson(model, start_type, cap, rng) for _ in range(reps)],
        dtype=np.int64,
    )
