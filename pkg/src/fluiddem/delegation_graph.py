"""Delegation graphs: sampling, transitive weight accumulation, cycle nullification.

A delegation graph over n voters is a functional digraph (out-degree at most
one). Voter i either votes directly (no out-edge) or delegates to out[i].
Votes flow transitively toward non-delegating voters; voters sitting on a
delegation cycle, or delegating into one, are nullified and contribute no
weight (the worst-case treatment of cycles).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mechanisms import (
    ConfidenceBased,
    GeneralContinuous,
    MechanismSpec,
    Upward,
    sampling_equivalent,
)

NO_EDGE = -1


@dataclass(frozen=True, eq=False)
class DelegationGraph:
    n: int
    out: np.ndarray  # int64; out[i] = target voter, or NO_EDGE for a direct voter

    def __post_init__(self):
        out = np.asarray(self.out, dtype=np.int64)
        object.__setattr__(self, "out", out)
        if self.n < 1:
            raise ValueError("a delegation graph needs at least one voter")
        if out.shape != (self.n,):
            raise ValueError("out must have one entry per voter")
        if np.any(out == np.arange(self.n)):
            raise ValueError("self-delegation is not allowed")
        bad = (out != NO_EDGE) & ((out < 0) | (out >= self.n))
        if np.any(bad):
            raise ValueError("out-edges must point at voters")


@dataclass(frozen=True, eq=False)
class WeightProfile:
    """Transitive delegation tallies for one graph.

    dels[i] counts the (non-nullified) voters whose ballots flow into i;
    weight[i] = 1 + dels[i] for a non-delegating, non-nullified voter and 0
    otherwise; nullified lists voters on cycles or delegating into them.
    Nullified voters report dels = 0.
    """

    dels: np.ndarray
    weight: np.ndarray
    nullified: np.ndarray  # sorted voter indices
    max_weight: int
    total_weight: int


def stats(profile: WeightProfile) -> tuple[int, int, int]:
    """(max_weight, total_weight, nullified_count)."""
    return profile.max_weight, profile.total_weight, int(len(profile.nullified))


# ---------------------------------------------------------------------------
# weight computation


def _nullified_mask(out: np.ndarray, n: int) -> np.ndarray:
    """Voters whose forward walk reaches a cycle (members included).

    Iterative pointer walk with three-color marking; O(n), no recursion.
    """
    color = bytearray(n)  # 0 unvisited, 1 on current walk, 2 resolved
    nullified = np.zeros(n, dtype=bool)
    out_list = out.tolist()
    for start in range(n):
        if color[start]:
            continue
        path = []
        v = start
        while True:
            c = color[v]
            if c == 1:
                # v is on the current walk: everything on the walk feeds the cycle
                for u in path:
                    nullified[u] = True
                break
            if c == 2:
                res = bool(nullified[v])
                for u in path:
                    nullified[u] = res
                break
            color[v] = 1
            path.append(v)
            nxt = out_list[v]
            if nxt < 0:
                break  # reached a direct voter: whole walk is safe
            v = nxt
        for u in path:
            color[u] = 2
    return nullified


def compute_weights(graph: DelegationGraph) -> WeightProfile:
    """Weights, delegation counts and the nullified set for one graph."""
    n = graph.n
    out = graph.out
    nullified = _nullified_mask(out, n)
    active = ~nullified

    # subtree sizes over the active forest (edges point from child to parent)
    cnt = np.ones(n, dtype=np.int64)
    has_parent = active & (out != NO_EDGE)
    indeg = np.bincount(out[has_parent], minlength=n)
    remaining = indeg.copy()
    frontier = np.where(active & (remaining == 0) & (out != NO_EDGE))[0]
    while frontier.size:
        parents = out[frontier]
        np.add.at(cnt, parents, cnt[frontier])
        np.subtract.at(remaining, parents, 1)
        parents = np.unique(parents)
        frontier = parents[(remaining[parents] == 0) & (out[parents] != NO_EDGE)]

    dels = np.where(active, cnt - 1, 0)
    weight = np.where(active & (out == NO_EDGE), cnt, 0)
    return WeightProfile(
        dels=dels,
        weight=weight,
        nullified=np.where(nullified)[0],
        max_weight=int(weight.max(initial=0)),
        total_weight=int(weight.sum()),
    )


# ---------------------------------------------------------------------------
# sampling


def _inverse_cdf_targets(cum: np.ndarray, rng: np.random.Generator, count: int) -> np.ndarray:
    return np.searchsorted(cum, rng.random(count) * cum[-1], side="right")


def sample_graph(mech: MechanismSpec, competencies, rng: np.random.Generator) -> DelegationGraph:
    """Sample one delegation graph for fixed competencies.

    Each voter independently delegates with probability q(p_i); a delegator
    picks target j != i proportionally to phi(p_i, p_j). A voter whose total
    pair weight on others is zero votes directly.
    """
    p_vec = np.asarray(competencies, dtype=float)
    n = p_vec.shape[0]
    if n < 1:
        raise ValueError("need at least one voter")
    out = np.full(n, NO_EDGE, dtype=np.int64)
    u_delegate = rng.random(n)

    if isinstance(mech, Upward):
        # uniform target among strictly more competent voters; the most
        # competent voter places zero weight everywhere and votes directly
        asc = np.sort(p_vec)
        greater = n - np.searchsorted(asc, p_vec, side="right")
        desc_order = np.argsort(-p_vec, kind="stable")
        delegators = np.where((u_delegate < mech.p) & (greater > 0))[0]
        ranks = np.floor(rng.random(delegators.size) * greater[delegators]).astype(np.int64)
        ranks = np.minimum(ranks, greater[delegators] - 1)
        out[delegators] = desc_order[ranks]
        return DelegationGraph(n, out)

    if isinstance(mech, ConfidenceBased):
        if n == 1:
            return DelegationGraph(n, out)
        delegators = np.where(u_delegate < mech.q(p_vec))[0]
        t = rng.integers(0, n - 1, size=delegators.size)
        t = t + (t >= delegators)
        out[delegators] = t
        return DelegationGraph(n, out)

    if isinstance(mech, GeneralContinuous):
        delegators = np.where(u_delegate < mech.p)[0]
        if delegators.size == 0 or n == 1:
            return DelegationGraph(n, out)
        phi = sampling_equivalent(mech.phi)
        if not phi.depends_on_x:
            # shared target law: sample from the global weight profile and
            # reject self-hits (conditioning preserves the exact law)
            g = np.asarray(phi(0.0, p_vec), dtype=float)
            cum = np.cumsum(g)
            t = _inverse_cdf_targets(cum, rng, delegators.size)
            bad = np.where(t == delegators)[0]
            while bad.size:
                t[bad] = _inverse_cdf_targets(cum, rng, bad.size)
                bad = bad[t[bad] == delegators[bad]]
            out[delegators] = t
        else:
            for i in delegators.tolist():
                w = np.asarray(phi(p_vec[i], p_vec), dtype=float)
                w[i] = 0.0
                cum = np.cumsum(w)
                if cum[-1] <= 0.0:
                    continue  # degenerate: no positive weight on anyone
                out[i] = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return DelegationGraph(n, out)

    raise TypeError(f"not a mechanism: {mech!r}")


def sample_instance(mech, dist, n: int, rng: np.random.Generator):
    """Draw competencies i.i.d. from dist, then a graph under mech."""
    from . import distributions

    if n < 1:
        raise ValueError("need at least one voter")
    p_vec = distributions.sample(dist, rng, size=n)
    graph = sample_graph(mech, p_vec, rng)
    return p_vec, graph


def component_sizes(profile: WeightProfile) -> np.ndarray:
    """Sizes of delegation components of an acyclic graph (weights of roots)."""
    if len(profile.nullified):
        raise ValueError("component sizes are defined here for acyclic graphs only")
    return np.sort(profile.weight[profile.weight > 0])


# ---------------------------------------------------------------------------
# export


def to_edge_csv(graph: DelegationGraph, path) -> None:
    """Write the graph as a CSV edge list: voter, target-or-empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["voter", "target"])
        for i, t in enumerate(graph.out.tolist()):
            writer.writerow([i, "" if t < 0 else t])


def from_edge_csv(path) -> DelegationGraph:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["voter", "target"]:
            raise ValueError("expected 'voter,target' header")
        for voter, target in reader:
            rows.append((int(voter), NO_EDGE if target == "" else int(target)))
    rows.sort()
    out = np.array([t for _, t in rows], dtype=np.int64)
    return DelegationGraph(len(rows), out)


__all__ = [
    "DelegationGraph",
    "WeightProfile",
    "sample_graph",
    "sample_instance",
    "compute_weights",
    "stats",
    "component_sizes",
    "to_edge_csv",
    "from_edge_csv",
    "NO_EDGE",
]
