"""Minimum cost multicut (correlation clustering) of the affinity graph.

Convention: minimize the summed cost of cut edges, so positive costs are
attractive and negative costs reward cutting.  Feasibility is structural:
partitions are stored per node, and the induced edge indicators are always
cycle-consistent.

Solvers: exhaustive oracle for tiny instances, greedy additive edge
contraction (GAEC) for initialization, and a Kernighan-Lin local search
for refinement.  Each KL pass tries, per adjacent component pair, a greedy
single-node transfer sequence (committing the best strictly improving
prefix), an outright join, and a join followed by a fresh two-way split;
every component also proposes splitting nodes off into a brand-new
component, and a final multiway sequence moves nodes across all components
at once.  All tie-breaking is lexicographic so results are exactly
reproducible.
"""

import heapq
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .affinity import AffinityGraph


class TooLarge(ValueError):
    pass


_EPS = 1e-12


@dataclass(frozen=True)
class Partition:
    """Per-node component ids; canonical form relabels by first occurrence."""

    node_to_component: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.node_to_component, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "node_to_component", a)

    def canonical(self) -> "Partition":
        return Partition(canonical_labels(self.node_to_component))

    def component_sizes(self) -> dict:
        ids, counts = np.unique(self.node_to_component, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def canonical_labels(assign) -> np.ndarray:
    assign = np.asarray(assign, dtype=np.int64)
    out = np.empty_like(assign)
    mapping = {}
    for i, c in enumerate(assign):
        c = int(c)
        if c not in mapping:
            mapping[c] = len(mapping)
        out[i] = mapping[c]
    return out


def multicut_objective(graph: AffinityGraph, partition: Partition) -> float:
    """Total cost of edges whose endpoints lie in different components."""
    assign = partition.node_to_component
    if len(assign) != graph.node_count:
        raise ValueError("partition does not cover all nodes")
    if len(graph.edges) == 0:
        return 0.0
    cut = assign[graph.edges[:, 0]] != assign[graph.edges[:, 1]]
    return float(graph.costs[cut].sum())


def _iter_partitions(n: int):
    """All set partitions of range(n) as restricted growth strings, in
    lexicographic order (so the first optimum found is the canonical one)."""
    assign = np.zeros(n, dtype=np.int64)

    def rec(i, next_label):
        if i == n:
            yield assign
            return
        for c in range(next_label + 1):
            assign[i] = c
            yield from rec(i + 1, max(next_label, c + 1))

    if n == 0:
        yield assign
    else:
        yield from rec(1, 1)


def oracle_optimal(graph: AffinityGraph):
    """Exhaustive minimizer for graphs with at most 10 nodes."""
    n = graph.node_count
    if n > 10:
        raise TooLarge(f"{n} nodes; oracle is capped at 10")
    edges, costs = graph.edges, graph.costs
    best_assign, best_obj = None, np.inf
    for assign in _iter_partitions(n):
        if len(edges):
            obj = float(costs[assign[edges[:, 0]] != assign[edges[:, 1]]].sum())
        else:
            obj = 0.0
        if obj < best_obj:
            best_obj = obj
            best_assign = assign.copy()
    return Partition(best_assign), best_obj


def gaec(graph: AffinityGraph) -> Partition:
    """Greedy additive edge contraction: repeatedly contract the maximum
    positive-cost edge, summing parallel edges; ties pick the smallest
    (u, v).  Component representative = smallest member node id."""
    n = graph.node_count
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cost = {}
    adj = defaultdict(set)
    for (u, v), c in zip(graph.edges, graph.costs):
        u, v = int(u), int(v)
        cost[(u, v)] = float(c)
        adj[u].add(v)
        adj[v].add(u)

    heap = [(-c, u, v) for (u, v), c in cost.items() if c > 0]
    heapq.heapify(heap)
    while heap:
        negc, u, v = heapq.heappop(heap)
        c = -negc
        if find(u) != u or find(v) != v:
            continue
        cur = cost.get((u, v))
        if cur is None or cur != c or cur <= 0:
            continue
        # contract v into u (u < v by key construction)
        parent[v] = u
        del cost[(u, v)]
        adj[u].discard(v)
        adj[v].discard(u)
        for w in adj[v]:
            old = cost.pop((min(v, w), max(v, w)))
            key = (min(u, w), max(u, w))
            merged = cost.get(key, 0.0) + old
            cost[key] = merged
            adj[w].discard(v)
            adj[w].add(u)
            adj[u].add(w)
            if merged > 0:
                heapq.heappush(heap, (-merged, key[0], key[1]))
        adj[v] = set()
    return Partition(canonical_labels([find(i) for i in range(n)]))


def _adjacency(graph: AffinityGraph):
    adj = defaultdict(list)
    for (u, v), c in zip(graph.edges, graph.costs):
        adj[int(u)].append((int(v), float(c)))
        adj[int(v)].append((int(u), float(c)))
    return adj


def klj(graph: AffinityGraph, init: Partition, max_iter=100, pass_log=None) -> Partition:
    """Kernighan-Lin refinement with joins, splits and multiway moves.

    Only strictly improving proposals commit, so the objective never
    increases across a pass (asserted).  Passes repeat until nothing
    commits or max_iter is hit; appends the objective after each pass to
    pass_log when given.
    """
    assign = canonical_labels(init.node_to_component)
    if len(assign) != graph.node_count:
        raise ValueError("partition does not cover all nodes")
    adj = _adjacency(graph)
    obj = multicut_objective(graph, Partition(assign))
    for _ in range(max_iter):
        obj_before = obj
        changed = False
        pairs = sorted(
            {
                (min(int(assign[u]), int(assign[v])), max(int(assign[u]), int(assign[v])))
                for (u, v) in graph.edges
                if assign[u] != assign[v]
            }
        )
        for ca, cb in pairs:
            if _improve_pair(adj, assign, ca, cb) < 0:
                changed = True
        for comp in sorted(set(int(c) for c in assign)):
            if _split_off(adj, assign, comp) < 0:
                changed = True
        if _multiway_moves(adj, assign) < 0:
            changed = True
        obj = multicut_objective(graph, Partition(assign))
        assert obj <= obj_before + 1e-6, "KL pass increased the objective"
        if pass_log is not None:
            pass_log.append(obj)
        assign = canonical_labels(assign)
        if not changed:
            break
    return Partition(assign)


def _best_split(nodes, adj, node_set):
    """Greedy two-way split of one merged component.

    Returns (delta, moved prefix) of the best strictly improving prefix of
    the move-out sequence; (0.0, []) when none improves.
    """
    if len(nodes) < 2:
        return 0.0, []
    gain = {v: sum(c for u, c in adj[v] if u in node_set) for v in nodes}
    in_new = set()
    moves, cum = [], 0.0
    best_cum, best_len = 0.0, 0
    for _ in range(len(nodes) - 1):  # moving everything is a no-op
        cand = [v for v in nodes if v not in in_new]
        v = min(cand, key=lambda q: (gain[q], q))
        cum += gain[v]
        in_new.add(v)
        moves.append(v)
        if cum < best_cum - _EPS:
            best_cum, best_len = cum, len(moves)
        for u, c in adj[v]:
            if u in node_set and u not in in_new:
                gain[u] -= 2 * c
    return best_cum, moves[:best_len]


def _improve_pair(adj, assign, ca, cb) -> float:
    """Best of: greedy transfer sequence, join, join + fresh resplit.

    Commits the winning strictly-improving option into `assign`; returns
    the committed objective delta (0.0 when nothing improved).
    """
    nodes = [i for i in range(len(assign)) if assign[i] in (ca, cb)]
    node_set = set(nodes)
    side = {v: int(assign[v]) for v in nodes}

    join_delta = 0.0
    for v in nodes:
        if side[v] != ca:
            continue
        for u, c in adj[v]:
            if u in node_set and side[u] == cb:
                join_delta -= c

    # greedy transfer sequence; gain[v] = delta of moving v across right now
    gain = {}
    for v in nodes:
        g = 0.0
        for u, c in adj[v]:
            if u in node_set:
                g += c if side[u] == side[v] else -c
        gain[v] = g
    moves, cum = [], 0.0
    best_cum, best_len = 0.0, 0
    moved = set()
    for _ in range(len(nodes)):
        cand = [v for v in nodes if v not in moved]
        if not cand:
            break
        v = min(cand, key=lambda q: (gain[q], q))
        cum += gain[v]
        moved.add(v)
        old_side = side[v]
        side[v] = cb if old_side == ca else ca
        moves.append(v)
        if cum < best_cum - _EPS:
            best_cum, best_len = cum, len(moves)
        for u, c in adj[v]:
            if u not in node_set or u in moved:
                continue
            if side[u] == old_side:
                gain[u] -= 2 * c  # v left u's side: attraction now repels
            else:
                gain[u] += 2 * c

    split_delta, split_moves = _best_split(nodes, adj, node_set)
    best_delta, kind = min(
        [(best_cum, 0), (join_delta, 1), (join_delta + split_delta, 2)]
    )
    if best_delta >= -_EPS:
        return 0.0
    if kind == 0:
        for v in moves[:best_len]:
            assign[v] = cb if assign[v] == ca else ca
        return best_cum
    for v in nodes:
        assign[v] = ca
    if kind == 2:
        for v in split_moves:
            assign[v] = cb
        return join_delta + split_delta
    return join_delta


def _split_off(adj, assign, comp) -> float:
    """Greedy sequence moving nodes of `comp` into a brand-new component;
    commits the best strictly-improving prefix."""
    nodes = [i for i in range(len(assign)) if assign[i] == comp]
    node_set = set(nodes)
    delta, moves = _best_split(nodes, adj, node_set)
    if delta < -_EPS:
        new_comp = int(assign.max()) + 1
        for v in moves:
            assign[v] = new_comp
    else:
        delta = 0.0
    return delta


def _multiway_moves(adj, assign) -> float:
    """One greedy sequence of single-node moves across all components.

    Each step moves the (node, target) pair with the smallest delta, where
    targets are the components adjacent to the node plus one brand-new
    component; nodes move at most once.  Commits the best strictly
    improving prefix.  Gain tables update incrementally, O(deg) per move.
    """
    n = len(assign)
    work = [int(c) for c in assign]
    next_id = max(work) + 1 if n else 0
    base = [0.0] * n                      # cost of cutting v from its comp
    gain_to = [defaultdict(float) for _ in range(n)]  # extra delta per target
    for v in range(n):
        for u, c in adj[v]:
            if work[u] == work[v]:
                base[v] += c
            else:
                gain_to[v][work[u]] -= c
    moved = [False] * n
    moves, cum = [], 0.0
    best_cum, best_len = 0.0, 0
    for _ in range(n):
        best = None
        for v in range(n):
            if moved[v]:
                continue
            tgt_gain, tgt = 0.0, next_id  # brand-new component
            for t, g in sorted(gain_to[v].items()):
                if t != work[v] and g < tgt_gain:
                    tgt_gain, tgt = g, t
            cand = (base[v] + tgt_gain, v, tgt)
            if best is None or cand < best:
                best = cand
        if best is None:
            break
        delta, v, target = best
        old = work[v]
        cum += delta
        moves.append((v, target))
        work[v] = target
        moved[v] = True
        if target == next_id:
            next_id += 1
        if cum < best_cum - _EPS:
            best_cum, best_len = cum, len(moves)
        for u, c in adj[v]:
            if moved[u]:
                continue
            cu = work[u]
            if old == cu:
                base[u] -= c
            else:
                gain_to[u][old] += c
            if target == cu:
                base[u] += c
            else:
                gain_to[u][target] -= c
    if best_cum < -_EPS:
        for v, target in moves[:best_len]:
            assign[v] = target
        return best_cum
    return 0.0


def decompose(graph: AffinityGraph):
    """GAEC initialization refined by KLj; returns (partition, objective)."""
    part = klj(graph, gaec(graph))
    return part, multicut_objective(graph, part)


def partition_to_labels(partition: Partition, node_meta) -> dict:
    """SPL1 mapping trajectory id -> component label, components renumbered
    from 1 by decreasing size (ties by first node)."""
    assign = partition.node_to_component
    comps = defaultdict(list)
    for node, c in enumerate(assign):
        comps[int(c)].append(node)
    order = sorted(comps, key=lambda c: (-len(comps[c]), comps[c][0]))
    relabel = {c: i + 1 for i, c in enumerate(order)}
    return {int(node_meta[node]): relabel[int(c)] for node, c in enumerate(assign)}
