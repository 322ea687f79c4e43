"""Exact min-cost sparse bipartite assignment.

Costs are converted to integers (scale 1e6) before solving, so optimality
is exact and reproducible.  The optimal-cost solve is delegated to scipy's
sparse full-matching routine; a canonicalization pass then replaces the
returned matching with the unique lexicographically smallest optimal one
(ordered by (left index, right index)), which pins down tie behavior.

The canonicalization works on the optimal face of the assignment
polytope: integer node potentials are recovered by Bellman-Ford
relaxation over the optimal flow's residual graph (including the sink
arcs), every optimal matching then differs from the found one only along
zero-reduced-cost residual cycles, and a greedy per-left sweep with
matching-feasibility checks selects the lex-smallest matching inside
that face.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import min_weight_full_bipartite_matching

from .errors import InfeasibleAssignmentError, InputFormatError, InternalInvariantError

COST_SCALE = 10 ** 6
_SATURATION = 2 ** 53  # ints above this are not exact in float64


def scale_costs(costs, scale: int) -> np.ndarray:
    """Round ``cost * scale`` half away from zero, as int64.

    Raises on non-positive scale or when a scaled magnitude would exceed
    the float64-exact integer range.
    """
    if scale <= 0:
        raise InputFormatError(f"scale must be positive, got {scale}")
    x = np.asarray(costs, dtype=np.float64) * float(scale)
    if x.size and np.max(np.abs(x)) >= _SATURATION:
        raise InputFormatError(
            f"scaled cost magnitude {np.max(np.abs(x)):.3g} exceeds saturation bound {_SATURATION}"
        )
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class SparseCostGraph:
    """Bipartite instance: ``num_left`` sources, ``num_right`` candidates, sparse arcs."""

    num_left: int
    num_right: int
    arcs: tuple  # of (left, right, cost)
    # sorted arrays derived once, used by the solver
    _left: np.ndarray = field(init=False, repr=False, compare=False)
    _right: np.ndarray = field(init=False, repr=False, compare=False)
    _cost: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_left < 0 or self.num_right < 0:
            raise InputFormatError("node counts must be non-negative")
        arcs = list(self.arcs)
        if arcs:
            al = np.fromiter((a[0] for a in arcs), dtype=np.int64, count=len(arcs))
            ar = np.fromiter((a[1] for a in arcs), dtype=np.int64, count=len(arcs))
            ac = np.fromiter((a[2] for a in arcs), dtype=np.float64, count=len(arcs))
        else:
            al = np.empty(0, dtype=np.int64)
            ar = np.empty(0, dtype=np.int64)
            ac = np.empty(0, dtype=np.float64)
        if al.size:
            if al.min() < 0 or al.max() >= self.num_left:
                raise InputFormatError("arc left index out of range")
            if ar.min() < 0 or ar.max() >= self.num_right:
                raise InputFormatError("arc right index out of range")
        order = np.lexsort((ar, al))
        al, ar, ac = al[order], ar[order], ac[order]
        if al.size > 1 and bool(np.any((np.diff(al) == 0) & (np.diff(ar) == 0))):
            raise InputFormatError("duplicate (left, right) arcs are not allowed")
        covered = np.zeros(self.num_left, dtype=bool)
        covered[al] = True
        if not covered.all():
            missing = int(np.nonzero(~covered)[0][0])
            raise InputFormatError(f"left node {missing} has no arcs")
        object.__setattr__(self, "arcs", tuple((int(l), int(r), float(c)) for l, r, c in zip(al, ar, ac)))
        object.__setattr__(self, "_left", al)
        object.__setattr__(self, "_right", ar)
        object.__setattr__(self, "_cost", ac)

    @classmethod
    def from_arrays(cls, num_left: int, num_right: int,
                    left: np.ndarray, right: np.ndarray, cost: np.ndarray) -> "SparseCostGraph":
        return cls(num_left=num_left, num_right=num_right,
                   arcs=tuple(zip(left.tolist(), right.tolist(), cost.tolist())))


@dataclass(frozen=True)
class Matching:
    """Solution of an assignment instance: injective left -> right map and its cost."""

    assignment: dict
    total_cost: float

    def right_of(self, left: int) -> int:
        return self.assignment[left]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.assignment.items())


def _greedy_max_matching(adj: list[list[int]], num_left: int) -> np.ndarray:
    """Kuhn's augmenting-path maximum matching; returns left -> right (-1 unmatched)."""
    match_l = np.full(num_left, -1, dtype=np.int64)
    owner: dict[int, int] = {}

    def try_augment(l: int, seen: set[int]) -> bool:
        for r in adj[l]:
            if r in seen:
                continue
            seen.add(r)
            if r not in owner or try_augment(owner[r], seen):
                owner[r] = l
                match_l[l] = r
                return True
        return False

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * num_left + 1000))
    try:
        for l in range(num_left):
            try_augment(l, set())
    finally:
        sys.setrecursionlimit(old_limit)
    return match_l


def _deficient_set(adj: list[list[int]], match_l: np.ndarray) -> list[int]:
    """Hall witness: lefts reachable by alternating paths from an unmatched left."""
    owner: dict[int, int] = {int(r): int(l) for l, r in enumerate(match_l) if r >= 0}
    start = int(np.nonzero(match_l < 0)[0][0])
    seen_l = {start}
    seen_r: set[int] = set()
    stack = [start]
    while stack:
        l = stack.pop()
        for r in adj[l]:
            if r in seen_r:
                continue
            seen_r.add(r)
            nxt = owner.get(r)
            if nxt is not None and nxt not in seen_l:
                seen_l.add(nxt)
                stack.append(nxt)
    return sorted(seen_l)


def _flow_potentials(num_left: int, num_right: int, al: np.ndarray, ar: np.ndarray,
                     ac: np.ndarray, match_l: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Shortest-path potentials over the optimal flow's residual graph.

    Models the instance as unit-capacity flow (source - lefts - rights -
    sink) and relaxes distances from a virtual zero-cost source to every
    node, so every residual arc ends up with non-negative reduced cost.
    Returns (d_left, d_right, d_sink); all arithmetic is exact int64.
    """
    d_l = np.zeros(num_left, dtype=np.int64)
    d_r = np.zeros(num_right, dtype=np.int64)
    d_t = np.int64(0)
    m_right = match_l
    m_cost = ac[_matched_positions(al, ar, num_right, match_l)]
    matched_mask = np.zeros(num_right, dtype=bool)
    matched_mask[m_right] = True
    forward = match_l[al] != ar

    f_l, f_r, f_c = al[forward], ar[forward], ac[forward]
    for _ in range(num_left + num_right + 2):
        prev_l, prev_r, prev_t = d_l.copy(), d_r.copy(), d_t
        # forward residual arcs left -> right (unmatched pairs)
        np.minimum.at(d_r, f_r, d_l[f_l] + f_c)
        # reverse residual arcs sink -> matched right
        d_r[matched_mask] = np.minimum(d_r[matched_mask], d_t)
        # reverse residual arcs matched right -> its left
        np.minimum(d_l, d_r[m_right] - m_cost, out=d_l)
        # forward residual arcs unmatched right -> sink
        if (~matched_mask).any():
            d_t = min(d_t, np.int64(d_r[~matched_mask].min()))
        if np.array_equal(prev_l, d_l) and np.array_equal(prev_r, d_r) and prev_t == d_t:
            break
    else:
        raise InternalInvariantError("potential recovery did not converge")
    return d_l, d_r, int(d_t)


def _saturates(adj: dict, side_nodes, available: set) -> bool:
    """Kuhn's check that every node in ``side_nodes`` can be matched into ``available``."""
    owner: dict = {}

    def try_augment(node, seen: set) -> bool:
        for nb in adj.get(node, ()):
            if nb not in available or nb in seen:
                continue
            seen.add(nb)
            if nb not in owner or try_augment(owner[nb], seen):
                owner[nb] = node
                return True
        return False

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * (len(adj) + len(available)) + 1000))
    try:
        for node in side_nodes:
            if not try_augment(node, set()):
                return False
    finally:
        sys.setrecursionlimit(old_limit)
    return True


def _lex_canonicalize(num_left: int, al: np.ndarray, ar: np.ndarray, ac: np.ndarray,
                      match_l: np.ndarray, d_l: np.ndarray, d_r: np.ndarray,
                      d_t: int) -> np.ndarray:
    """Replace an optimal matching by the lexicographically smallest optimal one.

    Any optimal matching differs from the found one only along
    zero-reduced-cost residual cycles, so: pair changes may only use tight
    arcs (c + d_l - d_r == 0), a left whose matched arc is not tight is
    frozen to it, and a right may switch between used and unused only when
    d_r == d_sink.  Within those constraints a greedy per-left sweep picks
    the smallest feasible right; feasibility of completing the remainder
    is two saturation checks (all remaining lefts matchable, all
    must-stay-used rights coverable), which is sufficient because two such
    matchings can always be merged into one that does both.
    """
    tight = (ac + d_l[al] - d_r[ar]) == 0
    used = np.zeros(len(d_r), dtype=bool)
    used[match_l] = True
    exchangeable = d_r == d_t

    cand: list[list[int]] = [[] for _ in range(num_left)]
    for l, r in zip(al[tight].tolist(), ar[tight].tolist()):
        if used[r] or exchangeable[r]:
            cand[l].append(r)
    for l in range(num_left):
        if int(match_l[l]) not in cand[l]:
            cand[l] = [int(match_l[l])]  # matched arc not tight: this left is frozen
    if all(len(c) == 1 for c in cand):
        return match_l

    # rights that every optimal matching must keep used
    required = {int(r) for r in match_l if not exchangeable[r]}
    left_adj = {l: cand[l] for l in range(num_left)}
    right_adj: dict[int, list[int]] = {}
    for l in range(num_left):
        for r in cand[l]:
            right_adj.setdefault(r, []).append(l)

    available_rights = {r for r in right_adj}
    available_lefts = set(range(num_left))
    result = np.full(num_left, -1, dtype=np.int64)
    for l in range(num_left):
        available_lefts.discard(l)
        chosen = None
        for r in cand[l]:
            if r not in available_rights:
                continue
            rest_rights = available_rights - {r}
            rest_required = [x for x in required if x in rest_rights]
            rest_lefts = sorted(available_lefts)
            if not _saturates(left_adj, rest_lefts, rest_rights):
                continue
            if rest_required and not _saturates(right_adj, rest_required,
                                                available_lefts):
                continue
            chosen = r
            break
        if chosen is None:
            raise InternalInvariantError("lex canonicalization lost feasibility")
        result[l] = chosen
        available_rights.discard(chosen)
    return result


def solve_assignment(graph: SparseCostGraph, canonical: bool = True) -> Matching:
    """Minimum-total-cost injective assignment covering every left node.

    With ``canonical`` (the default) the result is the lexicographically
    smallest optimal assignment by (left, right); all optimal assignments
    share the same total cost either way.  Raises
    :class:`InfeasibleAssignmentError` naming a deficient left set when no
    full assignment exists.
    """
    if graph.num_left == 0:
        return Matching(assignment={}, total_cost=0.0)
    al, ar, ac_real = graph._left, graph._right, graph._cost
    ac = scale_costs(ac_real, COST_SCALE)

    # strictly positive weights for the CSR biadjacency (explicit zeros vanish)
    shift = np.int64(1) - min(np.int64(0), ac.min())
    weights = (ac + shift).astype(np.float64)
    bi = csr_matrix((weights, (al, ar)), shape=(graph.num_left, graph.num_right))
    try:
        rows, cols = min_weight_full_bipartite_matching(bi)
    except ValueError:
        adj: list[list[int]] = [[] for _ in range(graph.num_left)]
        for l, r in zip(al.tolist(), ar.tolist()):
            adj[l].append(r)
        partial = _greedy_max_matching(adj, graph.num_left)
        raise InfeasibleAssignmentError(_deficient_set(adj, partial)) from None

    match_l = np.full(graph.num_left, -1, dtype=np.int64)
    match_l[rows] = cols
    if canonical:
        d_l, d_r, d_t = _flow_potentials(graph.num_left, graph.num_right, al, ar, ac, match_l)
        before = int(ac[_matched_positions(al, ar, graph.num_right, match_l)].sum())
        match_l = _lex_canonicalize(graph.num_left, al, ar, ac, match_l, d_l, d_r, d_t)
        after = int(ac[_matched_positions(al, ar, graph.num_right, match_l)].sum())
        if before != after:
            raise InternalInvariantError("tie canonicalization changed the optimal cost")

    pos = _matched_positions(al, ar, graph.num_right, match_l)
    total = float(ac_real[pos].sum())
    return Matching(
        assignment={int(l): int(r) for l, r in enumerate(match_l)},
        total_cost=total,
    )


def _matched_positions(al: np.ndarray, ar: np.ndarray, num_right: int,
                       match_l: np.ndarray) -> np.ndarray:
    """Arc-array positions of the matched arcs, in left order."""
    arc_key = al * num_right + ar
    order = np.argsort(arc_key, kind="stable")
    keys = np.arange(len(match_l)) * num_right + match_l
    idx = np.searchsorted(arc_key[order], keys)
    if np.any(idx >= len(arc_key)) or np.any(arc_key[order][idx] != keys):
        raise InternalInvariantError("matching uses an arc that is not in the graph")
    return order[idx]


def matching_cost_scaled(graph: SparseCostGraph, matching: Matching) -> int:
    """Total cost of a matching in the solver's integer-scaled domain."""
    al, ar = graph._left, graph._right
    ac = scale_costs(graph._cost, COST_SCALE)
    match_l = np.array([matching.assignment[l] for l in range(graph.num_left)], dtype=np.int64)
    if graph.num_left == 0:
        return 0
    return int(ac[_matched_positions(al, ar, graph.num_right, match_l)].sum())


def verify_matching(graph: SparseCostGraph, matching: Matching) -> bool:
    """Check injectivity, full left coverage, arc existence, and cost consistency."""
    assign = matching.assignment
    if set(assign.keys()) != set(range(graph.num_left)):
        return False
    rights = list(assign.values())
    if len(set(rights)) != len(rights):
        return False
    arc_cost = {(l, r): c for l, r, c in graph.arcs}
    total = 0.0
    for l in range(graph.num_left):
        key = (l, assign[l])
        if key not in arc_cost:
            return False
        total += arc_cost[key]
    return abs(total - matching.total_cost) <= 1e-9 * max(1.0, abs(total))
