"""Exhaustive reference implementations for small alignment instances.

These enumerate every latent label configuration (all pixel subsets of the
right cardinality) and every one-to-one correspondence onto it, so they
are exact by construction.  They share the arc-cost evaluation with the
solver path (identical integer-scaled costs) but perform the minimization
by brute enumeration, which makes them independent checks of the
assignment reformulation and of each Assign round.

Enumeration order is fixed: lexicographic pixel subsets, then
permutations in ``itertools`` order, so results are reproducible; a
reversed ordering is available as a cross-check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .alignment import (
    BIASED_MRF,
    ISOTROPIC,
    MODES,
    AlignConfig,
    align_iterates,
    arc_cost_values,
    realize_labels,
    source_precisions,
)
from .assignment import (
    COST_SCALE,
    Matching,
    SparseCostGraph,
    _deficient_set,
    _greedy_max_matching,
    scale_costs,
)
from .chains import EdgeChains
from .errors import InfeasibleAssignmentError, InputFormatError
from .grids import EdgeLabelMap, Mapping, PixelCoord, edge_pixel_array

ENUMERATION_LIMIT = 10 ** 7
_BLOCKED = np.int64(1) << 55  # sentinel for pixels outside the candidate window


@dataclass(frozen=True)
class SmallInstance:
    """An alignment problem small enough to enumerate exhaustively."""

    y: EdgeLabelMap
    plane: np.ndarray
    cfg: AlignConfig
    mode: str = ISOTROPIC

    def __post_init__(self):
        h, w = self.y.shape
        if h > 8 or w > 8:
            raise InputFormatError(f"grid {h}x{w} too large for enumeration (max 8x8)")
        k = self.y.edge_count()
        if k > 4:
            raise InputFormatError(f"{k} edge pixels too many for enumeration (max 4)")
        size = math.comb(h * w, k) * math.factorial(k)
        if size > ENUMERATION_LIMIT:
            raise InputFormatError(f"enumeration size {size} exceeds {ENUMERATION_LIMIT}")
        if self.mode not in MODES:
            raise InputFormatError(f"unknown mode {self.mode!r}")
        if np.asarray(self.plane).shape != self.y.shape:
            raise InputFormatError("probability plane shape mismatch")


@dataclass(frozen=True)
class ExhaustiveResult:
    best_targets: np.ndarray  # (k, 2) pixel coords of the best latent labels
    best_mapping: Mapping
    cost: int  # integer-scaled objective


def _scaled_cost_matrix(inst: SmallInstance,
                        prev_targets: np.ndarray | None = None) -> np.ndarray:
    """Integer cost of assigning each source to each grid pixel; blocked outside windows."""
    h, w = inst.y.shape
    sources = edge_pixel_array(inst.y)
    rr = np.repeat(np.arange(h), w)
    cc = np.tile(np.arange(w), h)
    radius = inst.cfg.effective_window(inst.mode)
    precisions = None
    chains: EdgeChains | None = None
    if inst.mode == BIASED_MRF:
        precisions, chains = source_precisions(inst.y, inst.cfg)
    shifts_prev = None
    index_of = {}
    if prev_targets is not None:
        shifts_prev = np.stack(
            [
                (prev_targets[:, 1] - sources[:, 1]).astype(np.float64),
                (prev_targets[:, 0] - sources[:, 0]).astype(np.float64),
            ],
            axis=1,
        )
        index_of = {PixelCoord(int(r), int(c)): i for i, (r, c) in enumerate(sources)}

    out = np.empty((len(sources), h * w), dtype=np.int64)
    plane = np.asarray(inst.plane)
    for i, (qr, qc) in enumerate(sources):
        nbr = None
        if shifts_prev is not None:
            vs = chains.neighborhood(PixelCoord(int(qr), int(qc)), inst.cfg.geodesic_radius)
            nbr = shifts_prev[[index_of[v] for v in vs]] if vs else np.empty((0, 2))
        cost = arc_cost_values(
            int(qr), int(qc), rr, cc, plane, inst.mode, inst.cfg,
            precision=precisions[i] if precisions else None,
            neighbor_shifts=nbr,
        )
        row = scale_costs(cost, COST_SCALE)
        outside = np.maximum(np.abs(rr - qr), np.abs(cc - qc)) > radius
        row[outside] = _BLOCKED
        out[i] = row
    return out


def _enumerate_best(cost: np.ndarray, reverse: bool = False) -> tuple[int, np.ndarray, np.ndarray]:
    """Best (total, chosen-subset, per-source flat targets) by full enumeration.

    Ties resolve to the lexicographically first subset, then the first
    permutation, in fixed enumeration order; ``reverse`` enumerates both
    backwards as an independent cross-check of the minimum value.
    """
    k, n = cost.shape
    subsets = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
    perms = list(itertools.permutations(range(k)))
    if reverse:
        subsets = subsets[::-1]
        perms = perms[::-1]
    best_total = None
    best_subset_idx = -1
    best_perm_idx = -1
    for pi, perm in enumerate(perms):
        totals = np.zeros(len(subsets), dtype=np.int64)
        for col, src in enumerate(perm):
            totals += cost[src, subsets[:, col]]
        si = int(np.argmin(totals))  # first minimum within this permutation
        total = int(totals[si])
        if best_total is None or total < best_total or (
            total == best_total and si < best_subset_idx
        ):
            best_total, best_subset_idx, best_perm_idx = total, si, pi
    if best_total >= int(_BLOCKED):
        raise InfeasibleAssignmentError(list(range(k)), "no configuration within windows")
    chosen = subsets[best_subset_idx]
    perm = perms[best_perm_idx]
    targets_flat = np.empty(k, dtype=np.int64)
    for col, src in enumerate(perm):
        targets_flat[src] = chosen[col]
    return best_total, chosen, targets_flat


def exhaustive_align(inst: SmallInstance, prev_targets: np.ndarray | None = None,
                     reverse: bool = False) -> ExhaustiveResult:
    """Global minimizer over all latent configurations by full enumeration."""
    h, w = inst.y.shape
    sources = edge_pixel_array(inst.y)
    if len(sources) == 0:
        empty = np.empty((0, 2), dtype=np.int32)
        return ExhaustiveResult(best_targets=empty,
                                best_mapping=Mapping.identity(empty), cost=0)
    cost = _scaled_cost_matrix(inst, prev_targets)
    total, chosen, targets_flat = _enumerate_best(cost, reverse=reverse)
    targets = np.stack([targets_flat // w, targets_flat % w], axis=1).astype(np.int32)
    best_pixels = np.stack([chosen // w, chosen % w], axis=1).astype(np.int32)
    return ExhaustiveResult(
        best_targets=best_pixels,
        best_mapping=Mapping(sources=sources, targets=targets),
        cost=total,
    )


def configuration_objective(inst: SmallInstance, targets_set: np.ndarray,
                            prev_targets: np.ndarray | None = None) -> int:
    """Objective of one latent configuration: best correspondence onto it."""
    h, w = inst.y.shape
    cost = _scaled_cost_matrix(inst, prev_targets)
    flat = (targets_set[:, 0].astype(np.int64) * w + targets_set[:, 1]).astype(np.int64)
    k = cost.shape[0]
    if len(flat) != k:
        raise InputFormatError("configuration size must equal the source count")
    best = None
    for perm in itertools.permutations(range(k)):
        total = int(sum(cost[src, flat[col]] for col, src in enumerate(perm)))
        if best is None or total < best:
            best = total
    return best if k else 0


def mapping_objective(inst: SmallInstance, mapping: Mapping,
                      prev_targets: np.ndarray | None = None) -> int:
    """Integer-scaled cost of a concrete mapping under the instance's arcs."""
    h, w = inst.y.shape
    cost = _scaled_cost_matrix(inst, prev_targets)
    total = 0
    for i, (tr, tc) in enumerate(mapping.targets):
        total += int(cost[i, int(tr) * w + int(tc)])
    return total


def brute_force_matching(graph: SparseCostGraph) -> Matching:
    """Exact assignment by enumerating injective maps; same tie rule as the solver.

    Enumerates left nodes in order with candidate rights ascending, so the
    first strict minimum found is the lexicographically smallest optimum.
    """
    if graph.num_left > 6:
        raise InputFormatError(f"brute force limited to 6 left nodes, got {graph.num_left}")
    if graph.num_left == 0:
        return Matching(assignment={}, total_cost=0.0)
    scaled = scale_costs(graph._cost, COST_SCALE)
    per_left: list[list[tuple[int, int, float]]] = [[] for _ in range(graph.num_left)]
    for (l, r, c_real), c_int in zip(graph.arcs, scaled):
        per_left[l].append((r, int(c_int), c_real))

    best: dict = {"cost": None, "assign": None, "real": 0.0}

    def recurse(l: int, used: set[int], cost_int: int, cost_real: float, picked: list[int]):
        if l == graph.num_left:
            if best["cost"] is None or cost_int < best["cost"]:
                best["cost"] = cost_int
                best["assign"] = picked.copy()
                best["real"] = cost_real
            return
        for r, ci, cr in per_left[l]:
            if r in used:
                continue
            used.add(r)
            picked.append(r)
            recurse(l + 1, used, cost_int + ci, cost_real + cr, picked)
            picked.pop()
            used.remove(r)

    recurse(0, set(), 0, 0.0, [])
    if best["cost"] is None:
        adj = [[r for r, _, _ in arcs] for arcs in per_left]
        partial = _greedy_max_matching(adj, graph.num_left)
        raise InfeasibleAssignmentError(_deficient_set(adj, partial))
    assign = {l: r for l, r in enumerate(best["assign"])}
    return Matching(assignment=assign, total_cost=float(best["real"]))


def check_realization_optimality(inst: SmallInstance) -> bool:
    """True iff the solved-and-realized labels attain the exhaustive optimum.

    Checks both that the solver's mapping cost equals the global optimum
    and that the realized configuration's own objective (best
    correspondence onto it) is that same optimum.
    """
    history = align_iterates(inst.y, inst.plane, inst.cfg, inst.mode)
    mapping = history[0]  # unary-only solve; exhaustive optimum is defined on it
    reference = exhaustive_align(inst)
    solver_cost = mapping_objective(inst, mapping)
    if solver_cost != reference.cost:
        return False
    realized = realize_labels(inst.y, mapping)
    realized_targets = edge_pixel_array(realized)
    return configuration_objective(inst, realized_targets) == reference.cost


def check_assign_step_exactness(inst: SmallInstance) -> bool:
    """True iff every Assign round exactly minimizes its frozen-neighbor objective."""
    if inst.mode != BIASED_MRF:
        raise InputFormatError("assign-step checks require the biased mode")
    history = align_iterates(inst.y, inst.plane, inst.cfg, inst.mode)
    for prev, current in zip(history, history[1:]):
        reference = exhaustive_align(inst, prev_targets=prev.targets)
        if mapping_objective(inst, current, prev_targets=prev.targets) != reference.cost:
            return False
    return True


def flip_cost_gap(plane: np.ndarray, targets_set: np.ndarray) -> float:
    """|(loss(config) - loss(empty)) - sum of per-pixel flip costs|.

    The all-negative cross-entropy plus one flip term per set pixel must
    reconstruct the configuration's cross-entropy exactly (up to float
    round-off); this identity is what lets alignment absorb the network
    term into per-arc costs.
    """
    p = np.asarray(plane, dtype=np.float64)
    loss_empty = -np.log(1.0 - p).sum()
    mask = np.zeros(p.shape, dtype=bool)
    if len(targets_set):
        mask[targets_set[:, 0], targets_set[:, 1]] = True
    loss_cfg = -(np.log(p[mask]).sum() + np.log(1.0 - p[~mask]).sum())
    flips = (np.log(1.0 - p[mask]) - np.log(p[mask])).sum()
    return float(abs((loss_cfg - loss_empty) - flips))


def surjectivity_holds(y: EdgeLabelMap) -> bool:
    """Every same-cardinality configuration is realizable by some correspondence."""
    h, w = y.shape
    k = y.edge_count()
    if math.comb(h * w, k) > ENUMERATION_LIMIT:
        raise InputFormatError("grid too large for the surjectivity sweep")
    sources = edge_pixel_array(y)
    for subset in itertools.combinations(range(h * w), k):
        targets = np.array([(f // w, f % w) for f in subset], dtype=np.int32).reshape(-1, 2)
        mapping = Mapping(sources=sources, targets=targets)
        realized = realize_labels(y, mapping)
        expected = np.zeros((h, w), dtype=bool)
        if k:
            expected[targets[:, 0], targets[:, 1]] = True
        if not np.array_equal(realized.bits, expected):
            return False
    return True


def random_small_instance(rng: np.random.Generator, mode: str = ISOTROPIC,
                          max_side: int = 6, max_pixels: int = 4,
                          lam: float = 0.0) -> SmallInstance:
    """A random enumerable instance whose candidate window spans the whole grid."""
    h = int(rng.integers(3, max_side + 1))
    w = int(rng.integers(3, max_side + 1))
    k = int(rng.integers(1, max_pixels + 1))
    flat = rng.choice(h * w, size=k, replace=False)
    bits = np.zeros((h, w), dtype=bool)
    bits[flat // w, flat % w] = True
    plane = rng.uniform(0.05, 0.95, size=(h, w)).astype(np.float32)
    sigma = float(rng.uniform(0.8, 3.0))
    sigma_x = float(rng.uniform(0.6, 1.5))
    sigma_y = float(sigma_x + rng.uniform(0.0, 2.5))
    cfg = AlignConfig(
        sigma=sigma, sigma_x=sigma_x, sigma_y=sigma_y, lam=lam,
        window_radius=max(h, w), assign_steps=2,
    )
    return SmallInstance(y=EdgeLabelMap(bits=bits), plane=plane, cfg=cfg, mode=mode)
