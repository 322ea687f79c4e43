"""Category-aware edge benchmark.

Per class and threshold, predictions are binarized and matched one-to-one
against ground truth within a distance tolerance (a fraction of the image
diagonal), maximizing match count and then minimizing total distance.
Counts accumulate at dataset scale; every image contributes false
positives for every class whether or not the class appears.

Two modes: ``thin`` skeletonizes the prediction and matches against
one-pixel ground truth; ``raw`` matches the raw binarized prediction
against ground truth dilated to the training-label width, which keeps
recall monotone in the threshold and makes average precision well
defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .assignment import SparseCostGraph, solve_assignment
from .errors import InputFormatError, InternalInvariantError
from .grids import EdgeLabelMap, MultiLabelMap, ProbMap, extract_class

THIN = "thin"
RAW = "raw"

DEFAULT_THRESHOLDS = tuple(round(i / 100, 2) for i in range(1, 100))

# matching tolerances in common use, as fractions of the image diagonal
TOLERANCE_LOOSE = 0.02
TOLERANCE_FINE = 0.0075
TOLERANCE_STRICT = 0.0035

_EIGHT = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class BenchConfig:
    tolerance_fraction: float = TOLERANCE_LOOSE
    mode: str = THIN
    thresholds: tuple = DEFAULT_THRESHOLDS
    border_ignore: int = 5
    raw_gt_dilation: int = 1

    def __post_init__(self):
        if self.tolerance_fraction <= 0:
            raise InputFormatError("tolerance_fraction must be positive")
        if self.mode not in (THIN, RAW):
            raise InputFormatError(f"mode must be '{THIN}' or '{RAW}', got {self.mode!r}")
        t = tuple(float(v) for v in self.thresholds)
        if not t or any(not 0.0 < v < 1.0 for v in t) or any(
            b <= a for a, b in zip(t, t[1:])
        ):
            raise InputFormatError("thresholds must be strictly increasing values in (0, 1)")
        if self.border_ignore < 0 or self.raw_gt_dilation < 0:
            raise InputFormatError("border_ignore and raw_gt_dilation must be >= 0")
        object.__setattr__(self, "thresholds", t)


@dataclass
class BenchAccumulator:
    """Dataset-level match counts, per class and threshold; merges by addition."""

    num_classes: int
    thresholds: tuple
    matched_pred: np.ndarray = field(default=None)
    total_pred: np.ndarray = field(default=None)
    matched_gt: np.ndarray = field(default=None)
    total_gt: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = (self.num_classes, len(self.thresholds))
        for name in ("matched_pred", "total_pred", "matched_gt", "total_gt"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(shape, dtype=np.int64))
            elif getattr(self, name).shape != shape:
                raise InputFormatError(f"accumulator field {name} has wrong shape")

    def merge(self, other: "BenchAccumulator") -> "BenchAccumulator":
        if self.num_classes != other.num_classes or self.thresholds != other.thresholds:
            raise InputFormatError("cannot merge accumulators with different layouts")
        return BenchAccumulator(
            num_classes=self.num_classes,
            thresholds=self.thresholds,
            matched_pred=self.matched_pred + other.matched_pred,
            total_pred=self.total_pred + other.total_pred,
            matched_gt=self.matched_gt + other.matched_gt,
            total_gt=self.total_gt + other.total_gt,
        )


@dataclass(frozen=True)
class PrCurve:
    thresholds: tuple
    precision: tuple
    recall: tuple
    mode: str = THIN

    def f_scores(self) -> tuple:
        out = []
        for p, r in zip(self.precision, self.recall):
            out.append(2.0 * p * r / (p + r) if p + r > 0 else 0.0)
        return tuple(out)


def _neighbor_ring(img: np.ndarray):
    p = np.pad(img, 1)
    return (
        p[:-2, 1:-1], p[:-2, 2:], p[1:-1, 2:], p[2:, 2:],
        p[2:, 1:-1], p[2:, :-2], p[1:-1, :-2], p[:-2, :-2],
    )  # P2..P9 clockwise from north


def _zs_removable(img: np.ndarray, r: int, c: int, step: int) -> bool:
    """Thinning conditions re-checked on the current image state."""
    h, w = img.shape
    ring = []
    for dr, dc in _RING_OFFSETS:
        rr, cc = r + dr, c + dc
        ring.append(bool(0 <= rr < h and 0 <= cc < w and img[rr, cc]))
    b = sum(ring)
    if not 2 <= b <= 6:
        return False
    cyc = ring + ring[:1]
    a = sum(1 for x, y in zip(cyc, cyc[1:]) if not x and y)
    if a != 1:
        return False
    p2, p4, p6, p8 = ring[0], ring[2], ring[4], ring[6]
    if step == 0:
        return not (p2 and p4 and p6) and not (p4 and p6 and p8)
    return not (p2 and p4 and p8) and not (p2 and p6 and p8)


def _zhang_suen(img: np.ndarray) -> np.ndarray:
    """Thinning sweeps with sequential removal.

    Candidates come from the usual vectorized conditions, but each pixel
    is re-checked against the current image before deletion, so every
    removal is of a simple point and components can never vanish (the
    parallel variant can delete a 2x2 block outright).
    """
    img = img.copy()
    while True:
        changed = False
        for step in (0, 1):
            n = _neighbor_ring(img)
            b = sum(x.astype(np.int8) for x in n)
            ring = np.stack(n + (n[0],)).astype(np.int8)
            a = ((ring[:-1] == 0) & (ring[1:] == 1)).sum(axis=0)
            p2, _, p4, _, p6, _, p8, _ = n
            if step == 0:
                cond = ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
            else:
                cond = ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
            candidates = img & (b >= 2) & (b <= 6) & (a == 1) & cond
            for r, c in zip(*np.nonzero(candidates)):
                if _zs_removable(img, int(r), int(c), step):
                    img[r, c] = False
                    changed = True
        if not changed:
            return img


_RING_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
# ring positions that are mutually 8-adjacent (cyclic neighbors plus corner skips)
_RING_ADJ = [
    [j for j in range(8) if j != i and max(
        abs(_RING_OFFSETS[i][0] - _RING_OFFSETS[j][0]),
        abs(_RING_OFFSETS[i][1] - _RING_OFFSETS[j][1])) <= 1]
    for i in range(8)
]


def _is_prunable(img: np.ndarray, r: int, c: int) -> bool:
    """Simple non-endpoint test: one 8-connected ring component, a 4-free side."""
    h, w = img.shape
    ring = []
    for dr, dc in _RING_OFFSETS:
        rr, cc = r + dr, c + dc
        ring.append(bool(0 <= rr < h and 0 <= cc < w and img[rr, cc]))
    count = sum(ring)
    if count < 2:
        return False  # endpoint or isolated
    if ring[0] and ring[2] and ring[4] and ring[6]:
        return False  # interior in the 4-neighborhood; removal would open a hole
    seen = [False] * 8
    stack = [next(i for i in range(8) if ring[i])]
    seen[stack[0]] = True
    while stack:
        i = stack.pop()
        for j in _RING_ADJ[i]:
            if ring[j] and not seen[j]:
                seen[j] = True
                stack.append(j)
    return sum(seen) == count


def thin(binary: EdgeLabelMap) -> EdgeLabelMap:
    """8-connected skeleton: thinning passes plus a pruning sweep.

    Preserves the 8-connectivity structure of every component, leaves
    nothing removable short of breaking connectivity or eating endpoints,
    and is idempotent.
    """
    img = _zhang_suen(binary.bits.astype(bool))
    before, n_before = ndimage.label(binary.bits, structure=_EIGHT)
    while True:
        removed = False
        for r, c in zip(*np.nonzero(img)):
            if _is_prunable(img, int(r), int(c)):
                img[r, c] = False
                removed = True
        if not removed:
            break
    _, n_after = ndimage.label(img, structure=_EIGHT)
    if n_after != n_before:
        raise InternalInvariantError("thinning changed the component count")
    return EdgeLabelMap(bits=img, class_id=binary.class_id)


def dilate_gt(gt: EdgeLabelMap, radius: int) -> EdgeLabelMap:
    """Morphological dilation by a Chebyshev ball of the given radius."""
    if radius < 0:
        raise InputFormatError(f"dilation radius must be >= 0, got {radius}")
    if radius == 0 or not gt.bits.any():
        return gt
    size = 2 * radius + 1
    out = ndimage.binary_dilation(gt.bits, structure=np.ones((size, size), dtype=bool))
    return EdgeLabelMap(bits=out, class_id=gt.class_id)


def correspond_matching(pred: EdgeLabelMap, gt: EdgeLabelMap,
                        max_dist: float) -> list[tuple[tuple, tuple, float]]:
    """One-to-one pred/gt pixel matches within ``max_dist``.

    Maximizes the number of matches, breaking ties toward minimal total
    Euclidean distance, and returns (pred_pixel, gt_pixel, distance)
    triples.  Pixels with no counterpart in range are pre-filtered; the
    rest go through the assignment solver with one outlier arc per
    prediction pixel priced above any achievable distance total.
    """
    if pred.shape != gt.shape:
        raise InputFormatError(f"prediction shape {pred.shape} != gt shape {gt.shape}")
    if max_dist <= 0:
        raise InputFormatError("max_dist must be positive")
    if not pred.bits.any() or not gt.bits.any():
        return []
    dist_to_gt = ndimage.distance_transform_edt(~gt.bits)
    pr, pc = np.nonzero(pred.bits & (dist_to_gt <= max_dist))
    dist_to_pred = ndimage.distance_transform_edt(~pred.bits)
    gr, gc = np.nonzero(gt.bits & (dist_to_pred <= max_dist))
    if len(pr) == 0 or len(gr) == 0:
        return []
    gt_pts = np.stack([gr, gc], axis=1).astype(np.float64)
    pred_pts = np.stack([pr, pc], axis=1).astype(np.float64)
    tree = cKDTree(gt_pts)
    neighbor_lists = tree.query_ball_point(pred_pts, r=max_dist + 1e-12)
    n, m = len(pred_pts), len(gt_pts)
    lefts, rights, costs = [], [], []
    for i, hits in enumerate(neighbor_lists):
        for j in sorted(hits):
            d = pred_pts[i] - gt_pts[j]
            dist = math.sqrt(d[0] * d[0] + d[1] * d[1])
            if dist <= max_dist:
                lefts.append(i)
                rights.append(j)
                costs.append(dist)
    outlier = max_dist * (n + 1) + 1.0
    for i in range(n):
        lefts.append(i)
        rights.append(m + i)
        costs.append(outlier)
    graph = SparseCostGraph.from_arrays(
        num_left=n, num_right=m + n,
        left=np.asarray(lefts), right=np.asarray(rights), cost=np.asarray(costs),
    )
    matching = solve_assignment(graph, canonical=False)
    out = []
    for i in range(n):
        j = matching.right_of(i)
        if j < m:
            d = pred_pts[i] - gt_pts[j]
            out.append((
                (int(pr[i]), int(pc[i])),
                (int(gr[j]), int(gc[j])),
                math.sqrt(d[0] * d[0] + d[1] * d[1]),
            ))
    return out


def correspond(pred: EdgeLabelMap, gt: EdgeLabelMap, max_dist: float) -> tuple[int, int]:
    """Matched prediction and ground-truth pixel counts within the tolerance."""
    matches = correspond_matching(pred, gt, max_dist)
    return len(matches), len(matches)


def _border_mask(shape: tuple[int, int], ignore: int) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if ignore == 0:
        return ~mask
    mask[:] = True
    mask[:ignore, :] = False
    mask[-ignore:, :] = False
    mask[:, :ignore] = False
    mask[:, -ignore:] = False
    return mask


def pr_accumulate(acc: BenchAccumulator, prob: ProbMap, gt: MultiLabelMap,
                  cfg: BenchConfig) -> BenchAccumulator:
    """Accumulate one image's match counts into a new accumulator."""
    if prob.shape != gt.shape:
        raise InputFormatError(f"probability shape {prob.shape} != label shape {gt.shape}")
    if prob.num_classes != acc.num_classes or gt.num_classes != acc.num_classes:
        raise InputFormatError("class count mismatch between accumulator and inputs")
    if cfg.thresholds != acc.thresholds:
        raise InputFormatError("threshold grid mismatch between accumulator and config")
    h, w = prob.shape
    diag = math.sqrt(h * h + w * w)
    max_dist = cfg.tolerance_fraction * diag
    keep = _border_mask((h, w), cfg.border_ignore)
    out = BenchAccumulator(num_classes=acc.num_classes, thresholds=acc.thresholds)

    for k in range(acc.num_classes):
        gt_k = extract_class(gt, k)
        if cfg.mode == RAW:
            gt_k = dilate_gt(gt_k, cfg.raw_gt_dilation)
        gt_eval = EdgeLabelMap(bits=gt_k.bits & keep, class_id=k)
        total_gt = gt_eval.edge_count()
        plane = prob.planes[k]
        prev_bits = None
        prev_counts = None
        for ti, t in enumerate(cfg.thresholds):
            raw_bits = plane >= t
            if prev_bits is not None and np.array_equal(raw_bits, prev_bits):
                mp, tp, mg = prev_counts
            else:
                pred = EdgeLabelMap(bits=raw_bits, class_id=k)
                if cfg.mode == THIN:
                    pred = thin(pred)
                pred = EdgeLabelMap(bits=pred.bits & keep, class_id=k)
                tp = pred.edge_count()
                mp, mg = correspond(pred, gt_eval, max_dist) if tp and total_gt else (0, 0)
                prev_bits, prev_counts = raw_bits, (mp, tp, mg)
            out.matched_pred[k, ti] = mp
            out.total_pred[k, ti] = tp
            out.matched_gt[k, ti] = mg
            out.total_gt[k, ti] = total_gt
    return acc.merge(out)


def to_curves(acc: BenchAccumulator, mode: str = THIN) -> list[PrCurve]:
    curves = []
    for k in range(acc.num_classes):
        precision = []
        recall = []
        for ti in range(len(acc.thresholds)):
            tp_p, tot_p = int(acc.matched_pred[k, ti]), int(acc.total_pred[k, ti])
            tp_g, tot_g = int(acc.matched_gt[k, ti]), int(acc.total_gt[k, ti])
            precision.append(tp_p / tot_p if tot_p else 0.0)
            recall.append(tp_g / tot_g if tot_g else 0.0)
        curves.append(PrCurve(thresholds=acc.thresholds, precision=tuple(precision),
                              recall=tuple(recall), mode=mode))
    return curves


def mf_ods(acc: BenchAccumulator) -> tuple[list[float], float]:
    """Per-class maximum F-measure at the best dataset-level threshold, plus the mean."""
    if int(acc.total_gt.sum() + acc.total_pred.sum()) == 0:
        raise InputFormatError("accumulator is empty")
    per_class = []
    for curve in to_curves(acc):
        per_class.append(max(curve.f_scores()))
    return per_class, float(np.mean(per_class))


def average_precision(curve: PrCurve) -> float:
    """Area under the precision-recall curve by trapezoids over recall.

    The lowest-recall point's precision extends flat down to recall zero;
    there is no extrapolation past the maximum observed recall.  Requires
    recall to be non-increasing in the threshold, which holds for
    raw-mode (unthinned) curves.
    """
    rec = np.asarray(curve.recall, dtype=np.float64)
    prec = np.asarray(curve.precision, dtype=np.float64)
    if np.any(np.diff(rec) > 1e-12):
        raise InputFormatError("recall is not monotone in the threshold; use raw-mode curves")
    order = np.argsort(rec, kind="stable")
    rec, prec = rec[order], prec[order]
    if rec[-1] <= 0.0:
        return 0.0
    area = float(rec[0] * prec[0])
    for i in range(len(rec) - 1):
        area += float((rec[i + 1] - rec[i]) * (prec[i + 1] + prec[i]) / 2.0)
    return area


def label_quality(pred_labels: EdgeLabelMap, ref_labels: EdgeLabelMap,
                  max_dist: float) -> tuple[float, float, float]:
    """Precision / recall / F of one label map against a reference, unthinned."""
    n_pred = pred_labels.edge_count()
    n_ref = ref_labels.edge_count()
    if n_pred == 0 or n_ref == 0:
        return 0.0, 0.0, 0.0
    mp, mg = correspond(pred_labels, ref_labels, max_dist)
    p = mp / n_pred
    r = mg / n_ref
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def evaluate_dataset(samples, num_classes: int, cfg: BenchConfig) -> BenchAccumulator:
    """Run :func:`pr_accumulate` over (prob, gt) pairs and merge the counts."""
    acc = BenchAccumulator(num_classes=num_classes, thresholds=cfg.thresholds)
    for prob, gt in samples:
        acc = pr_accumulate(acc, prob, gt, cfg)
    return acc
