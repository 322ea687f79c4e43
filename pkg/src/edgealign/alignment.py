"""Per-class latent label alignment.

Two modes:

* ``isotropic`` — one exact sparse assignment solve where each arc cost is
  a squared-distance term plus the network log-odds at the target pixel;
* ``biased_mrf`` — an anisotropic kernel oriented by the local edge
  tangent plus a smoothness coupling between neighboring shift vectors,
  optimized by iterated conditional modes: an exact unary-only solve,
  then Assign/Update rounds that re-solve exactly against the previous
  round's neighbor shifts.

Arc costs are built per source pixel with the same floating-point
operation order as the scalar cost functions below, so integer-scaled
costs are reproducible across the solver and the exhaustive checkers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import Matching, SparseCostGraph, solve_assignment
from .chains import EdgeChains
from .errors import InfeasibleAssignmentError, InputFormatError, InternalInvariantError
from .grids import EdgeLabelMap, Mapping, PixelCoord, edge_pixel_array

ISOTROPIC = "isotropic"
BIASED_MRF = "biased_mrf"
MODES = (ISOTROPIC, BIASED_MRF)


@dataclass(frozen=True)
class AlignConfig:
    """Alignment parameters.

    ``sigma`` is the isotropic bandwidth; ``sigma_x``/``sigma_y`` are the
    anisotropic bandwidths along and across the local edge tangent
    (``sigma_y >= sigma_x`` favors shifts perpendicular to the edge);
    ``lam`` scales the smoothness coupling.  ``window_radius`` bounds the
    candidate search (Chebyshev); when None it defaults to ceil(3 * sigma)
    resp. ceil(3 * sigma_y).  Isolated source pixels have no tangent and
    fall back to an isotropic kernel of bandwidth ``sigma_y``.
    """

    sigma: float = 4.0
    sigma_x: float = 1.0
    sigma_y: float = 4.0
    lam: float = 0.02
    window_radius: int | None = None
    assign_steps: int = 2
    geodesic_radius: int = 2
    fit_radius: int = 4
    epsilon: float = 1e-6

    def __post_init__(self):
        if min(self.sigma, self.sigma_x, self.sigma_y) <= 0:
            raise InputFormatError("bandwidths must be positive")
        if self.lam < 0:
            raise InputFormatError(f"smoothness strength must be >= 0, got {self.lam}")
        if self.window_radius is not None and self.window_radius < 1:
            raise InputFormatError("window_radius must be >= 1")
        if self.assign_steps < 1 or self.geodesic_radius < 1 or self.fit_radius < 1:
            raise InputFormatError("assign_steps, geodesic_radius and fit_radius must be >= 1")
        if not 0.0 < self.epsilon < 0.5:
            raise InputFormatError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")

    @classmethod
    def precise_annotations(cls, **overrides) -> "AlignConfig":
        """Preset for already well-aligned annotations: tighter cross-edge bandwidth."""
        return cls(**{"sigma_y": 3.0, "sigma": 3.0, **overrides})

    def effective_window(self, mode: str) -> int:
        if self.window_radius is not None:
            return self.window_radius
        base = self.sigma_y if mode == BIASED_MRF else self.sigma
        return max(1, math.ceil(3.0 * base))


@dataclass(frozen=True)
class PrecisionMatrix:
    """Symmetric 2x2 inverse-covariance acting on (dx, dy) shift vectors."""

    a11: float
    a12: float
    a22: float

    def is_positive_definite(self) -> bool:
        return self.a11 > 0.0 and (self.a11 * self.a22 - self.a12 * self.a12) > 0.0


def candidate_window(q: PixelCoord, radius: int, bounds: tuple[int, int]) -> list[PixelCoord]:
    """In-bounds pixels within Chebyshev distance ``radius`` of ``q``, row-major."""
    if radius < 1:
        raise InputFormatError(f"window radius must be >= 1, got {radius}")
    h, w = bounds
    return [
        PixelCoord(r, c)
        for r in range(max(0, q.row - radius), min(h - 1, q.row + radius) + 1)
        for c in range(max(0, q.col - radius), min(w - 1, q.col + radius) + 1)
    ]


def _check_prob_open(prob: float) -> None:
    if not 0.0 < prob < 1.0:
        raise InputFormatError(
            f"probability {prob} is outside (0, 1); clamp probabilities before costing"
        )


def unary_cost_isotropic(p: PixelCoord, q: PixelCoord, prob_p: float, sigma: float) -> float:
    """Squared-distance prior plus log-odds of the target pixel being off-edge."""
    _check_prob_open(prob_p)
    dr = float(p.row - q.row)
    dc = float(p.col - q.col)
    d2 = dr * dr + dc * dc
    return d2 / (2.0 * sigma * sigma) + math.log(1.0 - prob_p) - math.log(prob_p)


def precision_matrix(theta: float, sigma_x: float, sigma_y: float) -> PrecisionMatrix:
    """Anisotropic kernel precision for tangent angle ``theta``.

    The short bandwidth ``sigma_x`` acts along the tangent, the long one
    ``sigma_y`` across it, so shifts along the edge cost more.
    """
    ct2 = math.cos(theta) ** 2
    st2 = math.sin(theta) ** 2
    s2t = math.sin(2.0 * theta)
    return PrecisionMatrix(
        a11=ct2 / (2.0 * sigma_x * sigma_x) + st2 / (2.0 * sigma_y * sigma_y),
        a12=s2t / (4.0 * sigma_y * sigma_y) - s2t / (4.0 * sigma_x * sigma_x),
        a22=st2 / (2.0 * sigma_x * sigma_x) + ct2 / (2.0 * sigma_y * sigma_y),
    )


def unary_cost_biased(p: PixelCoord, q: PixelCoord, prob_p: float, s: PrecisionMatrix) -> float:
    """Anisotropic quadratic form on the shift vector plus the log-odds term."""
    if not s.is_positive_definite():
        raise InputFormatError("precision matrix must be positive definite")
    _check_prob_open(prob_p)
    dx = float(p.col - q.col)
    dy = float(p.row - q.row)
    quad = s.a11 * dx * dx + 2.0 * s.a12 * dx * dy + s.a22 * dy * dy
    return quad + math.log((1.0 - prob_p) / prob_p)


def pairwise_cost(m: Mapping, m_prev: Mapping, chains: EdgeChains,
                  lam: float, radius: int) -> float:
    """Smoothness energy between a mapping and a frozen previous mapping.

    Sums ``lam * ||m_q - m_v||^2`` over ordered pairs of a source pixel q
    and each source v in its geodesic neighborhood, with shifts taken from
    ``m`` at q and from ``m_prev`` at v.
    """
    if m.sources.shape != m_prev.sources.shape or not np.array_equal(m.sources, m_prev.sources):
        raise InputFormatError("mappings must cover identical source sets")
    shift = {PixelCoord(*s): (float(t[1] - s[1]), float(t[0] - s[0]))
             for s, t in zip(m.sources.tolist(), m.targets.tolist())}
    shift_prev = {PixelCoord(*s): (float(t[1] - s[1]), float(t[0] - s[0]))
                  for s, t in zip(m_prev.sources.tolist(), m_prev.targets.tolist())}
    total = 0.0
    for q, (mx, my) in shift.items():
        for v in chains.neighborhood(q, radius):
            if v not in shift_prev:
                raise InputFormatError(f"neighbor {tuple(v)} missing from previous mapping")
            vx, vy = shift_prev[v]
            total += (mx - vx) * (mx - vx) + (my - vy) * (my - vy)
    return lam * total


def source_precisions(y: EdgeLabelMap, cfg: AlignConfig) -> tuple[list[PrecisionMatrix], EdgeChains]:
    """Per-source-pixel kernel precision, oriented by the local tangent.

    Sources with no defined tangent get the isotropic fallback of
    bandwidth ``sigma_y``.
    """
    if cfg.sigma_y < cfg.sigma_x:
        raise InputFormatError("sigma_y must be >= sigma_x in biased mode")
    chains = EdgeChains.from_label_map(y)
    precisions = []
    for r, c in edge_pixel_array(y):
        theta, fallback = chains.tangent(PixelCoord(int(r), int(c)), cfg.fit_radius)
        if fallback:
            precisions.append(precision_matrix(0.0, cfg.sigma_y, cfg.sigma_y))
        else:
            precisions.append(precision_matrix(theta, cfg.sigma_x, cfg.sigma_y))
    return precisions, chains


def arc_cost_values(qr: int, qc: int, rr: np.ndarray, cc: np.ndarray, plane: np.ndarray,
                    mode: str, cfg: AlignConfig, precision: PrecisionMatrix | None = None,
                    neighbor_shifts: np.ndarray | None = None) -> np.ndarray:
    """Arc costs from source pixel (qr, qc) to candidate pixels (rr, cc).

    This is the single authoritative cost evaluation: both the solver path
    and the exhaustive checkers call it, so rounded integer costs agree
    bit-for-bit.
    """
    prob = plane[rr, cc].astype(np.float64)
    if mode == ISOTROPIC:
        sigma = cfg.sigma
        dr = (rr - qr).astype(np.float64)
        dc = (cc - qc).astype(np.float64)
        d2 = dr * dr + dc * dc
        return d2 / (2.0 * sigma * sigma) + np.log(1.0 - prob) - np.log(prob)
    s = precision
    dx = (cc - qc).astype(np.float64)
    dy = (rr - qr).astype(np.float64)
    quad = s.a11 * dx * dx + 2.0 * s.a12 * dx * dy + s.a22 * dy * dy
    cost = quad + np.log((1.0 - prob) / prob)
    if neighbor_shifts is not None and len(neighbor_shifts):
        acc = np.zeros_like(cost)
        for vx, vy in neighbor_shifts:
            acc = acc + ((dx - vx) * (dx - vx) + (dy - vy) * (dy - vy))
        cost = cost + cfg.lam * acc
    return cost


def _window_arrays(qr: int, qc: int, radius: int, h: int, w: int):
    r0, r1 = max(0, qr - radius), min(h - 1, qr + radius)
    c0, c1 = max(0, qc - radius), min(w - 1, qc + radius)
    rows = np.arange(r0, r1 + 1)
    cols = np.arange(c0, c1 + 1)
    rr = np.repeat(rows, len(cols))
    cc = np.tile(cols, len(rows))
    return rr, cc


def _neighbor_shifts(sources: np.ndarray, chains: EdgeChains, radius: int,
                     targets_prev: np.ndarray) -> list[np.ndarray]:
    """Per-source arrays of neighboring (dx, dy) shifts from the frozen mapping."""
    index_of = {PixelCoord(int(r), int(c)): i for i, (r, c) in enumerate(sources)}
    shifts_prev = np.stack(
        [
            (targets_prev[:, 1] - sources[:, 1]).astype(np.float64),
            (targets_prev[:, 0] - sources[:, 0]).astype(np.float64),
        ],
        axis=1,
    )  # (N, 2) as (dx, dy)
    out = []
    for r, c in sources:
        nbrs = chains.neighborhood(PixelCoord(int(r), int(c)), radius)
        out.append(shifts_prev[[index_of[v] for v in nbrs]] if nbrs else
                   np.empty((0, 2), dtype=np.float64))
    return out


class _ArcBuilder:
    """Builds per-source candidate arcs with costs; rights are flat pixel ids."""

    def __init__(self, y: EdgeLabelMap, plane: np.ndarray, cfg: AlignConfig, mode: str):
        self.sources = edge_pixel_array(y)
        self.h, self.w = y.shape
        self.plane = plane
        self.cfg = cfg
        self.mode = mode
        self.precisions: list[PrecisionMatrix] | None = None
        self.chains: EdgeChains | None = None
        if mode == BIASED_MRF:
            self.precisions, self.chains = source_precisions(y, cfg)

    def build(self, radius: int,
              neighbor_shifts: list[np.ndarray] | None = None) -> SparseCostGraph:
        lefts, rights, costs = [], [], []
        for i, (qr, qc) in enumerate(self.sources):
            rr, cc = _window_arrays(int(qr), int(qc), radius, self.h, self.w)
            cost = arc_cost_values(
                int(qr), int(qc), rr, cc, self.plane, self.mode, self.cfg,
                precision=self.precisions[i] if self.precisions else None,
                neighbor_shifts=neighbor_shifts[i] if neighbor_shifts is not None else None,
            )
            lefts.append(np.full(len(rr), i, dtype=np.int64))
            rights.append(rr * self.w + cc)
            costs.append(cost)
        return SparseCostGraph.from_arrays(
            num_left=len(self.sources),
            num_right=self.h * self.w,
            left=np.concatenate(lefts),
            right=np.concatenate(rights),
            cost=np.concatenate(costs),
        )

    def to_mapping(self, matching: Matching) -> Mapping:
        targets = np.empty_like(self.sources)
        for i in range(len(self.sources)):
            flat = matching.right_of(i)
            targets[i, 0] = flat // self.w
            targets[i, 1] = flat % self.w
        return Mapping(sources=self.sources, targets=targets)


def _solve_with_window_growth(builder: _ArcBuilder, cfg: AlignConfig, mode: str,
                              neighbor_shifts=None) -> Mapping:
    radius = cfg.effective_window(mode)
    last_error: InfeasibleAssignmentError | None = None
    for _ in range(3):  # initial radius plus two doublings
        graph = builder.build(radius, neighbor_shifts)
        try:
            return builder.to_mapping(solve_assignment(graph))
        except InfeasibleAssignmentError as err:
            last_error = err
            radius *= 2
    raise last_error


def align_iterates(y: EdgeLabelMap, plane: np.ndarray, cfg: AlignConfig,
                   mode: str = ISOTROPIC) -> list[Mapping]:
    """Alignment with the full iterate history (one entry per exact solve).

    Isotropic mode returns a single mapping.  Biased mode returns the
    unary-only initialization followed by ``assign_steps - 1`` Assign
    results, each the exact minimizer against the previous iterate's
    neighbor shifts.
    """
    if mode not in MODES:
        raise InputFormatError(f"unknown mode {mode!r}; expected one of {MODES}")
    plane = np.asarray(plane)
    if plane.shape != y.shape:
        raise InputFormatError(f"probability plane shape {plane.shape} != label shape {y.shape}")
    if len(edge_pixel_array(y)) == 0:
        return [Mapping.identity(np.empty((0, 2), dtype=np.int32))]
    if float(plane.min()) <= 0.0 or float(plane.max()) >= 1.0:
        raise InputFormatError("probabilities must be clamped into (0, 1) before alignment")

    builder = _ArcBuilder(y, plane, cfg, mode)
    history = [_solve_with_window_growth(builder, cfg, mode)]
    if mode == BIASED_MRF:
        for _ in range(cfg.assign_steps - 1):
            shifts = _neighbor_shifts(builder.sources, builder.chains,
                                      cfg.geodesic_radius, history[-1].targets)
            history.append(_solve_with_window_growth(builder, cfg, mode, shifts))
    return history


def align(y: EdgeLabelMap, plane: np.ndarray, cfg: AlignConfig,
          mode: str = ISOTROPIC) -> Mapping:
    """Aligned one-to-one mapping from annotated edge pixels to latent positions."""
    return align_iterates(y, plane, cfg, mode)[-1]


def realize_labels(y: EdgeLabelMap, m: Mapping) -> EdgeLabelMap:
    """Construct the latent label map whose set pixels are the mapping targets."""
    expected = edge_pixel_array(y)
    if not np.array_equal(np.asarray(m.sources), expected):
        raise InputFormatError("mapping sources do not match the label map's set pixels")
    bits = np.zeros(y.shape, dtype=bool)
    if len(m):
        if (m.targets[:, 0].min() < 0 or m.targets[:, 0].max() >= y.height
                or m.targets[:, 1].min() < 0 or m.targets[:, 1].max() >= y.width):
            raise InputFormatError("mapping targets fall outside the label grid")
        bits[m.targets[:, 0], m.targets[:, 1]] = True
    out = EdgeLabelMap(bits=bits, class_id=y.class_id)
    if out.edge_count() != y.edge_count():
        raise InternalInvariantError("label realization changed the edge-pixel count")
    return out


def mapping_discontinuity(m: Mapping, chains: EdgeChains, radius: int) -> float:
    """Mean squared difference of neighboring shift vectors (0 when no neighbor pairs).

    Low values mean the aligned labels moved coherently; high values mean
    they fragmented.
    """
    if len(m) == 0:
        return 0.0
    shift = {PixelCoord(int(s[0]), int(s[1])): ((t[1] - s[1]), (t[0] - s[0]))
             for s, t in zip(m.sources.tolist(), m.targets.tolist())}
    total = 0.0
    pairs = 0
    for q, (mx, my) in shift.items():
        for v in chains.neighborhood(q, radius):
            vx, vy = shift[v]
            total += float((mx - vx) ** 2 + (my - vy) ** 2)
            pairs += 1
    return total / pairs if pairs else 0.0
