"""Core pixel-grid types shared by alignment, training, and benchmarking.

Conventions used everywhere in this package:

* row-major storage, top-left origin, ``(row, col)`` coordinate order;
* per-pixel class membership is a 32-bit bitfield (bit ``k`` = class ``k``);
* all grid types are immutable after construction and safe to share
  across threads by read-only reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputFormatError

MAX_CLASSES = 32  # one machine word per pixel; wider datasets use extra planes


class PixelCoord(NamedTuple):
    """A pixel position as (row, col), both >= 0."""

    row: int
    col: int


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class EdgeLabelMap:
    """Binary edge annotation grid for a single class."""

    bits: np.ndarray  # bool (H, W)
    class_id: int = 0

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.size == 0:
            raise InputFormatError(f"label grid must be 2-d and non-empty, got shape {b.shape}")
        if self.class_id < 0:
            raise InputFormatError(f"class_id must be >= 0, got {self.class_id}")
        object.__setattr__(self, "bits", _freeze(b.astype(bool)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def edge_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class MultiLabelMap:
    """Per-pixel class bitfield; a pixel may carry several classes at once."""

    field: np.ndarray  # uint32 (H, W)
    num_classes: int

    def __post_init__(self):
        f = np.asarray(self.field)
        if f.ndim != 2 or f.size == 0:
            raise InputFormatError(f"bitfield grid must be 2-d and non-empty, got shape {f.shape}")
        if not (0 < self.num_classes <= MAX_CLASSES):
            raise InputFormatError(
                f"num_classes must be in 1..{MAX_CLASSES}, got {self.num_classes}"
            )
        f = f.astype(np.uint32)
        if self.num_classes < MAX_CLASSES and int(f.max(initial=0)) >> self.num_classes:
            raise InputFormatError("bitfield has bits set beyond num_classes")
        object.__setattr__(self, "field", _freeze(f))

    @property
    def shape(self) -> tuple[int, int]:
        return self.field.shape

    @property
    def height(self) -> int:
        return self.field.shape[0]

    @property
    def width(self) -> int:
        return self.field.shape[1]

    @classmethod
    def from_planes(cls, planes: "list[EdgeLabelMap] | np.ndarray") -> "MultiLabelMap":
        """Recombine per-class binary planes into one bitfield grid."""
        if isinstance(planes, np.ndarray):
            arr = planes.astype(bool)
        else:
            arr = np.stack([p.bits for p in planes])
        if arr.ndim != 3:
            raise InputFormatError(f"expected (K, H, W) planes, got shape {arr.shape}")
        k = arr.shape[0]
        weights = (np.uint32(1) << np.arange(k, dtype=np.uint32)).reshape(k, 1, 1)
        return cls(field=(arr.astype(np.uint32) * weights).sum(axis=0, dtype=np.uint32),
                   num_classes=k)

    def to_bit_planes(self) -> np.ndarray:
        """Per-class binary planes as a bool (K, H, W) array."""
        shifts = np.arange(self.num_classes, dtype=np.uint32).reshape(-1, 1, 1)
        return ((self.field[None] >> shifts) & np.uint32(1)).astype(bool)


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel per-class edge probabilities in [0, 1], stored as float32."""

    planes: np.ndarray  # float32 (K, H, W)

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float32)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3 or p.size == 0:
            raise InputFormatError(f"probability grid must be (K, H, W), got shape {p.shape}")
        if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
            raise InputFormatError("probabilities must be finite and within [0, 1]")
        object.__setattr__(self, "planes", _freeze(p))

    @property
    def num_classes(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]

    def plane(self, k: int) -> np.ndarray:
        if not 0 <= k < self.num_classes:
            raise InputFormatError(f"class index {k} out of range 0..{self.num_classes - 1}")
        return self.planes[k]


@dataclass(frozen=True)
class Mapping:
    """One-to-one correspondence between annotated edge pixels and aligned positions.

    ``sources[i] -> targets[i]``; sources are the set pixels of the source
    label map in row-major order, targets are pairwise distinct.
    """

    sources: np.ndarray  # int32 (N, 2) as (row, col)
    targets: np.ndarray  # int32 (N, 2)

    def __post_init__(self):
        s = np.asarray(self.sources, dtype=np.int32).reshape(-1, 2)
        t = np.asarray(self.targets, dtype=np.int32).reshape(-1, 2)
        if s.shape != t.shape:
            raise InputFormatError(
                f"sources/targets length mismatch: {s.shape[0]} vs {t.shape[0]}"
            )
        if len(t) and len(np.unique(t, axis=0)) != len(t):
            raise InputFormatError("mapping targets must be pairwise distinct")
        if len(s) and len(np.unique(s, axis=0)) != len(s):
            raise InputFormatError("mapping sources must be pairwise distinct")
        object.__setattr__(self, "sources", _freeze(s))
        object.__setattr__(self, "targets", _freeze(t))

    def __len__(self) -> int:
        return self.sources.shape[0]

    @property
    def pairs(self) -> list[tuple[PixelCoord, PixelCoord]]:
        return [
            (PixelCoord(int(sr), int(sc)), PixelCoord(int(tr), int(tc)))
            for (sr, sc), (tr, tc) in zip(self.sources, self.targets)
        ]

    def displacements(self) -> np.ndarray:
        """Per-source (d_row, d_col) shift vectors, float64 (N, 2)."""
        return (self.targets - self.sources).astype(np.float64)

    @classmethod
    def identity(cls, sources: np.ndarray) -> "Mapping":
        s = np.asarray(sources, dtype=np.int32).reshape(-1, 2)
        return cls(sources=s, targets=s.copy())


def edge_pixels(label_map: EdgeLabelMap) -> list[PixelCoord]:
    """Set pixels of a binary map in deterministic row-major order."""
    rows, cols = np.nonzero(label_map.bits)
    return [PixelCoord(int(r), int(c)) for r, c in zip(rows, cols)]


def edge_pixel_array(label_map: EdgeLabelMap) -> np.ndarray:
    """Set pixels as an int32 (N, 2) array, row-major order."""
    rows, cols = np.nonzero(label_map.bits)
    return np.stack([rows, cols], axis=1).astype(np.int32)


def extract_class(m: MultiLabelMap, k: int) -> EdgeLabelMap:
    """Binary plane of class ``k``: pixel set iff bit ``k`` is set."""
    if not 0 <= k < m.num_classes:
        raise InputFormatError(f"class index {k} out of range 0..{m.num_classes - 1}")
    return EdgeLabelMap(bits=(m.field >> np.uint32(k)) & np.uint32(1), class_id=k)


def clamp_probs(p: ProbMap, epsilon: float) -> ProbMap:
    """Clamp every probability into [epsilon, 1 - epsilon] so log terms stay finite."""
    if not 0.0 < epsilon < 0.5:
        raise InputFormatError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    lo = np.float32(epsilon)
    hi = np.float32(1.0) - np.float32(epsilon)
    return ProbMap(planes=np.clip(p.planes, lo, hi))
