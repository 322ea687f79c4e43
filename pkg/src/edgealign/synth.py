"""Synthetic shape datasets: crisp images, true edges, jittered annotations.

Each image holds one simple filled shape per class (ellipse, box, or
triangle).  True labels are the one-pixel shape boundaries; noisy labels
displace each boundary pixel perpendicular to the local tangent by a
smooth along-contour offset bounded by the jitter amplitude; the
probability map is an ideal predictor response, peaked on the true edges
and decaying with a configurable sharpness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .chains import EdgeChains
from .containers import save_image, save_multi_label, save_prob_map
from .errors import InputFormatError
from .grids import EdgeLabelMap, MultiLabelMap, ProbMap
from .manifest import DatasetManifest, ImageEntry

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SynthSpec:
    num_images: int = 10
    height: int = 48
    width: int = 48
    num_classes: int = 2
    jitter: float = 3.0
    prob_peak: float = 0.95
    prob_floor: float = 0.02
    prob_sharpness: float = 0.8
    # fraction by which the ridge strength may dip along the contour; real
    # predictors respond unevenly, which is what makes labels slide
    prob_peak_variation: float = 0.3

    def __post_init__(self):
        if self.num_images < 1 or self.num_classes < 1:
            raise InputFormatError("need at least one image and one class")
        if self.height < 16 or self.width < 16:
            raise InputFormatError("synthetic grids must be at least 16x16")
        if self.jitter < 0:
            raise InputFormatError("jitter must be >= 0")
        if not 0.0 < self.prob_floor < self.prob_peak < 1.0:
            raise InputFormatError("need 0 < prob_floor < prob_peak < 1")
        if self.prob_sharpness <= 0:
            raise InputFormatError("prob_sharpness must be positive")
        if not 0.0 <= self.prob_peak_variation < 1.0:
            raise InputFormatError("prob_peak_variation must lie in [0, 1)")


def _fill_shape(rng: np.random.Generator, h: int, w: int, margin: int) -> np.ndarray:
    """A filled ellipse, box, or triangle well inside the grid."""
    yy, xx = np.mgrid[0:h, 0:w]
    cy = rng.uniform(margin + (h - 2 * margin) * 0.25, h - margin - (h - 2 * margin) * 0.25)
    cx = rng.uniform(margin + (w - 2 * margin) * 0.25, w - margin - (w - 2 * margin) * 0.25)
    max_r = min(cy - margin, h - margin - cy, cx - margin, w - margin - cx)
    a = rng.uniform(0.45 * max_r, max_r)
    b = rng.uniform(0.45 * max_r, max_r)
    phi = rng.uniform(0.0, math.pi)
    u = (xx - cx) * math.cos(phi) + (yy - cy) * math.sin(phi)
    v = -(xx - cx) * math.sin(phi) + (yy - cy) * math.cos(phi)
    kind = rng.integers(0, 3)
    if kind == 0:
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if kind == 1:
        return (np.abs(u) <= a) & (np.abs(v) <= b)
    # triangle: intersect three half planes around the center
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=3))
    if np.min(np.diff(np.concatenate([angles, angles[:1] + 2 * math.pi]))) < 0.6:
        angles = np.array([0.0, 2.1, 4.2]) + rng.uniform(0, 2 * math.pi)
    verts = np.stack([cx + a * np.cos(angles), cy + b * np.sin(angles)], axis=1)
    inside = np.ones((h, w), dtype=bool)
    for i in range(3):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % 3]
        cross = (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0)
        ref = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
        inside &= (cross * np.sign(ref)) >= 0
    return inside


def _boundary(mask: np.ndarray) -> np.ndarray:
    return mask & ~ndimage.binary_erosion(mask, structure=_FOUR)


def _smooth_offsets(rng: np.random.Generator, count: int, amplitude: float) -> np.ndarray:
    """Low-pass-filtered noise along the contour, scaled to peak at ``amplitude``.

    The filter width (six contour steps) keeps the displacement field
    slowly varying, like a human tracing slightly off the boundary.
    """
    if amplitude == 0.0 or count == 0:
        return np.zeros(count)
    half = 18
    raw = rng.normal(size=count + 2 * half)
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) / 6.0) ** 2)
    kernel /= kernel.sum()
    smooth = np.convolve(raw, kernel, mode="same")[half:half + count]
    peak = np.max(np.abs(smooth))
    if peak == 0.0:
        return np.zeros(count)
    return smooth / peak * amplitude


def _jitter_labels(rng: np.random.Generator, true_map: EdgeLabelMap,
                   jitter: float) -> EdgeLabelMap:
    if jitter == 0.0:
        return true_map
    h, w = true_map.shape
    chains = EdgeChains.from_label_map(true_map)
    bits = np.zeros((h, w), dtype=bool)
    for chain in chains.chains:
        offsets = _smooth_offsets(rng, len(chain), jitter)
        for pixel, off in zip(chain, offsets):
            theta, fallback = chains.tangent(pixel, 4)
            if fallback:
                nx, ny = 1.0, 0.0
            else:
                nx, ny = -math.sin(theta), math.cos(theta)
            r = int(round(pixel.row + off * ny))
            c = int(round(pixel.col + off * nx))
            bits[min(max(r, 0), h - 1), min(max(c, 0), w - 1)] = True
    return EdgeLabelMap(bits=bits, class_id=true_map.class_id)


def _ideal_prob(rng: np.random.Generator, true_bits: np.ndarray,
                spec: SynthSpec) -> np.ndarray:
    """Predictor-like response: a ridge on the true edge whose strength
    dips smoothly along the contour by up to ``prob_peak_variation``."""
    if not true_bits.any():
        return np.full(true_bits.shape, spec.prob_floor, dtype=np.float32)
    dist = ndimage.distance_transform_edt(~true_bits)
    peak_local = np.full(true_bits.shape, spec.prob_peak)
    if spec.prob_peak_variation > 0.0:
        field = ndimage.gaussian_filter(rng.normal(size=true_bits.shape), 4.0)
        span = field.max() - field.min()
        if span > 0:
            field = (field - field.min()) / span
            peak_local = spec.prob_floor + (spec.prob_peak - spec.prob_floor) * (
                1.0 - spec.prob_peak_variation * field
            )
    prob = spec.prob_floor + (peak_local - spec.prob_floor) * np.exp(
        -(dist * dist) / (2.0 * spec.prob_sharpness * spec.prob_sharpness)
    )
    return prob.astype(np.float32)


def synth_image(rng: np.random.Generator, spec: SynthSpec):
    """One synthetic sample: (image, true labels, noisy labels, probability map)."""
    h, w = spec.height, spec.width
    margin = int(math.ceil(spec.jitter)) + 7
    image = np.full((h, w), 0.08, dtype=np.float64)
    true_planes = []
    noisy_planes = []
    prob_planes = []
    for k in range(spec.num_classes):
        mask = _fill_shape(rng, h, w, margin)
        image[mask] += 0.55 + 0.35 * ((k % 3) - 1) / 2.0
        true_k = EdgeLabelMap(bits=_boundary(mask), class_id=k)
        true_planes.append(true_k)
        noisy_planes.append(_jitter_labels(rng, true_k, spec.jitter))
        prob_planes.append(_ideal_prob(rng, true_k.bits, spec))
    image += rng.normal(0.0, 0.01, size=(h, w))
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return (
        image,
        MultiLabelMap.from_planes(true_planes),
        MultiLabelMap.from_planes(noisy_planes),
        ProbMap(planes=np.stack(prob_planes)),
    )


def synth_dataset(spec: SynthSpec, seed: int, out_dir) -> DatasetManifest:
    """Write a deterministic synthetic dataset and its manifest to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    classes = [f"class{k}" for k in range(spec.num_classes)]
    palette = [(int(r), int(g), int(b)) for r, g, b in
               (np.stack([
                   (37 * (k + 1)) % 256,
                   (91 * (k + 3)) % 256,
                   (53 * (k + 7)) % 256,
               ]) for k in range(spec.num_classes))]
    entries = []
    for i in range(spec.num_images):
        image, true_labels, noisy_labels, prob = synth_image(rng, spec)
        stem = f"img{i:04d}"
        save_image(out / f"{stem}_image.sebg", image)
        save_multi_label(out / f"{stem}_labels.sebg", noisy_labels)
        save_multi_label(out / f"{stem}_labels_true.sebg", true_labels)
        save_prob_map(out / f"{stem}_prob.sebg", prob)
        entries.append(ImageEntry(
            id=stem, height=spec.height, width=spec.width,
            labels=f"{stem}_labels.sebg", prob=f"{stem}_prob.sebg",
            image=f"{stem}_image.sebg", labels_true=f"{stem}_labels_true.sebg",
        ))
    manifest = DatasetManifest(classes=classes, colors=palette, entries=entries)
    manifest.save(out / "manifest.json")
    return manifest
