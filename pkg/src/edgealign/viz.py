"""Color-coded rendering of multi-class edge probability maps.

Pixels with no edge probability render white.  Elsewhere each channel is
``255 - max_c(P) * sum_c P_c (255 - M_c) / sum_c P_c`` with ``M_c`` the
class color, i.e. a probability-weighted blend of class tints scaled by
the strongest class response.  Channels round half-up to uint8.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import InputFormatError
from .grids import ProbMap


def visualize(prob: ProbMap, colors) -> np.ndarray:
    """(H, W, 3) uint8 rendering of a probability map under a class palette."""
    if len(colors) != prob.num_classes:
        raise InputFormatError(
            f"{len(colors)} colors for {prob.num_classes} classes"
        )
    p = prob.planes.astype(np.float64)  # (K, H, W)
    palette = np.asarray(colors, dtype=np.float64)  # (K, 3)
    if palette.shape != (prob.num_classes, 3):
        raise InputFormatError("palette must be a sequence of RGB triples")
    total = p.sum(axis=0)  # (H, W)
    strongest = p.max(axis=0)
    # sum_c P_c * (255 - M_c), per channel
    tint = np.einsum("khw,kc->hwc", p, 255.0 - palette)
    with np.errstate(invalid="ignore", divide="ignore"):
        blended = 255.0 - strongest[..., None] * tint / total[..., None]
    blended[total <= 0.0] = 255.0
    return np.floor(np.clip(blended, 0.0, 255.0) + 0.5).astype(np.uint8)


def save_png(path, rgb: np.ndarray) -> None:
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise InputFormatError("expected (H, W, 3) uint8 image data")
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
