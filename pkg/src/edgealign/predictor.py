"""A tiny two-layer convolutional predictor for end-to-end tests.

Takes a grayscale image, stacks it with its gradient magnitude, and runs
two 3x3 convolutions (ReLU between) to per-class edge logits.  Forward
and backward are plain numpy with manual backprop and vanilla SGD, which
keeps the whole training loop deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np

from .errors import InputFormatError
from .grids import ProbMap


def _im2col3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (H*W, C*9) patches with zero padding."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((h * w, c * 9), dtype=np.float64)
    i = 0
    for ch in range(c):
        for dr in range(3):
            for dc in range(3):
                cols[:, i] = xp[ch, dr:dr + h, dc:dc + w].ravel()
                i += 1
    return cols


def _col2im3(cols: np.ndarray, c: int, h: int, w: int) -> np.ndarray:
    """Adjoint of :func:`_im2col3`: scatter-add patch gradients back to (C, H, W)."""
    xp = np.zeros((c, h + 2, w + 2), dtype=np.float64)
    i = 0
    for ch in range(c):
        for dr in range(3):
            for dc in range(3):
                xp[ch, dr:dr + h, dc:dc + w] += cols[:, i].reshape(h, w)
                i += 1
    return xp[:, 1:h + 1, 1:w + 1]


def _features(image: np.ndarray) -> np.ndarray:
    """Image plus its central-difference gradient magnitude, (2, H, W)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InputFormatError(f"predictor expects a 2-d grayscale image, got shape {img.shape}")
    gr = np.zeros_like(img)
    gc = np.zeros_like(img)
    gr[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    gc[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    return np.stack([img, np.sqrt(gr * gr + gc * gc)])


class TinyConvPredictor:
    """Two 3x3 conv layers with ReLU; sigmoid outputs per class."""

    def __init__(self, num_classes: int, hidden: int = 8, seed: int = 0):
        if num_classes < 1 or hidden < 1:
            raise InputFormatError("num_classes and hidden must be positive")
        rng = np.random.default_rng(seed)
        in_ch = 2
        self.num_classes = num_classes
        self.hidden = hidden
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(in_ch * 9), size=(hidden, in_ch * 9))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden * 9), size=(num_classes, hidden * 9))
        self.b2 = np.zeros(num_classes)
        self._cache = None

    def forward(self, image: np.ndarray) -> ProbMap:
        feats = _features(image)
        _, h, w = feats.shape
        cols1 = _im2col3(feats)
        pre = cols1 @ self.w1.T + self.b1
        hid = np.maximum(pre, 0.0)
        cols2 = _im2col3(hid.T.reshape(self.hidden, h, w))
        logits = cols2 @ self.w2.T + self.b2
        prob = 1.0 / (1.0 + np.exp(-logits))
        self._cache = (cols1, pre, cols2, h, w)
        return ProbMap(planes=prob.T.reshape(self.num_classes, h, w).astype(np.float32))

    def backward(self, grad_logits: np.ndarray, step_size: float) -> None:
        if self._cache is None:
            raise InputFormatError("backward called before forward")
        cols1, pre, cols2, h, w = self._cache
        g = np.asarray(grad_logits, dtype=np.float64)
        if g.shape != (self.num_classes, h, w):
            raise InputFormatError(
                f"gradient shape {g.shape} != expected {(self.num_classes, h, w)}"
            )
        gflat = g.reshape(self.num_classes, h * w).T  # (HW, K)
        dw2 = gflat.T @ cols2
        db2 = gflat.sum(axis=0)
        dcols2 = gflat @ self.w2
        dhid = _col2im3(dcols2, self.hidden, h, w).reshape(self.hidden, h * w).T
        dpre = dhid * (pre > 0.0)
        dw1 = dpre.T @ cols1
        db1 = dpre.sum(axis=0)
        self.w2 -= step_size * dw2
        self.b2 -= step_size * db2
        self.w1 -= step_size * dw1
        self.b1 -= step_size * db1

    def state(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def load_state(self, state: dict) -> None:
        for key in ("w1", "b1", "w2", "b2"):
            if key not in state:
                raise InputFormatError(f"predictor state missing {key!r}")
            getattr(self, key)[...] = state[key]
