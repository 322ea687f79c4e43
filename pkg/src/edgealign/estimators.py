"""Estimator-style wrappers so the alignment machinery composes with sklearn.

``EdgeLabelAligner`` is a stateless transformer: given per-class edge
probabilities and a noisy label bitfield it returns the realigned
bitfield.  ``AlternatingEdgeTrainer`` owns the toy predictor and runs the
alternating label-refinement / gradient-step loop in ``fit``; ``predict``
then emits probability maps.  Both expose their knobs through
``get_params``/``set_params`` like any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .alignment import BIASED_MRF, MODES, AlignConfig, align, realize_labels
from .errors import InputFormatError
from .grids import (
    MAX_CLASSES,
    MultiLabelMap,
    ProbMap,
    clamp_probs,
    extract_class,
)
from .predictor import TinyConvPredictor
from .training import alternating_step

__all__ = [
    "check_prob_array",
    "check_label_bitfield",
    "EdgeLabelAligner",
    "AlternatingEdgeTrainer",
]


def check_prob_array(X, num_classes: int | None = None) -> np.ndarray:
    """Validate per-class probabilities: (K, H, W) float32, finite, in [0, 1]."""
    arr = np.asarray(X)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.size == 0:
        raise InputFormatError(f"probabilities must be (K, H, W), got shape {arr.shape}")
    arr = arr.astype(np.float32, copy=False)
    if not np.isfinite(arr).all():
        raise InputFormatError("probabilities contain non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InputFormatError("probabilities must lie in [0, 1]")
    if num_classes is not None and arr.shape[0] != num_classes:
        raise InputFormatError(f"expected {num_classes} classes, got {arr.shape[0]}")
    return arr


def check_label_bitfield(y, num_classes: int) -> np.ndarray:
    """Validate a per-pixel class bitfield: (H, W) uint32 with bits < num_classes."""
    arr = np.asarray(y)
    if arr.ndim != 2 or arr.size == 0:
        raise InputFormatError(f"labels must be a 2-d bitfield, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise InputFormatError(f"labels must be integer-typed, got {arr.dtype}")
    if arr.min() < 0:
        raise InputFormatError("label bitfields cannot be negative")
    arr = arr.astype(np.uint32)
    if num_classes < MAX_CLASSES and int(arr.max(initial=0)) >> num_classes:
        raise InputFormatError(f"labels have bits set beyond class {num_classes - 1}")
    return arr


class EdgeLabelAligner(BaseEstimator, TransformerMixin):
    """Realign noisy edge labels onto probability ridges; stateless transformer."""

    def __init__(self, mode: str = BIASED_MRF, sigma: float = 4.0, sigma_x: float = 1.0,
                 sigma_y: float = 4.0, lam: float = 0.02, window_radius: int | None = None,
                 assign_steps: int = 2, geodesic_radius: int = 2, fit_radius: int = 4,
                 epsilon: float = 1e-6):
        self.mode = mode
        self.sigma = sigma
        self.sigma_x = sigma_x
        self.sigma_y = sigma_y
        self.lam = lam
        self.window_radius = window_radius
        self.assign_steps = assign_steps
        self.geodesic_radius = geodesic_radius
        self.fit_radius = fit_radius
        self.epsilon = epsilon

    def _config(self) -> AlignConfig:
        return AlignConfig(
            sigma=self.sigma, sigma_x=self.sigma_x, sigma_y=self.sigma_y, lam=self.lam,
            window_radius=self.window_radius, assign_steps=self.assign_steps,
            geodesic_radius=self.geodesic_radius, fit_radius=self.fit_radius,
            epsilon=self.epsilon,
        )

    def fit(self, X=None, y=None):
        if self.mode not in MODES:
            raise InputFormatError(f"mode must be one of {MODES}, got {self.mode!r}")
        self._config()  # validates parameters
        return self

    def transform(self, probs, labels) -> np.ndarray:
        """Refined label bitfield for one image.

        ``probs`` is (K, H, W) in [0, 1]; ``labels`` is an (H, W) uint32
        bitfield with K classes.
        """
        self.fit()
        cfg = self._config()
        prob_arr = check_prob_array(probs)
        k = prob_arr.shape[0]
        field = check_label_bitfield(labels, k)
        if field.shape != prob_arr.shape[1:]:
            raise InputFormatError(
                f"label shape {field.shape} != probability shape {prob_arr.shape[1:]}"
            )
        prob = clamp_probs(ProbMap(planes=prob_arr), cfg.epsilon)
        multi = MultiLabelMap(field=field, num_classes=k)
        planes = []
        for c in range(k):
            y_c = extract_class(multi, c)
            if y_c.edge_count() == 0:
                planes.append(y_c)
                continue
            mapping = align(y_c, prob.plane(c), cfg, self.mode)
            planes.append(realize_labels(y_c, mapping))
        return np.asarray(MultiLabelMap.from_planes(planes).field)

    def transform_many(self, probs_list, labels_list) -> list:
        if len(probs_list) != len(labels_list):
            raise InputFormatError("probs and labels lists differ in length")
        return [self.transform(p, l) for p, l in zip(probs_list, labels_list)]


class AlternatingEdgeTrainer(BaseEstimator):
    """Joint label refinement and predictor training on a small image set."""

    def __init__(self, num_classes: int = 2, hidden: int = 8, steps: int = 100,
                 step_size: float = 1e-3, seed: int = 0, mode: str = BIASED_MRF,
                 refresh_labels: bool = True, sigma: float = 4.0, sigma_x: float = 1.0,
                 sigma_y: float = 4.0, lam: float = 0.02, window_radius: int | None = None,
                 assign_steps: int = 2, epsilon: float = 1e-6):
        self.num_classes = num_classes
        self.hidden = hidden
        self.steps = steps
        self.step_size = step_size
        self.seed = seed
        self.mode = mode
        self.refresh_labels = refresh_labels
        self.sigma = sigma
        self.sigma_x = sigma_x
        self.sigma_y = sigma_y
        self.lam = lam
        self.window_radius = window_radius
        self.assign_steps = assign_steps
        self.epsilon = epsilon

    def _config(self) -> AlignConfig:
        return AlignConfig(
            sigma=self.sigma, sigma_x=self.sigma_x, sigma_y=self.sigma_y, lam=self.lam,
            window_radius=self.window_radius, assign_steps=self.assign_steps,
            epsilon=self.epsilon,
        )

    def fit(self, X, y):
        """Train on images ``X`` (list of (H, W) arrays) and bitfield labels ``y``."""
        if len(X) == 0 or len(X) != len(y):
            raise InputFormatError("need equally many images and label grids")
        cfg = self._config()
        labels = [
            MultiLabelMap(field=check_label_bitfield(l, self.num_classes),
                          num_classes=self.num_classes)
            for l in y
        ]
        images = [np.asarray(img, dtype=np.float64) for img in X]
        for img, lab in zip(images, labels):
            if img.shape != lab.shape:
                raise InputFormatError("image and label shapes differ")
        self.predictor_ = TinyConvPredictor(self.num_classes, hidden=self.hidden,
                                            seed=self.seed)
        latents = list(labels)
        history = []
        for step in range(self.steps):
            i = step % len(images)
            latents[i], report = alternating_step(
                images[i], labels[i], latents[i], self.predictor_, cfg,
                self.step_size, mode=self.mode, refresh_labels=self.refresh_labels,
            )
            history.append(report.total)
        self.latent_labels_ = [np.asarray(l.field) for l in latents]
        self.loss_history_ = history
        return self

    def predict(self, X) -> list:
        """Per-image (K, H, W) float32 probability maps from the trained predictor."""
        if not hasattr(self, "predictor_"):
            raise NotFittedError("call fit before predict")
        return [np.asarray(self.predictor_.forward(np.asarray(img, dtype=np.float64)).planes)
                for img in X]
