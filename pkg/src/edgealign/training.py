"""Cross-entropy losses on latent labels and the alternating training step.

The trainer alternates two exact subproblems: with predictor weights
fixed, each class's labels are re-aligned against the current probability
map (an assignment solve); with labels fixed, the predictor takes one
plain gradient step on the unweighted sigmoid cross-entropy.  Loss
reduction is summation over pixels and classes; gradients are expressed
with respect to pre-sigmoid logits, where the closed form is just
``sigma - y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .alignment import BIASED_MRF, AlignConfig, align, realize_labels
from .errors import InputFormatError
from .grids import MultiLabelMap, ProbMap, clamp_probs, extract_class


class PredictorAdapter(Protocol):
    """Pluggable predictor contract.

    ``forward`` must be deterministic for fixed parameters; ``backward``
    applies a gradient (w.r.t. logits) scaled by ``step_size`` and changes
    only internal state.
    """

    def forward(self, image: np.ndarray) -> ProbMap: ...

    def backward(self, grad_logits: np.ndarray, step_size: float) -> None: ...


@dataclass(frozen=True)
class LossReport:
    total: float
    per_class: tuple
    pixel_count: int


def _label_planes(labels: MultiLabelMap) -> np.ndarray:
    return labels.to_bit_planes().astype(np.float64)


def _prob_planes(prob) -> np.ndarray:
    if isinstance(prob, ProbMap):
        return prob.planes.astype(np.float64)
    p = np.asarray(prob, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    return p


def _check_shapes(p: np.ndarray, y: np.ndarray) -> None:
    if p.shape != y.shape:
        raise InputFormatError(f"probability shape {p.shape} != label shape {y.shape}")
    if p.min() <= 0.0 or p.max() >= 1.0:
        raise InputFormatError("probabilities must be clamped into (0, 1) before the loss")


def ce_loss_arrays(p: np.ndarray, y: np.ndarray, beta: float | None = None) -> LossReport:
    """Summed sigmoid cross-entropy on raw (K, H, W) arrays."""
    _check_shapes(p, y)
    if beta is None:
        per = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum(axis=(1, 2))
    else:
        if not 0.0 < beta < 1.0:
            raise InputFormatError(f"beta must lie in (0, 1), got {beta}")
        per = -(beta * y * np.log(p) + (1.0 - beta) * (1.0 - y) * np.log(1.0 - p)).sum(axis=(1, 2))
    return LossReport(total=float(per.sum()), per_class=tuple(float(v) for v in per),
                      pixel_count=int(p.shape[1] * p.shape[2]))


def ce_gradient_arrays(p: np.ndarray, y: np.ndarray, beta: float | None = None) -> np.ndarray:
    """d(loss)/d(logit) per pixel and class, on raw arrays."""
    _check_shapes(p, y)
    if beta is None:
        return p - y
    if not 0.0 < beta < 1.0:
        raise InputFormatError(f"beta must lie in (0, 1), got {beta}")
    return -beta * y * (1.0 - p) + (1.0 - beta) * (1.0 - y) * p


def sigmoid_ce_loss(prob: ProbMap, labels: MultiLabelMap) -> LossReport:
    """Unweighted sigmoid cross-entropy, summed over pixels and classes."""
    return ce_loss_arrays(_prob_planes(prob), _label_planes(labels))


def reweighted_ce_loss(prob: ProbMap, labels: MultiLabelMap, beta: float) -> LossReport:
    """Class-balanced variant: positives weighted ``beta``, negatives ``1 - beta``."""
    return ce_loss_arrays(_prob_planes(prob), _label_planes(labels), beta=beta)


def loss_gradient(prob: ProbMap, labels: MultiLabelMap,
                  beta: float | None = None) -> np.ndarray:
    """Gradient of the (optionally reweighted) loss w.r.t. pre-sigmoid logits."""
    return ce_gradient_arrays(_prob_planes(prob), _label_planes(labels), beta=beta)


def alternating_step(image: np.ndarray, noisy_labels: MultiLabelMap,
                     latent_labels: MultiLabelMap, predictor: PredictorAdapter,
                     cfg: AlignConfig, step_size: float, mode: str = BIASED_MRF,
                     refresh_labels: bool = True) -> tuple[MultiLabelMap, LossReport]:
    """One alternating round: re-align latent labels, then step the predictor.

    The annotation ``noisy_labels`` stays the alignment anchor on every
    call; ``latent_labels`` should be initialized to it before the first
    call.  With ``refresh_labels`` False the step degenerates to plain
    cross-entropy training on the unchanged latent labels.
    """
    if noisy_labels.shape != latent_labels.shape:
        raise InputFormatError("noisy/latent label shapes differ")
    prob = predictor.forward(image)
    if prob.shape != noisy_labels.shape or prob.num_classes != noisy_labels.num_classes:
        raise InputFormatError(
            f"predictor output {prob.num_classes}x{prob.shape} does not match labels "
            f"{noisy_labels.num_classes}x{noisy_labels.shape}"
        )
    prob = clamp_probs(prob, cfg.epsilon)
    if refresh_labels:
        planes = []
        for k in range(noisy_labels.num_classes):
            y_k = extract_class(noisy_labels, k)
            if y_k.edge_count() == 0:
                planes.append(y_k)
                continue
            mapping = align(y_k, prob.plane(k), cfg, mode)
            planes.append(realize_labels(y_k, mapping))
        new_latent = MultiLabelMap.from_planes(planes)
    else:
        new_latent = latent_labels
    report = sigmoid_ce_loss(prob, new_latent)
    grad = loss_gradient(prob, new_latent)
    predictor.backward(grad, step_size)
    return new_latent, report
