"""Training kernels: joint cross-entropy, ensemble relabeling, uncertainty weights.

The joint loss averages per-token slot cross-entropy over the utterance and
adds the intent cross-entropy. Relabeling replaces an instance's targets with
the coordinate-wise mean of the ensemble's predicted distributions.
Uncertainty is the mean (over models) squared deviation of each model's
prediction from that ensemble mean, with slot terms averaged over tokens; the
instance weight is exp(-uncertainty) and is treated as a constant during
backpropagation (no gradient flows through the uncertainty itself).

All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import SoftLabels
from .encoder import Prediction

# Softmax outputs are floored before log() so saturated predictions cannot
# produce infinities.
LOG_FLOOR = 1e-12


def _check_shapes(pred: Prediction, labels: SoftLabels) -> None:
    if pred.intent_dist.shape != labels.intent_dist.shape:
        raise ValueError(
            f"intent shape mismatch: {pred.intent_dist.shape} vs {labels.intent_dist.shape}"
        )
    if pred.slot_dists.shape != labels.slot_dists.shape:
        raise ValueError(
            f"slot shape mismatch: {pred.slot_dists.shape} vs {labels.slot_dists.shape}"
        )


def joint_cross_entropy(pred: Prediction, labels: SoftLabels) -> float:
    """Token-averaged slot cross-entropy plus intent cross-entropy.

    One-hot labels make this the ordinary hard-label loss; there is a single
    code path for both.
    """
    _check_shapes(pred, labels)
    log_intent = np.log(np.maximum(pred.intent_dist, LOG_FLOOR))
    log_slots = np.log(np.maximum(pred.slot_dists, LOG_FLOOR))
    slot_term = -float(np.mean(np.sum(labels.slot_dists * log_slots, axis=1)))
    intent_term = -float(labels.intent_dist @ log_intent)
    return slot_term + intent_term


def joint_cross_entropy_hard(pred: Prediction, intent_id: int, slot_ids: Sequence[int], schema) -> float:
    """Convenience wrapper: one-hot the ids and reuse the soft-label path."""
    from .data_model import to_soft

    return joint_cross_entropy(pred, to_soft(intent_id, slot_ids, schema))


def cross_entropy_grads(
    pred: Prediction, labels: SoftLabels, weight: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``weight * joint_cross_entropy`` w.r.t. the distributions.

    ``weight`` is a constant multiplier (the instance weight); where a
    prediction sits below the log floor the gradient is zero, matching the
    clamped loss.
    """
    _check_shapes(pred, labels)
    length = pred.slot_dists.shape[0]
    safe_intent = np.maximum(pred.intent_dist, LOG_FLOOR)
    safe_slots = np.maximum(pred.slot_dists, LOG_FLOOR)
    d_intent = -weight * labels.intent_dist / safe_intent
    d_slots = -(weight / length) * labels.slot_dists / safe_slots
    d_intent[pred.intent_dist < LOG_FLOOR] = 0.0
    d_slots[pred.slot_dists < LOG_FLOOR] = 0.0
    return d_intent, d_slots


def ensemble_relabel(preds: Sequence[Prediction]) -> SoftLabels:
    """Coordinate-wise mean of the models' predictions, used as pseudo-targets."""
    if not preds:
        raise ValueError("need at least one prediction")
    length = preds[0].slot_dists.shape[0]
    for p in preds[1:]:
        if p.slot_dists.shape[0] != length:
            raise ValueError("predictions disagree on sequence length")
    intent = np.mean([p.intent_dist for p in preds], axis=0)
    slots = np.mean([p.slot_dists for p in preds], axis=0)
    return SoftLabels(intent_dist=intent, slot_dists=slots)


def instance_uncertainty(preds: Sequence[Prediction]) -> float:
    """Mean over models of the squared deviation from the ensemble mean.

    Each model contributes the squared Euclidean distance of its intent
    distribution from the mean plus the token-averaged squared distance of its
    slot distributions. Zero iff all predictions are identical.
    """
    if not preds:
        raise ValueError("need at least one prediction")
    length = preds[0].slot_dists.shape[0]
    for p in preds[1:]:
        if p.slot_dists.shape[0] != length:
            raise ValueError("predictions disagree on sequence length")
    mean_intent = np.mean([p.intent_dist for p in preds], axis=0)
    mean_slots = np.mean([p.slot_dists for p in preds], axis=0)
    total = 0.0
    for p in preds:
        intent_term = float(np.sum((p.intent_dist - mean_intent) ** 2))
        slot_term = float(np.mean(np.sum((p.slot_dists - mean_slots) ** 2, axis=1)))
        total += intent_term + slot_term
    return total / len(preds)


def instance_weight(u: float) -> float:
    """Weight exp(-u); monotone decreasing, 1 at zero uncertainty."""
    if u < 0:
        raise ValueError(f"uncertainty must be non-negative, got {u}")
    return math.exp(-u)


def weighted_joint_loss(pred: Prediction, labels: SoftLabels, weight: float) -> float:
    """Re-weighted objective: exactly ``weight * joint_cross_entropy``."""
    if not 0.0 < weight <= 1.0:
        raise ValueError(f"weight must be in (0, 1], got {weight}")
    return weight * joint_cross_entropy(pred, labels)


@dataclass(frozen=True)
class InstanceLossReport:
    """Per-instance denoising quantities for one batch snapshot.

    ``loss`` is the mean of the per-model joint cross-entropies.
    """

    loss: float
    uncertainty: float
    weight: float
    per_model_losses: tuple[float, ...]


def instance_report(preds: Sequence[Prediction], labels: SoftLabels) -> InstanceLossReport:
    """Evaluate all per-instance quantities from the models' predictions."""
    per_model = tuple(joint_cross_entropy(p, labels) for p in preds)
    u = instance_uncertainty(preds)
    return InstanceLossReport(
        loss=float(np.mean(per_model)),
        uncertainty=u,
        weight=instance_weight(u),
        per_model_losses=per_model,
    )
