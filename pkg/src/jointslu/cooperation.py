"""Cooperation gate: blends intuitive and rational features, then predicts.

A small MLP over the rational feature produces a softmax score vector r across
feature coordinates; the fused feature is ``rational * r + intuitive * (1 - r)``
per coordinate. Slot features stay per-token; intent features are summed over
the utterance's real tokens before classification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, ShapeError, Tensor


@dataclass
class MlpParams:
    w1: Tensor   # [h, in]
    b1: Tensor   # [h]
    w2: Tensor   # [out, h]
    b2: Tensor   # [out]


@dataclass
class CooperationParams:
    slot_gate: MlpParams
    intent_gate: MlpParams


def init_mlp(width: int, rng: Rng) -> MlpParams:
    bound = 1.0 / np.sqrt(width)
    return MlpParams(
        w1=ad.parameter(rng.uniform(-bound, bound, (width, width))),
        b1=ad.parameter(np.zeros(width)),
        w2=ad.parameter(rng.uniform(-bound, bound, (width, width))),
        b2=ad.parameter(np.zeros(width)),
    )


def gate(h_rational: Tensor, p: MlpParams) -> Tensor:
    """Softmax score vector over feature coordinates, entries in (0, 1)."""
    hidden = ad.tanh(ad.linear(h_rational, p.w1, p.b1))
    return ad.softmax(ad.linear(hidden, p.w2, p.b2), axis=1)


def fuse(h_rational: Tensor, h_intuitive: Tensor, r: Tensor) -> Tensor:
    """Per-coordinate convex blend r*rational + (1-r)*intuitive."""
    if h_rational.shape != h_intuitive.shape or h_rational.shape != r.shape:
        raise ShapeError(f"fuse needs equal widths, got {h_rational.shape}, "
                         f"{h_intuitive.shape}, {r.shape}")
    ones = ad.constant(np.ones(r.shape))
    return ad.add(ad.mul(h_rational, r), ad.mul(h_intuitive, ad.sub(ones, r)))


def fuse_slot(h_rs: Tensor, h_is: Tensor, r_s: Tensor) -> Tensor:
    return fuse(h_rs, h_is, r_s)


def fuse_intent(blend_steps: list[Tensor], mask: np.ndarray) -> Tensor:
    """Sum the per-token fused intent features over unmasked tokens only."""
    total = None
    for t, blend in enumerate(blend_steps):
        masked = ad.mask_rows(blend, mask[:, t].astype(np.float64))
        total = masked if total is None else ad.add(total, masked)
    return total


def predict(h_slot_steps: list[Tensor], h_intent: Tensor,
            w_slot: Tensor, w_intent: Tensor) -> tuple[list[Tensor], Tensor]:
    """Final label distributions: per-token slot rows and one intent row per
    utterance. Predicted labels are argmax with ties to the lowest index."""
    y_slots = [ad.softmax(ad.linear(h, w_slot), axis=1) for h in h_slot_steps]
    y_intent = ad.softmax(ad.linear(h_intent, w_intent), axis=1)
    return y_slots, y_intent
