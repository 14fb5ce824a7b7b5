"""Bidirectional task interaction: two decoder chains over the encoded utterance.

The slot-to-intent chain runs an intuitive slot decoder whose per-token label
distributions feed a rational intent decoder; the intent-to-slot chain mirrors
it (intuitive intent decoder feeding a rational slot decoder). All four are
unidirectional LSTMs consuming the aligned encoder state each step, with the
previous step's output distribution (optionally teacher-forced to the gold
one-hot) prepended to the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .encoder import LstmParams, init_lstm, lstm_step


@dataclass
class DecoderParams:
    cell: LstmParams
    proj: Tensor   # [n_labels, hidden]

    @property
    def n_labels(self) -> int:
        return self.proj.shape[0]


@dataclass
class TeacherForcing:
    """Per-step substitution of gold one-hots for previous output distributions.

    ``gold_steps[t]`` is the [B, K] one-hot of the gold label at step t (the
    utterance intent repeated every step for intent decoders). Each step t >= 1
    draws one Bernoulli per batch row from the stream; rate 0 (evaluation)
    draws nothing.
    """

    rate: float
    rng: Rng | None
    gold_steps: list[np.ndarray]

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"teacher forcing rate must be in [0, 1], got {self.rate}")

    def mix_prev(self, y_prev: Tensor, t: int) -> Tensor:
        if self.rate == 0.0:
            return y_prev
        force = self.rng.random(y_prev.shape[0]) < self.rate
        if not force.any():
            return y_prev
        keep = (~force).astype(np.float64)
        forced = ad.constant(self.gold_steps[t - 1] * force[:, None])
        return ad.add(ad.mask_rows(y_prev, keep), forced)


def disabled_teacher_forcing() -> TeacherForcing:
    return TeacherForcing(rate=0.0, rng=None, gold_steps=[])


@dataclass
class DecodeResult:
    h_steps: list[Tensor]   # T tensors [B, hidden]
    y_steps: list[Tensor]   # T tensors [B, n_labels], each row a distribution


def init_decoder(input_size: int, hidden: int, n_labels: int, rng: Rng) -> DecoderParams:
    bound = 1.0 / np.sqrt(hidden)
    return DecoderParams(
        cell=init_lstm(input_size, hidden, rng),
        proj=ad.parameter(rng.uniform(-bound, bound, (n_labels, hidden))),
    )


def _decode(e_steps: list[Tensor], p: DecoderParams, tf: TeacherForcing,
            opposite_y: list[Tensor] | None = None) -> DecodeResult:
    """Left-to-right decode; step input is [prev distribution (+ opposite task's
    distribution) + encoder state]. The previous distribution at t = 0 is the
    zero vector, so the first step carries no label prior."""
    B = e_steps[0].shape[0]
    h = ad.constant(np.zeros((B, p.cell.hidden)))
    c = ad.constant(np.zeros((B, p.cell.hidden)))
    y_prev: Tensor | None = None
    h_steps, y_steps = [], []
    for t, e_t in enumerate(e_steps):
        prev = ad.constant(np.zeros((B, p.n_labels))) if t == 0 else tf.mix_prev(y_prev, t)
        parts = [prev] if opposite_y is None else [prev, opposite_y[t]]
        parts.append(e_t)
        h, c = lstm_step(ad.concat(parts, axis=1), h, c, p.cell)
        y = ad.softmax(ad.linear(h, p.proj), axis=1)
        h_steps.append(h)
        y_steps.append(y)
        y_prev = y
    return DecodeResult(h_steps=h_steps, y_steps=y_steps)


def intuitive_slot_decode(e_steps: list[Tensor], p: DecoderParams,
                          tf: TeacherForcing) -> DecodeResult:
    return _decode(e_steps, p, tf)


def rational_intent_decode(e_steps: list[Tensor], slot_y: list[Tensor],
                           p: DecoderParams, tf: TeacherForcing) -> DecodeResult:
    return _decode(e_steps, p, tf, opposite_y=slot_y)


def intuitive_intent_decode(e_steps: list[Tensor], p: DecoderParams,
                            tf: TeacherForcing) -> DecodeResult:
    return _decode(e_steps, p, tf)


def rational_slot_decode(e_steps: list[Tensor], intent_y: list[Tensor],
                         p: DecoderParams, tf: TeacherForcing) -> DecodeResult:
    return _decode(e_steps, p, tf, opposite_y=intent_y)


def slot_gold_onehots(slot_ids: np.ndarray, n_slots: int) -> list[np.ndarray]:
    """Per-step [B, n_slots] one-hots; sentinel (padding) ids give zero rows."""
    B, T = slot_ids.shape
    steps = []
    for t in range(T):
        oh = np.zeros((B, n_slots))
        ids = slot_ids[:, t]
        valid = (ids >= 0) & (ids < n_slots)
        oh[np.arange(B)[valid], ids[valid]] = 1.0
        steps.append(oh)
    return steps


def intent_gold_onehots(intent_ids: np.ndarray, n_intents: int, T: int) -> list[np.ndarray]:
    B = intent_ids.shape[0]
    oh = np.zeros((B, n_intents))
    oh[np.arange(B), intent_ids] = 1.0
    return [oh] * T
