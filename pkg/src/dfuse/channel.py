"""Binary symmetric reporting channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class DecisionRecord:
    """Bits sent by the sensors and bits seen by the fusion center."""

    sent: np.ndarray
    received: np.ndarray

    def __post_init__(self):
        sent = np.asarray(self.sent, dtype=np.uint8)
        received = np.asarray(self.received, dtype=np.uint8)
        if sent.shape != received.shape or sent.ndim != 1:
            raise ConfigurationError("sent and received must be bit vectors of equal length")
        if np.any(sent > 1) or np.any(received > 1):
            raise ConfigurationError("decision entries must be 0 or 1")
        object.__setattr__(self, "sent", sent)
        object.__setattr__(self, "received", received)


def check_beps(beps) -> np.ndarray:
    beps = np.asarray(beps, dtype=float)
    if np.any(~(beps >= 0.0)) or np.any(beps > 0.5):
        raise ConfigurationError(f"bit-error probabilities must lie in [0, 0.5], got {beps}")
    return beps


def flip_prob(p, bep):
    """Probability that the received bit is 1 when the sent bit is 1 w.p. ``p``.

    Works elementwise; ``flip_prob(p, 0) == p`` exactly.
    """
    p = np.asarray(p, dtype=float)
    bep = np.asarray(bep, dtype=float)
    out = (1.0 - bep) * p + bep * (1.0 - p)
    return float(out) if out.ndim == 0 else out


def flip_bits(sent: np.ndarray, beps: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Deterministic BSC given pre-drawn uniforms: bit k flips iff ``uniforms[k] < beps[k]``."""
    return np.bitwise_xor(sent.astype(np.uint8), (uniforms < beps).astype(np.uint8))


def transmit(sent, beps, rng: np.random.Generator) -> np.ndarray:
    """Pass ``sent`` through independent BSCs with crossover probabilities ``beps``."""
    sent = np.asarray(sent, dtype=np.uint8)
    beps = check_beps(beps)
    if sent.shape[-1:] != beps.shape:
        raise ConfigurationError(f"length mismatch: {sent.shape[-1]} bits vs {beps.size} BEPs")
    return flip_bits(sent, beps, rng.random(sent.shape))


def decision_loglik(received, probs) -> float:
    """log P(received) under independent Bernoulli(probs).

    Returns ``-inf`` when a bit contradicts a probability of exactly 0 or 1.
    """
    d = np.asarray(received, dtype=float)
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore"):
        terms = np.where(d > 0, np.log(p), np.log1p(-p))
    return float(np.sum(terms))
