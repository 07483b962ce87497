# tfqkd/estimation/aopp.py
# Actively-odd-parity pairing: the bit-level procedure used on simulated keys
# and the analytic before -> after mapping used on real tallies.

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..exceptions import StructuralError
from ..schemas import AoppResult, RawKeyStats
from .finite_stat import mean_lower, mean_upper

logger = logging.getLogger(__name__)


@dataclass
class RawKeyPair:
    """Sifted Z-window keys of both parties with simulation-truth annotations.

    ``untagged_mask`` marks bits heralded by a single photon from exactly one
    party; ``phase_error_mask`` marks the untagged bits that carry a phase flip.
    """

    alice_bits: np.ndarray
    bob_bits: np.ndarray
    untagged_mask: Optional[np.ndarray] = None
    phase_error_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.alice_bits = np.asarray(self.alice_bits, dtype=np.uint8)
        self.bob_bits = np.asarray(self.bob_bits, dtype=np.uint8)
        if self.alice_bits.shape != self.bob_bits.shape:
            raise StructuralError("alice and bob keys differ in length")
        for name in ("untagged_mask", "phase_error_mask"):
            mask = getattr(self, name)
            if mask is None:
                continue
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != self.bob_bits.shape:
                raise StructuralError(f"{name} length differs from the keys")
            setattr(self, name, mask)

    @property
    def length(self) -> int:
        return int(self.bob_bits.size)

    def error_rate(self) -> float:
        if self.length == 0:
            return 0.0
        return float(np.mean(self.alice_bits != self.bob_bits))


def pair_bits(bob_bits: np.ndarray, seed: int) -> np.ndarray:
    """Randomly match each of Bob's 0-bits with one of his 1-bits.

    Returns an array of shape (pairs, 2) of key indices; the order inside a
    pair is random too, so "first bit" is not biased towards either value.
    """
    bob_bits = np.asarray(bob_bits)
    rng = np.random.default_rng(seed)
    zeros = np.flatnonzero(bob_bits == 0)
    ones = np.flatnonzero(bob_bits == 1)
    count = min(zeros.size, ones.size)
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    zeros = rng.permutation(zeros)[:count]
    ones = rng.permutation(ones)[:count]
    pairing = np.column_stack([zeros, ones])
    swap = rng.random(count) < 0.5
    pairing[swap] = pairing[swap][:, ::-1]
    return pairing


def apply_aopp(keys: RawKeyPair, pairing: np.ndarray) -> Tuple[AoppResult, RawKeyPair]:
    """Keep the pairs whose Alice parity is odd, and the first bit of each."""
    pairing = np.asarray(pairing, dtype=np.int64).reshape(-1, 2)
    if pairing.size and (pairing.min() < 0 or pairing.max() >= keys.length):
        raise StructuralError("pairing index out of range")
    first, second = pairing[:, 0], pairing[:, 1]
    if np.any(keys.bob_bits[first] == keys.bob_bits[second]):
        raise StructuralError("pairing joins two bits of equal value on Bob's side")

    survive = (keys.alice_bits[first] ^ keys.alice_bits[second]) == 1
    kept_first, kept_second = first[survive], second[survive]
    alice = keys.alice_bits[kept_first]
    bob = keys.bob_bits[kept_first]
    kept = int(survive.sum())

    untagged = None
    phase = None
    n1_post = 0
    e1ph_post = 0.5
    if keys.untagged_mask is not None:
        untagged = keys.untagged_mask[kept_first] & keys.untagged_mask[kept_second]
        n1_post = int(untagged.sum())
        if keys.phase_error_mask is not None:
            flips = keys.phase_error_mask[kept_first] ^ keys.phase_error_mask[kept_second]
            phase = flips & untagged
            if n1_post:
                e1ph_post = min(float(phase.sum()) / n1_post, 0.5)

    e_t_post = float(np.mean(alice != bob)) if kept else 0.0
    result = AoppResult(
        pairs=int(pairing.shape[0]),
        kept_pairs=kept,
        n_t_post=kept,
        e_t_post=e_t_post,
        n1_post=n1_post,
        e1ph_post=e1ph_post,
        mode="truth",
    )
    return result, RawKeyPair(alice, bob, untagged, phase)


def estimate_after_aopp(
    stats: RawKeyStats,
    n1_zero: float,
    n1_one: float,
    e1ph_pre: float,
    eps: Optional[float] = None,
) -> AoppResult:
    """Analytic mapping of the pre-AOPP quantities onto the surviving key.

    Args:
        stats: Bob's bit-value classes and their error counts.
        n1_zero: untagged bits in Bob's 0 class (Bob sent, Alice silent).
        n1_one: untagged bits in Bob's 1 class (Alice sent, Bob silent).
        e1ph_pre: phase-flip error rate of the untagged bits.
        eps: Chernoff failure probability; None gives mean values.

    Untagged bits are exchangeable within their class, so a random pair is
    untagged on both sides with probability n1_zero*n1_one/(zeros*ones).
    Such a pair always has odd Alice parity and survives.
    """
    if stats.zeros == 0 or stats.ones == 0:
        return AoppResult(pairs=0, kept_pairs=0, n_t_post=0, e_t_post=0.0,
                          n1_post=0.0, e1ph_post=0.5, mode="mean" if eps is None else "bound")

    pairs = min(stats.zeros, stats.ones)
    e0 = stats.errors_zero / stats.zeros
    e1 = stats.errors_one / stats.ones
    survival = (1.0 - e0) * (1.0 - e1) + e0 * e1
    n_t_post = int(round(pairs * survival))
    both_wrong = pairs * e0 * e1

    n1_post = min(n1_zero, stats.zeros) * min(n1_one, stats.ones) / max(stats.zeros, stats.ones)
    phase_mean = 2.0 * e1ph_pre * (1.0 - e1ph_pre)

    if eps is None:
        e_t_post = both_wrong / n_t_post if n_t_post else 0.0
        e1ph_post = phase_mean if n1_post > 0 else 0.5
    else:
        e_t_post = mean_upper(both_wrong, eps) / n_t_post if n_t_post else 0.0
        n1_post = mean_lower(n1_post, eps)
        e1ph_post = mean_upper(n1_post * phase_mean, eps) / n1_post if n1_post > 0 else 0.5

    if n1_post <= 0:
        logger.warning("no untagged bits survive AOPP; phase error bound is vacuous")
    return AoppResult(
        pairs=pairs,
        kept_pairs=n_t_post,
        n_t_post=n_t_post,
        e_t_post=min(e_t_post, 1.0),
        n1_post=min(n1_post, float(n_t_post)),
        e1ph_post=min(e1ph_post, 0.5),
        mode="mean" if eps is None else "bound",
    )
