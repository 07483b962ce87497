# tfqkd/estimation/decoy.py
# Three-intensity decoy-state analysis: single-photon yields, untagged counts
# before AOPP and the phase-flip error rate bound, plus an LP cross-check.

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.stats import poisson

from ..exceptions import DomainError, InsufficientDataError, RateUndefinedError, VacuousBoundError
from ..schemas import SOURCE_LABELS, V, X, Y, DecoyOutcome, RawKeyStats, SourceParams, TallyRecord
from .finite_stat import mean_lower, mean_upper

logger = logging.getLogger(__name__)


class RateTable:
    """Counting rates detected[a][b] / sent[a][b], computed on access."""

    def __init__(self, tally: TallyRecord):
        self.tally = tally

    def __getitem__(self, pair: Tuple[int, int]) -> float:
        a, b = pair
        sent = self.tally.sent[a][b]
        if sent == 0:
            raise RateUndefinedError(SOURCE_LABELS[a] + SOURCE_LABELS[b])
        return self.tally.detected[a][b] / sent

    def adverse(self, pair: Tuple[int, int], eps: Optional[float], side: str) -> float:
        """Rate from a Chernoff-adjusted count; ``side`` is "lower" or "upper"."""
        if eps is None:
            return self[pair]
        a, b = pair
        sent = self.tally.sent[a][b]
        if sent == 0:
            raise RateUndefinedError(SOURCE_LABELS[a] + SOURCE_LABELS[b])
        count = self.tally.detected[a][b]
        bounded = mean_lower(count, eps) if side == "lower" else mean_upper(count, eps)
        return bounded / sent


def counting_rates(tally: TallyRecord) -> RateTable:
    return RateTable(tally)


@dataclass(frozen=True)
class YieldBound:
    value: float
    vacuous: bool
    s0: float
    sx: float
    sy: float


def y1_from_rates(s0: float, sx: float, sy: float, mu_x: float, mu_y: float) -> float:
    """Unclamped single-photon yield bound from vacuum, decoy and signal rates."""
    numerator = (
        mu_y ** 2 * math.exp(mu_x) * sx
        - mu_x ** 2 * math.exp(mu_y) * sy
        - (mu_y ** 2 - mu_x ** 2) * s0
    )
    return numerator / (mu_x * mu_y * (mu_y - mu_x))


# (vacuum, decoy, signal) source pairs for each sending party; the other side is vacuum.
DIRECTION_PAIRS = {
    "A": ((V, V), (X, V), (Y, V)),
    "B": ((V, V), (V, X), (V, Y)),
}


def _directional_yield(rates: RateTable, direction: str, mu_x: float, mu_y: float, eps: Optional[float]) -> YieldBound:
    vac, dec, sig = DIRECTION_PAIRS[direction]
    s0 = rates.adverse(vac, eps, "upper")
    sx = rates.adverse(dec, eps, "lower")
    sy = rates.adverse(sig, eps, "upper")
    y1 = y1_from_rates(s0, sx, sy, mu_x, mu_y)
    if y1 <= 0.0:
        logger.warning("single-photon yield bound for direction %s is vacuous", direction)
        return YieldBound(0.0, True, s0, sx, sy)
    return YieldBound(min(y1, 1.0), False, s0, sx, sy)


def y1_lower_bound(tally: TallyRecord, mu_x: float, mu_y: float, eps: Optional[float] = None) -> Tuple[YieldBound, YieldBound]:
    """Per-direction single-photon yield lower bounds (Alice sends, Bob sends).

    With ``eps`` set, each rate is formed from its adverse Chernoff bound:
    lower for the decoy term, upper for the signal and vacuum terms.
    """
    if not mu_x < mu_y:
        raise DomainError("decoy intensity must be below the signal intensity")
    rates = counting_rates(tally)
    return (
        _directional_yield(rates, "A", mu_x, mu_y, eps),
        _directional_yield(rates, "B", mu_x, mu_y, eps),
    )


def n1_pre_aopp(y1_a: float, y1_b: float, tally: TallyRecord, mu_y: float) -> Tuple[float, float, float]:
    """Untagged-bit lower bound before AOPP as (total, Alice-sent part, Bob-sent part)."""
    weight = mu_y * math.exp(-mu_y)
    n1_a = tally.sent[Y][V] * weight * y1_a
    n1_b = tally.sent[V][Y] * weight * y1_b
    return n1_a + n1_b, n1_a, n1_b


def slice_pair_count(tally: TallyRecord, delta_slice: Optional[float] = None) -> float:
    """Number of x-x pulse pairs whose relative phase falls inside the slice.

    A known slice width gives sent[x][x] * delta / pi. Without one, the
    fraction is read off the data as ds_total / detected[x][x], which holds
    because the two ports' summed click probability ignores the phase.
    """
    if delta_slice is not None:
        return tally.sent[X][X] * delta_slice / math.pi
    if tally.detected[X][X] == 0:
        raise InsufficientDataError("no x-x detections to infer the slice fraction")
    return tally.sent[X][X] * tally.ds_total / tally.detected[X][X]


def e1ph_upper_bound(
    tally: TallyRecord,
    mu_x: float,
    y1_lower: float,
    delta_slice: Optional[float] = None,
    eps: Optional[float] = None,
) -> float:
    if tally.ds_total == 0:
        raise InsufficientDataError("no detections inside the phase slice")
    if y1_lower <= 0.0:
        raise VacuousBoundError("single-photon yield bound is vacuous")
    pairs = slice_pair_count(tally, delta_slice)
    errors = tally.ds_total - tally.ds_correct
    vacuum = tally.detected[V][V]
    if eps is not None:
        errors = mean_upper(errors, eps)
        vacuum = mean_lower(vacuum, eps)
    if tally.sent[V][V] == 0:
        raise RateUndefinedError("vv")
    t_delta = errors / pairs
    s00 = vacuum / tally.sent[V][V]
    damping = math.exp(-2.0 * mu_x)
    bound = (t_delta - 0.5 * damping * s00) / (2.0 * mu_x * damping * y1_lower)
    return min(max(bound, 0.0), 0.5)


def raw_key_stats(tally: TallyRecord) -> RawKeyStats:
    """Z-window raw key classes: windows where both parties chose v or y."""
    d = tally.detected
    return RawKeyStats(
        zeros=d[V][Y] + d[Y][Y],
        ones=d[V][V] + d[Y][V],
        errors_zero=d[Y][Y],
        errors_one=d[V][V],
    )


def estimate_decoy(
    tally: TallyRecord,
    params: SourceParams,
    eps: Optional[float] = None,
    delta_slice: Optional[float] = None,
) -> DecoyOutcome:
    """Full pre-AOPP estimate; vacuity is reported in the outcome rather than raised."""
    y_a, y_b = y1_lower_bound(tally, params.mu_x, params.mu_y, eps)
    n1, n1_a, n1_b = n1_pre_aopp(y_a.value, y_b.value, tally, params.mu_y)
    y1 = 0.5 * (y_a.value + y_b.value)
    reasons = [f"direction {d}: yield bound vacuous" for d, y in (("A", y_a), ("B", y_b)) if y.vacuous]

    pairs = 0.0
    e1ph = 0.5
    try:
        pairs = slice_pair_count(tally, delta_slice)
        e1ph = e1ph_upper_bound(tally, params.mu_x, y1, delta_slice, eps)
    except (InsufficientDataError, VacuousBoundError) as exc:
        reasons.append(str(exc))

    ex = (tally.ds_total - tally.ds_correct) / tally.ds_total if tally.ds_total else 0.0
    return DecoyOutcome(
        y1_lower=y1,
        y1_a=y_a.value,
        y1_b=y_b.value,
        n1_pre=n1,
        n1_a=n1_a,
        n1_b=n1_b,
        e1ph_pre=e1ph,
        ex=ex,
        slice_pairs=pairs,
        vacuous=bool(reasons),
        reasons=reasons,
    )


# --- Linear-programming oracle ---

@dataclass(frozen=True)
class LpOutcome:
    y1: float
    feasible: bool
    status: str


def lp_oracle(s0: float, sx: float, sy: float, mu_x: float, mu_y: float, cutoff: int = 10) -> LpOutcome:
    """Tightest single-photon yield lower bound consistent with the observed rates.

    Yields Y_0..Y_cutoff are free in [0, 1]; photon numbers above the cutoff
    contribute at most their Poisson tail mass to each rate.
    """
    if cutoff < 3:
        raise ValueError("photon-number cutoff must be at least 3")
    scale = max(s0, sx, sy, 1e-300)
    photons = np.arange(cutoff + 1)
    a_ub, b_ub = [], []
    for mu, rate in ((0.0, s0), (mu_x, sx), (mu_y, sy)):
        weights = poisson.pmf(photons, mu)
        tail = max(0.0, 1.0 - weights.sum())
        a_ub.append(weights)
        b_ub.append(rate / scale)
        a_ub.append(-weights)
        b_ub.append(-(rate - tail) / scale)
    cost = np.zeros(cutoff + 1)
    cost[1] = 1.0
    result = linprog(
        cost,
        A_ub=np.array(a_ub),
        b_ub=np.array(b_ub),
        bounds=[(0.0, 1.0 / scale)] * (cutoff + 1),
        method="highs",
    )
    if result.status == 2:
        return LpOutcome(float("nan"), False, result.message)
    if not result.success:
        return LpOutcome(float("nan"), False, result.message)
    return LpOutcome(float(result.x[1] * scale), True, result.message)
