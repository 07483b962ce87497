# tfqkd/estimation/keyrate.py
# Finite-key secure rate per pulse pair, its advanced-decoy overhead, the
# repeaterless PLOB capacity, and the tally -> report pipeline.

import logging
import math
from typing import List, Optional

import numpy as np

from ..core import transmittance
from ..exceptions import DomainError, InsufficientDataError, VacuousBoundError
from ..schemas import (
    V,
    Y,
    ChannelConfig,
    KeyRateInput,
    KeyRateReport,
    SecurityParams,
    SourceParams,
    TallyRecord,
)
from .aopp import estimate_after_aopp
from .decoy import estimate_decoy, raw_key_stats

logger = logging.getLogger(__name__)


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1.0 - x) * np.log2(1.0 - x))


def r_tail(n_total: int, n_vy: int, n_yv: int, sec: SecurityParams) -> float:
    """Per-pulse cost of the advanced decoy analysis and of correctness/secrecy."""
    if n_total <= 0:
        raise DomainError("n_total must be positive")
    if n_vy + n_yv < 1:
        raise DomainError("n_vy + n_yv must be at least 1; log2 of zero is undefined")
    bits = (
        2.0 * math.log2(2.0 / sec.eps_cor)
        + 4.0 * math.log2(1.0 / (math.sqrt(2.0) * sec.eps_pa * sec.eps_hat))
        + 2.0 * math.log2(n_vy + n_yv)
    )
    return bits / n_total


def plob(eta: float) -> float:
    """Repeaterless secret-key capacity -log2(1 - eta) in bits per pulse."""
    if not 0.0 <= eta < 1.0:
        raise DomainError(f"PLOB bound diverges or is undefined for eta={eta}")
    return float(-np.log1p(-eta) / np.log(2.0))


def _plob_or_none(eta: Optional[float]) -> Optional[float]:
    # A lossless link has no finite repeaterless bound to compare against.
    if eta is None or eta >= 1.0:
        return None
    return plob(eta)


def secure_key_rate(inp: KeyRateInput) -> KeyRateReport:
    n = inp.n_total
    tail = r_tail(n, inp.n_vy, inp.n_yv, inp.sec)
    privacy = inp.n1 * (1.0 - binary_entropy(inp.e1ph))
    leakage = inp.sec.f * inp.n_t * binary_entropy(inp.e_t)
    unclamped = (privacy - leakage) / n - tail
    rate = max(0.0, unclamped)

    plob_bound = _plob_or_none(inp.eta)
    plob_margin = rate / plob_bound if plob_bound else None

    return KeyRateReport(
        r_per_pulse=rate,
        r_bps=rate * inp.clock_hz,
        r_tail=tail,
        total_secure_bits=int(math.floor(rate * n)),
        plob_bound=plob_bound,
        plob_margin=plob_margin,
        r_unclamped=unclamped,
        n_total=n,
        n1=inp.n1,
        e1ph=inp.e1ph,
        n_t=inp.n_t,
        e_t=inp.e_t,
    )


def _zero_report(n_total: int, eta: Optional[float], reasons: List[str], **audit) -> KeyRateReport:
    plob_bound = _plob_or_none(eta)
    return KeyRateReport(
        r_per_pulse=0.0,
        r_bps=0.0,
        r_tail=audit.pop("r_tail", 0.0),
        total_secure_bits=0,
        plob_bound=plob_bound,
        plob_margin=0.0 if plob_bound else None,
        n_total=n_total,
        vacuous=True,
        reasons=reasons,
        **audit,
    )


def analyze(
    tally: TallyRecord,
    params: SourceParams,
    sec: SecurityParams,
    ch: ChannelConfig,
    mode: str = "finite",
    delta_slice: Optional[float] = None,
    strict: bool = False,
) -> KeyRateReport:
    """Decoy estimate, AOPP mapping and finite-key rate for one tally.

    In ``mode="mean"`` no Chernoff adjustment is applied. A vacuous estimate
    gives a zero-rate report listing the reasons, or raises when ``strict``.
    """
    eps = sec.eps_chernoff if mode == "finite" else None
    eta = transmittance(ch)
    n_vy, n_yv = tally.detected[V][Y], tally.detected[Y][V]

    try:
        decoy = estimate_decoy(tally, params, eps, delta_slice)
    except InsufficientDataError as exc:
        if strict:
            raise
        logger.warning("analysis aborted: %s", exc)
        return _zero_report(tally.n_total, eta, [str(exc)])

    before = raw_key_stats(tally)
    after = estimate_after_aopp(before, decoy.n1_b, decoy.n1_a, decoy.e1ph_pre, eps)
    audit = dict(
        n1=after.n1_post,
        e1ph=after.e1ph_post,
        n_t=float(after.n_t_post),
        e_t=after.e_t_post,
        n1_pre=decoy.n1_pre,
        e1ph_pre=decoy.e1ph_pre,
        e_t_pre=before.e_t,
        e_x=decoy.ex,
    )

    reasons = list(decoy.reasons)
    if after.n1_post <= 0:
        reasons.append("no untagged bits survive AOPP")
    if n_vy + n_yv < 1:
        reasons.append("no raw key from one-sided windows")
    if reasons:
        if strict:
            raise VacuousBoundError("; ".join(reasons))
        logger.warning("vacuous key-rate estimate: %s", "; ".join(reasons))
        return _zero_report(tally.n_total, eta, reasons, **audit)

    # Untagged bits are a subset of the key bits.
    inp = KeyRateInput(
        n_total=tally.n_total,
        n1=min(after.n1_post, float(after.n_t_post)),
        e1ph=after.e1ph_post,
        n_t=after.n_t_post,
        e_t=after.e_t_post,
        n_vy=n_vy,
        n_yv=n_yv,
        sec=sec,
        clock_hz=ch.clock_hz,
        eta=eta,
    )
    report = secure_key_rate(inp)
    return report.model_copy(update=audit)
