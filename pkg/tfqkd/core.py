# tfqkd/core.py
# Parameter validation, channel arithmetic and the published parameter presets.

import math
from typing import Dict, List, Literal

from .schemas import ChannelConfig, SecurityParams, SourceParams

Side = Literal["A", "B", "total"]

# Source parameter sets used in the experiment: "1" was optimized for the
# 1002 km link, "2" for 202-505 km.
PARAMETER_SETS: Dict[str, SourceParams] = {
    "1": SourceParams(mu_x=0.08, mu_y=0.445, p_v=0.52, p_x=0.28, p_y=0.20),
    "2": SourceParams(mu_x=0.05, mu_y=0.482, p_v=0.68, p_x=0.04, p_y=0.28),
}

PROBABILITY_SUM_TOLERANCE = 1e-12


class Verdict:
    """Outcome of ``validate``: truthy when no invariant is violated."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __repr__(self) -> str:
        return "Verdict(pass)" if self.ok else f"Verdict(fail: {self.violations})"


def source_violations(params: SourceParams) -> List[str]:
    problems = []
    if params.mu_v != 0.0:
        problems.append("mu_v must be 0")
    if not params.mu_v < params.mu_x:
        problems.append("mu_v < mu_x violated")
    if not params.mu_x < params.mu_y:
        problems.append("mu_x < mu_y violated")
    for name in ("p_v", "p_x", "p_y"):
        value = getattr(params, name)
        if not 0.0 < value < 1.0:
            problems.append(f"{name} outside (0, 1)")
    total = params.p_v + params.p_x + params.p_y
    if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
        problems.append(f"probabilities sum to {total:.12g}, not 1")
    return problems


def security_violations(sec: SecurityParams) -> List[str]:
    problems = []
    for name in ("eps_chernoff", "eps_cor", "eps_pa", "eps_hat"):
        if not 0.0 < getattr(sec, name) < 1.0:
            problems.append(f"{name} outside (0, 1)")
    if sec.f < 1.0:
        problems.append("f must be at least 1")
    return problems


def channel_violations(ch: ChannelConfig) -> List[str]:
    problems = []
    if ch.length_a_km < 0 or ch.length_b_km < 0:
        problems.append("fibre lengths must be non-negative")
    if ch.atten_db_per_km < 0 or min(ch.extra_loss_db) < 0:
        problems.append("losses must be non-negative")
    for value in (*ch.det_eff, ch.window_eff):
        if not 0.0 <= value <= 1.0:
            problems.append("efficiencies must lie in [0, 1]")
            break
    if min(ch.dark_hz) < 0:
        problems.append("dark rates must be non-negative")
    if ch.clock_hz <= 0:
        problems.append("clock_hz must be positive")
    return problems


def validate(params: SourceParams, sec: SecurityParams, ch: ChannelConfig) -> Verdict:
    """Check every cross-field invariant without raising or mutating anything."""
    return Verdict(source_violations(params) + security_violations(sec) + channel_violations(ch))


def loss_db(ch: ChannelConfig, side: Side = "total", include_extra_loss: bool = False) -> float:
    if side == "A":
        db = ch.length_a_km * ch.atten_db_per_km
        extra = ch.extra_loss_db[0]
    elif side == "B":
        db = ch.length_b_km * ch.atten_db_per_km
        extra = ch.extra_loss_db[1]
    elif side == "total":
        db = (ch.length_a_km + ch.length_b_km) * ch.atten_db_per_km
        extra = sum(ch.extra_loss_db)
    else:
        raise ValueError(f"unknown side {side!r}")
    return db + extra if include_extra_loss else db


def transmittance(ch: ChannelConfig, side: Side = "total", include_extra_loss: bool = False) -> float:
    """Transmittance 10^(-dB/10) of one arm or of the whole Alice-Bob fibre.

    By default only fibre loss counts, which is how the published totals
    (31.6 dB ... 156.5 dB) are quoted.
    """
    return 10.0 ** (-loss_db(ch, side, include_extra_loss) / 10.0)


def distance_channel(template: ChannelConfig, distance_km: float) -> ChannelConfig:
    """Split a total distance evenly over both arms of ``template``."""
    half = distance_km / 2.0
    return template.model_copy(update={"length_a_km": half, "length_b_km": half})


def db_to_eta(db: float) -> float:
    return 10.0 ** (-db / 10.0)


def eta_to_db(eta: float) -> float:
    return -10.0 * math.log10(eta)
