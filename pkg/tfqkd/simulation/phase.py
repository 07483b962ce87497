# tfqkd/simulation/phase.py
# Dual-band phase tracking: a random-walk fibre drift seen at two wavelengths,
# four-phase reference counts, and the estimator that turns those counts into
# a phase compensation for the quantum signals.

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..schemas import PhaseModel, ScheduleConfig

logger = logging.getLogger(__name__)

REFERENCE_PHASES = np.arange(4) * (np.pi / 2.0)


def wrap(angle):
    """Map angles onto (-pi, pi]."""
    return np.angle(np.exp(1j * np.asarray(angle)))


@dataclass
class PhaseTrace:
    times: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray

    @property
    def window_s(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def phase_walk(model: PhaseModel, duration: float, seed: int) -> PhaseTrace:
    """Wiener drift of the fibre path sampled once per estimation window.

    The walk is in path length, so the two wavelengths see phases in the
    fixed ratio lambda1/lambda2.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    dt = model.estimation_window_s
    steps = max(1, int(math.ceil(duration / dt)))
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, math.sqrt(model.diffusion * dt), size=steps) + model.drift_rate * dt
    increments[0] = 0.0
    phi1 = model.initial_offset + np.cumsum(increments)
    times = np.arange(steps) * dt
    return PhaseTrace(times=times, phi1=phi1, phi2=phi1 * (model.lambda1_nm / model.lambda2_nm))


@dataclass
class ReferenceCounts:
    """Per-window detections in the four reference phase slices.

    ``strong`` is the bright lambda1 reference available every window;
    ``dim`` is the lambda2 reference, present only inside reference frames.
    """

    times: np.ndarray
    strong: np.ndarray
    dim: np.ndarray


def _slice_means(phi: np.ndarray, rate: float, visibility: float) -> np.ndarray:
    return rate * (1.0 + visibility * np.cos(phi[:, None] + REFERENCE_PHASES[None, :]))


def reference_counts(
    trace: PhaseTrace,
    model: PhaseModel,
    schedule: ScheduleConfig = ScheduleConfig(),
    seed: int = 0,
    noiseless: bool = False,
) -> ReferenceCounts:
    strong = _slice_means(trace.phi1, model.reference_rate, model.reference_visibility)
    dim = _slice_means(trace.phi2, model.dim_reference_rate, model.reference_visibility)
    if schedule.reference_frame_s > 0.0:
        in_frame = np.mod(trace.times, schedule.frame_s) < schedule.reference_frame_s
    else:
        in_frame = np.ones(trace.times.shape, dtype=bool)
    dim[~in_frame] = 0.0
    if not noiseless:
        rng = np.random.default_rng(seed)
        strong = rng.poisson(strong).astype(float)
        dim = rng.poisson(dim).astype(float)
    return ReferenceCounts(times=trace.times, strong=strong, dim=dim)


def four_phase_angle(counts: np.ndarray) -> np.ndarray:
    """Phase from counts c_k ~ 1 + V cos(phi + k pi/2)."""
    return np.arctan2(counts[..., 3] - counts[..., 1], counts[..., 0] - counts[..., 2])


@dataclass
class PhaseEstimate:
    times: np.ndarray
    phi2: np.ndarray
    stale: np.ndarray
    residual: Optional[np.ndarray] = None
    sigma: float = 0.0
    implied_qber: float = 0.0

    @property
    def stale_fraction(self) -> float:
        return float(np.mean(self.stale)) if self.stale.size else 0.0


def estimate_phase(
    refs: ReferenceCounts,
    model: PhaseModel,
    truth: Optional[PhaseTrace] = None,
    misalignment: float = 0.0,
) -> PhaseEstimate:
    """Reconstruct the lambda2 phase from reference counts.

    The strong lambda1 reference gives the drift, unwrapped and rescaled by
    lambda1/lambda2. Its unknown offset is fixed per refresh interval from the
    circular mean of (dim estimate - rescaled drift). Windows without
    reference counts hold the previous value and are flagged stale.
    """
    windows = refs.times.size
    strong_total = refs.strong.sum(axis=1)
    stale = strong_total == 0
    raw = four_phase_angle(refs.strong)
    held = np.empty(windows)
    last = 0.0
    for i in range(windows):
        if not stale[i]:
            last = raw[i]
        held[i] = last
    if stale.any():
        logger.warning("%d of %d phase windows had no reference counts", int(stale.sum()), windows)

    scaled = np.unwrap(held) * (model.lambda1_nm / model.lambda2_nm)

    dim_angle = four_phase_angle(refs.dim)
    dim_seen = refs.dim.sum(axis=1) > 0
    blocks = np.floor(refs.times / model.refresh_interval_s).astype(int)
    offsets = np.empty(windows)
    offset = 0.0
    for block in np.unique(blocks):
        members = blocks == block
        usable = members & dim_seen
        if usable.any():
            weights = refs.dim.sum(axis=1)[usable]
            offset = float(np.angle(np.sum(weights * np.exp(1j * (dim_angle[usable] - scaled[usable])))))
        else:
            logger.debug("refresh block %d has no dim reference; keeping previous offset", block)
        offsets[members] = offset

    phi2 = scaled + offsets
    estimate = PhaseEstimate(times=refs.times, phi2=phi2, stale=stale)
    if truth is not None:
        residual = wrap(phi2 - truth.phi2)
        sigma = float(np.sqrt(np.mean(residual ** 2)))
        estimate.residual = residual
        estimate.sigma = sigma
        estimate.implied_qber = (1.0 - math.cos(sigma)) / 2.0 + misalignment
    return estimate
