# tfqkd/simulation/channel.py
# Coherent-state interference at the middle node and threshold detection,
# plus the phase-averaged expected tally used by the optimizer.

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..schemas import X, ChannelConfig, SourceParams, TallyRecord


@dataclass(frozen=True)
class DetectorParams:
    """Detector pair behind the beam splitter; index 0 sits on the + port."""

    eta_det: Tuple[float, float] = (1.0, 1.0)
    dark_per_window: Tuple[float, float] = (0.0, 0.0)
    window_eff: float = 1.0
    visibility: float = 1.0

    @classmethod
    def from_channel(cls, ch: ChannelConfig) -> "DetectorParams":
        return cls(
            eta_det=tuple(ch.det_eff),
            dark_per_window=ch.dark_per_window,
            window_eff=ch.window_eff,
            visibility=ch.visibility,
        )


def arm_transmittances(ch: ChannelConfig) -> Tuple[float, float]:
    """Alice and Bob arm transmittance including Charlie's extra loss."""
    def eta(km: float, extra: float) -> float:
        return 10.0 ** (-(km * ch.atten_db_per_km + extra) / 10.0)

    return eta(ch.length_a_km, ch.extra_loss_db[0]), eta(ch.length_b_km, ch.extra_loss_db[1])


def port_intensities(mu_a, mu_b, eta_a, eta_b, delta, visibility: float = 1.0):
    """Mean photon numbers arriving at the + and - output ports."""
    arrive_a = np.multiply(eta_a, mu_a)
    arrive_b = np.multiply(eta_b, mu_b)
    cross = visibility * np.sqrt(arrive_a * arrive_b) * np.cos(delta)
    total = arrive_a + arrive_b
    plus = np.clip(0.5 * total + cross, 0.0, None)
    minus = np.clip(0.5 * total - cross, 0.0, None)
    return plus, minus


def click_probabilities(mu_a, mu_b, eta_a, eta_b, delta, det: DetectorParams = DetectorParams()):
    """Per-detector click probabilities 1 - (1 - p_dark) exp(-I eta_det eta_window).

    Accepts scalars or numpy arrays; returns a (det1, det2) pair.
    """
    plus, minus = port_intensities(mu_a, mu_b, eta_a, eta_b, delta, det.visibility)
    p1 = 1.0 - (1.0 - det.dark_per_window[0]) * np.exp(-plus * det.eta_det[0] * det.window_eff)
    p2 = 1.0 - (1.0 - det.dark_per_window[1]) * np.exp(-minus * det.eta_det[1] * det.window_eff)
    return p1, p2


def single_click_probabilities(mu_a, mu_b, eta_a, eta_b, delta, det: DetectorParams = DetectorParams()):
    """Probabilities that only det1 or only det2 fires; double clicks are discarded."""
    p1, p2 = click_probabilities(mu_a, mu_b, eta_a, eta_b, delta, det)
    return p1 * (1.0 - p2), p2 * (1.0 - p1)


def phase_grid(n_phases: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_phases) / n_phases


def slice_membership(n_phases: int, delta_slice: float) -> Tuple[np.ndarray, np.ndarray]:
    """Masks over the relative-phase grid: near 0 (expect det1) and near pi (expect det2)."""
    grid = phase_grid(n_phases)
    wrapped = np.abs(np.angle(np.exp(1j * grid)))
    tol = 1e-9
    near_zero = wrapped <= delta_slice / 2.0 + tol
    near_pi = wrapped >= math.pi - delta_slice / 2.0 - tol
    return near_zero, near_pi


def expected_tally(
    params: SourceParams,
    ch: ChannelConfig,
    n_total: int,
    delta_slice: float = math.pi / 8,
    n_phases: int = 16,
) -> TallyRecord:
    """Expected counts for ``n_total`` pulse pairs, rounded to integers.

    The relative phase of the two weak coherent states is uniform over the
    ``n_phases`` grid; x-x windows on the grid points inside the slice make
    up the Ds tallies.
    """
    eta_a, eta_b = arm_transmittances(ch)
    det = DetectorParams.from_channel(ch)
    grid = phase_grid(n_phases)
    near_zero, near_pi = slice_membership(n_phases, delta_slice)
    mus = params.intensities
    probs = params.probabilities

    sent = [[0] * 3 for _ in range(3)]
    detected = [[0] * 3 for _ in range(3)]
    valid = [0, 0]
    ds_total = ds_correct = 0
    for a in range(3):
        for b in range(3):
            count = int(round(n_total * probs[a] * probs[b]))
            q1, q2 = single_click_probabilities(mus[a], mus[b], eta_a, eta_b, grid, det)
            d1 = int(round(count * float(np.mean(q1))))
            d2 = int(round(count * float(np.mean(q2))))
            sent[a][b] = count
            detected[a][b] = d1 + d2
            valid[0] += d1
            valid[1] += d2
            if a == X and b == X:
                in_slice = (q1 + q2)[near_zero | near_pi].sum() / n_phases
                right = (q1[near_zero].sum() + q2[near_pi].sum()) / n_phases
                ds_total = int(round(count * float(in_slice)))
                ds_correct = min(int(round(count * float(right))), ds_total)

    return TallyRecord(
        sent=tuple(tuple(row) for row in sent),
        detected=tuple(tuple(row) for row in detected),
        valid_det1=valid[0],
        valid_det2=valid[1],
        ds_total=ds_total,
        ds_correct=ds_correct,
        n_total=sum(sum(row) for row in sent),
    )
