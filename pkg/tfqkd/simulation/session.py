# tfqkd/simulation/session.py
# Monte Carlo of a full sending-or-not-sending session: per-window source
# choices, interference with residual phase error, dark counts, tallies and
# the raw Z-window keys with their simulation truth.

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..core import PROBABILITY_SUM_TOLERANCE
from ..estimation.aopp import RawKeyPair, apply_aopp, pair_bits
from ..exceptions import TallyValidationError
from ..schemas import V, X, Y, ScheduleConfig, SessionConfig, TallyRecord
from .channel import DetectorParams, arm_transmittances, port_intensities, slice_membership
from .phase import estimate_phase, phase_walk, reference_counts

logger = logging.getLogger(__name__)

# Window outcomes in the log.
NO_CLICK, DET1, DET2, DOUBLE = 0, 1, 2, 3


@dataclass
class WindowLog:
    """Per-window record kept when ``keep_log`` is set."""

    source_a: np.ndarray
    source_b: np.ndarray
    phase_index: np.ndarray
    photons: np.ndarray
    outcome: np.ndarray


@dataclass
class SessionTruth:
    tally: TallyRecord
    keys: RawKeyPair
    true_n1: int
    true_n1_a: int
    true_n1_b: int
    true_e1ph: float
    phase_sigma: float
    implied_qber: float
    seed: int
    log: Optional[WindowLog] = None


@dataclass
class _ShardOutput:
    sent: np.ndarray
    single1: np.ndarray
    single2: np.ndarray
    ds_total: int
    ds_correct: int
    xx_single_photon: int
    xx_single_photon_errors: int
    alice: np.ndarray
    bob: np.ndarray
    untagged: np.ndarray
    untagged_from_a: np.ndarray
    log: Optional[WindowLog]


def tally_from_log(log: WindowLog, n_phases: int, delta_slice: float) -> TallyRecord:
    """Build a TallyRecord from per-window outcomes."""
    near_zero, near_pi = slice_membership(n_phases, delta_slice)
    pair = log.source_a.astype(np.int64) * 3 + log.source_b
    sent = np.bincount(pair, minlength=9).reshape(3, 3)
    d1 = np.bincount(pair[log.outcome == DET1], minlength=9).reshape(3, 3)
    d2 = np.bincount(pair[log.outcome == DET2], minlength=9).reshape(3, 3)
    xx = (log.source_a == X) & (log.source_b == X)
    expect1 = xx & near_zero[log.phase_index]
    expect2 = xx & near_pi[log.phase_index]
    single = (log.outcome == DET1) | (log.outcome == DET2)
    ds_total = int(np.sum((expect1 | expect2) & single))
    ds_correct = int(np.sum(expect1 & (log.outcome == DET1)) + np.sum(expect2 & (log.outcome == DET2)))
    return _tally(sent, d1, d2, ds_total, ds_correct)


def _tally(sent, d1, d2, ds_total, ds_correct) -> TallyRecord:
    detected = d1 + d2
    return TallyRecord(
        sent=tuple(tuple(int(v) for v in row) for row in sent),
        detected=tuple(tuple(int(v) for v in row) for row in detected),
        valid_det1=int(d1.sum()),
        valid_det2=int(d2.sum()),
        ds_total=int(ds_total),
        ds_correct=int(ds_correct),
        n_total=int(sent.sum()),
    )


def quantum_window_times(schedule: ScheduleConfig, index) -> np.ndarray:
    """Wall-clock start of the ``index``-th quantum window.

    Quantum windows fill the part of each frame after the dim-reference
    block, spread evenly at the schedule's effective clock. The per-period
    strong-reference slots are below the phase-tracking resolution and are
    folded into that rate.
    """
    index = np.asarray(index, dtype=float)
    per_frame = schedule.windows_per_frame
    frame = np.floor(index / per_frame)
    quantum_s = schedule.frame_s - schedule.reference_frame_s
    return frame * schedule.frame_s + schedule.reference_frame_s + (index - frame * per_frame) / per_frame * quantum_s


def _run_shard(cfg: SessionConfig, start: int, count: int, residual: np.ndarray, seed_seq) -> _ShardOutput:
    rng = np.random.default_rng(seed_seq)
    src = cfg.source
    probs = np.array(src.probabilities)
    mus = np.array(src.intensities)
    eta_a, eta_b = arm_transmittances(cfg.channel)
    det = DetectorParams.from_channel(cfg.channel)
    near_zero, near_pi = slice_membership(cfg.n_phases, cfg.delta_slice)

    sa = rng.choice(3, size=count, p=probs)
    sb = rng.choice(3, size=count, p=probs)
    phase_index = (rng.integers(cfg.n_phases, size=count) - rng.integers(cfg.n_phases, size=count)) % cfg.n_phases
    times = quantum_window_times(cfg.layout, start + np.arange(count))
    window = np.minimum((times / cfg.phase_model.estimation_window_s).astype(np.int64), residual.size - 1)
    delta = 2.0 * np.pi * phase_index / cfg.n_phases + residual[window]

    mu_a, mu_b = mus[sa], mus[sb]
    emitted = mu_a + mu_b
    photons = rng.poisson(emitted)
    plus, minus = port_intensities(mu_a, mu_b, eta_a, eta_b, delta, det.visibility)
    safe = np.where(emitted > 0, emitted, 1.0)
    q_plus = np.where(emitted > 0, plus * det.eta_det[0] * det.window_eff / safe, 0.0)
    q_minus = np.where(emitted > 0, minus * det.eta_det[1] * det.window_eff / safe, 0.0)
    n_plus = rng.binomial(photons, np.clip(q_plus, 0.0, 1.0))
    rest = np.where(q_plus < 1.0, q_minus / np.maximum(1.0 - q_plus, 1e-300), 0.0)
    n_minus = rng.binomial(photons - n_plus, np.clip(rest, 0.0, 1.0))
    click1 = (n_plus > 0) | (rng.random(count) < det.dark_per_window[0])
    click2 = (n_minus > 0) | (rng.random(count) < det.dark_per_window[1])

    outcome = np.full(count, NO_CLICK, dtype=np.int8)
    outcome[click1 & ~click2] = DET1
    outcome[click2 & ~click1] = DET2
    outcome[click1 & click2] = DOUBLE

    log = WindowLog(sa.astype(np.int8), sb.astype(np.int8), phase_index.astype(np.int16), photons, outcome)
    tally = tally_from_log(log, cfg.n_phases, cfg.delta_slice)
    single = (outcome == DET1) | (outcome == DET2)

    xx_slice = (sa == X) & (sb == X) & (near_zero[phase_index] | near_pi[phase_index]) & single & (photons == 1)
    wrong = np.where(near_zero[phase_index], outcome == DET2, outcome == DET1)

    z = (sa != X) & (sb != X) & single
    one_sided = (sa == Y) ^ (sb == Y)
    untagged = (one_sided & (photons == 1))[z]
    from_a = (sa == Y)[z] & untagged

    return _ShardOutput(
        sent=np.array(tally.sent),
        single1=np.bincount((sa * 3 + sb)[outcome == DET1], minlength=9).reshape(3, 3),
        single2=np.bincount((sa * 3 + sb)[outcome == DET2], minlength=9).reshape(3, 3),
        ds_total=tally.ds_total,
        ds_correct=tally.ds_correct,
        xx_single_photon=int(xx_slice.sum()),
        xx_single_photon_errors=int((xx_slice & wrong).sum()),
        alice=(sa[z] == Y).astype(np.uint8),
        bob=(sb[z] == V).astype(np.uint8),
        untagged=untagged,
        untagged_from_a=from_a,
        log=log if cfg.keep_log else None,
    )


def merge_tallies(tallies: List[TallyRecord]) -> TallyRecord:
    """Field-wise sum of tallies from independent shards or sessions."""
    if not tallies:
        raise ValueError("nothing to merge")
    sent = sum(np.array(t.sent, dtype=np.int64) for t in tallies)
    detected = sum(np.array(t.detected, dtype=np.int64) for t in tallies)
    return TallyRecord(
        sent=tuple(tuple(int(v) for v in row) for row in sent),
        detected=tuple(tuple(int(v) for v in row) for row in detected),
        valid_det1=sum(t.valid_det1 for t in tallies),
        valid_det2=sum(t.valid_det2 for t in tallies),
        ds_total=sum(t.ds_total for t in tallies),
        ds_correct=sum(t.ds_correct for t in tallies),
        n_total=sum(t.n_total for t in tallies),
    )


def recount_tally(truth: SessionTruth, cfg: SessionConfig) -> TallyRecord:
    """Rebuild the tally from the per-window log of a ``keep_log`` session."""
    if truth.log is None:
        raise ValueError("session was run without keep_log")
    return tally_from_log(truth.log, cfg.n_phases, cfg.delta_slice)


def _concat_logs(logs: List[WindowLog]) -> WindowLog:
    return WindowLog(*(np.concatenate([getattr(l, f) for l in logs]) for f in
                       ("source_a", "source_b", "phase_index", "photons", "outcome")))


def simulate_session(cfg: SessionConfig) -> SessionTruth:
    """Run ``cfg.n_pairs`` pulse-pair windows; identical configs give identical truth."""
    root = np.random.SeedSequence(cfg.seed)
    phase_seed, ref_seed, flag_seed, shard_root = root.spawn(4)

    total = sum(cfg.source.probabilities)
    if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
        raise TallyValidationError([f"source probabilities sum to {total:.12g}, not 1"])
    layout = cfg.layout
    if abs(layout.effective_clock_hz - cfg.channel.clock_hz) > 1e-3 * cfg.channel.clock_hz:
        logger.warning(
            "schedule gives %.4g Hz of quantum windows but the channel clock is %.4g Hz",
            layout.effective_clock_hz, cfg.channel.clock_hz,
        )

    duration = float(quantum_window_times(layout, cfg.n_pairs)) + cfg.phase_model.estimation_window_s
    trace = phase_walk(cfg.phase_model, duration, int(phase_seed.generate_state(1)[0]))
    refs = reference_counts(trace, cfg.phase_model, layout, int(ref_seed.generate_state(1)[0]))
    estimate = estimate_phase(refs, cfg.phase_model, truth=trace, misalignment=cfg.channel.misalignment)

    starts = list(range(0, cfg.n_pairs, cfg.shard_size))
    shard_seeds = shard_root.spawn(len(starts))
    jobs = [(cfg, s, min(cfg.shard_size, cfg.n_pairs - s), estimate.residual, seq) for s, seq in zip(starts, shard_seeds)]
    logger.info("simulating %d windows in %d shard(s), %d worker(s)", cfg.n_pairs, len(jobs), cfg.workers)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            shards = list(pool.map(_run_shard, *zip(*jobs)))
    else:
        shards = [_run_shard(*job) for job in jobs]

    sent = sum(s.sent for s in shards)
    tally = _tally(
        sent,
        sum(s.single1 for s in shards),
        sum(s.single2 for s in shards),
        sum(s.ds_total for s in shards),
        sum(s.ds_correct for s in shards),
    )

    xx = sum(s.xx_single_photon for s in shards)
    xx_errors = sum(s.xx_single_photon_errors for s in shards)
    true_e1ph = xx_errors / xx if xx else 0.5

    untagged = np.concatenate([s.untagged for s in shards])
    from_a = np.concatenate([s.untagged_from_a for s in shards])
    flags = np.random.default_rng(flag_seed).random(untagged.size) < true_e1ph
    keys = RawKeyPair(
        alice_bits=np.concatenate([s.alice for s in shards]),
        bob_bits=np.concatenate([s.bob for s in shards]),
        untagged_mask=untagged,
        phase_error_mask=flags & untagged,
    )
    log = _concat_logs([s.log for s in shards]) if cfg.keep_log else None

    return SessionTruth(
        tally=tally,
        keys=keys,
        true_n1=int(untagged.sum()),
        true_n1_a=int(from_a.sum()),
        true_n1_b=int(untagged.sum() - from_a.sum()),
        true_e1ph=true_e1ph,
        phase_sigma=estimate.sigma,
        implied_qber=estimate.implied_qber,
        seed=cfg.seed,
        log=log,
    )


def summarize_truth(truth: SessionTruth, aopp_seed: Optional[int] = None) -> Dict:
    """JSON-ready ground truth, including the bit-level AOPP outcome."""
    seed = truth.seed if aopp_seed is None else aopp_seed
    result, _ = apply_aopp(truth.keys, pair_bits(truth.keys.bob_bits, seed))
    tally = truth.tally
    return {
        "seed": truth.seed,
        "n_total": tally.n_total,
        "true_n1": truth.true_n1,
        "true_n1_a": truth.true_n1_a,
        "true_n1_b": truth.true_n1_b,
        "true_e1ph": truth.true_e1ph,
        "raw_key_length": truth.keys.length,
        "raw_key_error_rate": truth.keys.error_rate(),
        "e_x": (tally.ds_total - tally.ds_correct) / tally.ds_total if tally.ds_total else None,
        "phase_sigma": truth.phase_sigma,
        "implied_qber": truth.implied_qber,
        "aopp": result.model_dump(),
    }
