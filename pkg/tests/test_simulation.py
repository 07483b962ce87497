# tests/test_simulation.py
import math

import numpy as np
import pytest
from pydantic import ValidationError

from tfqkd.core import PARAMETER_SETS, distance_channel
from tfqkd.estimation.decoy import estimate_decoy
from tfqkd.estimation.keyrate import analyze
from tfqkd.exceptions import TallyValidationError
from tfqkd.simulation.channel import DetectorParams, click_probabilities, expected_tally
from tfqkd.simulation.phase import (
    ReferenceCounts,
    estimate_phase,
    phase_walk,
    reference_counts,
)
from tfqkd.simulation.session import (
    merge_tallies,
    quantum_window_times,
    recount_tally,
    simulate_session,
    summarize_truth,
)
from tfqkd.schemas import (
    V,
    X,
    Y,
    ChannelConfig,
    PhaseModel,
    ScheduleConfig,
    SecurityParams,
    SessionConfig,
    SourceParams,
)


def _metro(distance=202):
    return distance_channel(ChannelConfig.metro(), distance)


# --- Interference and detection ---

def test_equal_arms_in_phase_leave_minus_port_dark():
    p1, p2 = click_probabilities(0.3, 0.3, 0.1, 0.1, 0.0)
    assert p1 > 0
    assert p2 == pytest.approx(0.0, abs=1e-15)


def test_pi_phase_swaps_the_ports():
    det = DetectorParams(dark_per_window=(1e-6, 1e-6))
    p1, p2 = click_probabilities(0.2, 0.4, 0.05, 0.02, 0.0, det)
    q1, q2 = click_probabilities(0.2, 0.4, 0.05, 0.02, math.pi, det)
    assert q1 == pytest.approx(p2, rel=1e-12)
    assert q2 == pytest.approx(p1, rel=1e-12)


def test_vanishing_intensity_leaves_dark_floor():
    det = DetectorParams(dark_per_window=(2e-6, 3e-6))
    p1, p2 = click_probabilities(0.0, 0.0, 0.5, 0.5, 0.4, det)
    assert p1 == pytest.approx(2e-6, rel=1e-9)
    assert p2 == pytest.approx(3e-6, rel=1e-9)


def test_reduced_visibility_lights_the_dark_port():
    det = DetectorParams(visibility=0.95)
    _, p2 = click_probabilities(0.3, 0.3, 0.1, 0.1, 0.0, det)
    assert p2 > 0


def test_click_probabilities_accept_arrays():
    p1, p2 = click_probabilities(0.3, 0.3, 0.1, 0.1, np.linspace(0, 2 * np.pi, 9))
    assert p1.shape == p2.shape == (9,)
    assert np.all((0 <= p1) & (p1 <= 1))


def test_fringe_visibility_follows_cos_delta():
    delta = np.linspace(0.0, 2 * np.pi, 25)
    p1, p2 = click_probabilities(1e-4, 1e-4, 1.0, 1.0, delta)
    np.testing.assert_allclose((p1 - p2) / (p1 + p2), np.cos(delta), atol=1e-3)


def test_expected_detections_scale_linearly():
    ch = _metro()
    single = expected_tally(PARAMETER_SETS["2"], ch, 10**12)
    double = expected_tally(PARAMETER_SETS["2"], ch, 2 * 10**12)
    for a in range(3):
        for b in range(3):
            assert double.detected[a][b] == pytest.approx(2 * single.detected[a][b], rel=1e-6)


def test_long_haul_model_matches_recorded_rates(tallies):
    recorded, _ = tallies[1002]
    model = expected_tally(PARAMETER_SETS["1"], ChannelConfig(), 10**15)
    for a, b in [(V, X), (X, V), (V, Y), (Y, V), (X, X), (Y, Y), (X, Y), (Y, X)]:
        observed = recorded.detected[a][b] / recorded.sent[a][b]
        expected = model.detected[a][b] / model.sent[a][b]
        assert 0.8 <= observed / expected <= 1.3


# --- Phase drift and tracking ---

def test_walk_without_diffusion_is_constant():
    trace = phase_walk(PhaseModel(diffusion=0.0), 0.1, seed=1)
    assert np.all(trace.phi1 == trace.phi1[0])


def test_wavelength_ratio_holds_exactly():
    model = PhaseModel()
    trace = phase_walk(model, 0.5, seed=2)
    np.testing.assert_allclose(trace.phi2 * model.lambda2_nm, trace.phi1 * model.lambda1_nm, rtol=1e-12)


def test_increment_variance_matches_diffusion():
    model = PhaseModel(diffusion=10.0)
    trace = phase_walk(model, 10.0, seed=3)
    variance = np.var(np.diff(trace.phi1))
    assert variance == pytest.approx(10.0 * model.estimation_window_s, rel=0.05)


def test_walk_rejects_empty_duration():
    with pytest.raises(ValueError):
        phase_walk(PhaseModel(), 0.0, seed=1)


def test_noiseless_static_references_give_zero_residual():
    model = PhaseModel(diffusion=0.0)
    trace = phase_walk(model, 1.0, seed=4)
    refs = reference_counts(trace, model, noiseless=True)
    estimate = estimate_phase(refs, model, truth=trace)
    assert estimate.sigma < 1e-9
    assert estimate.stale_fraction == 0.0


def test_linear_drift_is_tracked():
    model = PhaseModel(diffusion=0.0, drift_rate=1.0, reference_rate=1e6, dim_reference_rate=1e5)
    trace = phase_walk(model, 1.0, seed=5)
    refs = reference_counts(trace, model, seed=5)
    estimate = estimate_phase(refs, model, truth=trace)
    assert estimate.sigma < 0.05


def test_default_tracking_noise_gives_realistic_x_error():
    model = PhaseModel()
    trace = phase_walk(model, 2.0, seed=6)
    refs = reference_counts(trace, model, seed=6)
    estimate = estimate_phase(refs, model, truth=trace, misalignment=0.025)
    assert 0.03 <= estimate.implied_qber <= 0.06


def test_empty_reference_window_is_held_and_flagged():
    times = np.arange(4) * 1e-3
    strong = np.array([[2.0, 1.0, 0.0, 1.0]] * 4)
    strong[2] = 0.0
    refs = ReferenceCounts(times=times, strong=strong, dim=np.zeros((4, 4)))
    estimate = estimate_phase(refs, PhaseModel())
    assert estimate.stale.tolist() == [False, False, True, False]
    assert estimate.phi2[2] == estimate.phi2[1]
    assert estimate.stale_fraction == 0.25


# --- Time multiplexing ---

def test_schedule_presets_give_the_published_clocks():
    assert ScheduleConfig.long_haul().effective_clock_hz == pytest.approx(351e6, rel=1e-9)
    assert ScheduleConfig.metro().effective_clock_hz == pytest.approx(900e6, rel=1e-9)


def test_schedule_is_picked_from_the_clock():
    assert ScheduleConfig.for_clock(900e6) == ScheduleConfig.metro()
    assert ScheduleConfig.for_clock(351e6) == ScheduleConfig.long_haul()
    assert ScheduleConfig.for_clock(1e8) == ScheduleConfig.long_haul()


def test_schedule_rejects_impossible_duty_cycles():
    with pytest.raises(ValidationError):
        ScheduleConfig(reference_frame_s=0.1)
    with pytest.raises(ValidationError):
        ScheduleConfig(reference_slot_s=1e-6)


def test_quantum_windows_skip_the_reference_frames():
    layout = ScheduleConfig.long_haul()
    per_frame = layout.windows_per_frame
    times = quantum_window_times(layout, np.array([0, per_frame - 1, per_frame, 3 * per_frame + 5]))
    assert times[0] == pytest.approx(0.04)
    assert times[1] < 0.1
    assert times[2] == pytest.approx(0.14)
    assert np.all(np.mod(times, layout.frame_s) >= layout.reference_frame_s - 1e-12)


def test_metro_windows_run_back_to_back():
    index = np.arange(0, 10**6, 997)
    np.testing.assert_allclose(quantum_window_times(ScheduleConfig.metro(), index), index / 900e6, rtol=1e-9)


def test_dim_reference_is_continuous_without_reference_frames():
    model = PhaseModel(diffusion=0.0)
    trace = phase_walk(model, 0.3, seed=1)
    metro = reference_counts(trace, model, ScheduleConfig.metro(), noiseless=True)
    long_haul = reference_counts(trace, model, ScheduleConfig.long_haul(), noiseless=True)
    assert np.all(metro.dim.sum(axis=1) > 0)
    assert not np.all(long_haul.dim.sum(axis=1) > 0)


def test_session_layout_follows_the_channel_clock():
    assert SessionConfig(source=PARAMETER_SETS["2"], channel=_metro(), n_pairs=1).layout == ScheduleConfig.metro()
    assert SessionConfig(source=PARAMETER_SETS["1"], n_pairs=1).layout == ScheduleConfig.long_haul()
    explicit = ScheduleConfig(reference_frame_s=0.02)
    assert SessionConfig(source=PARAMETER_SETS["1"], n_pairs=1, schedule=explicit).layout == explicit


# --- Sessions ---

def _session(**overrides) -> SessionConfig:
    settings = dict(source=PARAMETER_SETS["2"], channel=_metro(), n_pairs=20_000, seed=3)
    settings.update(overrides)
    return SessionConfig(**settings)


def test_session_is_deterministic():
    first = simulate_session(_session())
    second = simulate_session(_session())
    assert first.tally == second.tally
    assert np.array_equal(first.keys.bob_bits, second.keys.bob_bits)
    assert first.true_n1 == second.true_n1


def test_different_seeds_give_different_sessions():
    assert simulate_session(_session(seed=3)).tally != simulate_session(_session(seed=4)).tally


def test_tally_satisfies_invariants():
    tally = simulate_session(_session()).tally
    assert tally.violations() == []
    assert tally.n_total == 20_000


def test_recounted_log_matches_tally():
    cfg = _session(keep_log=True, shard_size=7_000)
    truth = simulate_session(cfg)
    assert truth.log.outcome.size == cfg.n_pairs
    assert recount_tally(truth, cfg) == truth.tally


def test_recount_needs_a_log():
    cfg = _session()
    with pytest.raises(ValueError):
        recount_tally(simulate_session(cfg), cfg)


def test_merge_is_associative():
    a, b, c = (simulate_session(_session(seed=s)).tally for s in (1, 2, 3))
    assert merge_tallies([a, b, c]) == merge_tallies([merge_tallies([a, b]), c])
    assert merge_tallies([a, b, c]).n_total == 60_000


def test_dark_lossless_channel_without_light_stays_silent():
    silent = SourceParams(mu_x=0.0, mu_y=0.0, p_v=0.5, p_x=0.25, p_y=0.25)
    ch = ChannelConfig(length_a_km=0, length_b_km=0, extra_loss_db=(0.0, 0.0), dark_hz=(0.0, 0.0))
    truth = simulate_session(SessionConfig(source=silent, channel=ch, n_pairs=10_000))
    assert truth.tally.total_detected == 0
    assert truth.keys.length == 0


def test_probabilities_must_sum_to_one():
    loose = SourceParams(mu_x=0.05, mu_y=0.482, p_v=0.5, p_x=0.5, p_y=0.5)
    with pytest.raises(TallyValidationError):
        simulate_session(SessionConfig(source=loose, channel=_metro(), n_pairs=1_000))


def test_lossless_noiseless_link_yields_key():
    ch = ChannelConfig(length_a_km=0, length_b_km=0, extra_loss_db=(0.0, 0.0), dark_hz=(0.0, 0.0), misalignment=0.0)
    cfg = SessionConfig(source=PARAMETER_SETS["1"], channel=ch, n_pairs=1_000_000,
                        phase_model=PhaseModel(diffusion=0.0), seed=5)
    report = analyze(simulate_session(cfg).tally, cfg.source, SecurityParams(), ch, mode="mean")
    assert not report.vacuous
    assert report.r_per_pulse > 0
    assert report.plob_bound is None


def test_signal_rate_matches_phase_averaged_model():
    cfg = _session(n_pairs=500_000, seed=11)
    tally = simulate_session(cfg).tally
    model = expected_tally(cfg.source, cfg.channel, 10**12)
    expected = model.detected[Y][Y] / model.sent[Y][Y]
    sent = tally.sent[Y][Y]
    sigma = math.sqrt(expected * (1 - expected) / sent)
    assert abs(tally.detected[Y][Y] / sent - expected) < 4 * sigma


def test_summary_reports_truth_and_pairing():
    truth = simulate_session(_session())
    summary = summarize_truth(truth)
    assert summary["n_total"] == 20_000
    assert summary["raw_key_length"] == truth.keys.length
    assert summary["aopp"]["n_t_post"] == summary["aopp"]["kept_pairs"]
    assert summary["aopp"]["n1_post"] <= summary["aopp"]["n_t_post"]


@pytest.mark.slow
def test_finite_bounds_hold_against_simulated_truth():
    params = SourceParams(mu_x=0.1, mu_y=0.45, p_v=0.4, p_x=0.3, p_y=0.3)
    failures = 0
    for seed in range(500):
        cfg = SessionConfig(source=params, channel=_metro(50), n_pairs=1_000_000, seed=10_000 + seed)
        truth = simulate_session(cfg)
        outcome = estimate_decoy(truth.tally, params, eps=1e-3, delta_slice=cfg.delta_slice)
        assert not outcome.vacuous
        failures += outcome.n1_pre > truth.true_n1 or outcome.e1ph_pre < truth.true_e1ph
    assert failures <= 1
