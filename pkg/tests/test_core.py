# tests/test_core.py
import pytest
from pydantic import ValidationError

from tfqkd.core import PARAMETER_SETS, distance_channel, transmittance, validate
from tfqkd.schemas import ChannelConfig, SecurityParams, SourceParams


def test_parameter_sets_pass_validation():
    for params in PARAMETER_SETS.values():
        verdict = validate(params, SecurityParams(), ChannelConfig())
        assert verdict.ok, verdict.violations


def test_probabilities_must_sum_to_one():
    params = SourceParams(mu_x=0.08, mu_y=0.445, p_v=0.5, p_x=0.5, p_y=0.5)
    verdict = validate(params, SecurityParams(), ChannelConfig())
    assert not verdict
    assert any("sum to 1.5" in v for v in verdict.violations)


def test_intensity_ordering_is_checked():
    params = SourceParams(mu_x=0.5, mu_y=0.4, p_v=0.5, p_x=0.25, p_y=0.25)
    verdict = validate(params, SecurityParams(), ChannelConfig())
    assert "mu_x < mu_y violated" in verdict.violations


def test_validate_is_idempotent_and_pure():
    params = PARAMETER_SETS["1"]
    before = params.model_dump()
    first = validate(params, SecurityParams(), ChannelConfig())
    second = validate(params, SecurityParams(), ChannelConfig())
    assert first.violations == second.violations
    assert params.model_dump() == before


def test_security_params_reject_out_of_range_epsilon():
    with pytest.raises(ValidationError):
        SecurityParams(eps_cor=2.0)
    with pytest.raises(ValidationError):
        SecurityParams(f=0.9)


def test_transmittance_published_losses():
    assert transmittance(ChannelConfig()) == pytest.approx(2.24e-16, rel=0.02)
    assert transmittance(distance_channel(ChannelConfig(), 202)) == pytest.approx(6.92e-4, rel=0.02)


def test_transmittance_identity_at_zero_length():
    ch = ChannelConfig(length_a_km=0, length_b_km=0, extra_loss_db=(0.0, 0.0))
    assert transmittance(ch) == 1.0
    assert transmittance(ch, include_extra_loss=True) == 1.0


def test_transmittance_splits_multiplicatively():
    ch = ChannelConfig(length_a_km=120, length_b_km=80)
    assert transmittance(ch) == pytest.approx(transmittance(ch, "A") * transmittance(ch, "B"), rel=1e-12)


def test_transmittance_decreases_with_length_and_attenuation():
    short = ChannelConfig(length_a_km=100, length_b_km=100)
    longer = ChannelConfig(length_a_km=100, length_b_km=101)
    lossier = ChannelConfig(length_a_km=100, length_b_km=100, atten_db_per_km=0.2)
    assert transmittance(longer) < transmittance(short)
    assert transmittance(lossier) < transmittance(short)


def test_extra_loss_only_counts_when_requested():
    ch = ChannelConfig()
    assert transmittance(ch, include_extra_loss=True) == pytest.approx(transmittance(ch) * 10 ** (-0.28), rel=1e-9)


def test_distance_channel_splits_evenly():
    ch = distance_channel(ChannelConfig.metro(), 303)
    assert ch.length_a_km == ch.length_b_km == 151.5
    assert ch.clock_hz == 900e6
