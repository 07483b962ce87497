# tests/test_optimizer.py
import csv
import io

import pytest

from tfqkd.core import PARAMETER_SETS, distance_channel
from tfqkd.exceptions import InfeasibleBoundsError
from tfqkd.optimization.optimizer import (
    SCAN_COLUMNS,
    check_bounds,
    expected_rate,
    grid_scan,
    optimize,
    parse_distances,
    plob_crossing,
    scan,
    scan_csv,
)
from tfqkd.schemas import ChannelConfig, OptimizerConfig, SourceParams

LONG_HAUL_N = 10**15
METRO_N = 3_240_000_000_000


# --- Expected rate ---

def test_long_haul_expected_rate_is_close_to_measured():
    rate = expected_rate(PARAMETER_SETS["1"], ChannelConfig(), LONG_HAUL_N)
    assert 3.11e-12 / 3 < rate < 3.11e-12 * 3


def test_faint_signal_gives_no_key():
    faint = SourceParams(mu_x=1e-5, mu_y=2e-5, p_v=0.52, p_x=0.28, p_y=0.20)
    assert expected_rate(faint, ChannelConfig(), LONG_HAUL_N) == 0.0


def test_published_set_beats_a_poor_choice():
    poor = PARAMETER_SETS["1"].model_copy(update={"mu_x": 0.2, "mu_y": 0.25})
    assert expected_rate(PARAMETER_SETS["1"], ChannelConfig(), LONG_HAUL_N) >= expected_rate(
        poor, ChannelConfig(), LONG_HAUL_N
    )


def test_invalid_parameters_rate_zero():
    unordered = PARAMETER_SETS["1"].model_copy(update={"mu_x": 0.5})
    assert expected_rate(unordered, ChannelConfig(), LONG_HAUL_N) == 0.0


# --- Search ---

def _small_search(**overrides) -> OptimizerConfig:
    settings = dict(restarts=2, max_evals=40, seed=5, warm_starts=[PARAMETER_SETS["1"]])
    settings.update(overrides)
    return OptimizerConfig(**settings)


def test_optimum_dominates_its_starts():
    result = optimize(_small_search(), ChannelConfig(), LONG_HAUL_N)
    warm = expected_rate(PARAMETER_SETS["1"], ChannelConfig(), LONG_HAUL_N)
    assert result.best_rate >= warm
    assert result.best_rate == max(point.rate for point in result.trace)
    assert result.eval_count == len(result.trace)


def test_optimum_is_deterministic_for_a_seed():
    first = optimize(_small_search(), ChannelConfig(), LONG_HAUL_N)
    second = optimize(_small_search(), ChannelConfig(), LONG_HAUL_N)
    assert first.best_params == second.best_params
    assert first.best_rate == second.best_rate


def test_optimum_respects_bounds():
    cfg = _small_search(warm_starts=[])
    best = optimize(cfg, distance_channel(ChannelConfig(), 202), LONG_HAUL_N).best_params
    for name, (lo, hi) in cfg.bounds().items():
        assert lo - 1e-9 <= getattr(best, name) <= hi + 1e-9


@pytest.mark.slow
def test_long_haul_published_set_is_near_optimal():
    result = optimize(OptimizerConfig(warm_starts=[PARAMETER_SETS["1"]]), ChannelConfig(), LONG_HAUL_N)
    assert expected_rate(PARAMETER_SETS["1"], ChannelConfig(), LONG_HAUL_N) >= 0.75 * result.best_rate


@pytest.mark.slow
def test_metro_optimum_mostly_sends_vacuum():
    result = optimize(OptimizerConfig(warm_starts=[PARAMETER_SETS["2"]]), ChannelConfig.metro(), METRO_N)
    assert 0.5 <= result.best_params.p_v <= 0.85


@pytest.mark.parametrize("overrides", [
    dict(p_v_bounds=(0.6, 0.9), p_x_bounds=(0.3, 0.5), p_y_bounds=(0.2, 0.4)),
    dict(mu_x_bounds=(0.5, 0.6), mu_y_bounds=(0.1, 0.4)),
    dict(p_x_bounds=(0.5, 0.1)),
])
def test_infeasible_bounds_are_rejected(overrides):
    with pytest.raises(InfeasibleBoundsError):
        check_bounds(OptimizerConfig(**overrides))


# --- Scans ---

def test_distance_specs():
    assert parse_distances("202:1002:200") == [202.0, 402.0, 602.0, 802.0, 1002.0]
    assert parse_distances("202, 303") == [202.0, 303.0]
    with pytest.raises(ValueError):
        parse_distances("505:202:100")


def test_long_haul_rate_falls_with_distance():
    rows = scan(PARAMETER_SETS["1"], ChannelConfig(), [202, 303, 404, 505, 1002], LONG_HAUL_N)
    rates = [row.r_per_pulse for row in rows]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    assert rates[-1] > 0


def test_metro_rate_crosses_plob_by_404_km():
    rows = scan(PARAMETER_SETS["2"], ChannelConfig.metro(), [202, 303, 404, 505], METRO_N)
    assert not rows[0].above_plob
    crossing = plob_crossing(rows)
    assert crossing is not None and crossing <= 404
    assert rows[-1].above_plob


def test_single_point_scan():
    rows = scan(PARAMETER_SETS["1"], ChannelConfig(), [1002.0], LONG_HAUL_N)
    assert len(rows) == 1
    assert rows[0].eta_db == pytest.approx(156.5, abs=0.1)
    assert rows[0].r_per_pulse > 0


def test_empty_scan_is_rejected():
    with pytest.raises(ValueError):
        scan(PARAMETER_SETS["1"], ChannelConfig(), [], LONG_HAUL_N)


def test_scan_csv_layout():
    rows = scan(PARAMETER_SETS["2"], ChannelConfig.metro(), [202, 404], METRO_N)
    parsed = list(csv.DictReader(io.StringIO(scan_csv(rows))))
    assert list(parsed[0]) == SCAN_COLUMNS
    assert [r["above_plob"] for r in parsed] == ["false", "true"]
    assert float(parsed[1]["r_per_pulse"]) == pytest.approx(rows[1].r_per_pulse, rel=1e-9)


def test_grid_scan_covers_the_product():
    table = grid_scan(PARAMETER_SETS["1"], ChannelConfig(), {"mu_x": [0.06, 0.08], "mu_y": [0.4, 0.45]}, LONG_HAUL_N)
    assert len(table) == 4
    assert {(p.mu_x, p.mu_y) for p, _ in table} == {(0.06, 0.4), (0.06, 0.45), (0.08, 0.4), (0.08, 0.45)}


def test_grid_scan_keeps_probabilities_normalized():
    table = grid_scan(PARAMETER_SETS["1"], ChannelConfig(), {"p_v": [0.5, 0.55]}, LONG_HAUL_N)
    for point, _ in table:
        assert point.p_v + point.p_x + point.p_y == pytest.approx(1.0, abs=1e-12)


def test_grid_scan_rejects_three_axes():
    with pytest.raises(ValueError):
        grid_scan(PARAMETER_SETS["1"], ChannelConfig(), {"mu_x": [0.1], "mu_y": [0.4], "p_v": [0.5]}, LONG_HAUL_N)
