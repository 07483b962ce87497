# tfqkd/simulation/__init__.py
from .channel import DetectorParams, click_probabilities, expected_tally
from .phase import estimate_phase, phase_walk, reference_counts
from .session import (
    SessionTruth,
    merge_tallies,
    quantum_window_times,
    recount_tally,
    simulate_session,
    summarize_truth,
)
