# tfqkd/estimation/__init__.py
from .aopp import RawKeyPair, apply_aopp, estimate_after_aopp, pair_bits
from .decoy import (
    counting_rates,
    e1ph_upper_bound,
    estimate_decoy,
    lp_oracle,
    n1_pre_aopp,
    raw_key_stats,
    y1_lower_bound,
)
from .finite_stat import bound_pair, mean_lower, mean_upper
from .keyrate import analyze, binary_entropy, plob, r_tail, secure_key_rate
