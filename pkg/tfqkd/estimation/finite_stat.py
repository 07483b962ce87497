# tfqkd/estimation/finite_stat.py
# Chernoff-type interval estimates linking an observed count and its mean.

import math

from ..schemas import BoundPair


def _beta(eps: float) -> float:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"failure probability must lie in (0, 1), got {eps}")
    return math.log(1.0 / eps)


def mean_lower(observed: float, eps: float) -> float:
    """Lower bound L = X - sqrt(2 beta X) on the mean of an observed count X."""
    beta = _beta(eps)
    if observed <= 0:
        return 0.0
    return max(0.0, observed - math.sqrt(2.0 * beta * observed))


def mean_upper(observed: float, eps: float) -> float:
    """Upper bound U = X + beta/2 + sqrt(2 beta X + beta^2/4)."""
    beta = _beta(eps)
    observed = max(0.0, observed)
    return observed + beta / 2.0 + math.sqrt(2.0 * beta * observed + beta * beta / 4.0)


def bound_pair(observed: float, eps: float) -> BoundPair:
    return BoundPair(lower=mean_lower(observed, eps), upper=mean_upper(observed, eps), epsilon=eps)
