# tfqkd/optimization/optimizer.py
# Source-parameter search on the expected key rate, and rate-vs-distance scans.

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.optimize import minimize
from scipy.special import expit, logit

from ..core import distance_channel, eta_to_db, transmittance, validate
from ..estimation.keyrate import analyze, plob
from ..exceptions import InfeasibleBoundsError, TfqkdError
from ..schemas import ChannelConfig, OptimizerConfig, Optimum, SecurityParams, SourceParams, TracePoint
from ..simulation.channel import expected_tally

logger = logging.getLogger(__name__)

SCAN_COLUMNS = [
    "distance_km", "eta_db", "mu_x", "mu_y", "p_v", "p_x", "p_y",
    "r_per_pulse", "r_bps", "plob", "above_plob",
]


def expected_rate(
    params: SourceParams,
    ch: ChannelConfig,
    n_total: int,
    sec: SecurityParams = SecurityParams(),
    delta_slice: float = math.pi / 8,
    mode: str = "finite",
) -> float:
    """Key rate per pulse on the phase-averaged expected tally; 0 when vacuous."""
    if not validate(params, sec, ch):
        return 0.0
    tally = expected_tally(params, ch, n_total, delta_slice)
    try:
        report = analyze(tally, params, sec, ch, mode=mode, delta_slice=delta_slice)
    except TfqkdError as exc:
        logger.debug("expected rate undefined at %s: %s", params, exc)
        return 0.0
    return report.r_per_pulse


# --- Reparameterization ---
# z = (logit of mu_y within its bounds, logit of mu_x/mu_y, log p_x/p_v, log p_y/p_v)

def _to_params(z: np.ndarray, cfg: OptimizerConfig) -> SourceParams:
    lo, hi = cfg.mu_y_bounds
    mu_y = lo + (hi - lo) * float(expit(z[0]))
    mu_x = mu_y * float(expit(z[1]))
    logits = np.clip(np.array([0.0, z[2], z[3]]), -15.0, 15.0)
    weights = np.exp(logits - logits.max())
    p_v, p_x, p_y = weights / weights.sum()
    return SourceParams(mu_x=mu_x, mu_y=mu_y, p_v=float(p_v), p_x=float(p_x), p_y=float(1.0 - p_v - p_x))


def _to_z(params: SourceParams, cfg: OptimizerConfig) -> np.ndarray:
    lo, hi = cfg.mu_y_bounds
    frac = np.clip((params.mu_y - lo) / (hi - lo), 1e-6, 1.0 - 1e-6)
    ratio = np.clip(params.mu_x / params.mu_y, 1e-6, 1.0 - 1e-6)
    return np.array([logit(frac), logit(ratio), math.log(params.p_x / params.p_v), math.log(params.p_y / params.p_v)])


def _bound_excess(params: SourceParams, cfg: OptimizerConfig) -> float:
    excess = 0.0
    for name, (lo, hi) in cfg.bounds().items():
        value = getattr(params, name)
        excess += max(0.0, lo - value) + max(0.0, value - hi)
    return excess


def check_bounds(cfg: OptimizerConfig) -> None:
    bounds = cfg.bounds()
    for name, (lo, hi) in bounds.items():
        if lo > hi:
            raise InfeasibleBoundsError(f"{name} lower bound exceeds upper bound")
    if bounds["mu_x"][0] >= bounds["mu_y"][1]:
        raise InfeasibleBoundsError("no mu_x < mu_y is possible within the bounds")
    probs = [bounds[k] for k in ("p_v", "p_x", "p_y")]
    if sum(lo for lo, _ in probs) > 1.0 or sum(hi for _, hi in probs) < 1.0:
        raise InfeasibleBoundsError("probability bounds cannot sum to 1")


def _random_start(rng: np.random.Generator, cfg: OptimizerConfig) -> np.ndarray:
    b = cfg.bounds()
    mu_y = rng.uniform(*b["mu_y"])
    mu_x = rng.uniform(b["mu_x"][0], min(b["mu_x"][1], 0.9 * mu_y))
    probs = np.array([rng.uniform(*b[k]) for k in ("p_v", "p_x", "p_y")])
    probs = probs / probs.sum()
    start = SourceParams(mu_x=mu_x, mu_y=mu_y, p_v=probs[0], p_x=probs[1], p_y=1.0 - probs[0] - probs[1])
    return _to_z(start, cfg)


def _run_restart(
    z0: np.ndarray, cfg: OptimizerConfig, ch: ChannelConfig, n_total: int, sec: SecurityParams, scale: float
) -> List[TracePoint]:
    trace: List[TracePoint] = []

    def objective(z: np.ndarray) -> float:
        params = _to_params(z, cfg)
        excess = _bound_excess(params, cfg)
        if excess > 0:
            return excess
        rate = expected_rate(params, ch, n_total, sec, cfg.delta_slice)
        trace.append(TracePoint(params=params, rate=rate))
        return -rate / scale

    minimize(
        objective,
        z0,
        method="Nelder-Mead",
        options={"maxfev": cfg.max_evals, "fatol": cfg.tolerance, "xatol": 1e-4},
    )
    return trace


def optimize(
    cfg: OptimizerConfig,
    ch: ChannelConfig,
    n_total: int,
    sec: SecurityParams = SecurityParams(),
) -> Optimum:
    """Multi-start Nelder-Mead over (mu_x, mu_y, p_v, p_x, p_y).

    Warm starts are evaluated first; ``cfg.restarts`` further starts are drawn
    from the seed. The objective is normalized by the best starting rate so
    ``cfg.tolerance`` acts as a relative improvement threshold.
    """
    check_bounds(cfg)
    rng = np.random.default_rng(cfg.seed)
    starts = [_to_z(p, cfg) for p in cfg.warm_starts]
    starts += [_random_start(rng, cfg) for _ in range(cfg.restarts)]

    points = [_to_params(z, cfg) for z in starts]
    # a normalized random start can leave the probability box; it still seeds a restart
    initial = [
        expected_rate(p, ch, n_total, sec, cfg.delta_slice) if _bound_excess(p, cfg) == 0 else 0.0
        for p in points
    ]
    scale = max(max(initial), 1e-300)
    trace = [TracePoint(params=p, rate=r) for p, r in zip(points, initial)]
    for params in cfg.warm_starts:
        # the warm start itself, before any clipping by the reparameterization
        trace.append(TracePoint(params=params, rate=expected_rate(params, ch, n_total, sec, cfg.delta_slice)))

    jobs = [(z, cfg, ch, n_total, sec, scale) for z in starts]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            traces = list(pool.map(_run_restart, *zip(*jobs)))
    else:
        traces = [_run_restart(*job) for job in jobs]

    for i, restart_trace in enumerate(traces):
        trace.extend(restart_trace)
        if restart_trace:
            local = max(restart_trace, key=lambda t: t.rate)
            logger.info("restart %d: best rate %.4g after %d evaluations", i, local.rate, len(restart_trace))

    best = max(trace, key=lambda t: t.rate)
    logger.info("optimum rate %.4g at %s", best.rate, best.params)
    return Optimum(best_params=best.params, best_rate=best.rate, eval_count=len(trace), trace=trace)


# --- Scans ---

class ScanRow(BaseModel):
    distance_km: float
    eta_db: float
    mu_x: float
    mu_y: float
    p_v: float
    p_x: float
    p_y: float
    r_per_pulse: float
    r_bps: float
    plob: float
    above_plob: bool


def parse_distances(spec: str) -> List[float]:
    """Expand "a:b:step" (inclusive) or a comma list into distances in km."""
    if ":" in spec:
        start, stop, step = (float(part) for part in spec.split(":"))
        if step <= 0 or stop < start:
            raise ValueError(f"bad distance range {spec!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return [float(part) for part in spec.split(",") if part.strip()]


def scan(
    params: SourceParams,
    template: ChannelConfig,
    distances: Sequence[float],
    n_total: int,
    sec: SecurityParams = SecurityParams(),
    delta_slice: float = math.pi / 8,
    optimizer: Optional[OptimizerConfig] = None,
) -> List[ScanRow]:
    """Expected rate at each total distance, optionally re-optimizing per point."""
    if not distances:
        raise ValueError("empty distance grid")
    rows = []
    for km in distances:
        ch = distance_channel(template, km)
        point = params
        if optimizer is not None:
            warm = optimizer.model_copy(update={"warm_starts": [params]})
            point = optimize(warm, ch, n_total, sec).best_params
        rate = expected_rate(point, ch, n_total, sec, delta_slice)
        eta = transmittance(ch)
        bound = plob(eta)
        rows.append(ScanRow(
            distance_km=km,
            eta_db=eta_to_db(eta),
            mu_x=point.mu_x,
            mu_y=point.mu_y,
            p_v=point.p_v,
            p_x=point.p_x,
            p_y=point.p_y,
            r_per_pulse=rate,
            r_bps=rate * ch.clock_hz,
            plob=bound,
            above_plob=rate > bound,
        ))
    crossing = plob_crossing(rows)
    if crossing is not None:
        logger.info("key rate exceeds the PLOB bound from %.1f km", crossing)
    return rows


def plob_crossing(rows: Sequence[ScanRow]) -> Optional[float]:
    """Shortest scanned distance at which the rate beats the repeaterless bound."""
    above = [row.distance_km for row in rows if row.above_plob]
    return min(above) if above else None


def grid_scan(
    params: SourceParams,
    ch: ChannelConfig,
    grid: Dict[str, Sequence[float]],
    n_total: int,
    sec: SecurityParams = SecurityParams(),
    delta_slice: float = math.pi / 8,
) -> List[Tuple[SourceParams, float]]:
    """Rate over the product of one or two parameter axes, others held fixed."""
    if not grid or not 1 <= len(grid) <= 2 or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid needs one or two non-empty parameter axes")
    names = list(grid)
    table = []
    for values in itertools.product(*(grid[n] for n in names)):
        update = dict(zip(names, values))
        if "p_y" not in update and ("p_v" in update or "p_x" in update):
            merged = {**params.model_dump(), **update}
            update["p_y"] = 1.0 - merged["p_v"] - merged["p_x"]
        point = params.model_copy(update=update)
        table.append((point, expected_rate(point, ch, n_total, sec, delta_slice)))
    return table


def scan_csv(rows: Sequence[ScanRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SCAN_COLUMNS)
    for row in rows:
        values = row.model_dump()
        writer.writerow([
            str(values[c]).lower() if c == "above_plob" else format(values[c], ".10g")
            for c in SCAN_COLUMNS
        ])
    return buffer.getvalue()
