# tfqkd/schemas.py
# Pydantic models for the domain values and the file formats.
# Field-level ranges are enforced on construction; cross-field invariants are
# reported by tfqkd.core.validate so a caller can see every violation at once.

import math
from typing import Annotated, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

# --- Source indices (0 = vacuum v, 1 = decoy x, 2 = signal y) ---
V, X, Y = 0, 1, 2
SOURCE_LABELS = ("v", "x", "y")

Probability = Annotated[float, Field(ge=0.0, le=1.0)]
NonNegative = Annotated[float, Field(ge=0.0)]
Count = Annotated[int, Field(ge=0)]
CountRow = Tuple[Count, Count, Count]
CountMatrix = Tuple[CountRow, CountRow, CountRow]


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# --- Core model ---

class SourceParams(FrozenModel):
    mu_v: float = Field(0.0, ge=0.0, le=0.0)
    mu_x: float = Field(..., ge=0.0)
    mu_y: float = Field(..., ge=0.0)
    p_v: float = Field(..., gt=0.0, lt=1.0)
    p_x: float = Field(..., gt=0.0, lt=1.0)
    p_y: float = Field(..., gt=0.0, lt=1.0)

    @property
    def intensities(self) -> Tuple[float, float, float]:
        return (self.mu_v, self.mu_x, self.mu_y)

    @property
    def probabilities(self) -> Tuple[float, float, float]:
        return (self.p_v, self.p_x, self.p_y)


class SecurityParams(FrozenModel):
    eps_chernoff: float = Field(1e-10, gt=0.0, lt=1.0)
    eps_cor: float = Field(1e-10, gt=0.0, lt=1.0)
    eps_pa: float = Field(1e-10, gt=0.0, lt=1.0)
    eps_hat: float = Field(1e-10, gt=0.0, lt=1.0)
    f: float = Field(1.16, ge=1.0)


class ChannelConfig(FrozenModel):
    """Fibre arms, Charlie's losses and the detection chain.

    Defaults describe the 1002 km long-haul hardware; see ``metro`` for the
    short-distance detectors and clock.
    """

    length_a_km: float = Field(500.0, ge=0.0)
    length_b_km: float = Field(502.0, ge=0.0)
    atten_db_per_km: float = Field(0.1562, ge=0.0)
    extra_loss_db: Tuple[NonNegative, NonNegative] = (1.4, 1.4)
    det_eff: Tuple[Probability, Probability] = (0.60, 0.55)
    dark_hz: Tuple[NonNegative, NonNegative] = (0.019, 0.035)
    window_eff: Probability = 0.65
    window_s: float = Field(200e-12, gt=0.0)
    clock_hz: float = Field(351e6, gt=0.0)
    misalignment: float = Field(0.025, ge=0.0, le=0.5)

    @classmethod
    def long_haul(cls, **overrides) -> "ChannelConfig":
        return cls(**overrides)

    @classmethod
    def metro(cls, **overrides) -> "ChannelConfig":
        settings = dict(
            length_a_km=101.0,
            length_b_km=101.0,
            det_eff=(0.80, 0.80),
            dark_hz=(10.0, 10.0),
            window_eff=1.0,
            window_s=500e-12,
            clock_hz=900e6,
        )
        settings.update(overrides)
        return cls(**settings)

    @property
    def dark_per_window(self) -> Tuple[float, float]:
        return (self.dark_hz[0] * self.window_s, self.dark_hz[1] * self.window_s)

    @property
    def visibility(self) -> float:
        return 1.0 - 2.0 * self.misalignment


class TallyRecord(FrozenModel):
    sent: CountMatrix
    detected: CountMatrix
    valid_det1: Count
    valid_det2: Count
    ds_total: Count
    ds_correct: Count
    n_total: Count

    @property
    def total_detected(self) -> int:
        return sum(sum(row) for row in self.detected)

    def violations(self) -> List[str]:
        problems = []
        for a in range(3):
            for b in range(3):
                if self.detected[a][b] > self.sent[a][b]:
                    problems.append(
                        f"detected[{SOURCE_LABELS[a]}][{SOURCE_LABELS[b]}] exceeds sent"
                    )
        if sum(sum(row) for row in self.sent) != self.n_total:
            problems.append("sum of sent counts differs from n_total")
        if self.ds_correct > self.ds_total:
            problems.append("ds_correct exceeds ds_total")
        if self.valid_det1 + self.valid_det2 != self.total_detected:
            problems.append("valid detections per detector do not sum to total detections")
        return problems


class BoundPair(FrozenModel):
    lower: float = Field(..., ge=0.0)
    upper: float = Field(..., ge=0.0)
    epsilon: float = Field(..., gt=0.0, lt=1.0)


# --- Estimation outputs ---

class DecoyOutcome(FrozenModel):
    y1_lower: float
    y1_a: float
    y1_b: float
    n1_pre: float
    n1_a: float
    n1_b: float
    e1ph_pre: float
    ex: float
    slice_pairs: float
    vacuous: bool = False
    reasons: List[str] = []


class RawKeyStats(FrozenModel):
    """Bob's bit-value classes of the Z-window raw key and their error counts.

    Bit 0 means Bob sent the signal source; bit 1 means he sent vacuum.
    """

    zeros: Count
    ones: Count
    errors_zero: Count
    errors_one: Count

    @property
    def n_t(self) -> int:
        return self.zeros + self.ones

    @property
    def e_t(self) -> float:
        return (self.errors_zero + self.errors_one) / self.n_t if self.n_t else 0.0


class AoppResult(FrozenModel):
    pairs: Count
    kept_pairs: Count
    n_t_post: Count
    e_t_post: Probability
    n1_post: NonNegative
    e1ph_post: Probability
    mode: Literal["truth", "bound", "mean"] = "truth"


class KeyRateInput(FrozenModel):
    n_total: Count
    n1: NonNegative
    e1ph: Probability
    n_t: NonNegative
    e_t: Probability
    n_vy: Count
    n_yv: Count
    sec: SecurityParams = SecurityParams()
    clock_hz: float = Field(351e6, gt=0.0)
    eta: Optional[float] = Field(None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _ordered_counts(self):
        if not self.n1 <= self.n_t <= self.n_total:
            raise ValueError(f"need n1 <= n_t <= n_total, got {self.n1}, {self.n_t}, {self.n_total}")
        return self


class KeyRateReport(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    r_per_pulse: float
    r_bits_per_second: float = Field(..., alias="r_bps")
    r_tail: float
    total_secure_bits: int
    plob_bound: Optional[float] = None
    plob_margin: Optional[float] = None
    r_unclamped: float = 0.0
    n_total: int = 0
    n1: float = 0.0
    e1ph: float = 0.0
    n_t: float = 0.0
    e_t: float = 0.0
    n1_pre: Optional[float] = None
    e1ph_pre: Optional[float] = None
    e_t_pre: Optional[float] = None
    e_x: Optional[float] = None
    vacuous: bool = False
    reasons: List[str] = []


# --- Simulation ---

class PhaseModel(FrozenModel):
    diffusion: float = Field(10.0, ge=0.0)
    drift_rate: float = 0.0
    lambda1_nm: float = Field(1548.51, gt=0.0)
    lambda2_nm: float = Field(1550.12, gt=0.0)
    refresh_interval_s: float = Field(0.5, gt=0.0)
    estimation_window_s: float = Field(1e-3, gt=0.0)
    reference_rate: float = Field(10.0, ge=0.0)
    dim_reference_rate: float = Field(5.0, ge=0.0)
    reference_visibility: Probability = 0.98
    initial_offset: float = 0.7

    @model_validator(mode="after")
    def _distinct_wavelengths(self):
        if self.lambda1_nm == self.lambda2_nm:
            raise ValueError("lambda1 and lambda2 must differ")
        return self


class ScheduleConfig(FrozenModel):
    """Reference/quantum time multiplexing.

    Each frame opens with ``reference_frame_s`` of dim-reference light; inside
    every period, ``reference_slot_s`` of strong reference plus ``guard_s``
    of dead time precede the quantum windows. The long-haul layout (40 ms of
    100 ms, 400 ns + 15 ns of 1 us at 1 GHz) leaves an effective 351 MHz.
    """

    frame_s: float = Field(0.1, gt=0.0)
    reference_frame_s: float = Field(0.04, ge=0.0)
    period_s: float = Field(1e-6, gt=0.0)
    reference_slot_s: float = Field(400e-9, ge=0.0)
    guard_s: float = Field(15e-9, ge=0.0)
    raw_clock_hz: float = Field(1e9, gt=0.0)

    @model_validator(mode="after")
    def _consistent_duty(self):
        if not 0.0 <= self.reference_frame_s / self.frame_s < 1.0:
            raise ValueError("dim-reference share of a frame must lie in [0, 1)")
        if not 0.0 < (self.reference_slot_s + self.guard_s) / self.period_s < 1.0:
            raise ValueError("reference slot plus guard must fill part of a period")
        return self

    @classmethod
    def long_haul(cls, **overrides) -> "ScheduleConfig":
        return cls(**overrides)

    @classmethod
    def metro(cls, **overrides) -> "ScheduleConfig":
        """Continuous dim reference, 100 ns of every 1 us for the strong one: 900 MHz."""
        values = dict(reference_frame_s=0.0, reference_slot_s=100e-9, guard_s=0.0)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def for_clock(cls, clock_hz: float) -> "ScheduleConfig":
        """Preset whose effective clock matches ``clock_hz``; long-haul otherwise."""
        for preset in (cls.long_haul(), cls.metro()):
            if abs(preset.effective_clock_hz - clock_hz) <= 1e-3 * clock_hz:
                return preset
        return cls.long_haul()

    @property
    def quantum_fraction(self) -> float:
        frame_share = 1.0 - self.reference_frame_s / self.frame_s
        period_share = (self.period_s - self.reference_slot_s - self.guard_s) / self.period_s
        return frame_share * period_share

    @property
    def effective_clock_hz(self) -> float:
        return self.raw_clock_hz * self.quantum_fraction

    @property
    def windows_per_frame(self) -> float:
        return self.effective_clock_hz * self.frame_s


class SessionConfig(FrozenModel):
    source: SourceParams
    channel: ChannelConfig = ChannelConfig()
    n_pairs: int = Field(..., ge=1)
    phase_model: PhaseModel = PhaseModel()
    schedule: Optional[ScheduleConfig] = None
    delta_slice: float = Field(math.pi / 8, gt=0.0, le=math.pi)
    n_phases: int = Field(16, ge=2)
    seed: int = 7
    keep_log: bool = False
    shard_size: int = Field(1_000_000, ge=1)
    workers: int = Field(1, ge=1)

    @property
    def layout(self) -> ScheduleConfig:
        """Explicit schedule, or the preset matching the channel clock."""
        return self.schedule or ScheduleConfig.for_clock(self.channel.clock_hz)


# --- Optimization ---

Interval = Tuple[float, float]


class OptimizerConfig(FrozenModel):
    mu_x_bounds: Interval = (0.01, 0.3)
    mu_y_bounds: Interval = (0.1, 0.8)
    p_v_bounds: Interval = (0.05, 0.95)
    p_x_bounds: Interval = (0.01, 0.6)
    p_y_bounds: Interval = (0.01, 0.6)
    restarts: int = Field(8, ge=1)
    tolerance: float = Field(1e-4, gt=0.0)
    max_evals: int = Field(400, ge=1)
    seed: int = 7
    warm_starts: List[SourceParams] = []
    delta_slice: float = Field(math.pi / 8, gt=0.0, le=math.pi)
    workers: int = Field(1, ge=1)

    def bounds(self) -> Dict[str, Interval]:
        return {
            "mu_x": self.mu_x_bounds,
            "mu_y": self.mu_y_bounds,
            "p_v": self.p_v_bounds,
            "p_x": self.p_x_bounds,
            "p_y": self.p_y_bounds,
        }


class TracePoint(FrozenModel):
    params: SourceParams
    rate: float


class Optimum(FrozenModel):
    best_params: SourceParams
    best_rate: float
    eval_count: int
    trace: List[TracePoint] = []


# --- Files ---

class TallyMetadata(BaseModel):
    distance_km: Optional[float] = None
    attenuation_db: Optional[float] = None
    clock_hz: Optional[float] = None
    parameter_set: Optional[str] = None
    note: Optional[str] = None


class TallyFile(BaseModel):
    metadata: TallyMetadata = TallyMetadata()
    counts: Dict[str, int]


class PublishedAopp(FrozenModel):
    """After-AOPP quantities taken from a published table, for the keyrate subcommand."""

    n1: NonNegative
    e1ph: Probability
    n_t: NonNegative
    e_t: Probability
    n_total: Optional[int] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Optional[SourceParams] = None
    security: SecurityParams = SecurityParams()
    channel: ChannelConfig = ChannelConfig()
    phase_model: PhaseModel = PhaseModel()
    schedule: Optional[ScheduleConfig] = None
    n_pairs: int = Field(1_000_000, ge=1)
    n_total: int = Field(10**15, ge=1)
    mode: Literal["mean", "finite"] = "finite"
    aopp_mode: Literal["bound", "truth"] = "bound"
    delta_slice: Optional[float] = Field(None, gt=0.0, le=math.pi)
    seed: Optional[int] = None
    optimizer: OptimizerConfig = OptimizerConfig()
    published: Optional[PublishedAopp] = None
