"""Discrete-event simulation of the capture system's clock domain.

Two pieces: a two-step PTP master/slave exchange with a PI servo that
disciplines each slave's phase and frequency, and word-clock models for
multi-device audio sampling.  Everything is double-precision seconds and
fully deterministic for a given set of seeds.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

DEFAULT_KP = 0.7
DEFAULT_KI = 0.3


@dataclass
class SimClock:
    """Oscillator with phase offset, frequency error and timestamp jitter.

    ``reading(t) = t * (1 + (drift_ppm + adjust_ppm) * 1e-6) + offset``;
    ``adjust_ppm`` is the frequency correction applied by a servo.
    """

    id: str
    offset: float = 0.0
    drift_ppm: float = 0.0
    jitter_std: float = 0.0
    rng_seed: int = 0
    adjust_ppm: float = 0.0
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.jitter_std < 0 or not math.isfinite(self.jitter_std):
            raise ConfigError(f"clock {self.id}: jitter_std must be finite and >= 0")
        for name in ("offset", "drift_ppm", "adjust_ppm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"clock {self.id}: {name} must be finite")
        self._rng = np.random.default_rng(self.rng_seed)

    @property
    def rate(self) -> float:
        return 1.0 + (self.drift_ppm + self.adjust_ppm) * 1e-6

    def ideal(self, t_true: float) -> float:
        """Noise-free reading at true time ``t_true``."""
        return t_true * self.rate + self.offset

    def read(self, t_true: float) -> float:
        """Timestamp taken at ``t_true``, including Gaussian jitter."""
        value = self.ideal(t_true)
        if self.jitter_std > 0:
            value += self._rng.normal(0.0, self.jitter_std)
        return value

    def discipline(self, at: float, phase_step: float, adjust_ppm: float):
        """Step the phase by ``-phase_step`` and set the frequency correction.

        Both changes pivot on true time ``at``: the reading there drops by
        exactly ``phase_step`` and later readings advance at the new rate.
        """
        pivot = self.ideal(at) - phase_step
        self.adjust_ppm = adjust_ppm
        self.offset = pivot - at * self.rate


@dataclass(frozen=True)
class PtpExchange:
    t1: float
    t2: float
    t3: float
    t4: float
    path_delay_forward: float = 0.0
    path_delay_reverse: float = 0.0


def estimate_offset(x: PtpExchange) -> tuple[float, float]:
    """Two-way offset and mean path delay: slave minus master, seconds."""
    ms = x.t2 - x.t1
    sm = x.t4 - x.t3
    return (ms - sm) / 2, (ms + sm) / 2


@dataclass
class ServoState:
    """PI servo: full phase step each round, PI control of frequency.

    The first measurement only steps the phase, since it mixes initial
    offset with frequency error.  After that each measurement is the phase
    accumulated over one sync interval, and the frequency correction is
    ``-(kp * e + ki * sum(e)) / interval``.
    """

    proportional_gain: float = DEFAULT_KP
    integral_gain: float = DEFAULT_KI
    accumulated_integral: float = 0.0
    last_offset_estimate: float = 0.0
    updates: int = 0

    def __post_init__(self):
        for name in ("proportional_gain", "integral_gain"):
            g = getattr(self, name)
            if not isinstance(g, (int, float)) or not math.isfinite(g):
                raise ConfigError(f"servo {name} must be finite, got {g!r}")
            if g <= 0:
                raise ConfigError(f"servo {name} must be positive, got {g}")

    def fresh(self) -> ServoState:
        return ServoState(self.proportional_gain, self.integral_gain)

    def update(self, offset: float, interval: float) -> float | None:
        """Feed one offset estimate; returns the new frequency correction
        (dimensionless) or ``None`` when only the phase should move."""
        self.last_offset_estimate = offset
        self.updates += 1
        if self.updates == 1:
            return None
        self.accumulated_integral += offset
        return -(self.proportional_gain * offset + self.integral_gain * self.accumulated_integral) / interval


@dataclass(frozen=True)
class LinkDelay:
    forward: float = 5e-6
    reverse: float = 5e-6
    turnaround: float = 1e-6

    def __post_init__(self):
        if self.forward <= 0 or self.reverse <= 0 or self.turnaround < 0:
            raise ConfigError("path delays must be positive")


@dataclass
class PtpTrace:
    """True slave-minus-master offsets, one row per round.

    ``residuals[n, i]`` is slave ``i``'s offset one sync interval after the
    measurement epoch of round ``n``, i.e. just before round ``n + 1``
    measures it.
    """

    slave_ids: list[str]
    residuals: np.ndarray
    estimates: np.ndarray
    times: np.ndarray
    round_interval: float
    master: SimClock
    slaves: list[SimClock]

    @property
    def n_rounds(self) -> int:
        return self.residuals.shape[0]

    def converged_round(self, bound: float) -> int | None:
        """First round (1-based) after which every residual stays within ``bound``."""
        ok = np.all(np.abs(self.residuals) <= bound, axis=1)
        bad = np.flatnonzero(~ok)
        if bad.size == 0:
            return 1
        first = int(bad[-1]) + 1
        return first + 1 if first < len(ok) else None

    def rows(self):
        for n in range(self.n_rounds):
            for i, sid in enumerate(self.slave_ids):
                yield n + 1, sid, self.residuals[n, i]

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["round", "slave_id", "residual_seconds"])
            for n, sid, r in self.rows():
                w.writerow([n, sid, repr(float(r))])


def run_ptp_session(
    master: SimClock,
    slaves: list[SimClock],
    servo: ServoState | None = None,
    n_rounds: int = 100,
    round_interval: float = 1.0,
    delays: LinkDelay | dict[str, LinkDelay] | None = None,
) -> PtpTrace:
    """Discipline every slave to the master over ``n_rounds`` sync intervals.

    Each round runs one Sync/Delay_Req exchange per slave, estimates the
    offset, steps the slave's phase and updates its frequency through a
    per-slave PI servo.  Clocks are mutated in place.
    """
    if n_rounds < 1:
        raise ConfigError("n_rounds must be >= 1")
    if not (round_interval > 0 and math.isfinite(round_interval)):
        raise ConfigError("round_interval must be positive")
    servo = servo or ServoState()
    servos = [servo.fresh() for _ in slaves]
    delays = delays or LinkDelay()

    residuals = np.zeros((n_rounds, len(slaves)))
    estimates = np.zeros((n_rounds, len(slaves)))
    times = np.arange(n_rounds) * round_interval
    for n, t in enumerate(times):
        t = float(t)
        for i, slave in enumerate(slaves):
            link = delays.get(slave.id, LinkDelay()) if isinstance(delays, dict) else delays
            arrive = t + link.forward
            reply = arrive + link.turnaround
            x = PtpExchange(
                t1=master.read(t),
                t2=slave.read(arrive),
                t3=slave.read(reply),
                t4=master.read(reply + link.reverse),
                path_delay_forward=link.forward,
                path_delay_reverse=link.reverse,
            )
            offset, _ = estimate_offset(x)
            estimates[n, i] = offset
            # the estimate describes the instant midway between t2 and t3
            epoch = arrive + link.turnaround / 2
            correction = servos[i].update(offset, round_interval)
            adjust = slave.adjust_ppm if correction is None else correction * 1e6
            slave.discipline(epoch, offset, adjust)
            after = epoch + round_interval
            residuals[n, i] = slave.ideal(after) - master.ideal(after)
    return PtpTrace([s.id for s in slaves], residuals, estimates, times, round_interval, master, slaves)


def timestamp_spread(clocks: list[SimClock], t_true: float) -> float:
    """Largest pairwise difference between the clocks' timestamps of ``t_true``."""
    if len(clocks) < 2:
        raise ConfigError("timestamp_spread needs at least two clocks")
    readings = [c.read(t_true) for c in clocks]
    return max(abs(a - b) for a, b in itertools.combinations(readings, 2))


@dataclass
class PtpScenario:
    master: SimClock
    slaves: list[SimClock]
    servo: ServoState
    n_rounds: int
    round_interval: float
    delays: LinkDelay
    spread_samples: int = 100
    settle_rounds: int | None = None

    def run(self) -> PtpTrace:
        return run_ptp_session(self.master, self.slaves, self.servo, self.n_rounds,
                               self.round_interval, self.delays)

    def spread_after(self, trace: PtpTrace) -> float:
        """Max timestamp spread over ``spread_samples`` instants in the last interval."""
        t_end = float(trace.times[-1]) + self.round_interval
        span = np.linspace(t_end - self.round_interval / 2, t_end, self.spread_samples)
        clocks = [self.master, *self.slaves]
        return max(timestamp_spread(clocks, float(t)) for t in span)


def _clock_from(d: dict, default_id: str) -> SimClock:
    if not isinstance(d, dict):
        raise ConfigError(f"clock entry must be an object, got {type(d).__name__}")
    known = {"id", "offset", "drift_ppm", "jitter_std", "rng_seed"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown clock keys: {sorted(extra)}")
    try:
        return SimClock(
            id=str(d.get("id", default_id)),
            offset=float(d.get("offset", 0.0)),
            drift_ppm=float(d.get("drift_ppm", 0.0)),
            jitter_std=float(d.get("jitter_std", 0.0)),
            rng_seed=int(d.get("rng_seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad clock entry {d!r}: {exc}") from None


def scenario_from_dict(cfg: dict) -> PtpScenario:
    """Build a scenario from its JSON form (see README for the schema).

    Slaves are listed explicitly under ``slaves`` or generated from a
    ``generate`` block with seeded random offsets and drifts.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("scenario must be a JSON object")
    known = {"master", "slaves", "generate", "servo", "rounds", "round_interval", "delay", "spread_samples"}
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
    master = _clock_from(cfg.get("master", {}), "master")

    if "slaves" in cfg and "generate" in cfg:
        raise ConfigError("give either 'slaves' or 'generate', not both")
    if "slaves" in cfg:
        if not isinstance(cfg["slaves"], list) or not cfg["slaves"]:
            raise ConfigError("'slaves' must be a non-empty list")
        slaves = [_clock_from(s, f"slave{i + 1}") for i, s in enumerate(cfg["slaves"])]
    elif "generate" in cfg:
        slaves = generate_slaves(**_kwargs(cfg["generate"], generate_slaves))
    else:
        raise ConfigError("scenario needs 'slaves' or 'generate'")

    servo_cfg = cfg.get("servo", {})
    if not isinstance(servo_cfg, dict):
        raise ConfigError("'servo' must be an object")
    servo = ServoState(
        proportional_gain=_num(servo_cfg.get("kp", DEFAULT_KP), "servo.kp"),
        integral_gain=_num(servo_cfg.get("ki", DEFAULT_KI), "servo.ki"),
    )
    delay_cfg = cfg.get("delay", {})
    if not isinstance(delay_cfg, dict):
        raise ConfigError("'delay' must be an object")
    delays = LinkDelay(
        forward=_num(delay_cfg.get("forward", 5e-6), "delay.forward"),
        reverse=_num(delay_cfg.get("reverse", 5e-6), "delay.reverse"),
        turnaround=_num(delay_cfg.get("turnaround", 1e-6), "delay.turnaround"),
    )
    rounds = cfg.get("rounds", 100)
    if isinstance(rounds, bool) or not isinstance(rounds, int) or rounds < 1:
        raise ConfigError(f"'rounds' must be a positive integer, got {rounds!r}")
    interval = _num(cfg.get("round_interval", 1.0), "round_interval")
    if interval <= 0:
        raise ConfigError("'round_interval' must be positive")
    samples = cfg.get("spread_samples", 100)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise ConfigError("'spread_samples' must be a positive integer")
    return PtpScenario(master, slaves, servo, rounds, interval, delays, samples)


def _num(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def _kwargs(d, fn) -> dict:
    if not isinstance(d, dict):
        raise ConfigError("'generate' must be an object")
    allowed = set(fn.__code__.co_varnames[: fn.__code__.co_argcount])
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown generate keys: {sorted(extra)}")
    return d


def generate_slaves(
    n_slaves: int = 11,
    offset_range: float = 1e-3,
    drift_range_ppm: float = 10.0,
    jitter_std: float = 0.0,
    seed: int = 0,
) -> list[SimClock]:
    """Seeded slave population: uniform offsets and drifts, shared jitter level."""
    if isinstance(n_slaves, bool) or not isinstance(n_slaves, int) or n_slaves < 1:
        raise ConfigError("n_slaves must be a positive integer")
    rng = np.random.default_rng(seed)
    return [
        SimClock(
            id=f"cam{i + 2:02d}",
            offset=float(rng.uniform(-offset_range, offset_range)),
            drift_ppm=float(rng.uniform(-drift_range_ppm, drift_range_ppm)),
            jitter_std=float(jitter_std),
            rng_seed=int(rng.integers(2**31)),
        )
        for i in range(n_slaves)
    ]


def load_scenario(path) -> PtpScenario:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(cfg)


# -- word clock ---------------------------------------------------------------

@dataclass(frozen=True)
class WordClockConfig:
    """Sampling-clock arrangement for a set of audio devices.

    ``internal``: each device runs from its own oscillator (``device_ppm``).
    ``external``: all devices lock to one reference at ``reference_ppm``.
    """

    mode: str
    nominal_rate: int
    device_ppm: tuple = ()
    reference_ppm: float = 0.0

    def __post_init__(self):
        if self.mode not in ("internal", "external"):
            raise ConfigError(f"word clock mode must be 'internal' or 'external', got {self.mode!r}")
        if self.nominal_rate <= 0:
            raise ConfigError("nominal_rate must be positive")
        if not self.device_ppm:
            raise ConfigError("need at least one device")
        object.__setattr__(self, "device_ppm", tuple(float(p) for p in self.device_ppm))

    def effective_ppm(self) -> list[float]:
        if self.mode == "external":
            return [self.reference_ppm] * len(self.device_ppm)
        return list(self.device_ppm)


@dataclass
class SamplingResult:
    first_instants: np.ndarray  # (devices, k) seconds
    end_instants: np.ndarray  # (devices,) instant of the sample due at ``duration``
    duration: float

    @property
    def max_pairwise_drift(self) -> float:
        return float(self.end_instants.max() - self.end_instants.min())


def simulate_sampling(config: WordClockConfig, duration: float, first_k: int = 8) -> SamplingResult:
    """Actual sampling instants per device.

    Device ``i``'s ``n``-th sample lands at ``n / (rate * (1 + ppm_i * 1e-6))``.
    Drift is read at the sample index nominally due at ``duration``.
    """
    if not duration > 0:
        raise ConfigError("duration must be positive")
    ppm = np.array(config.effective_ppm())
    actual = config.nominal_rate * (1.0 + ppm * 1e-6)
    n = np.arange(first_k)
    first = n[None, :] / actual[:, None]
    end = (duration * config.nominal_rate) / actual
    return SamplingResult(first, end, duration)
