"""Capacitor energy store driven by a piecewise-constant harvest trace.

Units: simulation time in microseconds, trace timestamps in seconds, power
in microwatts, energy in microjoules (1 uW for 1 s = 1 uJ).
"""

from __future__ import annotations

import bisect
import csv
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import NonPositiveInput, StarvedForever, TaskExceedsCapacity, TraceError

US = 1e-6


@dataclass(frozen=True)
class HarvestTrace:
    """Zero-order hold trace; power before the first sample is the first
    sample's value and the last value holds forever."""

    times: tuple[float, ...]
    power: tuple[float, ...]

    def __post_init__(self):
        if not self.times or len(self.times) != len(self.power):
            raise TraceError("trace needs matching, non-empty timestamp and power lists")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise TraceError("trace timestamps must be strictly increasing")
        if any(p < 0 or math.isnan(p) for p in self.power):
            raise TraceError("trace power must be non-negative")

    @classmethod
    def constant(cls, power_uw: float) -> "HarvestTrace":
        return cls((0.0,), (float(power_uw),))

    @classmethod
    def from_csv(cls, path) -> "HarvestTrace":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"timestamp_s", "power_uw"} <= set(reader.fieldnames):
                raise TraceError(f"{path}: expected header timestamp_s,power_uw")
            times, power = [], []
            for row in reader:
                times.append(float(row["timestamp_s"]))
                power.append(float(row["power_uw"]))
        return cls(tuple(times), tuple(power))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_s", "power_uw"])
            for t, p in zip(self.times, self.power):
                w.writerow([repr(t), repr(p)])

    def scaled(self, k: float) -> "HarvestTrace":
        return HarvestTrace(self.times, tuple(p * k for p in self.power))

    def mean_power(self) -> float:
        if len(self.times) == 1:
            return self.power[0]
        span = self.times[-1] - self.times[0]
        return sum(p * (b - a) for p, a, b in zip(self.power, self.times, self.times[1:])) / span

    def _segment(self, t_s: float) -> int:
        return max(0, bisect.bisect_right(self.times, t_s) - 1)

    def power_at(self, t_s: float) -> float:
        return self.power[self._segment(t_s)]

    def energy_between(self, t0_us: float, t1_us: float) -> float:
        """Harvested energy over [t0, t1] in microjoules."""
        if t1_us <= t0_us:
            return 0.0
        a, b = t0_us * US, t1_us * US
        i = self._segment(a)
        total = 0.0
        while True:
            seg_end = self.times[i + 1] if i + 1 < len(self.times) else math.inf
            hi = min(b, seg_end)
            total += self.power[i] * (hi - a)
            if hi >= b:
                return total
            a, i = hi, i + 1

    def time_to_harvest(self, t0_us: float, amount: float) -> float:
        """Microseconds from t0 until ``amount`` uJ has been harvested."""
        if amount <= 0:
            return 0.0
        a = t0_us * US
        i = self._segment(a)
        remaining = amount
        while True:
            p = self.power[i]
            seg_end = self.times[i + 1] if i + 1 < len(self.times) else math.inf
            if seg_end == math.inf:
                if p <= 0:
                    raise StarvedForever("harvest power is zero for the rest of the trace")
                return (a + remaining / p) / US - t0_us
            avail = p * (seg_end - a)
            if avail >= remaining and p > 0:
                return (a + remaining / p) / US - t0_us
            remaining -= avail
            a, i = seg_end, i + 1


@dataclass(frozen=True)
class EnergyState:
    stored: float
    capacity: float
    now: float = 0.0  # microseconds
    harvested: float = 0.0  # energy actually banked
    spilled: float = 0.0  # harvest lost to a full capacitor
    consumed: float = 0.0


def capacity_from_capacitor(c_mf: float, v_max: float = 3.3) -> float:
    """Usable energy 1/2 C V^2 in microjoules for C in millifarads."""
    if c_mf <= 0 or v_max <= 0:
        raise NonPositiveInput("capacitance and voltage must be positive")
    return 0.5 * c_mf * 1e-3 * v_max * v_max * 1e6


def harvest(state: EnergyState, trace: HarvestTrace, until: float) -> EnergyState:
    if until < state.now:
        raise ValueError(f"cannot harvest backwards ({until} < {state.now})")
    gained = trace.energy_between(state.now, until)
    room = state.capacity - state.stored
    banked = min(gained, room)
    return replace(
        state,
        stored=state.capacity if gained >= room else state.stored + banked,
        now=until,
        harvested=state.harvested + banked,
        spilled=state.spilled + (gained - banked),
    )


def acquire_for_task(state: EnergyState, trace: HarvestTrace, cost: float) -> tuple[EnergyState, float]:
    """Wait until ``cost`` is stored, then draw it.  Returns (state, wait_us)."""
    if cost > state.capacity:
        raise TaskExceedsCapacity(f"cost {cost} uJ exceeds capacity {state.capacity} uJ")
    if state.stored >= cost:
        return replace(state, stored=state.stored - cost, consumed=state.consumed + cost), 0.0
    deficit = cost - state.stored
    wait = trace.time_to_harvest(state.now, deficit)
    return (
        replace(
            state,
            stored=0.0,
            now=state.now + wait,
            harvested=state.harvested + deficit,
            consumed=state.consumed + cost,
        ),
        wait,
    )


def synthetic_trace(mean_uw: float = 2400.0, seconds: int = 7200, seed: int = 7) -> HarvestTrace:
    """Slowly drifting, noisy 1 s step trace."""
    rng = random.Random(seed)
    times, power = [], []
    for s in range(seconds):
        drift = 1.0 + 0.3 * math.sin(2 * math.pi * s / 900.0)
        power.append(round(mean_uw * drift * rng.uniform(0.8, 1.2), 3))
        times.append(float(s))
    return HarvestTrace(tuple(times), tuple(power))


def solar_trace(peak_uw: float = 4000.0, hours: float = 10.0, step_s: int = 60, seed: int = 11) -> HarvestTrace:
    """Daylight window (08:00 to 18:00) with a sine envelope and cloud dips."""
    rng = random.Random(seed)
    times, power = [], []
    n = int(hours * 3600 / step_s)
    for k in range(n + 1):
        frac = (2.0 + k * step_s / 3600.0) / 14.0  # 06:00..20:00 envelope
        env = math.sin(math.pi * frac)
        cloud = 0.4 if rng.random() < 0.1 else 1.0
        power.append(round(max(50.0, peak_uw * env * cloud), 3))
        times.append(float(k * step_s))
    return HarvestTrace(tuple(times), tuple(power))


TRACE_DIR = Path(__file__).parent / "traces"


def bundled_trace(name: str = "synthetic") -> HarvestTrace:
    return HarvestTrace.from_csv(TRACE_DIR / f"{name}.csv")
