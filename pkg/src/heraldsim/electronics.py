"""Counting electronics: pump-derived time gate, coincidence AND logic,
and the three counters (gated trigger singles, signal singles,
coincidences).

Gate model.  The gate opens for gate_width around every pump pulse (the
window position is gate_delay relative to the pulse).  Trigger events that
carry a pulse anchor (simulator output) are gated against the window of
their own originating pulse, so background arriving whole periods late is
rejected even though a later gate window is open at its arrival time.
Events without an anchor -- dark counts and external time-tag data -- are
gated by pulse-train phase via gate_pass(), which accepts anything whose
time modulo the period falls inside the window.  Phase gating alone cannot
suppress a temporally uniform background below the gate duty cycle
(width/period); the anchored model is what reproduces the measured gated
vs ungated efficiency contrast.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .detection import ChannelEvents
from .errors import ValidationError


@dataclass(frozen=True)
class GateConfig:
    """Time gate and coincidence window of the counting electronics."""

    gate_width_ns: float = 3.0
    gate_delay_ns: Optional[float] = None  # None centers the window on the pulse
    coincidence_window_ns: float = 3.0
    gating_enabled: bool = True

    def __post_init__(self):
        if self.gate_width_ns <= 0:
            raise ValidationError("gate_width_ns must be > 0")
        if self.coincidence_window_ns <= 0:
            raise ValidationError("coincidence_window_ns must be > 0")
        if self.gate_delay_ns is None:
            object.__setattr__(self, "gate_delay_ns", -self.gate_width_ns / 2.0)

    def enabled(self, on: bool) -> "GateConfig":
        return replace(self, gating_enabled=on)


def gate_pass(event_time_ns, rep_rate_hz: float, gate: GateConfig):
    """Phase test: does the event fall inside the periodic gate window?

    True iff event time modulo the pulse period lies in
    [gate_delay, gate_delay + gate_width); the window wraps across the
    period boundary.
    """
    if rep_rate_hz <= 0:
        raise ValidationError("rep_rate_hz must be > 0")
    period = 1e9 / rep_rate_hz
    t = np.asarray(event_time_ns, dtype=float)
    phase = np.mod(t - gate.gate_delay_ns, period)
    out = phase < gate.gate_width_ns
    if np.ndim(event_time_ns) == 0:
        return bool(out)
    return out


def gated_trigger_mask(events: ChannelEvents, gate: GateConfig,
                       rep_rate_hz: float) -> np.ndarray:
    """Acceptance mask of the gate AND over a trigger click stream.

    Anchored events are tested against their own pulse's window; anchorless
    events fall back to the phase test.
    """
    if not gate.gating_enabled:
        return np.ones(len(events), dtype=bool)
    anchored = np.isfinite(events.pulse_time_ns)
    mask = np.zeros(len(events), dtype=bool)
    if anchored.any():
        offset = events.time_ns[anchored] - events.pulse_time_ns[anchored]
        lo = gate.gate_delay_ns
        mask[anchored] = (offset >= lo) & (offset < lo + gate.gate_width_ns)
    if (~anchored).any():
        mask[~anchored] = gate_pass(events.time_ns[~anchored], rep_rate_hz, gate)
    return mask


@dataclass(frozen=True)
class CountsSummary:
    """Counter readings for one integration window plus the analytic
    accidental-coincidence expectation."""

    integration_time_s: float
    s_trigger: int
    s_signal: int
    coincidences: int
    accidentals_analytic: float

    def __post_init__(self):
        if min(self.s_trigger, self.s_signal, self.coincidences) < 0:
            raise ValidationError("counts must be >= 0")
        if self.coincidences > min(self.s_trigger, self.s_signal):
            raise ValidationError("coincidences cannot exceed either singles counter")
        if self.integration_time_s < 0:
            raise ValidationError("integration_time_s must be >= 0")


def accidentals_analytic(s_trigger: float, s_signal: float,
                         rep_rate_hz: float, integration_time_s: float) -> float:
    """Expected uncorrelated same-pulse coincidences for a gated pulsed source:
    S_t * S_s / (rep_rate * T)."""
    if s_trigger < 0 or s_signal < 0:
        raise ValidationError("counts must be >= 0")
    n_pulses = rep_rate_hz * integration_time_s
    if n_pulses < 1:
        raise ValidationError("rep_rate * integration_time must be >= 1")
    return s_trigger * s_signal / n_pulses


class CoincidenceMatcher:
    """Greedy one-to-one matcher of trigger clicks to signal clicks.

    Each trigger (in time order) takes the earliest unconsumed signal click
    within +-window.  Streams may be fed in chunks; a trigger is resolved
    only once the signal stream has advanced past trigger time + window, so
    chunked processing is exactly equivalent to one-shot processing.
    """

    def __init__(self, window_ns: float):
        if window_ns <= 0:
            raise ValidationError("coincidence window must be > 0")
        self.window_ns = window_ns
        self.coincidences = 0
        self._pending_trigger = np.empty(0, dtype=np.float64)
        self._pending_signal = np.empty(0, dtype=np.float64)
        self._last_trigger = -np.inf
        self._signal_watermark = -np.inf
        self._finished = False

    @staticmethod
    def _check_sorted(arr: np.ndarray, name: str):
        if len(arr) > 1 and np.any(np.diff(arr) < 0):
            raise ValidationError(f"{name} stream must be time-ordered")

    def feed(self, trigger_times: np.ndarray, signal_times: np.ndarray):
        if self._finished:
            raise ValidationError("matcher already finished")
        trigger_times = np.asarray(trigger_times, dtype=float)
        signal_times = np.asarray(signal_times, dtype=float)
        self._check_sorted(trigger_times, "trigger")
        self._check_sorted(signal_times, "signal")
        if len(trigger_times):
            if trigger_times[0] < self._last_trigger:
                raise ValidationError("trigger chunks must arrive in time order")
            self._last_trigger = trigger_times[-1]
        if len(signal_times):
            if signal_times[0] < self._signal_watermark:
                raise ValidationError("signal chunks must arrive in time order")
            self._signal_watermark = signal_times[-1]
        self._pending_trigger = np.concatenate([self._pending_trigger, trigger_times])
        self._pending_signal = np.concatenate([self._pending_signal, signal_times])
        self._drain(final=False)

    def _drain(self, final: bool):
        trig = self._pending_trigger
        sig = self._pending_signal
        w = self.window_ns
        j = 0
        i = 0
        matched = 0
        for i in range(len(trig)):
            t = trig[i]
            # resolve a trigger only once no future signal can fall in its
            # window (future signals arrive at >= the watermark)
            if not final and t + w >= self._signal_watermark:
                break
            while j < len(sig) and sig[j] < t - w:
                j += 1
            if j < len(sig) and sig[j] <= t + w:
                matched += 1
                j += 1
        else:
            i = len(trig)
        self.coincidences += matched
        self._pending_trigger = trig[i:]
        self._pending_signal = sig[j:]

    def finish(self) -> int:
        if not self._finished:
            self._drain(final=True)
            self._finished = True
        return self.coincidences


def count_run(trigger: ChannelEvents, signal: ChannelEvents, gate: GateConfig,
              rep_rate_hz: float, integration_time_s: float) -> CountsSummary:
    """Run the counter logic over one pair of detection streams.

    s_trigger counts trigger clicks surviving the gate (all clicks when
    gating is disabled); s_signal counts every signal click; coincidences
    pair gated triggers with signal clicks one-to-one within the
    coincidence window.
    """
    if not trigger.is_sorted():
        raise ValidationError("trigger stream must be time-ordered")
    if not signal.is_sorted():
        raise ValidationError("signal stream must be time-ordered")
    gmask = gated_trigger_mask(trigger, gate, rep_rate_hz)
    gated_times = trigger.time_ns[gmask]
    matcher = CoincidenceMatcher(gate.coincidence_window_ns)
    matcher.feed(gated_times, signal.time_ns)
    coincidences = matcher.finish()
    s_t = int(len(gated_times))
    s_s = int(len(signal))
    acc = accidentals_analytic(s_t, s_s, rep_rate_hz, max(integration_time_s, 1.0 / rep_rate_hz))
    return CountsSummary(
        integration_time_s=integration_time_s,
        s_trigger=s_t,
        s_signal=s_s,
        coincidences=coincidences,
        accidentals_analytic=acc,
    )
