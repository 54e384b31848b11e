"""Emission-to-click transformation: polarization routing, losses, slit
filtering, detector quantum efficiency, timing jitter, dark counts, and
dead time.

Routing follows the polarizing beam splitter: V-polarized records go to
the trigger arm, H to the signal arm.  Each record survives independently
with probability optics x fiber coupling x quantum efficiency x slit
transmission; survivors get gaussian timing jitter, dark counts are
interleaved, and a dead-time filter is applied last.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .emission import DARK, EmissionBatch, H, V
from .errors import ValidationError
from .spectra import SlitFilter, slit_transmission


@dataclass(frozen=True)
class DetectorModel:
    """Silicon APD behaviour at the level the counting electronics sees."""

    quantum_efficiency: float
    jitter_sigma_ns: float = 0.35
    dead_time_ns: float = 50.0
    dark_rate_hz: float = 0.0
    paralyzable: bool = False  # active-quench APDs are non-paralyzable

    def __post_init__(self):
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ValidationError("quantum_efficiency must lie in [0, 1]")
        if self.jitter_sigma_ns < 0:
            raise ValidationError("jitter_sigma_ns must be >= 0")
        if self.dead_time_ns < 0:
            raise ValidationError("dead_time_ns must be >= 0")
        if self.dark_rate_hz < 0:
            raise ValidationError("dark_rate_hz must be >= 0")


@dataclass(frozen=True)
class ArmConfig:
    """One detection arm: passive losses, optional slit, detector."""

    optics_transmission: float
    fiber_coupling: float
    detector: DetectorModel
    slit: Optional[SlitFilter] = None

    def __post_init__(self):
        for name in ("optics_transmission", "fiber_coupling"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")

    @property
    def flat_transmittance(self) -> float:
        """Wavelength-independent part of the survival probability."""
        return self.optics_transmission * self.fiber_coupling * self.detector.quantum_efficiency


def arm_transmittance(arm: ArmConfig, wavelength_nm):
    """Survival probability of a photon at wavelength_nm through the arm.

    This is exactly the per-record probability used by detect(), so it
    serves as the analytic oracle for the Monte-Carlo thinning.
    """
    base = arm.flat_transmittance
    if arm.slit is None:
        if np.ndim(wavelength_nm) == 0:
            return base
        return np.full(np.shape(wavelength_nm), base)
    return base * slit_transmission(arm.slit, wavelength_nm)


@dataclass
class ChannelEvents:
    """Time-ordered detector clicks on one channel.

    source holds the originating emission class (or DARK); pulse_time_ns
    is the originating pump pulse time, NaN for dark counts.
    """

    time_ns: np.ndarray
    source: np.ndarray
    pulse_time_ns: np.ndarray

    def __len__(self) -> int:
        return len(self.time_ns)

    @classmethod
    def empty(cls) -> "ChannelEvents":
        return cls(time_ns=np.empty(0, dtype=np.float64),
                   source=np.empty(0, dtype=np.uint8),
                   pulse_time_ns=np.empty(0, dtype=np.float64))

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.time_ns) >= 0))


@dataclass
class DetectionResult:
    trigger: ChannelEvents
    signal: ChannelEvents


def dead_time_filter(times_ns: np.ndarray, dead_time_ns: float,
                     paralyzable: bool = False) -> np.ndarray:
    """Boolean acceptance mask for a time-ordered click stream.

    Non-paralyzable: an accepted click blinds the detector for dead_time;
    any event with a gap >= dead_time from its predecessor is always
    accepted (the last accepted click can only be older), so only dense
    spans need a sequential walk.
    Paralyzable: every event arriving within dead_time of the previous
    event (accepted or not) is lost.
    """
    n = len(times_ns)
    if n == 0 or dead_time_ns <= 0:
        return np.ones(n, dtype=bool)
    ok = np.empty(n, dtype=bool)
    ok[0] = True
    ok[1:] = np.diff(times_ns) >= dead_time_ns
    if paralyzable or ok.all():
        return ok
    accepted = ok.copy()
    dense = np.flatnonzero(~ok)
    # walk each contiguous dense span from its accepted anchor
    span_start = np.flatnonzero(np.diff(dense) > 1)
    starts = np.concatenate(([0], span_start + 1))
    ends = np.concatenate((span_start, [len(dense) - 1]))
    for a, b in zip(starts, ends):
        last = times_ns[dense[a] - 1]
        for j in dense[a:b + 1]:
            if times_ns[j] - last >= dead_time_ns:
                accepted[j] = True
                last = times_ns[j]
            else:
                accepted[j] = False
    return accepted


def _detect_arm(records: EmissionBatch, mask: np.ndarray, arm: ArmConfig,
                rng: np.random.Generator, dark_rng: np.random.Generator,
                duration_ns: float) -> ChannelEvents:
    lam = records.wavelength_nm[mask]
    t = records.time_ns[mask]
    src = records.origin[mask]
    anchor = records.pulse_time_ns[mask]

    p = arm_transmittance(arm, lam)
    survived = rng.random(len(lam)) < p
    t = t[survived]
    src = src[survived]
    anchor = anchor[survived]
    if arm.detector.jitter_sigma_ns > 0 and len(t) > 0:
        t = t + rng.normal(0.0, arm.detector.jitter_sigma_ns, size=len(t))

    if arm.detector.dark_rate_hz > 0:
        n_dark = dark_rng.poisson(arm.detector.dark_rate_hz * duration_ns * 1e-9)
        t_dark = np.sort(dark_rng.uniform(0.0, duration_ns, size=n_dark))
        t = np.concatenate([t, t_dark])
        src = np.concatenate([src, np.full(n_dark, DARK, dtype=np.uint8)])
        anchor = np.concatenate([anchor, np.full(n_dark, np.nan)])

    inside = (t >= 0.0) & (t < duration_ns)
    t, src, anchor = t[inside], src[inside], anchor[inside]

    order = np.argsort(t, kind="stable")
    t, src, anchor = t[order], src[order], anchor[order]

    keep = dead_time_filter(t, arm.detector.dead_time_ns, arm.detector.paralyzable)
    return ChannelEvents(time_ns=t[keep], source=src[keep], pulse_time_ns=anchor[keep])


def detect(records: EmissionBatch, trigger_arm: ArmConfig, signal_arm: ArmConfig,
           seed: int, duration_ns: float) -> DetectionResult:
    """Transform a time-ordered emission stream into per-channel clicks.

    Events falling outside [0, duration_ns) are dropped: the counters only
    run during the integration window.
    """
    if len(records) > 1 and np.any(np.diff(records.time_ns) < 0):
        raise ValidationError("emission stream must be time-ordered")
    trig = _detect_arm(records, records.polarization == V, trigger_arm,
                       rngmod.substream(seed, rngmod.DETECTION_TRIGGER),
                       rngmod.substream(seed, rngmod.DARK_TRIGGER), duration_ns)
    sig = _detect_arm(records, records.polarization == H, signal_arm,
                      rngmod.substream(seed, rngmod.DETECTION_SIGNAL),
                      rngmod.substream(seed, rngmod.DARK_SIGNAL), duration_ns)
    return DetectionResult(trigger=trig, signal=sig)
