"""Per-pulse stochastic photon emission for the three light classes.

The sampler is event-driven: for each block of pulses the total number of
emissions of a class is drawn once from its Poisson total and the events
are assigned to uniformly random pulses inside the block.  Distributing a
Poisson superposition over B cells yields iid Poisson counts per cell, so
this is distribution-identical to looping over every pulse while costing
O(events) instead of O(pulses).  Blocks carry independently derived random
substreams keyed by (seed, stage, block index), so output is bit-identical
for any degree of parallel execution.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngmod
from .errors import BudgetExceededError, ValidationError
from .spectra import SpectralShape, partner_wavelength, sample_wavelength

# Polarization codes
H = 0
V = 1
POLARIZATION_NAMES = {H: "H", V: "V"}

# Origin codes
PDC2_SIGNAL = 0
PDC2_TRIGGER = 1
PDC1 = 2
FLUORESCENCE = 3
DARK = 4  # used on the detection side only
ORIGIN_NAMES = {
    PDC2_SIGNAL: "pdc2_signal",
    PDC2_TRIGGER: "pdc2_trigger",
    PDC1: "pdc1",
    FLUORESCENCE: "fluorescence",
    DARK: "dark",
}

NO_PAIR = -1

# Default pulses per generation block (~48 ms of an 87 MHz train).
BLOCK_PULSES = 1 << 22

# In-memory ceiling on expected record count; larger runs must stream.
DEFAULT_EVENT_BUDGET = 20_000_000


@dataclass(frozen=True)
class LightSpectra:
    """Marginal spectral shapes of the light classes plus the pump."""

    pdc2_trigger: SpectralShape
    type1: SpectralShape
    fluorescence: SpectralShape
    pump: SpectralShape


@dataclass(frozen=True)
class SourceConfig:
    """All physical source parameters for one run."""

    rep_rate_hz: float
    integration_time_s: float
    coupled_pump_power_mw: float
    mu_pairs: float        # mean type-II pairs / pulse / mW
    mu_type1: float        # mean type-I pairs / pulse / mW
    mu_fluor: float        # mean fluorescence photons / pulse / mW, both polarizations
    fluor_lifetime_ns: float
    fluor_polarization_split: float  # fraction of fluorescence on the trigger (V) side
    spectra: LightSpectra
    type1_polarization: int = V
    pair_number_law: str = "poisson"

    def __post_init__(self):
        if self.rep_rate_hz <= 0:
            raise ValidationError("rep_rate_hz must be > 0")
        if self.integration_time_s < 0:
            raise ValidationError("integration_time_s must be >= 0")
        if self.coupled_pump_power_mw < 0:
            raise ValidationError("coupled_pump_power_mw must be >= 0")
        for name in ("mu_pairs", "mu_type1", "mu_fluor"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.fluor_lifetime_ns <= 0:
            raise ValidationError("fluor_lifetime_ns must be > 0")
        if not 0.0 <= self.fluor_polarization_split <= 1.0:
            raise ValidationError("fluor_polarization_split must lie in [0, 1]")
        if self.type1_polarization not in (H, V):
            raise ValidationError("type1_polarization must be H or V")
        if self.pair_number_law != "poisson":
            raise ValidationError(f"unsupported pair number law {self.pair_number_law!r}")

    @property
    def period_ns(self) -> float:
        return 1e9 / self.rep_rate_hz

    @property
    def pulse_count(self) -> int:
        return int(round(self.rep_rate_hz * self.integration_time_s))

    @property
    def duration_ns(self) -> float:
        return self.pulse_count * self.period_ns

    def mean_events_per_pulse(self) -> float:
        p = self.coupled_pump_power_mw
        return p * (2.0 * self.mu_pairs + 2.0 * self.mu_type1 + self.mu_fluor)

    def expected_event_count(self) -> float:
        return self.mean_events_per_pulse() * self.pulse_count


@dataclass(frozen=True)
class EmissionRecord:
    """One emitted photon (scalar view into a batch)."""

    time_ns: float
    wavelength_nm: float
    polarization: int
    origin: int
    pair_id: int
    pulse_time_ns: float


@dataclass
class EmissionBatch:
    """Column-oriented stream of emission records, time-ordered."""

    time_ns: np.ndarray
    wavelength_nm: np.ndarray
    polarization: np.ndarray
    origin: np.ndarray
    pair_id: np.ndarray
    pulse_time_ns: np.ndarray

    def __len__(self) -> int:
        return len(self.time_ns)

    def record(self, i: int) -> EmissionRecord:
        return EmissionRecord(
            time_ns=float(self.time_ns[i]),
            wavelength_nm=float(self.wavelength_nm[i]),
            polarization=int(self.polarization[i]),
            origin=int(self.origin[i]),
            pair_id=int(self.pair_id[i]),
            pulse_time_ns=float(self.pulse_time_ns[i]),
        )

    @classmethod
    def empty(cls) -> "EmissionBatch":
        return cls(
            time_ns=np.empty(0, dtype=np.float64),
            wavelength_nm=np.empty(0, dtype=np.float64),
            polarization=np.empty(0, dtype=np.uint8),
            origin=np.empty(0, dtype=np.uint8),
            pair_id=np.empty(0, dtype=np.int64),
            pulse_time_ns=np.empty(0, dtype=np.float64),
        )

    @classmethod
    def concatenate(cls, batches) -> "EmissionBatch":
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(
            time_ns=np.concatenate([b.time_ns for b in batches]),
            wavelength_nm=np.concatenate([b.wavelength_nm for b in batches]),
            polarization=np.concatenate([b.polarization for b in batches]),
            origin=np.concatenate([b.origin for b in batches]),
            pair_id=np.concatenate([b.pair_id for b in batches]),
            pulse_time_ns=np.concatenate([b.pulse_time_ns for b in batches]),
        )

    def select(self, index) -> "EmissionBatch":
        return EmissionBatch(
            time_ns=self.time_ns[index],
            wavelength_nm=self.wavelength_nm[index],
            polarization=self.polarization[index],
            origin=self.origin[index],
            pair_id=self.pair_id[index],
            pulse_time_ns=self.pulse_time_ns[index],
        )

    def sorted_by_time(self) -> "EmissionBatch":
        return self.select(np.argsort(self.time_ns, kind="stable"))


def _sample_above_pump(shape: SpectralShape, pump_nm: float,
                       rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw wavelengths from shape, redrawing any at or below the pump.

    The configured marginals sit tens of sigma above the pump, so redraws
    are astronomically rare; the loop keeps the partner map total.
    """
    lam = np.atleast_1d(np.asarray(sample_wavelength(shape, rng, size=size), dtype=float))
    bad = lam <= pump_nm
    while bad.any():
        lam[bad] = sample_wavelength(shape, rng, size=int(bad.sum()))
        bad = lam <= pump_nm
    return lam


def _emit_block(config: SourceConfig, seed: int, block: int,
                first_pulse: int, n_pulses: int) -> EmissionBatch:
    rng = rngmod.substream(seed, rngmod.EMISSION, block)
    power = config.coupled_pump_power_mw
    period = config.period_ns
    pump_nm = config.spectra.pump.center_nm

    times, lams, pols, origins, pairs, anchors = [], [], [], [], [], []
    pair_seq = 0
    pair_base = block << 32

    # type-II pairs: trigger member sampled, signal member fixed by energy
    # conservation; both prompt at the pulse time
    k2 = rng.poisson(n_pulses * config.mu_pairs * power)
    if k2 > 0:
        pulse = first_pulse + rng.integers(0, n_pulses, size=k2)
        t = pulse * period
        lam_t = _sample_above_pump(config.spectra.pdc2_trigger, pump_nm, rng, k2)
        lam_s = partner_wavelength(pump_nm, lam_t)
        ids = pair_base + pair_seq + np.arange(k2, dtype=np.int64)
        pair_seq += k2
        times.append(np.repeat(t, 2))
        lams.append(np.stack([lam_t, lam_s], axis=1).ravel())
        pols.append(np.tile(np.array([V, H], dtype=np.uint8), k2))
        origins.append(np.tile(np.array([PDC2_TRIGGER, PDC2_SIGNAL], dtype=np.uint8), k2))
        pairs.append(np.repeat(ids, 2))
        anchors.append(np.repeat(t, 2))

    # type-I pairs: both members share one polarization, prompt
    k1 = rng.poisson(n_pulses * config.mu_type1 * power)
    if k1 > 0:
        pulse = first_pulse + rng.integers(0, n_pulses, size=k1)
        t = pulse * period
        lam_a = _sample_above_pump(config.spectra.type1, pump_nm, rng, k1)
        lam_b = partner_wavelength(pump_nm, lam_a)
        ids = pair_base + pair_seq + np.arange(k1, dtype=np.int64)
        pair_seq += k1
        times.append(np.repeat(t, 2))
        lams.append(np.stack([lam_a, lam_b], axis=1).ravel())
        pols.append(np.full(2 * k1, config.type1_polarization, dtype=np.uint8))
        origins.append(np.full(2 * k1, PDC1, dtype=np.uint8))
        pairs.append(np.repeat(ids, 2))
        anchors.append(np.repeat(t, 2))

    # fluorescence: exponential tail after the originating pulse
    kf = rng.poisson(n_pulses * config.mu_fluor * power)
    if kf > 0:
        pulse = first_pulse + rng.integers(0, n_pulses, size=kf)
        t0 = pulse * period
        delay = rng.exponential(config.fluor_lifetime_ns, size=kf)
        pol = np.where(rng.random(kf) < config.fluor_polarization_split, V, H).astype(np.uint8)
        lam = np.atleast_1d(sample_wavelength(config.spectra.fluorescence, rng, size=kf))
        times.append(t0 + delay)
        lams.append(lam)
        pols.append(pol)
        origins.append(np.full(kf, FLUORESCENCE, dtype=np.uint8))
        pairs.append(np.full(kf, NO_PAIR, dtype=np.int64))
        anchors.append(t0)

    if not times:
        return EmissionBatch.empty()
    batch = EmissionBatch(
        time_ns=np.concatenate(times),
        wavelength_nm=np.concatenate(lams),
        polarization=np.concatenate(pols),
        origin=np.concatenate(origins),
        pair_id=np.concatenate(pairs),
        pulse_time_ns=np.concatenate(anchors),
    )
    return batch.sorted_by_time()


def _block_layout(pulse_count: int, block_pulses: int):
    n_blocks = max(1, math.ceil(pulse_count / block_pulses))
    for b in range(n_blocks):
        first = b * block_pulses
        n = min(block_pulses, pulse_count - first)
        if n > 0:
            yield b, first, n


def emit_blocks(config: SourceConfig, seed: int, threads: int = 1,
                block_pulses: int = BLOCK_PULSES):
    """Yield per-block EmissionBatches in block order.

    Each block is locally time-ordered but fluorescence tails may extend
    past the block boundary; consumers that need a globally ordered stream
    must merge.
    """
    layout = list(_block_layout(config.pulse_count, block_pulses))
    if threads <= 1 or len(layout) <= 1:
        for b, first, n in layout:
            yield _emit_block(config, seed, b, first, n)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_emit_block, config, seed, b, first, n)
                   for b, first, n in layout]
        for fut in futures:
            yield fut.result()


def merged_blocks(config: SourceConfig, seed: int, threads: int = 1,
                  block_pulses: int = BLOCK_PULSES):
    """Yield globally time-ordered chunks of the emission stream.

    Fluorescence tails crossing a block boundary are carried into the next
    chunk, so concatenating the chunks gives the fully ordered run while
    holding only ~one block in memory.
    """
    period = config.period_ns
    carry = EmissionBatch.empty()
    layout = list(_block_layout(config.pulse_count, block_pulses))
    for (b, first, n), batch in zip(layout, emit_blocks(config, seed, threads, block_pulses)):
        block_end = (first + n) * period
        merged = EmissionBatch.concatenate([carry, batch]).sorted_by_time()
        flush = merged.time_ns < block_end
        if flush.any():
            yield merged.select(flush)
        carry = merged.select(~flush)
    if len(carry):
        yield carry


def emit_run(config: SourceConfig, seed: int, threads: int = 1,
             block_pulses: int = BLOCK_PULSES,
             event_budget: int = DEFAULT_EVENT_BUDGET) -> EmissionBatch:
    """Generate the full time-ordered emission stream for one run."""
    expected = config.expected_event_count()
    if expected > event_budget:
        raise BudgetExceededError(
            f"expected {expected:.3g} emission records exceeds the in-memory "
            f"budget of {event_budget:.3g}; use the streaming dump or shorten the run")
    return EmissionBatch.concatenate(merged_blocks(config, seed, threads, block_pulses))


def emit_run_per_pulse(config: SourceConfig, seed: int) -> EmissionBatch:
    """Brute-force reference sampler that draws a Poisson count for every pulse.

    Used as the statistical cross-check for the thinned sampler; O(pulses),
    so keep runs small.
    """
    n = config.pulse_count
    if n > 10_000_000:
        raise ValidationError("per-pulse reference sampler is limited to 1e7 pulses")
    rng = rngmod.substream(seed, rngmod.EMISSION, 0)
    power = config.coupled_pump_power_mw
    period = config.period_ns
    pump_nm = config.spectra.pump.center_nm

    times, lams, pols, origins, pairs, anchors = [], [], [], [], [], []
    pair_seq = 0

    counts2 = rng.poisson(config.mu_pairs * power, size=n)
    k2 = int(counts2.sum())
    if k2 > 0:
        pulse = np.repeat(np.arange(n, dtype=np.int64), counts2)
        t = pulse * period
        lam_t = _sample_above_pump(config.spectra.pdc2_trigger, pump_nm, rng, k2)
        lam_s = partner_wavelength(pump_nm, lam_t)
        ids = pair_seq + np.arange(k2, dtype=np.int64)
        pair_seq += k2
        times.append(np.repeat(t, 2))
        lams.append(np.stack([lam_t, lam_s], axis=1).ravel())
        pols.append(np.tile(np.array([V, H], dtype=np.uint8), k2))
        origins.append(np.tile(np.array([PDC2_TRIGGER, PDC2_SIGNAL], dtype=np.uint8), k2))
        pairs.append(np.repeat(ids, 2))
        anchors.append(np.repeat(t, 2))

    counts1 = rng.poisson(config.mu_type1 * power, size=n)
    k1 = int(counts1.sum())
    if k1 > 0:
        pulse = np.repeat(np.arange(n, dtype=np.int64), counts1)
        t = pulse * period
        lam_a = _sample_above_pump(config.spectra.type1, pump_nm, rng, k1)
        lam_b = partner_wavelength(pump_nm, lam_a)
        ids = pair_seq + np.arange(k1, dtype=np.int64)
        pair_seq += k1
        times.append(np.repeat(t, 2))
        lams.append(np.stack([lam_a, lam_b], axis=1).ravel())
        pols.append(np.full(2 * k1, config.type1_polarization, dtype=np.uint8))
        origins.append(np.full(2 * k1, PDC1, dtype=np.uint8))
        pairs.append(np.repeat(ids, 2))
        anchors.append(np.repeat(t, 2))

    countsf = rng.poisson(config.mu_fluor * power, size=n)
    kf = int(countsf.sum())
    if kf > 0:
        pulse = np.repeat(np.arange(n, dtype=np.int64), countsf)
        t0 = pulse * period
        delay = rng.exponential(config.fluor_lifetime_ns, size=kf)
        pol = np.where(rng.random(kf) < config.fluor_polarization_split, V, H).astype(np.uint8)
        lam = np.atleast_1d(sample_wavelength(config.spectra.fluorescence, rng, size=kf))
        times.append(t0 + delay)
        lams.append(lam)
        pols.append(pol)
        origins.append(np.full(kf, FLUORESCENCE, dtype=np.uint8))
        pairs.append(np.full(kf, NO_PAIR, dtype=np.int64))
        anchors.append(t0)

    if not times:
        return EmissionBatch.empty()
    batch = EmissionBatch(
        time_ns=np.concatenate(times),
        wavelength_nm=np.concatenate(lams),
        polarization=np.concatenate(pols),
        origin=np.concatenate(origins),
        pair_id=np.concatenate(pairs),
        pulse_time_ns=np.concatenate(anchors),
    )
    return batch.sorted_by_time()


@dataclass(frozen=True)
class EmissionRates:
    """Analytic per-second emission rates by class and polarization."""

    pdc2_pairs_per_s: float
    type1_pairs_per_s: float
    fluor_v_per_s: float
    fluor_h_per_s: float
    v_photons_per_s: float
    h_photons_per_s: float


def expected_rates(config: SourceConfig) -> EmissionRates:
    """Closed-form cross-check for the sampler."""
    r = config.rep_rate_hz * config.coupled_pump_power_mw
    pairs2 = r * config.mu_pairs
    pairs1 = r * config.mu_type1
    fluor_v = r * config.mu_fluor * config.fluor_polarization_split
    fluor_h = r * config.mu_fluor * (1.0 - config.fluor_polarization_split)
    v = pairs2 + fluor_v + (2.0 * pairs1 if config.type1_polarization == V else 0.0)
    h = pairs2 + fluor_h + (2.0 * pairs1 if config.type1_polarization == H else 0.0)
    return EmissionRates(
        pdc2_pairs_per_s=pairs2,
        type1_pairs_per_s=pairs1,
        fluor_v_per_s=fluor_v,
        fluor_h_per_s=fluor_h,
        v_photons_per_s=v,
        h_photons_per_s=h,
    )


def background_off(config: SourceConfig) -> SourceConfig:
    """Copy of the config with both background classes disabled."""
    return replace(config, mu_type1=0.0, mu_fluor=0.0)
