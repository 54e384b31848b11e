import math

import numpy as np
import pytest

from heraldsim.detection import (ArmConfig, DetectorModel, arm_transmittance,
                                 dead_time_filter, detect)
from heraldsim.emission import (DARK, H, PDC2_SIGNAL, PDC2_TRIGGER, V,
                                EmissionBatch)
from heraldsim.rng import substream
from heraldsim.spectra import SlitFilter


def ideal_detector(**kw):
    defaults = dict(quantum_efficiency=1.0, jitter_sigma_ns=0.0,
                    dead_time_ns=0.0, dark_rate_hz=0.0)
    defaults.update(kw)
    return DetectorModel(**defaults)


def make_batch(times, pols, wavelengths=None, origins=None):
    n = len(times)
    if wavelengths is None:
        wavelengths = np.full(n, 801.0)
    if origins is None:
        origins = np.where(np.asarray(pols) == V, PDC2_TRIGGER, PDC2_SIGNAL)
    t = np.asarray(times, dtype=float)
    return EmissionBatch(
        time_ns=t,
        wavelength_nm=np.asarray(wavelengths, dtype=float),
        polarization=np.asarray(pols, dtype=np.uint8),
        origin=np.asarray(origins, dtype=np.uint8),
        pair_id=np.arange(n, dtype=np.int64),
        pulse_time_ns=t.copy(),
    )


def dead_time_oracle(times, dead, paralyzable):
    """Straight sequential reimplementation of both dead-time flavors."""
    out = np.zeros(len(times), dtype=bool)
    last_accept = -np.inf
    last_event = -np.inf
    for i, t in enumerate(times):
        if paralyzable:
            out[i] = (t - last_event) >= dead
        else:
            if t - last_accept >= dead:
                out[i] = True
                last_accept = t
        last_event = t
    if len(times):
        out[0] = True
    return out


class TestArmTransmittance:
    def test_loss_budget_product(self):
        arm = ArmConfig(1.0, 0.9, ideal_detector(quantum_efficiency=0.6))
        assert arm_transmittance(arm, 801.0) == pytest.approx(0.54)

    def test_blocked_wavelength(self):
        slit = SlitFilter(center_nm=801.0, window_nm=2.0, resolution_nm=2.0)
        arm = ArmConfig(1.0, 0.9, ideal_detector(quantum_efficiency=0.6), slit=slit)
        assert arm_transmittance(arm, 700.0) == 0.0

    def test_all_unity(self):
        arm = ArmConfig(1.0, 1.0, ideal_detector())
        assert arm_transmittance(arm, 801.0) == 1.0


class TestDetect:
    def test_lossless_identity(self):
        times = np.sort(substream(1, 0).uniform(0, 1e6, 2000))
        pols = np.tile([V, H], 1000)
        batch = make_batch(times, pols)
        arm = ArmConfig(1.0, 1.0, ideal_detector())
        res = detect(batch, arm, arm, seed=1, duration_ns=1e6)
        assert np.array_equal(res.trigger.time_ns, times[pols == V])
        assert np.array_equal(res.signal.time_ns, times[pols == H])

    def test_binomial_thinning_oracle(self):
        n = 1_000_000
        times = np.arange(n) * 100.0
        batch = make_batch(times, np.full(n, V))
        arm = ArmConfig(1.0, 1.0, ideal_detector(quantum_efficiency=0.6))
        res = detect(batch, arm, ArmConfig(1.0, 1.0, ideal_detector()),
                     seed=2, duration_ns=times[-1] + 100.0)
        got = len(res.trigger)
        assert abs(got - 600_000) <= 3 * math.sqrt(n * 0.6 * 0.4)

    def test_dead_time_removes_second_click(self):
        batch = make_batch([0.0, 10.0], [V, V])
        arm = ArmConfig(1.0, 1.0, ideal_detector(dead_time_ns=50.0))
        res = detect(batch, arm, ArmConfig(1.0, 1.0, ideal_detector()),
                     seed=3, duration_ns=100.0)
        assert len(res.trigger) == 1

    def test_channel_respects_minimum_click_spacing(self):
        rng = substream(30, 0)
        times = np.sort(rng.uniform(0, 1e6, 20_000))
        batch = make_batch(times, np.full(len(times), V))
        arm = ArmConfig(1.0, 1.0, ideal_detector(dead_time_ns=50.0,
                                                 jitter_sigma_ns=0.35))
        res = detect(batch, arm, ArmConfig(1.0, 1.0, ideal_detector()),
                     seed=31, duration_ns=1e6)
        assert len(res.trigger) > 0
        assert np.all(np.diff(res.trigger.time_ns) >= 50.0)

    def test_channel_exclusivity(self):
        times = np.sort(substream(4, 0).uniform(0, 1e7, 5000))
        pols = (substream(4, 1).random(5000) < 0.5).astype(np.uint8)
        batch = make_batch(times, pols)
        arm = ArmConfig(1.0, 0.9, ideal_detector(quantum_efficiency=0.7))
        res = detect(batch, arm, arm, seed=4, duration_ns=1e7)
        trig_set = set(res.trigger.time_ns.tolist())
        sig_set = set(res.signal.time_ns.tolist())
        assert trig_set <= set(times[pols == V].tolist())
        assert sig_set <= set(times[pols == H].tolist())

    def test_monte_carlo_matches_analytic_transmittance(self):
        rng = substream(5, 0)
        slit = SlitFilter(center_nm=801.0, window_nm=30.0, resolution_nm=2.0)
        for trial in range(6):
            qe = rng.uniform(0.2, 1.0)
            coupling = rng.uniform(0.4, 1.0)
            optics = rng.uniform(0.5, 1.0)
            arm = ArmConfig(optics, coupling,
                            ideal_detector(quantum_efficiency=qe),
                            slit=slit if trial % 2 else None)
            n = 200_000
            lam = rng.normal(801.0, 15.0, size=n)
            times = np.arange(n) * 200.0
            batch = make_batch(times, np.full(n, V), wavelengths=lam)
            res = detect(batch, arm, ArmConfig(1.0, 1.0, ideal_detector()),
                         seed=100 + trial, duration_ns=times[-1] + 200.0)
            expect = float(np.sum(arm_transmittance(arm, lam)))
            sigma = math.sqrt(expect)
            assert abs(len(res.trigger) - expect) <= 3 * sigma

    def test_dead_time_is_subpercent_at_default_rates(self):
        # default config regression guard: ~4e4 clicks/s vs 50 ns dead time
        n = 40_000
        rng = substream(6, 0)
        times = np.sort(rng.uniform(0, 1e9, n))  # 1 s of uniform clicks
        batch = make_batch(times, np.full(n, H))
        with_dead = ArmConfig(1.0, 1.0, ideal_detector(dead_time_ns=50.0))
        without = ArmConfig(1.0, 1.0, ideal_detector())
        res_dead = detect(batch, ArmConfig(1.0, 1.0, ideal_detector()), with_dead,
                          seed=6, duration_ns=1e9)
        res_free = detect(batch, ArmConfig(1.0, 1.0, ideal_detector()), without,
                          seed=6, duration_ns=1e9)
        loss = 1.0 - len(res_dead.signal) / len(res_free.signal)
        assert 0.0 <= loss < 0.005

    def test_dark_counts_injected_at_rate(self):
        batch = make_batch([], [])
        arm = ArmConfig(1.0, 1.0, ideal_detector(dark_rate_hz=10_000.0))
        res = detect(batch, arm, ArmConfig(1.0, 1.0, ideal_detector()),
                     seed=7, duration_ns=1e9)  # 1 s
        assert abs(len(res.trigger) - 10_000) <= 3 * math.sqrt(10_000)
        assert np.all(res.trigger.source == DARK)
        assert np.all(~np.isfinite(res.trigger.pulse_time_ns))

    def test_unsorted_input_rejected(self):
        from heraldsim.errors import ValidationError
        batch = make_batch([10.0, 0.0], [V, V])
        arm = ArmConfig(1.0, 1.0, ideal_detector())
        with pytest.raises(ValidationError):
            detect(batch, arm, arm, seed=8, duration_ns=100.0)


class TestDeadTimeFilter:
    @pytest.mark.parametrize("paralyzable", [False, True])
    def test_matches_sequential_oracle_on_dense_streams(self, paralyzable):
        rng = substream(9, int(paralyzable))
        for _ in range(20):
            n = rng.integers(1, 400)
            # mean spacing comparable to the dead time: plenty of chains
            times = np.sort(rng.uniform(0, n * 60.0, n))
            got = dead_time_filter(times, 50.0, paralyzable)
            want = dead_time_oracle(times, 50.0, paralyzable)
            assert np.array_equal(got, want)

    def test_chain_recovery_non_paralyzable(self):
        # events at 0,40,80: the 40 is dead, the 80 recovers (80-0 >= 50... no:
        # 80-0=80 >= 50 after 0 accepted, 40 rejected)
        got = dead_time_filter(np.array([0.0, 40.0, 80.0]), 50.0, False)
        assert got.tolist() == [True, False, True]

    def test_chain_paralyzable_blocks_everything(self):
        got = dead_time_filter(np.array([0.0, 40.0, 80.0]), 50.0, True)
        assert got.tolist() == [True, False, False]

    def test_zero_dead_time_accepts_all(self):
        times = np.arange(10, dtype=float)
        assert dead_time_filter(times, 0.0, False).all()
