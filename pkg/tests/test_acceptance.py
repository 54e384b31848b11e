"""Acceptance suite.

One test per acceptance criterion, each printing a single PASS/FAIL line
(run with -s to see them).  Tolerances are pinned here, not computed.
"""
import math
import os
from dataclasses import replace

import numpy as np

from heraldsim.analysis import (calibrate, conditional_efficiency,
                                klyshko_check, mc_efficiencies,
                                preparation_efficiency)
from heraldsim.detection import ChannelEvents
from heraldsim.electronics import (CountsSummary, GateConfig,
                                   accidentals_analytic, count_run)
from heraldsim.emission import (PDC2_SIGNAL, PDC2_TRIGGER, emit_run,
                                emit_run_per_pulse)
from heraldsim.rng import substream
from heraldsim.scenario import bundled_scenario_path, load_scenario
from heraldsim.spectra import SpectralShape, sample_wavelength
from heraldsim.cli import main

PERIOD = 1e9 / 87e6


def report(name: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def load_setup(name: str):
    return load_scenario(bundled_scenario_path(name)).setup


class TestAcceptance:
    def test_accidentals_formula(self):
        got = accidentals_analytic(7.46e5, 1.15e7, 87e6, 300.0)
        ok = abs(got - 328.7) <= 0.1
        report("accidentals-formula", ok, f"got {got:.4f}, expected 328.7 +- 0.1")

    def test_efficiency_arithmetic(self):
        counts = CountsSummary(300.0, 746_000, 11_500_000, 381_000, 328.7)
        eta = conditional_efficiency(counts)
        prep = preparation_efficiency(0.515, 0.60)
        ok = abs(eta - 0.5107) <= 1e-4 and abs(prep - 0.858) <= 1e-3
        report("efficiency-arithmetic", ok,
               f"eta={eta:.5f} (0.5107 +- 1e-4), prep={prep:.4f} (0.858 +- 1e-3)")

    def test_calibration_closure(self):
        # fit to the gated/ungated targets, verify by 5 s-equivalent
        # Monte-Carlo, and require three independent seeds to agree
        scenario = load_scenario(bundled_scenario_path("calibrate_fig2"))
        result = calibrate(scenario.setup, 0.204, 0.515, tolerance=0.01,
                           seed=scenario.seed, verify_time_s=5.0)
        calibrated = replace(scenario.setup, source=replace(
            result.source, integration_time_s=5.0))
        details = [f"fit residual {result.residual:.2e}"]
        ok = result.residual <= 0.01
        for seed in (101, 202, 303):
            eta_u, sig_u, eta_g, sig_g = mc_efficiencies(calibrated, seed=seed)
            ok_u = abs(eta_u - 0.204) <= 0.01 + 3 * sig_u
            ok_g = abs(eta_g - 0.515) <= 0.01 + 3 * sig_g
            ok = ok and ok_u and ok_g
            details.append(f"seed{seed}: {eta_u:.4f}/{eta_g:.4f}")
        report("calibration-closure", ok, "; ".join(details))

    def test_brightness_reference_run(self, tmp_path):
        rc = main(["scan", "--scenario", "paper_fig3", "--out", str(tmp_path)])
        assert rc == 0
        text = (tmp_path / "paper_fig3_report.txt").read_text()
        value = float([l for l in text.splitlines()
                       if l.startswith("brightness_per_s_mw:")][0].split(":")[1])
        ok = abs(value - 8.5e5) <= 0.05 * 8.5e5
        report("brightness", ok, f"got {value:.4g}, expected 8.5e5 +- 5%")

    def test_klyshko_invariance(self):
        setup = load_setup("klyshko_sweep")
        rows = klyshko_check(setup, (1.0, 0.5, 0.1), pairs_per_point=100_000,
                             seed=31415926)
        ok = True
        details = []
        for row in rows:
            good = abs(row.efficiency - 0.54) <= 3 * row.sigma
            ok = ok and good
            details.append(f"k={row.trigger_transmittance}: "
                           f"{row.efficiency:.4f}+-{row.sigma:.4f}")
        report("klyshko-invariance", ok, "; ".join(details))

    def test_accidental_oracle_equivalence(self):
        rng = substream(271828, 0)
        gate = GateConfig(gating_enabled=False)
        worst = 0.0
        ok = True
        for _ in range(20):
            n_pulses = int(rng.integers(2_000_000, 6_000_000))
            lam_t = rng.uniform(0.0005, 0.004)
            lam_s = rng.uniform(0.0005, 0.004)
            t = np.sort(rng.integers(0, n_pulses, rng.poisson(n_pulses * lam_t))) * PERIOD
            s = np.sort(rng.integers(0, n_pulses, rng.poisson(n_pulses * lam_s))) * PERIOD
            trig = ChannelEvents(t, np.full(len(t), PDC2_TRIGGER, dtype=np.uint8),
                                 np.full(len(t), np.nan))
            sig = ChannelEvents(s, np.full(len(s), PDC2_SIGNAL, dtype=np.uint8),
                                np.full(len(s), np.nan))
            time_s = n_pulses * PERIOD / 1e9
            counts = count_run(trig, sig, gate, 87e6, time_s)
            expect = accidentals_analytic(counts.s_trigger, counts.s_signal,
                                          87e6, time_s)
            pull = abs(counts.coincidences - expect) / math.sqrt(max(expect, 1.0))
            worst = max(worst, pull)
            ok = ok and pull <= 3.0
        report("accidental-oracle", ok, f"worst pull {worst:.2f} sigma over 20 configs")

    def test_spectral_widths(self):
        rng = substream(5050, 0)
        details = []
        ok = True
        for width in (130.0, 50.0):
            shape = SpectralShape("gaussian", 801.0, width)
            lam = sample_wavelength(shape, rng, size=1_000_000)
            got = 2.0 * math.sqrt(2.0) * float(np.std(lam))
            good = abs(got - width) <= 0.05 * width
            ok = ok and good
            details.append(f"{width:.0f}nm -> {got:.2f}nm")
        report("spectral-widths", ok, "; ".join(details))

    def test_energy_conservation_bulk(self):
        setup = load_setup("paper_fig3")
        src = replace(setup.source, coupled_pump_power_mw=1.0, mu_pairs=0.05,
                      mu_type1=0.0, mu_fluor=0.0,
                      integration_time_s=20_000_000 / 87e6)
        batch = emit_run(src, seed=77)
        order = np.argsort(batch.pair_id, kind="stable")
        b = batch.select(order)
        lam_t = b.wavelength_nm[b.origin == PDC2_TRIGGER]
        lam_s = b.wavelength_nm[b.origin == PDC2_SIGNAL]
        n_pairs = len(lam_t)
        resid = np.abs(1.0 / lam_s + 1.0 / lam_t - 1.0 / 400.5)
        ok = n_pairs >= 1_000_000 and float(resid.max()) < 1e-12
        report("energy-conservation", ok,
               f"{n_pairs} pairs, max residual {resid.max():.3g} 1/nm")

    def test_determinism_across_threads(self, tmp_path):
        digests = []
        for threads in (1, 4, 8):
            out = tmp_path / f"t{threads}"
            rc = main(["scan", "--scenario", "paper_fig3", "--out", str(out),
                       "--threads", str(threads)])
            assert rc == 0
            digests.append((out / "paper_fig3_scan.csv").read_bytes())
        ok = digests[0] == digests[1] == digests[2]
        report("determinism", ok,
               f"{len(digests[0])} bytes identical across threads 1/4/8"
               if ok else "outputs differ across thread counts")

    def test_thinning_equivalence(self):
        from scipy.stats import chi2_contingency
        setup = load_setup("paper_fig3")
        src = replace(setup.source, coupled_pump_power_mw=1.0, mu_pairs=0.02,
                      mu_type1=0.01, mu_fluor=0.03,
                      integration_time_s=100_000 / 87e6)
        n = src.pulse_count

        def per_pulse_counts(batch):
            idx = np.round(batch.pulse_time_ns / src.period_ns).astype(np.int64)
            return np.bincount(idx, minlength=n)

        thinned = per_pulse_counts(emit_run(src, seed=88))
        brute = per_pulse_counts(emit_run_per_pulse(src, seed=89))
        top = max(thinned.max(), brute.max())
        table = np.array([np.bincount(thinned, minlength=top + 1),
                          np.bincount(brute, minlength=top + 1)])
        keep = table.sum(axis=0) >= 10
        merged = np.concatenate([table[:, keep],
                                 table[:, ~keep].sum(axis=1, keepdims=True)], axis=1)
        _, p, _, _ = chi2_contingency(merged)
        ok = p > 0.01
        report("thinning-equivalence", ok, f"chi-square p = {p:.3f} on 1e5 pulses")
