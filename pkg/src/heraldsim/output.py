"""CSV schemas and report rendering.

Every CSV starts with versioned comment headers (schema id, scenario name,
seed) so downstream consumers can sniff the format, and every file is
written atomically (temp file + rename).  Floats are serialized with
repr(), the shortest round-trip form, which keeps identical runs
byte-identical.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from typing import Iterable

from .analysis import (CalibrationTarget, EfficiencyReport, ScanResult,
                       WindowOptimum)
from .detection import DetectionResult
from .electronics import CountsSummary
from .emission import ORIGIN_NAMES, POLARIZATION_NAMES, EmissionBatch

SCAN_SCHEMA = "heraldsim.scan.v1"
COUNTS_SCHEMA = "heraldsim.counts.v1"
KLYSHKO_SCHEMA = "heraldsim.klyshko.v1"
EMISSION_SCHEMA = "heraldsim.emission.v1"
DETECTION_SCHEMA = "heraldsim.detection.v1"

SCAN_HEADER = ("slit_center_nm,window_nm,gated,s_trigger,s_signal,"
               "coincidences,accidentals,efficiency,brightness")
COUNTS_HEADER = ("integration_time_s,s_trigger,s_signal,coincidences,"
                 "accidentals_analytic,conditional_efficiency,"
                 "preparation_efficiency,brightness,accidentals_fraction")
KLYSHKO_HEADER = ("trigger_transmittance,s_trigger,s_signal,coincidences,"
                  "efficiency,expected_efficiency,sigma")
EMISSION_HEADER = "time_ns,wavelength_nm,polarization,origin,pair_id"
DETECTION_HEADER = "channel,time_ns,source,pulse_time_ns"


import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def atomic_write_text(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _preamble(schema: str, scenario_name: str, seed: int):
    return [f"# schema={schema}", f"# scenario={scenario_name}", f"# seed={seed}"]


def write_scan_csv(path: str, result: ScanResult, scenario_name: str, seed: int,
                   power_mw: float):
    lines = _preamble(SCAN_SCHEMA, scenario_name, seed)
    lines.append(SCAN_HEADER)
    for row in result.rows:
        c = row.counts
        bright = (c.coincidences / (c.integration_time_s * power_mw)
                  if power_mw > 0 and c.integration_time_s > 0 else 0.0)
        lines.append(",".join(_fmt(v) for v in (
            row.slit_center_nm, row.window_nm, row.gated, c.s_trigger, c.s_signal,
            c.coincidences, c.accidentals_analytic, row.efficiency, bright)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_counts_csv(path: str, counts: CountsSummary, report: EfficiencyReport,
                     scenario_name: str, seed: int):
    lines = _preamble(COUNTS_SCHEMA, scenario_name, seed)
    lines.append(COUNTS_HEADER)
    lines.append(",".join(_fmt(v) for v in (
        counts.integration_time_s, counts.s_trigger, counts.s_signal,
        counts.coincidences, counts.accidentals_analytic,
        report.conditional_efficiency, report.preparation_efficiency,
        report.brightness, report.accidentals_fraction)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_klyshko_csv(path: str, rows: list, scenario_name: str, seed: int):
    lines = _preamble(KLYSHKO_SCHEMA, scenario_name, seed)
    lines.append(KLYSHKO_HEADER)
    for row in rows:
        c = row.counts
        lines.append(",".join(_fmt(v) for v in (
            row.trigger_transmittance, c.s_trigger, c.s_signal, c.coincidences,
            row.efficiency, row.expected_efficiency, row.sigma)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_emission_csv(path: str, batches: Iterable[EmissionBatch],
                       scenario_name: str, seed: int):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            for line in _preamble(EMISSION_SCHEMA, scenario_name, seed):
                fh.write(line + "\n")
            fh.write(EMISSION_HEADER + "\n")
            for batch in batches:
                for i in range(len(batch)):
                    fh.write(f"{float(batch.time_ns[i])!r},"
                             f"{float(batch.wavelength_nm[i])!r},"
                             f"{POLARIZATION_NAMES[int(batch.polarization[i])]},"
                             f"{ORIGIN_NAMES[int(batch.origin[i])]},"
                             f"{int(batch.pair_id[i])}\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_detection_csv(path: str, events: DetectionResult,
                        scenario_name: str, seed: int):
    lines = _preamble(DETECTION_SCHEMA, scenario_name, seed)
    lines.append(DETECTION_HEADER)
    for channel, ev in (("trigger", events.trigger), ("signal", events.signal)):
        for i in range(len(ev)):
            anchor = float(ev.pulse_time_ns[i])
            anchor_s = repr(anchor) if math.isfinite(anchor) else ""
            lines.append(f"{channel},{float(ev.time_ns[i])!r},"
                         f"{ORIGIN_NAMES[int(ev.source[i])]},{anchor_s}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def render_counts_report(counts: CountsSummary, report: EfficiencyReport,
                         scenario_name: str, seed: int,
                         reference_time_s: float | None = None) -> str:
    lines = [
        f"scenario: {scenario_name}",
        f"seed: {seed}",
        f"integration_time_s: {_fmt(counts.integration_time_s)}",
        f"s_trigger: {counts.s_trigger}",
        f"s_signal: {counts.s_signal}",
        f"coincidences: {counts.coincidences}",
        f"accidentals_analytic: {_fmt(counts.accidentals_analytic)}",
        f"conditional_efficiency: {_fmt(report.conditional_efficiency)}",
        f"preparation_efficiency: {_fmt(report.preparation_efficiency)}"
        + (" (capped)" if report.preparation_capped else ""),
        f"brightness_per_s_mw: {_fmt(report.brightness)}",
        f"accidentals_fraction: {_fmt(report.accidentals_fraction)}",
    ]
    if reference_time_s and counts.integration_time_s > 0:
        scale = reference_time_s / counts.integration_time_s
        lines.append(f"rescaled_to_s: {_fmt(reference_time_s)}")
        lines.append(f"s_trigger_rescaled: {_fmt(counts.s_trigger * scale)}")
        lines.append(f"s_signal_rescaled: {_fmt(counts.s_signal * scale)}")
        lines.append(f"coincidences_rescaled: {_fmt(counts.coincidences * scale)}")
    return "\n".join(lines) + "\n"


def render_calibration_json(result: CalibrationTarget) -> str:
    payload = {
        "targets": {"eta_ungated": result.eta_ungated, "eta_gated": result.eta_gated},
        "fitted": {
            "mu_fluor_per_pulse_per_mw": result.mu_fluor,
            "fluor_lifetime_ns": result.fluor_lifetime_ns,
            "mu_type1_per_pulse_per_mw": result.mu_type1,
            "mu_pairs_per_pulse_per_mw": result.mu_pairs,
        },
        "residual": result.residual,
        "monte_carlo": {
            "eta_ungated": result.mc_eta_ungated,
            "eta_gated": result.mc_eta_gated,
            "sigma_ungated": result.mc_sigma_ungated,
            "sigma_gated": result.mc_sigma_gated,
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def render_optimum_json(opt: WindowOptimum) -> str:
    payload = {
        "center_nm": opt.center_nm,
        "window_nm": opt.window_nm,
        "report": {
            "conditional_efficiency": opt.report.conditional_efficiency,
            "preparation_efficiency": opt.report.preparation_efficiency,
            "brightness_per_s_mw": opt.report.brightness,
            "accidentals_fraction": opt.report.accidentals_fraction,
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
