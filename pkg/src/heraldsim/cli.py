"""Command-line entry point.

Verbs: simulate, scan, calibrate, optimize-window, klyshko, analyze.
Common flags: --scenario PATH, --seed N (overrides the file), --out DIR,
--threads N.  Exit codes: 0 success, 2 validation error, 3 no-convergence,
4 I/O error.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import output
from .analysis import (Setup, build_report, calibrate, klyshko_check,
                       optimize_window, run_events, spectral_scan)
from .detection import ChannelEvents, DetectionResult
from .electronics import count_run
from .emission import ORIGIN_NAMES, merged_blocks
from .errors import (ExternalDataError, HeraldSimError, NoConvergenceError,
                     ValidationError)
from .scenario import Scenario, bundled_scenario_path, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4

_VERB_MODE = {
    "simulate": "counts",
    "scan": "scan",
    "calibrate": "calibrate",
    "optimize-window": "optimize",
    "klyshko": "klyshko",
    "analyze": "analyze-external",
}

_ORIGIN_CODES = {name: code for code, name in ORIGIN_NAMES.items()}


def _out_path(out_dir: str, scenario: Scenario, key: str, default: str) -> str:
    name = scenario.outputs.get(key, default)
    return os.path.join(out_dir, name)


def _run_counts_mode(scenario: Scenario, out_dir: str, threads: int):
    setup = scenario.setup
    events = run_events(setup, scenario.seed, threads)
    counts = count_run(events.trigger, events.signal, setup.gate,
                       setup.source.rep_rate_hz, setup.source.integration_time_s)
    report = build_report(counts, setup.source.coupled_pump_power_mw,
                          setup.signal_arm.detector.quantum_efficiency)
    counts_csv = _out_path(out_dir, scenario, "counts_csv", f"{scenario.name}_counts.csv")
    report_txt = _out_path(out_dir, scenario, "report_txt", f"{scenario.name}_report.txt")
    output.write_counts_csv(counts_csv, counts, report, scenario.name, scenario.seed)
    output.atomic_write_text(report_txt, output.render_counts_report(
        counts, report, scenario.name, scenario.seed))
    written = [counts_csv, report_txt]
    if "detection_csv" in scenario.outputs:
        path = os.path.join(out_dir, scenario.outputs["detection_csv"])
        output.write_detection_csv(path, events, scenario.name, scenario.seed)
        written.append(path)
    if "emission_csv" in scenario.outputs:
        path = os.path.join(out_dir, scenario.outputs["emission_csv"])
        output.write_emission_csv(
            path, merged_blocks(setup.source, scenario.seed, threads),
            scenario.name, scenario.seed)
        written.append(path)
    return written


def _run_scan_mode(scenario: Scenario, out_dir: str, threads: int):
    setup = scenario.setup
    result = spectral_scan(setup, scenario.options["positions_um"], scenario.seed,
                           threads=threads,
                           report_window_nm=scenario.options.get("report_window_nm"),
                           report_integration_time_s=scenario.options.get(
                               "report_integration_time_s"))
    scan_csv = _out_path(out_dir, scenario, "scan_csv", f"{scenario.name}.csv")
    output.write_scan_csv(scan_csv, result, scenario.name, scenario.seed,
                          setup.source.coupled_pump_power_mw)
    written = [scan_csv]
    if result.report is not None:
        report_txt = _out_path(out_dir, scenario, "report_txt",
                               f"{scenario.name}_report.txt")
        text = output.render_counts_report(result.report.counts, result.report.report,
                                           scenario.name, scenario.seed,
                                           reference_time_s=300.0)
        header = (f"report row: slit_center_nm={result.report.slit_center_nm!r} "
                  f"window_nm={result.report.window_nm!r}\n")
        output.atomic_write_text(report_txt, header + text)
        written.append(report_txt)
    return written


def _run_calibrate_mode(scenario: Scenario, out_dir: str, threads: int):
    opts = scenario.options
    result = calibrate(scenario.setup, opts["eta_ungated"], opts["eta_gated"],
                       tolerance=opts.get("tolerance", 0.01), seed=scenario.seed,
                       verify_time_s=opts.get("verify_time_s", 5.0))
    path = _out_path(out_dir, scenario, "calibration_json",
                     f"{scenario.name}_calibration.json")
    output.atomic_write_text(path, output.render_calibration_json(result))
    return [path]


def _run_optimize_mode(scenario: Scenario, out_dir: str, threads: int):
    opts = scenario.options
    optimum = optimize_window(scenario.setup,
                              efficiency_floor=opts.get("efficiency_floor", 0.51),
                              centers_nm=opts.get("centers_nm"),
                              widths_nm=opts.get("widths_nm"))
    path = _out_path(out_dir, scenario, "optimum_json", f"{scenario.name}_optimum.json")
    output.atomic_write_text(path, output.render_optimum_json(optimum))
    report_txt = _out_path(out_dir, scenario, "report_txt", f"{scenario.name}_report.txt")
    rep = optimum.report
    output.atomic_write_text(report_txt, "\n".join([
        f"scenario: {scenario.name}",
        f"optimal_center_nm: {optimum.center_nm!r}",
        f"optimal_window_nm: {optimum.window_nm!r}",
        f"conditional_efficiency: {rep.conditional_efficiency!r}",
        f"preparation_efficiency: {rep.preparation_efficiency!r}",
        f"brightness_per_s_mw: {rep.brightness!r}",
        f"accidentals_fraction: {rep.accidentals_fraction!r}",
    ]) + "\n")
    return [path, report_txt]


def _run_klyshko_mode(scenario: Scenario, out_dir: str, threads: int):
    opts = scenario.options
    rows = klyshko_check(scenario.setup,
                         trigger_transmittances=opts["trigger_transmittances"],
                         pairs_per_point=opts["pairs_per_point"], seed=scenario.seed)
    path = _out_path(out_dir, scenario, "klyshko_csv", f"{scenario.name}.csv")
    output.write_klyshko_csv(path, rows, scenario.name, scenario.seed)
    return [path]


def load_time_tags(path: str, sort_buffer_ns: float | None = None):
    """Parse a time-tag file into per-channel event streams.

    Two formats are accepted: the generic interchange format (a
    ``# units=ps|ns`` header followed by ``channel,timestamp`` rows) and
    the simulator's own detection dump (sniffed via its schema header),
    which preserves pulse anchors so gated analysis reproduces the
    in-memory pipeline exactly.
    """
    units = None
    is_dump = False
    rows = []
    header_seen = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("schema="):
                    is_dump = body == f"schema={output.DETECTION_SCHEMA}"
                if body.startswith("units="):
                    unit = body.split("=", 1)[1].strip()
                    if unit not in ("ps", "ns"):
                        raise ExternalDataError(
                            f"{path}:{lineno}: units must be 'ps' or 'ns', got {unit!r}")
                    units = unit
                continue
            parts = [p.strip() for p in line.split(",")]
            if not header_seen and parts[0] == "channel":
                header_seen = True
                continue
            rows.append((lineno, parts))
    if is_dump:
        units = units or "ns"
    if units is None:
        raise ExternalDataError(
            f"{path}: missing '# units=ps|ns' header declaring timestamp units")
    scale = 1e-3 if units == "ps" else 1.0

    channels = {"trigger": {"t": [], "src": [], "anchor": []},
                "signal": {"t": [], "src": [], "anchor": []}}
    for lineno, parts in rows:
        if len(parts) < 2:
            raise ExternalDataError(f"{path}:{lineno}: expected 'channel,timestamp'")
        chan = parts[0]
        if chan not in channels:
            raise ExternalDataError(f"{path}:{lineno}: unknown channel label {chan!r}")
        try:
            t = float(parts[1]) * scale
        except ValueError:
            raise ExternalDataError(
                f"{path}:{lineno}: bad timestamp {parts[1]!r}") from None
        src = _ORIGIN_CODES["dark"]
        anchor = float("nan")
        if is_dump and len(parts) >= 3 and parts[2]:
            if parts[2] not in _ORIGIN_CODES:
                raise ExternalDataError(f"{path}:{lineno}: unknown source {parts[2]!r}")
            src = _ORIGIN_CODES[parts[2]]
        if is_dump and len(parts) >= 4 and parts[3]:
            anchor = float(parts[3]) * scale
        bucket = channels[chan]
        bucket["t"].append(t)
        bucket["src"].append(src)
        bucket["anchor"].append(anchor)

    out = {}
    max_time = 0.0
    for chan, bucket in channels.items():
        t = np.asarray(bucket["t"], dtype=float)
        src = np.asarray(bucket["src"], dtype=np.uint8)
        anchor = np.asarray(bucket["anchor"], dtype=float)
        if len(t) > 1:
            backstep = np.diff(t)
            worst = -backstep.min() if len(backstep) else 0.0
            if worst > 0:
                if sort_buffer_ns is not None and worst > sort_buffer_ns:
                    raise ExternalDataError(
                        f"{path}: {chan} timestamps jump backwards by {worst:.6g} ns, "
                        f"beyond the {sort_buffer_ns:.6g} ns sort buffer")
                order = np.argsort(t, kind="stable")
                t, src, anchor = t[order], src[order], anchor[order]
        if len(t):
            max_time = max(max_time, float(t[-1]))
        out[chan] = ChannelEvents(time_ns=t, source=src, pulse_time_ns=anchor)
    return DetectionResult(trigger=out["trigger"], signal=out["signal"]), max_time


def analyze_external(path: str, setup: Setup, rep_rate_hz: float,
                     integration_time_s: float | None = None,
                     sort_buffer_ns: float | None = None):
    """Run the counting electronics and metrics over a recorded time-tag file."""
    events, max_time_ns = load_time_tags(path, sort_buffer_ns)
    if integration_time_s is None:
        period = 1e9 / rep_rate_hz
        n_pulses = max(1.0, np.ceil(max_time_ns / period))
        integration_time_s = n_pulses * period / 1e9
    if len(events.trigger) == 0 and len(events.signal) == 0:
        warnings.warn(f"{path}: no events found; reporting zero counts")
    counts = count_run(events.trigger, events.signal, setup.gate, rep_rate_hz,
                       integration_time_s)
    report = build_report(counts, setup.source.coupled_pump_power_mw,
                          setup.signal_arm.detector.quantum_efficiency)
    return counts, report


def _run_analyze_mode(scenario: Scenario, out_dir: str, threads: int):
    opts = scenario.options
    counts, report = analyze_external(
        opts["input"], scenario.setup, scenario.setup.source.rep_rate_hz,
        integration_time_s=opts.get("integration_time_s"),
        sort_buffer_ns=opts.get("sort_buffer_ns"))
    counts_csv = _out_path(out_dir, scenario, "counts_csv", f"{scenario.name}_counts.csv")
    report_txt = _out_path(out_dir, scenario, "report_txt", f"{scenario.name}_report.txt")
    output.write_counts_csv(counts_csv, counts, report, scenario.name, scenario.seed)
    output.atomic_write_text(report_txt, output.render_counts_report(
        counts, report, scenario.name, scenario.seed))
    return [counts_csv, report_txt]


_MODE_RUNNERS = {
    "counts": _run_counts_mode,
    "scan": _run_scan_mode,
    "calibrate": _run_calibrate_mode,
    "optimize": _run_optimize_mode,
    "klyshko": _run_klyshko_mode,
    "analyze-external": _run_analyze_mode,
}


def run(scenario: Scenario, out_dir: str = ".", threads: int = 1):
    """Execute a scenario and return the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise ValidationError(f"output directory {out_dir!r} is not writable")
    return _MODE_RUNNERS[scenario.mode](scenario, out_dir, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldsim",
        description="Heralded single-photon source simulator and analysis toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, mode in _VERB_MODE.items():
        p = sub.add_parser(verb, help=f"run a scenario in {mode} mode")
        p.add_argument("--scenario", required=True,
                       help="scenario YAML path, or a bundled scenario name")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for emission blocks / scan points")
        if verb == "analyze":
            p.add_argument("--input", default=None,
                           help="override the scenario's time-tag input path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = args.scenario
        if not os.path.exists(path) and os.path.exists(bundled_scenario_path(path)):
            path = bundled_scenario_path(path)
        scenario = load_scenario(path)
        expected_mode = _VERB_MODE[args.verb]
        if scenario.mode != expected_mode:
            raise ValidationError(
                f"scenario mode {scenario.mode!r} does not match verb "
                f"{args.verb!r} (expects {expected_mode!r})")
        scenario = scenario.with_seed(args.seed)
        if getattr(args, "input", None):
            scenario.options["input"] = args.input
        written = run(scenario, out_dir=args.out, threads=args.threads)
    except NoConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ValidationError, ExternalDataError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except HeraldSimError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
