"""Scenario files: one YAML document describes a complete run (source,
arms, gate, mode, seed, outputs).

Keys carry explicit units in their names (gate_width_ns, rep_rate_hz,
coupled_pump_power_mw, ...).  Validation happens entirely before any
simulation and errors name the offending field path.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import yaml

from .analysis import Setup
from .detection import ArmConfig, DetectorModel
from .electronics import GateConfig
from .emission import H, V, LightSpectra, SourceConfig
from .errors import ValidationError
from .spectra import SlitCalibration, SlitFilter, SpectralShape

MODES = ("counts", "scan", "calibrate", "optimize", "klyshko", "analyze-external")

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "scenarios")


def bundled_scenario_path(name: str) -> str:
    return os.path.join(SCENARIO_DIR, f"{name}.yaml")


class _Section:
    """Mapping wrapper that tracks the field path for error messages."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected a mapping")
        self.data = data
        self.path = path

    def child(self, key: str, required: bool = True) -> Optional["_Section"]:
        if key not in self.data:
            if required:
                raise ValidationError(f"{self.path}.{key}: missing required section")
            return None
        return _Section(self.data[key], f"{self.path}.{key}")

    def get(self, key: str, kind, default=None, required: bool = False):
        if key not in self.data:
            if required:
                raise ValidationError(f"{self.path}.{key}: missing required field")
            return default
        val = self.data[key]
        try:
            if kind is float:
                if isinstance(val, bool):
                    raise TypeError
                return float(val)
            if kind is int:
                if isinstance(val, bool) or (isinstance(val, float) and val != int(val)):
                    raise TypeError
                return int(val)
            if kind is bool:
                if not isinstance(val, bool):
                    raise TypeError
                return val
            if kind is str:
                if not isinstance(val, str):
                    raise TypeError
                return val
            if kind is list:
                if not isinstance(val, list):
                    raise TypeError
                return val
        except (TypeError, ValueError):
            raise ValidationError(
                f"{self.path}.{key}: expected {kind.__name__}, got {val!r}") from None
        raise ValidationError(f"unsupported field kind {kind}")

    def float_list(self, key: str, required: bool = False):
        raw = self.get(key, list, required=required)
        if raw is None:
            return None
        try:
            return [float(v) for v in raw]
        except (TypeError, ValueError):
            raise ValidationError(f"{self.path}.{key}: expected a list of numbers") from None


def _parse_shape(sec: _Section) -> SpectralShape:
    return SpectralShape(
        family=sec.get("family", str, default="gaussian"),
        center_nm=sec.get("center_nm", float, required=True),
        width_nm=sec.get("width_nm", float, required=True),
    )


def _parse_polarization(sec: _Section, key: str, default: str) -> int:
    label = sec.get(key, str, default=default)
    if label not in ("H", "V"):
        raise ValidationError(f"{sec.path}.{key}: polarization must be 'H' or 'V'")
    return V if label == "V" else H


def _parse_source(sec: _Section, spectra: LightSpectra) -> SourceConfig:
    try:
        return SourceConfig(
            rep_rate_hz=sec.get("rep_rate_hz", float, required=True),
            integration_time_s=sec.get("integration_time_s", float, required=True),
            coupled_pump_power_mw=sec.get("coupled_pump_power_mw", float, required=True),
            mu_pairs=sec.get("mu_pairs_per_pulse_per_mw", float, required=True),
            mu_type1=sec.get("mu_type1_per_pulse_per_mw", float, default=0.0),
            mu_fluor=sec.get("mu_fluor_per_pulse_per_mw", float, default=0.0),
            fluor_lifetime_ns=sec.get("fluor_lifetime_ns", float, default=50.0),
            fluor_polarization_split=sec.get("fluor_polarization_split", float, default=0.5),
            spectra=spectra,
            type1_polarization=_parse_polarization(sec, "type1_polarization", "V"),
        )
    except ValidationError as err:
        raise ValidationError(f"{sec.path}: {err}") from None


def _parse_detector(sec: _Section) -> DetectorModel:
    try:
        return DetectorModel(
            quantum_efficiency=sec.get("quantum_efficiency", float, required=True),
            jitter_sigma_ns=sec.get("jitter_sigma_ns", float, default=0.35),
            dead_time_ns=sec.get("dead_time_ns", float, default=50.0),
            dark_rate_hz=sec.get("dark_rate_hz", float, default=0.0),
            paralyzable=sec.get("paralyzable", bool, default=False),
        )
    except ValidationError as err:
        raise ValidationError(f"{sec.path}: {err}") from None


def _parse_slit(sec: Optional[_Section]) -> Optional[SlitFilter]:
    if sec is None:
        return None
    calib_sec = sec.child("calibration", required=False)
    if calib_sec is not None:
        calibration = SlitCalibration(
            nm_per_um=calib_sec.get("nm_per_um", float, required=True),
            offset_nm=calib_sec.get("offset_nm", float, required=True),
        )
    else:
        calibration = SlitCalibration(nm_per_um=1.0, offset_nm=0.0)
    try:
        return SlitFilter(
            center_nm=sec.get("center_nm", float, required=True),
            window_nm=sec.get("window_nm", float, required=True),
            resolution_nm=sec.get("resolution_nm", float, default=2.0),
            calibration=calibration,
        )
    except ValidationError as err:
        raise ValidationError(f"{sec.path}: {err}") from None


def _parse_arm(sec: _Section, allow_slit: bool) -> ArmConfig:
    slit = _parse_slit(sec.child("slit", required=False)) if allow_slit else None
    try:
        return ArmConfig(
            optics_transmission=sec.get("optics_transmission", float, default=1.0),
            fiber_coupling=sec.get("fiber_coupling", float, required=True),
            detector=_parse_detector(sec.child("detector")),
            slit=slit,
        )
    except ValidationError as err:
        if str(err).startswith(sec.path):
            raise
        raise ValidationError(f"{sec.path}: {err}") from None


def _parse_gate(sec: Optional[_Section]) -> GateConfig:
    if sec is None:
        return GateConfig()
    try:
        return GateConfig(
            gate_width_ns=sec.get("gate_width_ns", float, default=3.0),
            gate_delay_ns=sec.get("gate_delay_ns", float, default=None),
            coincidence_window_ns=sec.get("coincidence_window_ns", float, default=3.0),
            gating_enabled=sec.get("gating_enabled", bool, default=True),
        )
    except ValidationError as err:
        raise ValidationError(f"{sec.path}: {err}") from None


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    seed: int
    setup: Setup
    options: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def with_seed(self, seed: Optional[int]) -> "Scenario":
        return self if seed is None else replace(self, seed=int(seed))


def parse_scenario(data: Any, origin: str = "<scenario>") -> Scenario:
    root = _Section(data, "scenario")
    name = root.get("name", str, required=True)
    mode = root.get("mode", str, required=True)
    if mode not in MODES:
        raise ValidationError(f"scenario.mode: unknown mode {mode!r} (choose from {MODES})")
    seed = root.get("seed", int, required=True)

    spectra_sec = root.child("spectra")
    spectra = LightSpectra(
        pdc2_trigger=_parse_shape(spectra_sec.child("pdc2_trigger")),
        type1=_parse_shape(spectra_sec.child("type1")),
        fluorescence=_parse_shape(spectra_sec.child("fluorescence")),
        pump=_parse_shape(spectra_sec.child("pump")),
    )
    source = _parse_source(root.child("source"), spectra)
    trigger_arm = _parse_arm(root.child("trigger_arm"), allow_slit=True)
    signal_arm = _parse_arm(root.child("signal_arm"), allow_slit=True)
    gate = _parse_gate(root.child("gate", required=False))
    setup = Setup(source=source, trigger_arm=trigger_arm,
                  signal_arm=signal_arm, gate=gate)

    options: dict = {}
    if mode == "scan":
        scan_sec = root.child("scan")
        options["positions_um"] = scan_sec.float_list("positions_um", required=True)
        options["report_window_nm"] = scan_sec.get("report_window_nm", float)
        options["report_integration_time_s"] = scan_sec.get(
            "report_integration_time_s", float)
        if trigger_arm.slit is None:
            raise ValidationError("scenario.trigger_arm.slit: required for scan mode")
    elif mode == "calibrate":
        cal_sec = root.child("calibrate")
        options["eta_ungated"] = cal_sec.get("eta_ungated", float, required=True)
        options["eta_gated"] = cal_sec.get("eta_gated", float, required=True)
        options["tolerance"] = cal_sec.get("tolerance", float, default=0.01)
        options["verify_time_s"] = cal_sec.get("verify_time_s", float, default=5.0)
    elif mode == "optimize":
        opt_sec = root.child("optimize", required=False)
        if opt_sec is not None:
            options["efficiency_floor"] = opt_sec.get("efficiency_floor", float, default=0.51)
            options["centers_nm"] = opt_sec.float_list("centers_nm")
            options["widths_nm"] = opt_sec.float_list("widths_nm")
        else:
            options["efficiency_floor"] = 0.51
            options["centers_nm"] = None
            options["widths_nm"] = None
        if trigger_arm.slit is None:
            raise ValidationError("scenario.trigger_arm.slit: required for optimize mode")
    elif mode == "klyshko":
        k_sec = root.child("klyshko", required=False)
        if k_sec is not None:
            options["trigger_transmittances"] = k_sec.float_list(
                "trigger_transmittances") or [1.0, 0.5, 0.1]
            options["pairs_per_point"] = k_sec.get("pairs_per_point", int, default=100_000)
        else:
            options["trigger_transmittances"] = [1.0, 0.5, 0.1]
            options["pairs_per_point"] = 100_000
    elif mode == "analyze-external":
        ext_sec = root.child("external")
        options["input"] = ext_sec.get("input", str, required=True)
        options["integration_time_s"] = ext_sec.get("integration_time_s", float)
        options["sort_buffer_ns"] = ext_sec.get("sort_buffer_ns", float)

    out_sec = root.child("output", required=False)
    outputs = dict(out_sec.data) if out_sec is not None else {}
    for key, val in outputs.items():
        if not isinstance(val, str):
            raise ValidationError(f"scenario.output.{key}: expected a file name")

    return Scenario(name=name, mode=mode, seed=seed, setup=setup,
                    options=options, outputs=outputs)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ValidationError(f"{path}: malformed scenario{where}: {err}") from None
    if data is None:
        raise ValidationError(f"{path}: empty scenario file")
    return parse_scenario(data, origin=path)
